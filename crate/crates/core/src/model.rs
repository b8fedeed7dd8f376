//! Versioned JSON document for a fitted boosted model.
//!
//! The document stores, per round, the factors `U_tr` and `V_te` that
//! reproduce the round's test scores, plus the combination weights and the
//! final thresholds. Matrices are stored row-major.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boost::{combine_scores, BoostModel, BoostSpec};
use crate::data::LagSpec;
use crate::kernel::KernelSpec;
use crate::solver::{Diagnostics, SolverSpec};
use crate::threshold::{apply_thresholds, ThresholdVector};
use crate::{Error, Result};

pub const FORMAT_VERSION: &str = "1.0";
const FORMAT_MAJOR: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_array(a: &Array2<f64>) -> Self {
        Self {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .map_err(|e| Error::Format(format!("matrix {}x{}: {e}", self.rows, self.cols)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub theta_sha256: String,
    pub epsilon_raw: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub mismatched_columns: usize,
    pub thresholds: ThresholdVector,
    pub u_tr: Matrix,
    pub v_te: Matrix,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: String,
    /// Fully resolved run configuration, as supplied by the caller.
    pub config: serde_json::Value,
    pub kernel: KernelSpec,
    pub solver: SolverSpec,
    pub boost: BoostSpec,
    pub lag: LagSpec,
    pub n_days: usize,
    pub sensor_ids: Vec<String>,
    pub timestamps_te: Vec<i64>,
    pub rounds: Vec<RoundRecord>,
    pub alpha: Vec<f64>,
    pub tau: ThresholdVector,
}

/// Hex SHA-256 of the little-endian bytes of `θ`.
pub fn weights_checksum(theta: &[f64]) -> String {
    let mut h = Sha256::new();
    for w in theta {
        h.update(w.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl ModelDocument {
    pub fn from_model(
        model: &BoostModel,
        sensor_ids: Vec<String>,
        timestamps_te: Vec<i64>,
        config: serde_json::Value,
    ) -> Self {
        let rounds = model
            .rounds
            .iter()
            .map(|r| RoundRecord {
                theta_sha256: weights_checksum(&r.theta),
                epsilon_raw: r.epsilon_raw,
                epsilon: r.epsilon,
                beta: r.beta,
                mismatched_columns: r.mismatch_count(),
                thresholds: r.thresholds.clone(),
                u_tr: Matrix::from_array(&r.state.u_tr),
                v_te: Matrix::from_array(&r.state.v_te),
                diagnostics: r.diagnostics.clone(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION.to_string(),
            config,
            kernel: model.kernel,
            solver: model.solver,
            boost: model.boost,
            lag: model.lag,
            n_days: model.n_days,
            sensor_ids,
            timestamps_te,
            rounds,
            alpha: model.alpha.clone(),
            tau: model.tau.clone(),
        }
    }

    /// Combined test scores `Σ_k α_k U_tr^k (V_te^k)ᵀ`.
    pub fn scores_te(&self) -> Result<Array2<f64>> {
        let mut per_round = Vec::with_capacity(self.rounds.len());
        for r in &self.rounds {
            let u = r.u_tr.to_array()?;
            let v = r.v_te.to_array()?;
            if u.ncols() != v.ncols() {
                return Err(Error::Format("factor ranks differ".into()));
            }
            per_round.push(u.dot(&v.t()));
        }
        let views: Vec<_> = per_round.iter().map(|s| s.view()).collect();
        combine_scores(&self.alpha, &views)
    }

    /// Thresholded test forecast.
    pub fn predict(&self) -> Result<(Array2<f64>, Array2<f64>)> {
        let scores = self.scores_te()?;
        let pred = apply_thresholds(scores.view(), &self.tau)?;
        Ok((pred, scores))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let version = raw
            .get("format_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Format("missing format_version".into()))?;
        let major: u32 = version
            .split('.')
            .next()
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| Error::Format(format!("unreadable format_version `{version}`")))?;
        if major != FORMAT_MAJOR {
            return Err(Error::Format(format!(
                "unsupported format_version `{version}` (this build reads {FORMAT_MAJOR}.x)"
            )));
        }
        let doc: Self = serde_json::from_str(text)?;
        if doc.rounds.is_empty() || doc.alpha.len() != doc.rounds.len() {
            return Err(Error::Format(format!(
                "{} rounds with {} combination weights",
                doc.rounds.len(),
                doc.alpha.len()
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
