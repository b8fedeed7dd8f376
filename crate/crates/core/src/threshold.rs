//! Per-sensor cut-offs turning real-valued score rows into binary forecasts.
//!
//! Each row gets its own threshold `τ_j`, and an entry fires when
//! `score >= τ_j`. The learned `τ_j` minimizes the row's Hamming error
//! against the training truth. Candidates are every distinct score in the
//! row plus `+∞` (never fire). Ties go to the smallest candidate.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    /// `+∞` is serialized as `null`.
    #[serde(with = "tau_serde")]
    pub tau: Vec<f64>,
    pub training_errors: Vec<usize>,
}

impl ThresholdVector {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

mod tau_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(tau: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(tau.iter().map(|t| if t.is_finite() { Some(*t) } else { None }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|t| t.unwrap_or(f64::INFINITY)).collect())
    }
}

/// Best threshold for one row and the Hamming error it achieves.
pub fn learn_row(scores: &[f64], truth: &[u8]) -> (f64, usize) {
    debug_assert_eq!(scores.len(), truth.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sweep τ downward from +∞. At τ = +∞ nothing fires and the error is the
    // number of ones. Lowering τ to the k-th largest distinct value turns on
    // every entry with that score.
    let positives = truth.iter().filter(|&&y| y == 1).count();
    let mut best_tau = f64::INFINITY;
    let mut best_err = positives;
    let mut err = positives as isize;
    let mut i = order.len();
    while i > 0 {
        let value = scores[order[i - 1]];
        while i > 0 && scores[order[i - 1]] == value {
            err += if truth[order[i - 1]] == 1 { -1 } else { 1 };
            i -= 1;
        }
        // `<=` keeps moving to smaller τ on ties.
        if err as usize <= best_err {
            best_err = err as usize;
            best_tau = value;
        }
    }
    (best_tau, best_err)
}

pub fn learn_thresholds(y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<ThresholdVector> {
    if y_hat.dim() != y.dim() {
        return Err(Error::Dimension(format!(
            "scores are {:?}, truth is {:?}",
            y_hat.dim(),
            y.dim()
        )));
    }
    let mut tau = Vec::with_capacity(y.nrows());
    let mut training_errors = Vec::with_capacity(y.nrows());
    for (s_row, y_row) in y_hat.rows().into_iter().zip(y.rows()) {
        let scores: Vec<f64> = s_row.iter().copied().collect();
        let mut truth = Vec::with_capacity(y_row.len());
        for &v in y_row {
            if v != 0.0 && v != 1.0 {
                return Err(Error::spec("threshold truth", format!("non-binary value {v}")));
            }
            truth.push(v as u8);
        }
        let (t, e) = learn_row(&scores, &truth);
        tau.push(t);
        training_errors.push(e);
    }
    Ok(ThresholdVector {
        tau,
        training_errors,
    })
}

pub fn apply_thresholds(y_hat: ArrayView2<f64>, tau: &ThresholdVector) -> Result<Array2<f64>> {
    if y_hat.nrows() != tau.len() {
        return Err(Error::Dimension(format!(
            "scores have {} rows, thresholds have {}",
            y_hat.nrows(),
            tau.len()
        )));
    }
    let mut out = Array2::zeros(y_hat.dim());
    for ((j, m), v) in y_hat.indexed_iter() {
        if *v >= tau.tau[j] {
            out[[j, m]] = 1.0;
        }
    }
    Ok(out)
}
