//! Forecast scores and the reference forecasters they are compared against.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::LaggedDataset;
use crate::linalg::{add_diagonal, spd_solve};
use crate::threshold::{apply_thresholds, learn_thresholds, ThresholdVector};
use crate::{Error, Result};

pub const DEFAULT_M1_SAMPLES: usize = 32;

fn check_same_shape(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "prediction is {:?}, truth is {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Mean absolute error over all entries.
pub fn mae(y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    check_same_shape(y_hat, y)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = y_hat.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / y.len() as f64)
}

pub fn per_sensor_mae(y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Vec<f64>> {
    check_same_shape(y_hat, y)?;
    Ok(y_hat
        .rows()
        .into_iter()
        .zip(y.rows())
        .map(|(a, b)| {
            if a.is_empty() {
                0.0
            } else {
                a.iter().zip(b.iter()).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64
            }
        })
        .collect())
}

/// Vertices of the completed graph of a right-continuous step path sampled
/// at `0..T`, with time rescaled to `[0, 1]`. Every jump contributes a
/// vertical segment.
pub fn completed_graph(a: ArrayView1<f64>) -> Vec<(f64, f64)> {
    let t = a.len();
    let norm = (t.saturating_sub(1)).max(1) as f64;
    let mut v = vec![(0.0, a[0])];
    for i in 1..t {
        if a[i] != a[i - 1] {
            let u = i as f64 / norm;
            v.push((u, a[i - 1]));
            v.push((u, a[i]));
        }
    }
    v.push(((t - 1) as f64 / norm, a[t - 1]));
    v
}

/// `samples` evenly spaced points on every segment of a polyline, plus the
/// final vertex.
pub fn sample_polyline(vertices: &[(f64, f64)], samples: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity((vertices.len() - 1) * samples + 1);
    for w in vertices.windows(2) {
        let (p, q) = (w[0], w[1]);
        for s in 0..samples {
            let f = s as f64 / samples as f64;
            out.push((p.0 + f * (q.0 - p.0), p.1 + f * (q.1 - p.1)));
        }
    }
    out.push(*vertices.last().expect("at least one vertex"));
    out
}

/// Discrete Fréchet distance between two point chains under the L∞ cost.
pub fn discrete_frechet(p: &[(f64, f64)], q: &[(f64, f64)]) -> f64 {
    let cost = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs().max((a.1 - b.1).abs());
    let mut prev = vec![0.0; q.len()];
    let mut cur = vec![0.0; q.len()];
    for (i, &pi) in p.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            let c = cost(pi, qj);
            let reach = match (i, j) {
                (0, 0) => c,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = c.max(reach);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[q.len() - 1]
}

/// Skorokhod M1 distance between two step paths, on discretized completed
/// graphs with `samples` points per segment.
pub fn m1_distance_with(a: ArrayView1<f64>, b: ArrayView1<f64>, samples: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "paths have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Dimension("paths are empty".into()));
    }
    if samples == 0 {
        return Err(Error::spec("m1 samples", "must be >= 1"));
    }
    if a == b {
        return Ok(0.0);
    }
    let p = sample_polyline(&completed_graph(a), samples);
    let q = sample_polyline(&completed_graph(b), samples);
    Ok(discrete_frechet(&p, &q))
}

pub fn m1_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    m1_distance_with(a, b, DEFAULT_M1_SAMPLES)
}

/// Mean of the row-wise M1 distances.
pub fn m1_matrix_with(y_hat: ArrayView2<f64>, y: ArrayView2<f64>, samples: usize) -> Result<f64> {
    check_same_shape(y_hat, y)?;
    if y.nrows() == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (a, b) in y_hat.rows().into_iter().zip(y.rows()) {
        total += m1_distance_with(a, b, samples)?;
    }
    Ok(total / y.nrows() as f64)
}

pub fn m1_matrix(y_hat: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    m1_matrix_with(y_hat, y, DEFAULT_M1_SAMPLES)
}

/// Forecast the newest observed state for every test column.
pub fn baseline_persistence(data: &LaggedDataset) -> Array2<f64> {
    data.last_test_state()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeForecast {
    /// `Ln x n`.
    pub weights: Array2<f64>,
    pub scores_te: Array2<f64>,
    pub thresholds: ThresholdVector,
    pub predictions: Array2<f64>,
}

/// Linear model `Y ≈ Wᵀ X` fitted by ridge regression, thresholded with
/// cut-offs learned on the training scores.
pub fn baseline_linear_ridge(data: &LaggedDataset, mu: f64) -> Result<RidgeForecast> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::spec("ridge", format!("mu must be > 0, got {mu}")));
    }
    let x = &data.x_tr;
    let mut gram = x.dot(&x.t());
    add_diagonal(&mut gram, mu);
    let rhs = x.dot(&data.y_tr.t());
    let weights = spd_solve(gram.view(), rhs.view(), "X_tr X_trᵀ + μI")?;
    let scores_tr = weights.t().dot(x);
    let scores_te = weights.t().dot(&data.x_te);
    let thresholds = learn_thresholds(scores_tr.view(), data.y_tr.view())?;
    let predictions = apply_thresholds(scores_te.view(), &thresholds)?;
    Ok(RidgeForecast {
        weights,
        scores_te,
        thresholds,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mae: f64,
    pub accuracy_mae: f64,
    pub m1: f64,
    pub accuracy_m1: f64,
    pub per_sensor_mae: Vec<f64>,
}

impl Scores {
    pub fn compute(y_hat: ArrayView2<f64>, y: ArrayView2<f64>, m1_samples: usize) -> Result<Self> {
        let mae = mae(y_hat, y)?;
        let m1 = m1_matrix_with(y_hat, y, m1_samples)?;
        Ok(Self {
            mae,
            accuracy_mae: 1.0 - mae,
            m1,
            accuracy_m1: 1.0 - m1,
            per_sensor_mae: per_sensor_mae(y_hat, y)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub model: Scores,
    pub baseline_scores: BTreeMap<String, Scores>,
}

/// Scores of a forecast and of the persistence and ridge baselines against
/// the held-out truth of `data`.
pub fn evaluate(
    y_hat: ArrayView2<f64>,
    data: &LaggedDataset,
    ridge_mu: f64,
    m1_samples: usize,
) -> Result<EvalReport> {
    let truth = data
        .y_te_truth
        .as_ref()
        .ok_or_else(|| Error::spec("evaluation", "panel has no held-out truth for the test window"))?;
    let model = Scores::compute(y_hat, truth.view(), m1_samples)?;
    let mut baseline_scores = BTreeMap::new();
    let persistence = baseline_persistence(data);
    baseline_scores.insert(
        "persistence".to_string(),
        Scores::compute(persistence.view(), truth.view(), m1_samples)?,
    );
    let ridge = baseline_linear_ridge(data, ridge_mu)?;
    baseline_scores.insert(
        "linear_ridge".to_string(),
        Scores::compute(ridge.predictions.view(), truth.view(), m1_samples)?,
    );
    Ok(EvalReport {
        model,
        baseline_scores,
    })
}
