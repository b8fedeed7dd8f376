//! Adaptive boosting over past-day ensembles.
//!
//! Each round re-solves the completion problem with the training columns
//! re-weighted by `θ`, measures the `θ`-weighted fraction of training columns
//! it gets wrong, and up-weights those columns for the next round. The
//! rounds are finally combined with weights proportional to their update
//! factors `β`.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{EnsembleDataset, LagSpec};
use crate::kernel::{KernelSpec, UnweightedGrams};
use crate::solver::{self, Diagnostics, FactorState, Problem, SolverSpec};
use crate::threshold::{apply_thresholds, learn_thresholds, ThresholdVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitWeights {
    /// `θ⁰(t, d) = 1`.
    #[default]
    Uniform,
    /// `θ⁰(t, d) = 1 / d`, favouring recent days.
    Recency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostSpec {
    pub rounds: usize,
    pub eps_clamp: f64,
    pub init_weights: InitWeights,
}

impl Default for BoostSpec {
    fn default() -> Self {
        Self {
            rounds: 5,
            eps_clamp: 1e-6,
            init_weights: InitWeights::Uniform,
        }
    }
}

impl BoostSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::spec("boost spec", "rounds must be >= 1"));
        }
        if !(self.eps_clamp > 0.0 && self.eps_clamp < 0.5) {
            return Err(Error::spec(
                "boost spec",
                format!("eps_clamp must lie in (0, 0.5), got {}", self.eps_clamp),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BoostRound {
    /// Weights this round was solved with.
    pub theta: Vec<f64>,
    /// Weighted error before clamping.
    pub epsilon_raw: f64,
    pub epsilon: f64,
    pub beta: f64,
    /// Training columns with at least one wrong sensor.
    pub mismatched: Vec<bool>,
    pub thresholds: ThresholdVector,
    pub scores_tr: Array2<f64>,
    pub scores_te: Array2<f64>,
    pub state: FactorState,
    pub diagnostics: Diagnostics,
}

impl BoostRound {
    pub fn mismatch_count(&self) -> usize {
        self.mismatched.iter().filter(|m| **m).count()
    }
}

#[derive(Debug, Clone)]
pub struct BoostModel {
    pub kernel: KernelSpec,
    pub solver: SolverSpec,
    pub boost: BoostSpec,
    pub lag: LagSpec,
    pub n_days: usize,
    pub rounds: Vec<BoostRound>,
    pub alpha: Vec<f64>,
    pub tau: ThresholdVector,
    pub scores_tr: Array2<f64>,
    pub scores_te: Array2<f64>,
    pub predictions_tr: Array2<f64>,
    pub predictions_te: Array2<f64>,
}

impl BoostModel {
    pub fn n_sensors(&self) -> usize {
        self.scores_tr.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.scores_tr.ncols()
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.epsilon).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.beta).collect()
    }

    /// Columns of the augmented training set that the final combined
    /// prediction gets wrong in at least one sensor.
    pub fn mismatched_columns(&self, y_tr: ArrayView2<f64>) -> usize {
        column_mismatch(self.predictions_tr.view(), y_tr)
            .iter()
            .filter(|m| **m)
            .count()
    }
}

/// `ln((1 - ε) / ε)`.
pub fn update_factor(epsilon: f64) -> f64 {
    ((1.0 - epsilon) / epsilon).ln()
}

pub fn initial_weights(data: &EnsembleDataset, init: InitWeights) -> Vec<f64> {
    (0..data.total_train())
        .map(|col| match init {
            InitWeights::Uniform => 1.0,
            InitWeights::Recency => 1.0 / data.day_of_column(col) as f64,
        })
        .collect()
}

/// Per column, whether any sensor differs.
pub fn column_mismatch(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Vec<bool> {
    pred.axis_iter(Axis(1))
        .zip(truth.axis_iter(Axis(1)))
        .map(|(p, y)| p.iter().zip(y.iter()).any(|(a, b)| a != b))
        .collect()
}

/// `Σ_k α_k S_k`, accumulated in round order. Fit and predict both go
/// through here so that stored and recomputed scores agree bit for bit.
pub fn combine_scores(alpha: &[f64], scores: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
    if alpha.len() != scores.len() || scores.is_empty() {
        return Err(Error::Dimension(format!(
            "{} weights for {} score matrices",
            alpha.len(),
            scores.len()
        )));
    }
    let mut out = Array2::zeros(scores[0].dim());
    for (a, s) in alpha.iter().zip(scores) {
        if s.dim() != out.dim() {
            return Err(Error::Dimension("score matrices differ in shape".into()));
        }
        out.scaled_add(*a, s);
    }
    Ok(out)
}

/// `β_k / Σβ`. Fails when `Σβ <= 0`.
pub fn combination_weights(betas: &[f64]) -> Result<Vec<f64>> {
    let sum: f64 = betas.iter().sum();
    if sum.is_nan() || sum <= 0.0 {
        return Err(Error::NoPositiveUpdate { beta_sum: sum });
    }
    Ok(betas.iter().map(|b| b / sum).collect())
}

pub fn boost_fit(
    data: &EnsembleDataset,
    kspec: &KernelSpec,
    sspec: &SolverSpec,
    bspec: &BoostSpec,
) -> Result<BoostModel> {
    let grams = UnweightedGrams::assemble(data, kspec)?;
    boost_fit_with_grams(data, &grams, kspec, sspec, bspec)
}

/// Like [`boost_fit`] with the unweighted Grams already assembled.
pub fn boost_fit_with_grams(
    data: &EnsembleDataset,
    grams: &UnweightedGrams,
    kspec: &KernelSpec,
    sspec: &SolverSpec,
    bspec: &BoostSpec,
) -> Result<BoostModel> {
    bspec.validate()?;
    sspec.validate()?;
    let y_tr = data.augmented_y_tr();
    if grams.n_train() != y_tr.ncols() {
        return Err(Error::Dimension(format!(
            "Grams cover {} training columns, ensemble has {}",
            grams.n_train(),
            y_tr.ncols()
        )));
    }
    let mut theta = initial_weights(data, bspec.init_weights);
    let mut rounds = Vec::with_capacity(bspec.rounds);
    for _ in 0..bspec.rounds {
        let weighted = grams.weighted(&theta)?;
        let problem = Problem::new(&weighted, y_tr.view())?;
        let out = solver::solve(&problem, sspec)?;
        let scores_tr = out.prediction.y_tr_hat;
        let scores_te = out.prediction.y_te_hat;
        let thresholds = learn_thresholds(scores_tr.view(), y_tr.view())?;
        let pred = apply_thresholds(scores_tr.view(), &thresholds)?;
        let mismatched = column_mismatch(pred.view(), y_tr.view());

        let total: f64 = theta.iter().sum();
        let wrong: f64 = theta
            .iter()
            .zip(&mismatched)
            .filter(|(_, m)| **m)
            .fold(0.0, |acc, (w, _)| acc + w);
        let epsilon_raw = wrong / total;
        let epsilon = epsilon_raw.clamp(bspec.eps_clamp, 1.0 - bspec.eps_clamp);
        let beta = update_factor(epsilon);

        let next: Vec<f64> = theta
            .iter()
            .zip(&mismatched)
            .map(|(w, m)| if *m { w * beta.exp() } else { *w })
            .collect();
        rounds.push(BoostRound {
            theta: std::mem::replace(&mut theta, next),
            epsilon_raw,
            epsilon,
            beta,
            mismatched,
            thresholds,
            scores_tr,
            scores_te,
            state: out.state,
            diagnostics: out.diagnostics,
        });
    }

    let betas: Vec<f64> = rounds.iter().map(|r| r.beta).collect();
    let alpha = combination_weights(&betas)?;
    let tr: Vec<_> = rounds.iter().map(|r| r.scores_tr.view()).collect();
    let te: Vec<_> = rounds.iter().map(|r| r.scores_te.view()).collect();
    let scores_tr = combine_scores(&alpha, &tr)?;
    let scores_te = combine_scores(&alpha, &te)?;
    let tau = learn_thresholds(scores_tr.view(), y_tr.view())?;
    let predictions_tr = apply_thresholds(scores_tr.view(), &tau)?;
    let predictions_te = apply_thresholds(scores_te.view(), &tau)?;
    Ok(BoostModel {
        kernel: *kspec,
        solver: *sspec,
        boost: *bspec,
        lag: *data.lag_spec(),
        n_days: data.n_days(),
        rounds,
        alpha,
        tau,
        scores_tr,
        scores_te,
        predictions_tr,
        predictions_te,
    })
}

/// Exponent `a = ‖τ‖₁ / n` of the training-error bound, with each threshold
/// clamped to `[0, 1]` first (a threshold at `+∞` counts as 1).
pub fn bound_exponent(tau: &ThresholdVector) -> f64 {
    if tau.is_empty() {
        return 0.0;
    }
    tau.tau.iter().map(|t| t.clamp(0.0, 1.0)).sum::<f64>() / tau.len() as f64
}

/// Training-error bound after each round:
/// `N Π_{j<=k} 2 (1 - ε_j)^(1 - a) ε_j^a` with `N = |D| T_tr`.
pub fn bound_trace(epsilons: &[f64], n_columns: usize, a: f64) -> Vec<f64> {
    let mut acc = n_columns as f64;
    epsilons
        .iter()
        .map(|e| {
            acc *= 2.0 * (1.0 - e).powf(1.0 - a) * e.powf(a);
            acc
        })
        .collect()
}

pub fn training_error_bound(model: &BoostModel, tau: &ThresholdVector) -> Vec<f64> {
    bound_trace(&model.epsilons(), model.n_columns(), bound_exponent(tau))
}

/// Mismatched-column count of the combined prediction using only the first
/// `k + 1` rounds, for every `k`. `None` where the prefix has `Σβ <= 0`.
pub fn measured_trace(model: &BoostModel, y_tr: ArrayView2<f64>) -> Result<Vec<Option<usize>>> {
    let mut out = Vec::with_capacity(model.rounds.len());
    for k in 0..model.rounds.len() {
        let prefix = &model.rounds[..=k];
        let betas: Vec<f64> = prefix.iter().map(|r| r.beta).collect();
        let Ok(alpha) = combination_weights(&betas) else {
            out.push(None);
            continue;
        };
        let scores: Vec<_> = prefix.iter().map(|r| r.scores_tr.view()).collect();
        let combined = combine_scores(&alpha, &scores)?;
        let tau = learn_thresholds(combined.view(), y_tr)?;
        let pred = apply_thresholds(combined.view(), &tau)?;
        out.push(Some(
            column_mismatch(pred.view(), y_tr).iter().filter(|m| **m).count(),
        ));
    }
    Ok(out)
}
