//! Four-block coordinate descent for the kernelized completion problem.
//!
//! The joint matrix `[Y_tr ?; Φ_tr Φ_te]` is factored as
//! `[U_tr; U_te] [V_tr; V_te]ᵀ`. The objective is
//!
//! ```text
//! F = ‖U_tr V_trᵀ - Y_tr‖² + ‖U_te V_trᵀ - Φ_tr‖² + ‖U_te V_teᵀ - Φ_te‖²
//!     + λ (‖U_tr‖² + ‖U_te‖² + ‖V_tr‖² + ‖V_te‖²),      λ = 2μ
//! ```
//!
//! Every block update is the closed-form minimizer of `F` in that block, so
//! `F` never increases. `U_te` lives in feature space and is never formed.
//! It is carried as `U_te = Φ_tr P + Φ_te Q`, and the solver keeps the three
//! products the other updates need:
//! `Φ_teᵀ U_te`, `Φ_trᵀ U_te` and `U_teᵀ U_te`.

use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernel::GramSet;
use crate::linalg::{add_diagonal, assert_min_eigenvalue, frobenius_sq, inner, spd_inverse, symmetrize, trace};
use crate::{Error, Result};

/// Relative objective decrease below which `solve` stops early.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub rank: usize,
    pub mu: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub tolerance: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            rank: 30,
            mu: 0.1,
            max_iters: 50,
            seed: 0,
            init_scale: 0.1,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl SolverSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::spec("solver spec", "rank must be >= 1"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::spec("solver spec", format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::spec("solver spec", "init_scale must be >= 0"));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::spec("solver spec", "tolerance must be >= 0"));
        }
        Ok(())
    }

    /// Weight of the Frobenius penalties in the subproblems.
    pub fn lambda(&self) -> f64 {
        2.0 * self.mu
    }
}

/// Training targets and the Gram blocks they are completed against.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub grams: &'a GramSet,
    pub y_tr: ArrayView2<'a, f64>,
}

impl<'a> Problem<'a> {
    pub fn new(grams: &'a GramSet, y_tr: ArrayView2<'a, f64>) -> Result<Self> {
        let t = grams.n_train();
        let te = grams.n_test();
        if y_tr.ncols() != t {
            return Err(Error::Dimension(format!(
                "Y_tr has {} columns, Grams have {t} training columns",
                y_tr.ncols()
            )));
        }
        if grams.k_trtr.ncols() != t
            || grams.k_trte.dim() != (t, te)
            || grams.k_tetr.dim() != (te, t)
            || grams.k_tete.ncols() != te
        {
            return Err(Error::Dimension("inconsistent Gram block shapes".into()));
        }
        Ok(Self { grams, y_tr })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.y_tr.nrows(), self.grams.n_train(), self.grams.n_test())
    }
}

/// Solver iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorState {
    pub u_tr: Array2<f64>,
    pub v_tr: Array2<f64>,
    pub v_te: Array2<f64>,
    /// `Φ_teᵀ U_te`, `T_te x r`.
    pub phi_te_ute: Array2<f64>,
    /// `Φ_trᵀ U_te`, `T x r`.
    pub phi_tr_ute: Array2<f64>,
    /// `U_teᵀ U_te`, `r x r`.
    pub gram_ute: Array2<f64>,
    /// `P` in `U_te = Φ_tr P + Φ_te Q`.
    pub ute_coef_tr: Array2<f64>,
    /// `Q` in `U_te = Φ_tr P + Φ_te Q`.
    pub ute_coef_te: Array2<f64>,
    pub iter: usize,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub y_tr_hat: Array2<f64>,
    pub y_te_hat: Array2<f64>,
}

/// Frobenius norms of the four block gradients, in update order
/// `U_tr, U_te, V_tr, V_te`.
pub type BlockResiduals = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub objective: f64,
    /// Each block's gradient norm evaluated right after that block was
    /// updated. Only filled in by [`bcd_step_checked`].
    pub post_update_residuals: Option<BlockResiduals>,
}

/// Random factors in `[-init_scale, init_scale]`, then one cache refresh so
/// that `U_te` is consistent with the initial `V` blocks.
pub fn init_state(spec: &SolverSpec, problem: &Problem) -> Result<FactorState> {
    spec.validate()?;
    let (n, t, te) = problem.dims();
    let r = spec.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = spec.init_scale;
    let mut draw = |rows: usize| {
        Array2::from_shape_simple_fn((rows, r), || {
            if scale == 0.0 {
                0.0
            } else {
                rng.random_range(-scale..=scale)
            }
        })
    };
    let v_tr = draw(t);
    let v_te = draw(te);
    let u_tr = draw(n);
    let mut state = FactorState {
        u_tr,
        v_tr,
        v_te,
        phi_te_ute: Array2::zeros((te, r)),
        phi_tr_ute: Array2::zeros((t, r)),
        gram_ute: Array2::zeros((r, r)),
        ute_coef_tr: Array2::zeros((t, r)),
        ute_coef_te: Array2::zeros((te, r)),
        iter: 0,
        objective_trace: Vec::new(),
    };
    refresh_caches(&mut state, problem, spec.lambda())?;
    let f = objective(&state, problem, spec.mu)?;
    state.objective_trace.push(f);
    Ok(state)
}

fn check_state_dims(state: &FactorState, problem: &Problem) -> Result<()> {
    let (n, t, te) = problem.dims();
    let r = state.u_tr.ncols();
    let ok = state.u_tr.dim() == (n, r)
        && state.v_tr.dim() == (t, r)
        && state.v_te.dim() == (te, r)
        && state.phi_te_ute.dim() == (te, r)
        && state.phi_tr_ute.dim() == (t, r)
        && state.gram_ute.dim() == (r, r);
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "factor state does not match problem (n={n}, T={t}, T_te={te}, r={r})"
        )))
    }
}

/// `A + λI` after checking that its spectrum is at least `λ`.
fn shifted_inverse(mut a: Array2<f64>, lambda: f64, what: &'static str) -> Result<Array2<f64>> {
    symmetrize(&mut a);
    add_diagonal(&mut a, lambda);
    assert_min_eigenvalue(a.view(), lambda, what)?;
    spd_inverse(a.view(), what)
}

/// Recompute the `U_te` image from the current `V` blocks:
/// `U_te = (Φ_tr V_tr + Φ_te V_te) C₁` with
/// `C₁ = (V_trᵀV_tr + V_teᵀV_te + λI)⁻¹`.
fn refresh_caches(state: &mut FactorState, problem: &Problem, lambda: f64) -> Result<()> {
    let g = problem.grams;
    let vv = state.v_tr.t().dot(&state.v_tr) + state.v_te.t().dot(&state.v_te);
    let c1 = shifted_inverse(vv, lambda, "V_trᵀV_tr + V_teᵀV_te + λI")?;
    // K_trtr V_tr + K_trte V_te and K_tetr V_tr + K_tete V_te
    let kv_tr = g.k_trtr.dot(&state.v_tr) + g.k_trte.dot(&state.v_te);
    let kv_te = g.k_tetr.dot(&state.v_tr) + g.k_tete.dot(&state.v_te);
    // C₂ + C₃
    let quad = state.v_tr.t().dot(&kv_tr) + state.v_te.t().dot(&kv_te);
    state.phi_tr_ute = kv_tr.dot(&c1);
    state.phi_te_ute = kv_te.dot(&c1);
    let mut gram = c1.dot(&quad).dot(&c1);
    symmetrize(&mut gram);
    state.gram_ute = gram;
    state.ute_coef_tr = state.v_tr.dot(&c1);
    state.ute_coef_te = state.v_te.dot(&c1);
    Ok(())
}

/// Objective value, with every feature-space term expanded through Grams.
pub fn objective(state: &FactorState, problem: &Problem, mu: f64) -> Result<f64> {
    check_state_dims(state, problem)?;
    let g = problem.grams;
    let lambda = 2.0 * mu;
    let fit_y = frobenius_sq((state.u_tr.dot(&state.v_tr.t()) - problem.y_tr).view());
    let fit_tr = inner(state.v_tr.dot(&state.gram_ute).view(), state.v_tr.view())
        - 2.0 * inner(state.v_tr.view(), state.phi_tr_ute.view())
        + trace(g.k_trtr.view());
    let fit_te = inner(state.v_te.dot(&state.gram_ute).view(), state.v_te.view())
        - 2.0 * inner(state.v_te.view(), state.phi_te_ute.view())
        + trace(g.k_tete.view());
    let reg = frobenius_sq(state.u_tr.view())
        + trace(state.gram_ute.view())
        + frobenius_sq(state.v_tr.view())
        + frobenius_sq(state.v_te.view());
    Ok(fit_y + fit_tr + fit_te + lambda * reg)
}

// Block gradients. Each returns the Frobenius norm of ∂F/∂block.

fn grad_u_tr(state: &FactorState, problem: &Problem, lambda: f64) -> f64 {
    let mut a = state.v_tr.t().dot(&state.v_tr);
    add_diagonal(&mut a, lambda);
    let g = state.u_tr.dot(&a) - problem.y_tr.dot(&state.v_tr);
    2.0 * frobenius_sq(g.view()).sqrt()
}

fn grad_u_te(state: &FactorState, problem: &Problem, lambda: f64) -> f64 {
    // ∂F/∂U_te = 2 (Φ_tr R + Φ_te S) with R = P A - V_tr, S = Q A - V_te.
    let g = problem.grams;
    let mut a = state.v_tr.t().dot(&state.v_tr) + state.v_te.t().dot(&state.v_te);
    add_diagonal(&mut a, lambda);
    let r = state.ute_coef_tr.dot(&a) - &state.v_tr;
    let s = state.ute_coef_te.dot(&a) - &state.v_te;
    let sq = inner(r.view(), g.k_trtr.dot(&r).view())
        + 2.0 * inner(r.view(), g.k_trte.dot(&s).view())
        + inner(s.view(), g.k_tete.dot(&s).view());
    2.0 * sq.max(0.0).sqrt()
}

fn grad_v_tr(state: &FactorState, problem: &Problem, lambda: f64) -> f64 {
    let mut a = state.u_tr.t().dot(&state.u_tr) + &state.gram_ute;
    add_diagonal(&mut a, lambda);
    let g = state.v_tr.dot(&a) - problem.y_tr.t().dot(&state.u_tr) - &state.phi_tr_ute;
    2.0 * frobenius_sq(g.view()).sqrt()
}

fn grad_v_te(state: &FactorState, lambda: f64) -> f64 {
    let mut a = state.gram_ute.clone();
    add_diagonal(&mut a, lambda);
    let g = state.v_te.dot(&a) - &state.phi_te_ute;
    2.0 * frobenius_sq(g.view()).sqrt()
}

/// Gradient norms of all four blocks at the current iterate.
pub fn gradient_residuals(state: &FactorState, problem: &Problem, mu: f64) -> Result<BlockResiduals> {
    check_state_dims(state, problem)?;
    let lambda = 2.0 * mu;
    Ok([
        grad_u_tr(state, problem, lambda),
        grad_u_te(state, problem, lambda),
        grad_v_tr(state, problem, lambda),
        grad_v_te(state, lambda),
    ])
}

fn step_impl(
    state: &mut FactorState,
    problem: &Problem,
    spec: &SolverSpec,
    check: bool,
) -> Result<StepReport> {
    check_state_dims(state, problem)?;
    let lambda = spec.lambda();
    let mut post = [0.0; 4];

    // (1) U_tr = Y_tr V_tr (V_trᵀV_tr + λI)⁻¹
    let a1 = shifted_inverse(state.v_tr.t().dot(&state.v_tr), lambda, "V_trᵀV_tr + λI")?;
    state.u_tr = problem.y_tr.dot(&state.v_tr).dot(&a1);
    if check {
        post[0] = grad_u_tr(state, problem, lambda);
    }

    // (2) U_te image from the previous V blocks
    refresh_caches(state, problem, lambda)?;
    if check {
        post[1] = grad_u_te(state, problem, lambda);
    }

    // (3) V_tr = (Y_trᵀU_tr + Φ_trᵀU_te)(U_teᵀU_te + U_trᵀU_tr + λI)⁻¹
    let a3 = shifted_inverse(
        &state.gram_ute + &state.u_tr.t().dot(&state.u_tr),
        lambda,
        "U_teᵀU_te + U_trᵀU_tr + λI",
    )?;
    state.v_tr = (problem.y_tr.t().dot(&state.u_tr) + &state.phi_tr_ute).dot(&a3);
    if check {
        post[2] = grad_v_tr(state, problem, lambda);
    }

    // (4) V_te = Φ_teᵀU_te (U_teᵀU_te + λI)⁻¹
    let a4 = shifted_inverse(state.gram_ute.clone(), lambda, "U_teᵀU_te + λI")?;
    state.v_te = state.phi_te_ute.dot(&a4);
    if check {
        post[3] = grad_v_te(state, lambda);
    }

    let f = objective(state, problem, spec.mu)?;
    state.objective_trace.push(f);
    state.iter += 1;
    Ok(StepReport {
        objective: f,
        post_update_residuals: check.then_some(post),
    })
}

/// One pass of the four block updates, in the order `U_tr`, `U_te`
/// (through the caches), `V_tr`, `V_te`.
pub fn bcd_step(state: &mut FactorState, problem: &Problem, spec: &SolverSpec) -> Result<StepReport> {
    step_impl(state, problem, spec, false)
}

/// Like [`bcd_step`], also measuring each block's gradient right after its
/// update. Costs one extra `T x T` product per step.
pub fn bcd_step_checked(
    state: &mut FactorState,
    problem: &Problem,
    spec: &SolverSpec,
) -> Result<StepReport> {
    step_impl(state, problem, spec, true)
}

pub fn predict(state: &FactorState) -> Prediction {
    Prediction {
        y_tr_hat: state.u_tr.dot(&state.v_tr.t()),
        y_te_hat: state.u_tr.dot(&state.v_te.t()),
    }
}

/// Convergence report for one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// `F⁰, F¹, ..., F^K`.
    pub objective_trace: Vec<f64>,
    /// `k (F^k - F^K)` for `k = 1 .. K-1`.
    pub rate_trace: Vec<f64>,
    pub rate_sup: f64,
    pub rate_max_first_half: f64,
    pub rate_max_second_half: f64,
    pub monotonicity_violations: usize,
    /// Gradient norms at the final iterate (`U_tr, U_te, V_tr, V_te`).
    pub gradient_residuals: BlockResiduals,
    /// Excluded from serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl Diagnostics {
    /// Sublinear-rate check: the `k (F^k - F^K)` statistic does not grow
    /// over the second half of the run.
    pub fn rate_bounded(&self) -> bool {
        self.rate_sup.is_finite() && self.rate_max_second_half <= 2.0 * self.rate_max_first_half
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }

    /// All gradient norms below `tol * (1 + F^K)`.
    pub fn stationary(&self, tol: f64) -> bool {
        let bound = tol * (1.0 + self.final_objective().abs());
        self.gradient_residuals.iter().all(|g| *g < bound)
    }
}

/// Count of steps where the objective went up by more than round-off
/// (`1e-12` relative).
pub fn monotonicity_violations(trace: &[f64]) -> usize {
    trace
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-12 * w[0].abs().max(1.0))
        .count()
}

/// `k (F^k - F^K)` for `1 <= k < K`.
pub fn rate_trace(trace: &[f64]) -> Vec<f64> {
    let Some(&last) = trace.last() else {
        return Vec::new();
    };
    let k_final = trace.len() - 1;
    (1..k_final).map(|k| k as f64 * (trace[k] - last)).collect()
}

pub fn diagnostics(state: &FactorState, problem: &Problem, mu: f64, converged: bool) -> Result<Diagnostics> {
    let trace = state.objective_trace.clone();
    let rates = rate_trace(&trace);
    let half = rates.len().div_ceil(2);
    let max_of = |s: &[f64]| s.iter().copied().fold(0.0_f64, f64::max);
    Ok(Diagnostics {
        iterations: state.iter,
        converged,
        rate_sup: max_of(&rates),
        rate_max_first_half: max_of(&rates[..half]),
        rate_max_second_half: max_of(&rates[half..]),
        rate_trace: rates,
        monotonicity_violations: monotonicity_violations(&trace),
        gradient_residuals: gradient_residuals(state, problem, mu)?,
        objective_trace: trace,
        wall_time_secs: 0.0,
    })
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub state: FactorState,
    pub prediction: Prediction,
    pub diagnostics: Diagnostics,
}

/// Run up to `max_iters` steps, stopping once the relative objective decrease
/// falls below `spec.tolerance`.
pub fn solve(problem: &Problem, spec: &SolverSpec) -> Result<SolveOutput> {
    let started = Instant::now();
    let mut state = init_state(spec, problem)?;
    let mut converged = false;
    for _ in 0..spec.max_iters {
        let prev = *state.objective_trace.last().expect("trace starts with F0");
        let f = bcd_step(&mut state, problem, spec)?.objective;
        if (prev - f) <= spec.tolerance * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let mut diagnostics = diagnostics(&state, problem, spec.mu, converged)?;
    diagnostics.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(SolveOutput {
        prediction: predict(&state),
        state,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelSpec, UnweightedGrams};
    use ndarray::array;

    fn linear_grams(x_tr: &Array2<f64>, x_te: &Array2<f64>) -> GramSet {
        let stamps_tr: Vec<i64> = (0..x_tr.ncols() as i64).collect();
        let stamps_te: Vec<i64> = (0..x_te.ncols() as i64).collect();
        UnweightedGrams::from_blocks(x_tr.view(), &stamps_tr, x_te.view(), &stamps_te, &KernelSpec::linear())
            .unwrap()
            .weighted(&vec![1.0; x_tr.ncols()])
            .unwrap()
    }

    #[test]
    fn scalar_u_update() {
        // n = 1, r = 1, T = 1, no test block: U_tr = 2 * 1 / (1 + 2 * 0.5) = 1.
        let grams = linear_grams(&array![[0.0]], &Array2::zeros((1, 0)));
        let y = array![[2.0]];
        let problem = Problem::new(&grams, y.view()).unwrap();
        let spec = SolverSpec {
            rank: 1,
            mu: 0.5,
            ..Default::default()
        };
        let mut state = init_state(&spec, &problem).unwrap();
        state.v_tr = array![[1.0]];
        bcd_step(&mut state, &problem, &spec).unwrap();
        assert!((state.u_tr[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_init_objective() {
        let x_tr = array![[1.0, 0.0, 1.0, 1.0], [0.0, 1.0, 1.0, 0.0]];
        let x_te = array![[1.0, 0.0], [1.0, 1.0]];
        let grams = linear_grams(&x_tr, &x_te);
        let y = array![[1.0, 0.0, 1.0, 1.0]];
        let problem = Problem::new(&grams, y.view()).unwrap();
        let spec = SolverSpec {
            rank: 2,
            init_scale: 0.0,
            ..Default::default()
        };
        let state = init_state(&spec, &problem).unwrap();
        let expected = 3.0 + trace(grams.k_trtr.view()) + trace(grams.k_tete.view());
        assert_eq!(state.objective_trace[0], expected);
    }

    #[test]
    fn seeds_are_deterministic() {
        let x_tr = array![[1.0, 0.0, 1.0, 1.0], [0.0, 1.0, 1.0, 0.0]];
        let x_te = array![[1.0, 0.0], [1.0, 1.0]];
        let grams = linear_grams(&x_tr, &x_te);
        let y = array![[1.0, 0.0, 1.0, 1.0]];
        let problem = Problem::new(&grams, y.view()).unwrap();
        let spec = SolverSpec {
            rank: 2,
            seed: 7,
            ..Default::default()
        };
        let a = init_state(&spec, &problem).unwrap();
        let b = init_state(&spec, &problem).unwrap();
        assert_eq!(a, b);
        let c = init_state(&SolverSpec { seed: 8, ..spec }, &problem).unwrap();
        assert_ne!(a.v_tr, c.v_tr);
    }

    #[test]
    fn zero_iterations_predicts_from_init() {
        let x_tr = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let x_te = array![[1.0], [1.0]];
        let grams = linear_grams(&x_tr, &x_te);
        let y = array![[1.0, 0.0, 1.0]];
        let problem = Problem::new(&grams, y.view()).unwrap();
        let spec = SolverSpec {
            rank: 2,
            max_iters: 0,
            ..Default::default()
        };
        let out = solve(&problem, &spec).unwrap();
        let init = init_state(&spec, &problem).unwrap();
        assert_eq!(out.state, init);
        assert_eq!(out.prediction, predict(&init));
    }

    #[test]
    fn rejects_bad_shapes() {
        let grams = linear_grams(&array![[1.0, 0.0]], &array![[1.0]]);
        let y = array![[1.0, 0.0, 1.0]];
        assert!(Problem::new(&grams, y.view()).is_err());
    }

    #[test]
    fn rate_trace_values() {
        let tr = [10.0, 6.0, 4.0, 3.0];
        assert_eq!(rate_trace(&tr), vec![3.0, 2.0]);
        assert_eq!(monotonicity_violations(&[3.0, 2.0, 2.5]), 1);
        assert_eq!(monotonicity_violations(&[3.0, 2.0, 2.0]), 0);
    }
}
