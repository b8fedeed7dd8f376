//! Periodic RBF kernel and Gram assembly.
//!
//! The kernel between two lagged columns `u`, `v` observed at absolute times
//! `t1`, `t2` is
//!
//! ```text
//! k(u, t1, v, t2) = exp(-γ ‖u - v‖² - γ_p d_P(t1, t2)²)
//! ```
//!
//! where `d_P` is the distance between the two times on a circle of period
//! `P`. Boosting weights enter only through a diagonal rescaling of the
//! training blocks, so the unweighted Grams are computed once and reused.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::EnsembleDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelVariant {
    Rbfp,
    /// Plain inner product. Used to check the kernel-space solver against an
    /// explicit-feature reference.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma: f64,
    pub gamma_p: f64,
    pub period: u64,
    pub variant: KernelVariant,
}

impl KernelSpec {
    pub fn rbfp(gamma: f64, gamma_p: f64, period: u64) -> Result<Self> {
        let spec = Self {
            gamma,
            gamma_p,
            period,
            variant: KernelVariant::Rbfp,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear() -> Self {
        Self {
            gamma: 1.0,
            gamma_p: 0.0,
            period: 1,
            variant: KernelVariant::Linear,
        }
    }

    /// `γ = 1 / (nL)`, no periodic term.
    pub fn default_for(n_sensors: usize, lag: usize, period: u64) -> Self {
        Self {
            gamma: 1.0 / (n_sensors * lag).max(1) as f64,
            gamma_p: 0.0,
            period: period.max(1),
            variant: KernelVariant::Rbfp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::spec("kernel spec", format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.gamma_p >= 0.0 && self.gamma_p.is_finite()) {
            return Err(Error::spec(
                "kernel spec",
                format!("gamma_p must be >= 0, got {}", self.gamma_p),
            ));
        }
        if self.period == 0 {
            return Err(Error::spec("kernel spec", "period must be >= 1"));
        }
        Ok(())
    }
}

/// `min(|(t1 - t2) mod P|, P - |(t1 - t2) mod P|)`.
pub fn temporal_distance(t1: i64, t2: i64, period: u64) -> f64 {
    let p = period.max(1) as i128;
    let r = (t1 as i128 - t2 as i128).rem_euclid(p);
    r.min(p - r) as f64
}

pub fn kernel_entry(
    u: ArrayView1<f64>,
    t1: i64,
    v: ArrayView1<f64>,
    t2: i64,
    spec: &KernelSpec,
) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "kernel arguments have lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(match spec.variant {
        KernelVariant::Linear => u.dot(&v),
        KernelVariant::Rbfp => {
            let sq: f64 = u.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            let dp = temporal_distance(t1, t2, spec.period);
            (-spec.gamma * sq - spec.gamma_p * dp * dp).exp()
        }
    })
}

/// The four Gram blocks plus the per-column training weights they carry.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSet {
    pub k_trtr: Array2<f64>,
    pub k_trte: Array2<f64>,
    pub k_tetr: Array2<f64>,
    pub k_tete: Array2<f64>,
    pub train_weights: Array1<f64>,
}

impl GramSet {
    pub fn n_train(&self) -> usize {
        self.k_trtr.nrows()
    }

    pub fn n_test(&self) -> usize {
        self.k_tete.nrows()
    }
}

/// Unweighted Gram blocks, kept across boosting rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct UnweightedGrams {
    k_trtr: Array2<f64>,
    k_trte: Array2<f64>,
    k_tete: Array2<f64>,
}

impl UnweightedGrams {
    pub fn assemble(data: &EnsembleDataset, spec: &KernelSpec) -> Result<Self> {
        Self::from_blocks(
            data.augmented_x_tr().view(),
            &data.augmented_timestamps_tr(),
            data.x_te().view(),
            data.timestamps_te(),
            spec,
        )
    }

    pub fn from_blocks(
        x_tr: ArrayView2<f64>,
        stamps_tr: &[i64],
        x_te: ArrayView2<f64>,
        stamps_te: &[i64],
        spec: &KernelSpec,
    ) -> Result<Self> {
        spec.validate()?;
        if x_tr.nrows() != x_te.nrows() {
            return Err(Error::Dimension(format!(
                "training inputs have {} rows, test inputs {}",
                x_tr.nrows(),
                x_te.nrows()
            )));
        }
        if stamps_tr.len() != x_tr.ncols() || stamps_te.len() != x_te.ncols() {
            return Err(Error::Dimension("timestamps do not match column counts".into()));
        }
        let k_trtr = symmetric_block(x_tr, stamps_tr, spec);
        let k_tete = symmetric_block(x_te, stamps_te, spec);
        let k_trte = cross_block(x_tr, stamps_tr, x_te, stamps_te, spec);
        Ok(Self {
            k_trtr,
            k_trte,
            k_tete,
        })
    }

    pub fn n_train(&self) -> usize {
        self.k_trtr.nrows()
    }

    /// Apply boost weights: `K_trtr <- diag(θ) K_trtr diag(θ)`,
    /// `K_tetr <- K_tetr diag(θ)`, `K_tete` unchanged.
    pub fn weighted(&self, theta: &[f64]) -> Result<GramSet> {
        let t = self.n_train();
        if theta.len() != t {
            return Err(Error::Dimension(format!(
                "{} weights for {t} training columns",
                theta.len()
            )));
        }
        if let Some(w) = theta.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::spec("boost weights", format!("weight {w} is not positive")));
        }
        let theta = Array1::from(theta.to_vec());
        let mut k_trtr = self.k_trtr.clone();
        for ((i, j), v) in k_trtr.indexed_iter_mut() {
            *v *= theta[i] * theta[j];
        }
        let mut k_trte = self.k_trte.clone();
        for (mut row, &w) in k_trte.axis_iter_mut(Axis(0)).zip(theta.iter()) {
            row *= w;
        }
        let k_tetr = k_trte.t().to_owned();
        Ok(GramSet {
            k_trtr,
            k_trte,
            k_tetr,
            k_tete: self.k_tete.clone(),
            train_weights: theta,
        })
    }
}

pub fn assemble_grams(data: &EnsembleDataset, spec: &KernelSpec, theta: &[f64]) -> Result<GramSet> {
    UnweightedGrams::assemble(data, spec)?.weighted(theta)
}

/// Squared norms of the columns.
fn column_sq_norms(x: ArrayView2<f64>) -> Vec<f64> {
    x.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect()
}

fn finish_entry(ip: f64, na: f64, nb: f64, ta: i64, tb: i64, spec: &KernelSpec) -> f64 {
    match spec.variant {
        KernelVariant::Linear => ip,
        KernelVariant::Rbfp => {
            // Exact for binary inputs: all three terms are integers.
            let sq = (na + nb - 2.0 * ip).max(0.0);
            let dp = temporal_distance(ta, tb, spec.period);
            (-spec.gamma * sq - spec.gamma_p * dp * dp).exp()
        }
    }
}

fn symmetric_block(x: ArrayView2<f64>, stamps: &[i64], spec: &KernelSpec) -> Array2<f64> {
    let m = x.ncols();
    let ip = x.t().dot(&x);
    let norms = column_sq_norms(x);
    let mut k = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in i..m {
            let v = if i == j && spec.variant == KernelVariant::Rbfp {
                1.0
            } else {
                finish_entry(ip[[i, j]], norms[i], norms[j], stamps[i], stamps[j], spec)
            };
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

fn cross_block(
    a: ArrayView2<f64>,
    stamps_a: &[i64],
    b: ArrayView2<f64>,
    stamps_b: &[i64],
    spec: &KernelSpec,
) -> Array2<f64> {
    let ip = a.t().dot(&b);
    let na = column_sq_norms(a);
    let nb = column_sq_norms(b);
    Array2::from_shape_fn((a.ncols(), b.ncols()), |(i, j)| {
        finish_entry(ip[[i, j]], na[i], nb[j], stamps_a[i], stamps_b[j], spec)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn temporal_distance_cases() {
        assert_eq!(temporal_distance(5, 5, 10), 0.0);
        assert_eq!(temporal_distance(9, 1, 10), 2.0);
        assert_eq!(temporal_distance(1, 9, 10), 2.0);
        assert_eq!(temporal_distance(17, 17 + 13, 13), 0.0);
        assert_eq!(temporal_distance(-3, 4, 10), 3.0);
        assert_eq!(temporal_distance(0, 5, 10), 5.0);
    }

    #[test]
    fn kernel_identity_and_half() {
        let spec = KernelSpec::rbfp(std::f64::consts::LN_2, 0.0, 60).unwrap();
        let u = array![1.0, 0.0, 1.0];
        let v = array![1.0, 1.0, 1.0];
        assert_eq!(kernel_entry(u.view(), 3, u.view(), 3, &spec).unwrap(), 1.0);
        let k = kernel_entry(u.view(), 3, v.view(), 40, &spec).unwrap();
        assert!((k - 0.5).abs() < 1e-15);
        assert!(kernel_entry(u.view(), 0, array![1.0].view(), 0, &spec).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::rbfp(0.0, 0.0, 1).is_err());
        assert!(KernelSpec::rbfp(1.0, -1.0, 1).is_err());
        assert!(KernelSpec::rbfp(1.0, 0.0, 0).is_err());
        let d = KernelSpec::default_for(4, 10, 90);
        assert_eq!(d.gamma, 1.0 / 40.0);
        assert_eq!(d.gamma_p, 0.0);
    }

    #[test]
    fn single_weight_scales_row_and_column() {
        let x_tr = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let x_te = array![[1.0], [1.0]];
        let spec = KernelSpec::rbfp(0.3, 0.1, 7).unwrap();
        let g = UnweightedGrams::from_blocks(x_tr.view(), &[0, 1, 2], x_te.view(), &[3], &spec).unwrap();
        let base = g.weighted(&[1.0, 1.0, 1.0]).unwrap();
        let w = g.weighted(&[1.0, 2.0, 1.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let f = match (i == 1, j == 1) {
                    (true, true) => 4.0,
                    (true, false) | (false, true) => 2.0,
                    _ => 1.0,
                };
                assert_eq!(w.k_trtr[[i, j]], f * base.k_trtr[[i, j]]);
            }
            let f = if i == 1 { 2.0 } else { 1.0 };
            assert_eq!(w.k_trte[[i, 0]], f * base.k_trte[[i, 0]]);
            assert_eq!(w.k_tetr[[0, i]], w.k_trte[[i, 0]]);
        }
        assert_eq!(w.k_tete, base.k_tete);
        assert!(g.weighted(&[1.0, 0.0, 1.0]).is_err());
        assert!(g.weighted(&[1.0, 1.0]).is_err());
    }
}
