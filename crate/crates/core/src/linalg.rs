//! Small dense helpers for the `r x r` systems that appear in every block
//! update. Everything larger goes through `ndarray`'s matrix product.

use ndarray::{Array2, ArrayView2, Zip};

use crate::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
///
/// Fails if a pivot is not strictly positive.
pub fn cholesky(a: ArrayView2<f64>, what: &'static str) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "{what}: expected a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d.is_nan() || d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { what, pivot: d });
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky
/// factor. The result is symmetrized.
pub fn spd_inverse(a: ArrayView2<f64>, what: &'static str) -> Result<Array2<f64>> {
    let l = cholesky(a, what)?;
    let n = l.nrows();
    // Invert L by forward substitution, column by column.
    let mut linv = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        linv[[c, c]] = 1.0 / l[[c, c]];
        for i in (c + 1)..n {
            let mut s = 0.0;
            for k in c..i {
                s -= l[[i, k]] * linv[[k, c]];
            }
            linv[[i, c]] = s / l[[i, i]];
        }
    }
    let mut inv = linv.t().dot(&linv);
    symmetrize(&mut inv);
    Ok(inv)
}

/// Solve `A X = B` for SPD `A`.
pub fn spd_solve(a: ArrayView2<f64>, b: ArrayView2<f64>, what: &'static str) -> Result<Array2<f64>> {
    let l = cholesky(a, what)?;
    let n = l.nrows();
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "{what}: right-hand side has {} rows, expected {n}",
            b.nrows()
        )));
    }
    let mut x = b.to_owned();
    for col in 0..x.ncols() {
        for i in 0..n {
            let mut s = x[[i, col]];
            for k in 0..i {
                s -= l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = x[[i, col]];
            for k in (i + 1)..n {
                s -= l[[k, i]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    Ok(x)
}

/// Checks that the smallest eigenvalue of symmetric `a` is at least `floor`
/// up to a relative slack, by factoring `a - floor * (1 - slack) * I`.
///
/// Every shifted matrix in the coordinate updates has the form `G + 2μI`
/// with `G` PSD, so its spectrum is bounded below by `2μ`.
pub fn assert_min_eigenvalue(a: ArrayView2<f64>, floor: f64, what: &'static str) -> Result<()> {
    let n = a.nrows();
    let scale = 1.0 + a.diag().iter().map(|v| v.abs()).sum::<f64>();
    let shift = floor - 1e-10 * scale - floor * 1e-9;
    let mut shifted = a.to_owned();
    for i in 0..n {
        shifted[[i, i]] -= shift;
    }
    cholesky(shifted.view(), what).map(|_| ())
}

pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
}

pub fn add_diagonal(a: &mut Array2<f64>, value: f64) {
    for i in 0..a.nrows().min(a.ncols()) {
        a[[i, i]] += value;
    }
}

/// Frobenius inner product `Σ a_ij b_ij`.
pub fn inner(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let mut s = 0.0;
    Zip::from(a).and(b).for_each(|x, y| s += x * y);
    s
}

pub fn frobenius_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn trace(a: ArrayView2<f64>) -> f64 {
    a.diag().sum()
}
