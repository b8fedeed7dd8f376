#![allow(dead_code)]

use mcforecast::data::SensorPanel;
use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_panel(n: usize, len: usize, p: f64, seed: u64) -> SensorPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_simple_fn((n, len), || u8::from(rng.random::<f64>() < p));
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    SensorPanel::new(ids, values, 1000, 1).unwrap()
}

pub fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn max_abs_diff(a: ArrayView2<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0_f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m = m.max((a[[i, j]] - b[(i, j)]).abs());
        }
    }
    m
}

/// Explicit-feature reference for the linear kernel: `Φ = X` is materialized
/// and `U_te` is a plain `nL x r` matrix.
pub struct Explicit {
    pub y: DMatrix<f64>,
    pub phi_tr: DMatrix<f64>,
    pub phi_te: DMatrix<f64>,
    pub lambda: f64,
    pub u_tr: DMatrix<f64>,
    pub u_te: DMatrix<f64>,
    pub v_tr: DMatrix<f64>,
    pub v_te: DMatrix<f64>,
}

fn shifted_inv(a: DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = a.nrows();
    (a + DMatrix::identity(n, n) * lambda).try_inverse().expect("invertible")
}

impl Explicit {
    pub fn new(
        y: DMatrix<f64>,
        phi_tr: DMatrix<f64>,
        phi_te: DMatrix<f64>,
        lambda: f64,
        u_tr: DMatrix<f64>,
        v_tr: DMatrix<f64>,
        v_te: DMatrix<f64>,
    ) -> Self {
        let mut e = Self {
            y,
            phi_tr,
            phi_te,
            lambda,
            u_tr,
            u_te: DMatrix::zeros(0, 0),
            v_tr,
            v_te,
        };
        e.update_u_te();
        e
    }

    fn update_u_te(&mut self) {
        let a = self.v_tr.transpose() * &self.v_tr + self.v_te.transpose() * &self.v_te;
        self.u_te = (&self.phi_tr * &self.v_tr + &self.phi_te * &self.v_te) * shifted_inv(a, self.lambda);
    }

    pub fn step(&mut self) {
        let l = self.lambda;
        self.u_tr = &self.y * &self.v_tr * shifted_inv(self.v_tr.transpose() * &self.v_tr, l);
        self.update_u_te();
        let g = self.u_te.transpose() * &self.u_te;
        self.v_tr = (self.y.transpose() * &self.u_tr + self.phi_tr.transpose() * &self.u_te)
            * shifted_inv(&g + self.u_tr.transpose() * &self.u_tr, l);
        self.v_te = self.phi_te.transpose() * &self.u_te * shifted_inv(g, l);
    }

    pub fn objective(&self) -> f64 {
        let f = (&self.u_tr * self.v_tr.transpose() - &self.y).norm_squared()
            + (&self.u_te * self.v_tr.transpose() - &self.phi_tr).norm_squared()
            + (&self.u_te * self.v_te.transpose() - &self.phi_te).norm_squared();
        f + self.lambda
            * (self.u_tr.norm_squared()
                + self.u_te.norm_squared()
                + self.v_tr.norm_squared()
                + self.v_te.norm_squared())
    }

    /// Frobenius norms of `∂F/∂U_tr, ∂F/∂U_te, ∂F/∂V_tr, ∂F/∂V_te`.
    pub fn gradients(&self) -> [f64; 4] {
        let l = self.lambda;
        let g1 = (&self.u_tr * self.v_tr.transpose() - &self.y) * &self.v_tr * 2.0 + &self.u_tr * (2.0 * l);
        let e_tr = &self.u_te * self.v_tr.transpose() - &self.phi_tr;
        let e_te = &self.u_te * self.v_te.transpose() - &self.phi_te;
        let g2 = (&e_tr * &self.v_tr + &e_te * &self.v_te) * 2.0 + &self.u_te * (2.0 * l);
        let g3 = (self.u_tr.clone() * self.v_tr.transpose() - &self.y).transpose() * &self.u_tr * 2.0
            + e_tr.transpose() * &self.u_te * 2.0
            + &self.v_tr * (2.0 * l);
        let g4 = e_te.transpose() * &self.u_te * 2.0 + &self.v_te * (2.0 * l);
        [g1.norm(), g2.norm(), g3.norm(), g4.norm()]
    }
}

/// Independent M1 reference: discrete Fréchet over finely sampled completed
/// graphs, restricted to pairs whose time gap is at most `U`. The banded
/// value is exact whenever it does not exceed `U`; otherwise `U` doubles.
pub fn m1_oracle(a: &[u8], b: &[u8], samples: usize) -> f64 {
    m1_oracle_from(a, b, samples, 1.0 / 16.0)
}

/// Same as [`m1_oracle`] with the first band width supplied by the caller.
/// The width only affects speed.
pub fn m1_oracle_from(a: &[u8], b: &[u8], samples: usize, first_band: f64) -> f64 {
    let p = oracle_chain(a, samples);
    let q = oracle_chain(b, samples);
    let mut band = first_band.max(1e-3);
    loop {
        let d = banded_frechet(&p, &q, band);
        if d <= band || band >= 2.0 {
            return d;
        }
        band *= 2.0;
    }
}

fn oracle_chain(a: &[u8], samples: usize) -> Vec<(f64, f64)> {
    let scale = 1.0 / (a.len().max(2) - 1) as f64;
    // Corners of the completed graph, walking left to right.
    let mut corners = vec![(0.0, f64::from(a[0]))];
    let mut level = a[0];
    for (i, &v) in a.iter().enumerate().skip(1) {
        if v != level {
            let t = i as f64 * scale;
            corners.push((t, f64::from(level)));
            corners.push((t, f64::from(v)));
            level = v;
        }
    }
    corners.push(((a.len() - 1) as f64 * scale, f64::from(level)));
    let mut chain = Vec::new();
    for pair in corners.windows(2) {
        let (t0, v0) = pair[0];
        let (t1, v1) = pair[1];
        for k in 0..samples {
            let w = k as f64 / samples as f64;
            chain.push((t0 * (1.0 - w) + t1 * w, v0 * (1.0 - w) + v1 * w));
        }
    }
    chain.push(*corners.last().unwrap());
    chain
}

fn banded_frechet(p: &[(f64, f64)], q: &[(f64, f64)], band: f64) -> f64 {
    let inf = f64::INFINITY;
    let m = q.len();
    let qt: Vec<f64> = q.iter().map(|x| x.0).collect();
    let qv: Vec<f64> = q.iter().map(|x| x.1).collect();
    let mut prev = vec![inf; m + 1];
    let mut cur = vec![inf; m + 1];
    // Slot 0 is a permanent ∞ sentinel; cell j lives at j + 1.
    // Spans of live cells held in each buffer.
    let mut prev_span = (1usize, 0usize);
    let mut cur_span = (1usize, 0usize);
    let (mut lo, mut hi) = (0usize, 0usize);
    for (i, &(tp, vp)) in p.iter().enumerate() {
        while lo < m && qt[lo] < tp - band {
            lo += 1;
        }
        if lo == m {
            return inf;
        }
        hi = hi.max(lo);
        while hi + 1 < m && qt[hi + 1] <= tp + band {
            hi += 1;
        }
        if cur_span.0 <= cur_span.1 {
            cur[cur_span.0..=cur_span.1].fill(inf);
        }
        let mut left = if i == 0 && lo == 0 { -inf } else { inf };
        for j in lo..=hi {
            let c = (tp - qt[j]).abs().max((vp - qv[j]).abs());
            let reach = left.min(prev[j + 1]).min(prev[j]);
            let v = c.max(reach);
            cur[j + 1] = v;
            left = v;
        }
        cur_span = (lo + 1, hi + 1);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut prev_span, &mut cur_span);
    }
    prev[m]
}

/// Decides `d ≤ delta` (or `d < delta` when `strict`) for the M1 oracle
/// distance by bitset reachability through the free space of the two chains.
pub fn m1_oracle_decide(a: &[u8], b: &[u8], samples: usize, delta: f64, strict: bool) -> bool {
    let p = oracle_chain(a, samples);
    let q = oracle_chain(b, samples);
    let m = q.len();
    let words = m.div_ceil(64);
    let ok = |c: f64| if strict { c < delta } else { c <= delta };

    let mut value_masks: std::collections::HashMap<u64, Vec<u64>> = std::collections::HashMap::new();
    let mut time_mask = vec![0u64; words];
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut reach = vec![0u64; words];
    let mut seeds = vec![0u64; words];

    for (i, &(tp, vp)) in p.iter().enumerate() {
        let vmask = value_masks.entry(vp.to_bits()).or_insert_with(|| {
            let mut w = vec![0u64; words];
            for (j, &(_, vq)) in q.iter().enumerate() {
                if ok((vp - vq).abs()) {
                    w[j / 64] |= 1 << (j % 64);
                }
            }
            w
        });
        // Times along q are nondecreasing, so the time-feasible cells form
        // one interval [lo, hi).
        while lo < m && !ok((tp - q[lo].0).abs()) && q[lo].0 < tp {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < m && ok((tp - q[hi].0).abs()) {
            hi += 1;
        }
        set_range(&mut time_mask, lo, hi);

        if i == 0 {
            seeds.fill(0);
            seeds[0] = 1;
        } else {
            let mut carry = 0u64;
            for w in 0..words {
                let r = reach[w];
                seeds[w] = r | (r << 1) | carry;
                carry = r >> 63;
            }
        }
        let mut any = false;
        let mut carry = false;
        for w in 0..words {
            let f = vmask[w] & time_mask[w];
            let s = seeds[w] & f;
            let (s1, c1) = f.overflowing_add(s);
            let (sum, c2) = s1.overflowing_add(u64::from(carry));
            carry = c1 || c2;
            reach[w] = ((sum ^ f) & f) | s;
            any |= reach[w] != 0;
        }
        if !any {
            return false;
        }
    }
    reach[(m - 1) / 64] >> ((m - 1) % 64) & 1 == 1
}

fn set_range(mask: &mut [u64], lo: usize, hi: usize) {
    mask.fill(0);
    if lo >= hi {
        return;
    }
    let (wl, wh) = (lo / 64, (hi - 1) / 64);
    let low_bits = !0u64 << (lo % 64);
    let high_bits = !0u64 >> (63 - (hi - 1) % 64);
    if wl == wh {
        mask[wl] = low_bits & high_bits;
    } else {
        mask[wl] = low_bits;
        mask[wl + 1..wh].fill(!0);
        mask[wh] = high_bits;
    }
}
