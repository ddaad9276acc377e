//! Smoothed `l_q` total variation on abundance maps.
//!
//! For a map `X` (`I x J`) the regularizer is
//!
//! ```text
//! phi(X) = sum_i (dh_i^2 + eps)^(q/2) + sum_i (dv_i^2 + eps)^(q/2)
//! ```
//!
//! where `dh = diff_h(X)` and `dv = diff_v(X)` are circular first differences
//! along `j` and `i`. On `vec(X)` (column-major) these are the Kronecker
//! operators `H_J (x) I_I` and `I_J (x) H_I`, with `H_n` the `n x n` circulant
//! `e_k - e_{k+1}`. Nothing here forms those `IJ x IJ` matrices; every
//! operator is applied matrix-free in `O(IJ)`.
//!
//! The gradient uses the quadratic majorizer of `(d^2 + eps)^(q/2)` at the
//! current differences, whose weights `w = (d^2 + eps)^((q-2)/2)` also give the
//! cheap Lipschitz bound used for the abundance step size.

use faer::Mat;

use crate::error::{Error, Result};
use crate::model::{read_map_row, AbundanceMatrix};

/// Spectral norm of the circulant difference operator. Its eigenvalues are
/// `1 - exp(2 pi i k / n)`, whose modulus never exceeds 2.
pub const DIFF_SIGMA_MAX: f64 = 2.0;

/// Weights `theta_r` plus the exponent `q` and smoothing `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TvParams {
    pub theta: Vec<f64>,
    pub q: f64,
    pub eps: f64,
}

impl TvParams {
    pub fn new(theta: Vec<f64>, q: f64, eps: f64) -> Result<Self> {
        let p = Self { theta, q, eps };
        p.validate(p.theta.len())?;
        Ok(p)
    }

    /// Same `theta` for all `r` endmembers.
    pub fn uniform(r: usize, theta: f64, q: f64, eps: f64) -> Self {
        Self { theta: vec![theta; r], q, eps }
    }

    pub fn validate(&self, r: usize) -> Result<()> {
        if self.theta.len() != r {
            return Err(Error::Shape(format!(
                "{} TV weights for {} endmembers",
                self.theta.len(),
                r
            )));
        }
        if self.theta.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::InvalidParam("TV weights must be finite and >= 0".into()));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidParam(format!("q = {} must lie in (0, 1]", self.q)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParam(format!("eps = {} must be positive", self.eps)));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.theta.iter().any(|&t| t > 0.0)
    }
}

/// Finite-difference image produced by [`diff_h`] or [`diff_v`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiffImage(Mat<f64>);

impl DiffImage {
    pub fn values(&self) -> &Mat<f64> {
        &self.0
    }

    pub fn into_values(self) -> Mat<f64> {
        self.0
    }
}

/// Diagonal of the majorizer: `(d^2 + eps)^((q-2)/2)` per difference.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorizerWeights(Mat<f64>);

impl MajorizerWeights {
    pub fn values(&self) -> &Mat<f64> {
        &self.0
    }

    pub fn max(&self) -> f64 {
        max_entry(&self.0)
    }
}

fn max_entry(m: &Mat<f64>) -> f64 {
    (0..m.ncols())
        .flat_map(|j| m.col_as_slice(j).iter().copied())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `out[i, j] = X[i, j] - X[i, (j + 1) mod J]`.
pub fn diff_h(map: &Mat<f64>) -> DiffImage {
    let cols = map.ncols();
    let mut out = Mat::zeros(map.nrows(), cols);
    for j in 0..cols {
        let next = map.col_as_slice((j + 1) % cols);
        for ((o, &a), &b) in out.col_as_slice_mut(j).iter_mut().zip(map.col_as_slice(j)).zip(next) {
            *o = a - b;
        }
    }
    DiffImage(out)
}

/// `out[i, j] = X[i, j] - X[(i + 1) mod I, j]`.
pub fn diff_v(map: &Mat<f64>) -> DiffImage {
    let rows = map.nrows();
    let mut out = Mat::zeros(rows, map.ncols());
    for j in 0..map.ncols() {
        let src = map.col_as_slice(j);
        for (i, o) in out.col_as_slice_mut(j).iter_mut().enumerate() {
            *o = src[i] - src[(i + 1) % rows];
        }
    }
    DiffImage(out)
}

/// Adjoint of [`diff_h`]: `out[i, j] = D[i, j] - D[i, (j - 1) mod J]`.
pub fn diff_h_adjoint(d: &Mat<f64>) -> Mat<f64> {
    let cols = d.ncols();
    let mut out = Mat::zeros(d.nrows(), cols);
    for j in 0..cols {
        let prev = d.col_as_slice((j + cols - 1) % cols);
        for ((o, &a), &b) in out.col_as_slice_mut(j).iter_mut().zip(d.col_as_slice(j)).zip(prev) {
            *o = a - b;
        }
    }
    out
}

/// Adjoint of [`diff_v`]: `out[i, j] = D[i, j] - D[(i - 1) mod I, j]`.
pub fn diff_v_adjoint(d: &Mat<f64>) -> Mat<f64> {
    let rows = d.nrows();
    let mut out = Mat::zeros(rows, d.ncols());
    for j in 0..d.ncols() {
        let src = d.col_as_slice(j);
        for (i, o) in out.col_as_slice_mut(j).iter_mut().enumerate() {
            *o = src[i] - src[(i + rows - 1) % rows];
        }
    }
    out
}

fn phi_of_diff(d: &Mat<f64>, q: f64, eps: f64) -> f64 {
    (0..d.ncols())
        .flat_map(|j| d.col_as_slice(j).iter())
        .map(|&x| (x * x + eps).powf(0.5 * q))
        .sum()
}

/// `phi(X)` for a single map.
pub fn phi_value(map: &Mat<f64>, q: f64, eps: f64) -> f64 {
    phi_of_diff(diff_h(map).values(), q, eps) + phi_of_diff(diff_v(map).values(), q, eps)
}

pub fn majorizer_weights(d: &DiffImage, q: f64, eps: f64) -> MajorizerWeights {
    let e = 0.5 * (q - 2.0);
    let src = d.values();
    MajorizerWeights(Mat::from_fn(src.nrows(), src.ncols(), |i, j| {
        let x = src[(i, j)];
        (x * x + eps).powf(e)
    }))
}

/// Quadratic surrogate of `phi` anchored at `anchor`:
/// `sum phi_i(d0) + (q/2) w_i (d_i^2 - d0_i^2)` over both directions.
/// Upper-bounds [`phi_value`] everywhere and touches it at the anchor.
pub fn phi_surrogate(map: &Mat<f64>, anchor: &Mat<f64>, q: f64, eps: f64) -> f64 {
    let mut total = 0.0;
    for (d, d0) in [(diff_h(map), diff_h(anchor)), (diff_v(map), diff_v(anchor))] {
        let w = majorizer_weights(&d0, q, eps);
        let (d, d0, w) = (d.values(), d0.values(), w.values());
        for j in 0..d.ncols() {
            for i in 0..d.nrows() {
                let (x, x0) = (d[(i, j)], d0[(i, j)]);
                total += (x0 * x0 + eps).powf(0.5 * q) + 0.5 * q * w[(i, j)] * (x * x - x0 * x0);
            }
        }
    }
    total
}

/// `sum_r theta_r phi(S_r)`.
pub fn tv_value(s: &AbundanceMatrix, params: &TvParams) -> f64 {
    params
        .theta
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > 0.0)
        .map(|(r, &t)| {
            let map = read_map_row(s.matrix(), r, s.rows(), s.cols());
            t * phi_value(&map, params.q, params.eps)
        })
        .sum()
}

fn weighted(d: DiffImage, q: f64, eps: f64) -> Mat<f64> {
    let w = majorizer_weights(&d, q, eps);
    let mut d = d.into_values();
    for j in 0..d.ncols() {
        for (x, &wi) in d.col_as_slice_mut(j).iter_mut().zip(w.values().col_as_slice(j)) {
            *x *= wi;
        }
    }
    d
}

/// Gradient of `sum_r theta_r phi(S_r)` with respect to `S` (`R x IJ`).
pub fn tv_gradient(s: &AbundanceMatrix, params: &TvParams) -> Mat<f64> {
    let (rows, cols) = (s.rows(), s.cols());
    let mut grad = Mat::zeros(s.endmembers(), s.pixels());
    for (r, &theta) in params.theta.iter().enumerate() {
        if theta == 0.0 {
            continue;
        }
        let map = read_map_row(s.matrix(), r, rows, cols);
        let gh = diff_h_adjoint(&weighted(diff_h(&map), params.q, params.eps));
        let gv = diff_v_adjoint(&weighted(diff_v(&map), params.q, params.eps));
        let scale = params.q * theta;
        for j in 0..cols {
            for i in 0..rows {
                grad[(r, i + j * rows)] = scale * (gh[(i, j)] + gv[(i, j)]);
            }
        }
    }
    grad
}

/// Upper bound on the curvature of the TV majorizer at `S`:
/// `q max_r theta_r 4 max(U_r) + q max_r theta_r 4 max(V_r)`.
pub fn tv_lipschitz_term(s: &AbundanceMatrix, params: &TvParams) -> f64 {
    let sigma_sq = DIFF_SIGMA_MAX * DIFF_SIGMA_MAX;
    let (mut horiz, mut vert) = (0.0_f64, 0.0_f64);
    for (r, &theta) in params.theta.iter().enumerate() {
        if theta == 0.0 {
            continue;
        }
        let map = read_map_row(s.matrix(), r, s.rows(), s.cols());
        let wh = majorizer_weights(&diff_h(&map), params.q, params.eps).max();
        let wv = majorizer_weights(&diff_v(&map), params.q, params.eps).max();
        horiz = horiz.max(theta * sigma_sq * wh);
        vert = vert.max(theta * sigma_sq * wv);
    }
    params.q * (horiz + vert)
}
