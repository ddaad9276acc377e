//! Small dense helpers shared across modules.

use faer::{Mat, MatRef};

pub(crate) fn frob_sq(m: MatRef<'_, f64>) -> f64 {
    m.squared_norm_l2()
}

pub(crate) fn frob_dist(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    debug_assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let d = a[(i, j)] - b[(i, j)];
            acc += d * d;
        }
    }
    acc.sqrt()
}

pub(crate) fn all_finite(m: MatRef<'_, f64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

/// `a + mu * (a - prev)`.
pub(crate) fn extrapolate(a: &Mat<f64>, prev: &Mat<f64>, mu: f64) -> Mat<f64> {
    if mu == 0.0 {
        return a.clone();
    }
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
        a[(i, j)] + mu * (a[(i, j)] - prev[(i, j)])
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration from the all-ones vector. Stops once the Rayleigh quotient moves
/// by less than `1e-12` relative.
pub fn max_eigenvalue_psd(g: MatRef<'_, f64>) -> f64 {
    let n = g.nrows();
    assert_eq!(n, g.ncols(), "power iteration needs a square matrix");
    if n == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut lambda = 0.0_f64;
    for _ in 0..20_000 {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = (0..n).map(|k| g[(i, k)] * v[k]).sum();
        }
        let rayleigh: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        let done = (rayleigh - lambda).abs() <= 1e-12 * rayleigh.abs();
        lambda = rayleigh;
        if done {
            break;
        }
    }
    lambda.max(0.0)
}

/// `sigma_max(M)^2`, computed on the smaller Gram matrix.
pub fn sigma_max_sq(m: MatRef<'_, f64>) -> f64 {
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    max_eigenvalue_psd(gram.as_ref())
}
