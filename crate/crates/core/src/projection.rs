//! Euclidean projections onto the abundance constraint sets and the
//! alternating-projection (AP) driver that approximates projection onto their
//! intersection.
//!
//! The AP loop alternates a per-map low-rank projection with a column-wise
//! simplex projection and always finishes on the simplex step, so the returned
//! abundances satisfy nonnegativity and sum-to-one exactly while the low-rank
//! structure holds approximately.

use faer::{Mat, Scale};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, frob_dist, frob_sq};
use crate::model::{read_map_row, write_map_row, AbundanceMatrix};

/// Low-rank constraint on each abundance map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibilityMode {
    /// `rank(S_r) <= L`
    ExactRank(usize),
    /// `||S_r||_* <= L~`
    NuclearBall(f64),
}

impl FeasibilityMode {
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        match *self {
            FeasibilityMode::ExactRank(l) if l == 0 || l > rows.min(cols) => Err(Error::InvalidDims(
                format!("rank bound {l} outside 1..={}", rows.min(cols)),
            )),
            FeasibilityMode::NuclearBall(radius) if !(radius > 0.0 && radius.is_finite()) => {
                Err(Error::InvalidParam(format!("nuclear radius {radius} must be positive")))
            }
            _ => Ok(()),
        }
    }

    fn project_map(&self, map: &Mat<f64>) -> Result<Mat<f64>> {
        match *self {
            FeasibilityMode::ExactRank(l) => project_rank(map, l),
            FeasibilityMode::NuclearBall(radius) => project_nuclear_ball(map, radius),
        }
    }
}

/// Stopping rule for the AP loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApSettings {
    pub max_iters: usize,
    /// Relative change `||W_{k+1} - W_k||_F / ||W_k||_F` below which AP stops.
    pub tol: f64,
}

impl Default for ApSettings {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct ApResult {
    pub projected: AbundanceMatrix,
    pub iterations: usize,
    pub last_relative_change: f64,
}

/// Projection onto `{x >= 0, sum x = z}` by sorting and thresholding.
pub fn project_simplex(v: &[f64], z: f64) -> Result<Vec<f64>> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::InvalidParam(format!("simplex radius {z} must be positive")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite entry in simplex projection".into()));
    }
    let mut out = v.to_vec();
    let mut scratch = Vec::with_capacity(v.len());
    simplex_in_place(&mut out, z, &mut scratch);
    Ok(out)
}

/// `v <- argmin ||x - v||` over the `z`-simplex. `v` must be finite, `z > 0`.
pub(crate) fn simplex_in_place(v: &mut [f64], z: f64, sorted: &mut Vec<f64>) {
    if v.is_empty() {
        return;
    }
    sorted.clear();
    sorted.extend_from_slice(v);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - z) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// Projects every column onto the probability simplex.
pub fn project_columns_simplex(m: &Mat<f64>) -> Result<Mat<f64>> {
    if !all_finite(m.as_ref()) {
        return Err(Error::Numerical("non-finite entry in simplex projection".into()));
    }
    let mut out = m.clone();
    columns_simplex_in_place(&mut out);
    Ok(out)
}

fn columns_simplex_in_place(m: &mut Mat<f64>) {
    let mut scratch = Vec::with_capacity(m.nrows());
    for j in 0..m.ncols() {
        simplex_in_place(m.col_as_slice_mut(j), 1.0, &mut scratch);
    }
}

fn svd_of(m: &Mat<f64>) -> Result<faer::linalg::solvers::Svd<f64>> {
    m.thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))
}

fn reconstruct(svd: &faer::linalg::solvers::Svd<f64>, sigma: &[f64]) -> Mat<f64> {
    let keep = sigma.iter().rposition(|&s| s != 0.0).map_or(0, |p| p + 1);
    let u = svd.U().subcols(0, keep);
    let v = svd.V().subcols(0, keep);
    let scaled = Mat::from_fn(u.nrows(), keep, |i, k| u[(i, k)] * sigma[k]);
    scaled * v.transpose()
}

/// Best rank-`l` approximation (truncated SVD).
pub fn project_rank(m: &Mat<f64>, l: usize) -> Result<Mat<f64>> {
    let min_dim = m.nrows().min(m.ncols());
    if l == 0 || l > min_dim {
        return Err(Error::InvalidDims(format!("rank bound {l} outside 1..={min_dim}")));
    }
    if l == min_dim {
        return Ok(m.clone());
    }
    let svd = svd_of(m)?;
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..min_dim).map(|k| if k < l { s[k] } else { 0.0 }).collect();
    Ok(reconstruct(&svd, &sigma))
}

/// Projection onto the nuclear-norm ball of radius `radius`. Points inside
/// the ball are returned unchanged; outside, the singular values are
/// projected onto the `radius`-simplex.
pub fn project_nuclear_ball(m: &Mat<f64>, radius: f64) -> Result<Mat<f64>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParam(format!("nuclear radius {radius} must be positive")));
    }
    let min_dim = m.nrows().min(m.ncols());
    // ||M||_* <= sqrt(min(I, J)) ||M||_F
    if (min_dim as f64).sqrt() * frob_sq(m.as_ref()).sqrt() <= radius {
        return Ok(m.clone());
    }
    let svd = svd_of(m)?;
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..min_dim).map(|k| s[k]).collect();
    if sigma.iter().sum::<f64>() <= radius {
        return Ok(m.clone());
    }
    let shrunk = project_simplex(&sigma, radius)?;
    Ok(reconstruct(&svd, &shrunk))
}

/// Approximate projection of `w0` onto `{simplex columns} ∩ {low-rank maps}`
/// by alternating projections.
pub fn project_feasible_set(
    w0: &AbundanceMatrix,
    mode: FeasibilityMode,
    ap: ApSettings,
) -> Result<ApResult> {
    let (rows, cols) = (w0.rows(), w0.cols());
    mode.validate(rows, cols)?;
    if ap.max_iters == 0 || !(ap.tol > 0.0) {
        return Err(Error::InvalidParam("AP needs max_iters >= 1 and tol > 0".into()));
    }
    let mut w = w0.matrix().clone();
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < ap.max_iters {
        iterations += 1;
        let mut next = w.clone();
        for r in 0..w.nrows() {
            let map = read_map_row(&w, r, rows, cols);
            write_map_row(&mut next, r, &mode.project_map(&map)?);
        }
        if !all_finite(next.as_ref()) {
            return Err(Error::Numerical(format!("NaN in low-rank projection at AP iteration {iterations}")));
        }
        columns_simplex_in_place(&mut next);
        let norm = frob_sq(w.as_ref()).sqrt();
        let delta = frob_dist(next.as_ref(), w.as_ref());
        change = if norm > 0.0 { delta / norm } else { delta };
        w = next;
        if change < ap.tol {
            break;
        }
    }
    Ok(ApResult {
        projected: AbundanceMatrix::new(rows, cols, w)?,
        iterations,
        last_relative_change: change,
    })
}

/// `scale * m`
pub(crate) fn scaled(m: &Mat<f64>, scale: f64) -> Mat<f64> {
    m * Scale(scale)
}
