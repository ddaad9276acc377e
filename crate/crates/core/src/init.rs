//! Starting points: SPA endmember extraction, abundances from an endmember
//! estimate, and seeded Gaussian initialization.

use faer::Mat;

use crate::error::{Error, Result};
use crate::model::{AbundanceMatrix, EndmemberMatrix, HsiCube};
use crate::projection::{project_feasible_set, ApSettings, FeasibilityMode};
use crate::rng::{gaussian_matrix, seeded, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitSpec {
    Spa,
    Random { seed: u64 },
}

/// Indices picked by SPA together with the corresponding columns of `Y`.
#[derive(Debug, Clone)]
pub struct SpaResult {
    pub indices: Vec<usize>,
    pub endmembers: EndmemberMatrix,
}

/// Successive projection: repeatedly take the residual column with the largest
/// norm (lowest index on ties) and project it out of every column.
pub fn spa_endmembers(y: &HsiCube, r: usize) -> Result<SpaResult> {
    let m = y.matrix();
    let (k, n) = (m.nrows(), m.ncols());
    if r == 0 || r > n {
        return Err(Error::InvalidDims(format!("cannot pick {r} columns out of {n}")));
    }
    let mut res = m.clone();
    let mut norms: Vec<f64> = (0..n).map(|j| res.col(j).squared_norm_l2()).collect();
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Degenerate("cube has no nonzero pixel".into()));
    }
    let mut indices = Vec::with_capacity(r);
    let mut u = vec![0.0; k];
    for pick in 0..r {
        let mut best = 0;
        for j in 1..n {
            if norms[j] > norms[best] {
                best = j;
            }
        }
        if norms[best] <= 1e-24 * scale || indices.contains(&best) {
            return Err(Error::Degenerate(format!("residual vanished after {pick} of {r} picks")));
        }
        indices.push(best);
        let nb = norms[best].sqrt();
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = res[(i, best)] / nb;
        }
        for j in 0..n {
            let dot: f64 = (0..k).map(|i| u[i] * res[(i, j)]).sum();
            for (i, ui) in u.iter().enumerate() {
                res[(i, j)] -= dot * ui;
            }
            norms[j] = res.col(j).squared_norm_l2();
        }
        norms[best] = 0.0;
    }
    let c = Mat::from_fn(k, r, |i, t| m[(i, indices[t])]);
    Ok(SpaResult { indices, endmembers: EndmemberMatrix::new(c)? })
}

/// Least-squares abundances for a fixed `C0`, projected onto the feasible
/// set. A numerically rank-deficient `C0` falls back to uniform abundances
/// `1/R` before projection.
pub fn init_abundances(
    y: &HsiCube,
    c0: &EndmemberMatrix,
    mode: FeasibilityMode,
    ap: ApSettings,
) -> Result<AbundanceMatrix> {
    if c0.bands() != y.bands() {
        return Err(Error::Shape(format!("C0 has {} bands, cube has {}", c0.bands(), y.bands())));
    }
    mode.validate(y.rows(), y.cols())?;
    let r = c0.endmembers();
    let ls = least_squares(c0.matrix(), y.matrix())?
        .unwrap_or_else(|| Mat::from_fn(r, y.pixels(), |_, _| 1.0 / r as f64));
    let w0 = AbundanceMatrix::new(y.rows(), y.cols(), ls)?;
    Ok(project_feasible_set(&w0, mode, ap)?.projected)
}

/// `pinv(C) Y` when `C` has full column rank to working precision.
fn least_squares(c: &Mat<f64>, y: &Mat<f64>) -> Result<Option<Mat<f64>>> {
    if c.nrows() < c.ncols() {
        return Ok(None);
    }
    let svd = c.thin_svd().map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
    let sigma = svd.S().column_vector();
    let r = c.ncols();
    let smax = (0..r).map(|i| sigma[i]).fold(0.0, f64::max);
    let smin = (0..r).map(|i| sigma[i]).fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin <= 1e-10 * smax {
        return Ok(None);
    }
    let uty = svd.U().transpose() * y;
    let scaled = Mat::from_fn(r, y.ncols(), |i, j| uty[(i, j)] / sigma[i]);
    Ok(Some(svd.V() * scaled))
}

/// `C0 = max(G1, 0)` and `S0 = AP(G2)` for standard Gaussian `G1` (K x R) and
/// `G2` (R x IJ), drawn in that order from the init stream of `seed`.
pub fn random_init(
    rows: usize,
    cols: usize,
    bands: usize,
    endmembers: usize,
    mode: FeasibilityMode,
    ap: ApSettings,
    seed: u64,
) -> Result<(EndmemberMatrix, AbundanceMatrix)> {
    if rows == 0 || cols == 0 || bands == 0 || endmembers == 0 {
        return Err(Error::InvalidDims("all dimensions must be positive".into()));
    }
    mode.validate(rows, cols)?;
    let mut rng = seeded(seed, Stream::Init);
    let g1 = gaussian_matrix(&mut rng, bands, endmembers);
    let g2 = gaussian_matrix(&mut rng, endmembers, rows * cols);
    let c = Mat::from_fn(bands, endmembers, |i, j| g1[(i, j)].max(0.0));
    let s = project_feasible_set(&AbundanceMatrix::new(rows, cols, g2)?, mode, ap)?.projected;
    Ok((EndmemberMatrix::new(c)?, s))
}

/// Builds `(C0, S0)` for a cube according to `spec`.
pub fn initialize(
    y: &HsiCube,
    endmembers: usize,
    spec: InitSpec,
    mode: FeasibilityMode,
    ap: ApSettings,
) -> Result<(EndmemberMatrix, AbundanceMatrix)> {
    match spec {
        InitSpec::Spa => {
            let c0 = spa_endmembers(y, endmembers)?.endmembers;
            let s0 = init_abundances(y, &c0, mode, ap)?;
            Ok((c0, s0))
        }
        InitSpec::Random { seed } => random_init(y.rows(), y.cols(), y.bands(), endmembers, mode, ap, seed),
    }
}
