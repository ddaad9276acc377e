//! Synthetic LL1 cubes and additive Gaussian noise at a target SNR.

use faer::Mat;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::frob_sq;
use crate::model::{synthesize, AbundanceMatrix, EndmemberMatrix, HsiCube};
use crate::projection::{project_feasible_set, ApSettings, FeasibilityMode};
use crate::rng::{gaussian_matrix, seeded, Stream};

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMatrix,
    pub cube: HsiCube,
}

/// AP settings used for ground truth: tighter than the solver default so the
/// maps are close to exactly rank `L`.
pub const GENERATOR_AP: ApSettings = ApSettings { max_iters: 200, tol: 1e-5 };

/// Ground truth with `C = max(E1, 0)`, `S = AP(E2)` under `ExactRank(l)` and
/// `Y = C S`. `E1` (K x R) is drawn before `E2` (R x IJ) from the synthetic
/// stream of `seed`.
pub fn generate_synthetic(
    rows: usize,
    cols: usize,
    bands: usize,
    l: usize,
    endmembers: usize,
    seed: u64,
) -> Result<SyntheticData> {
    generate_synthetic_with(rows, cols, bands, l, endmembers, seed, GENERATOR_AP)
}

/// [`generate_synthetic`] with explicit AP settings.
pub fn generate_synthetic_with(
    rows: usize,
    cols: usize,
    bands: usize,
    l: usize,
    endmembers: usize,
    seed: u64,
    ap: ApSettings,
) -> Result<SyntheticData> {
    if rows == 0 || cols == 0 || bands == 0 || endmembers == 0 {
        return Err(Error::InvalidDims("all dimensions must be positive".into()));
    }
    let mode = FeasibilityMode::ExactRank(l);
    mode.validate(rows, cols)?;
    let mut rng = seeded(seed, Stream::Synthetic);
    let e1 = gaussian_matrix(&mut rng, bands, endmembers);
    let e2 = gaussian_matrix(&mut rng, endmembers, rows * cols);
    let c = EndmemberMatrix::new(Mat::from_fn(bands, endmembers, |i, j| e1[(i, j)].max(0.0)))?;
    let s = project_feasible_set(&AbundanceMatrix::new(rows, cols, e2)?, mode, ap)?.projected;
    let cube = synthesize(&c, &s)?;
    Ok(SyntheticData { endmembers: c, abundances: s, cube })
}

/// Adds i.i.d. `N(0, sigma^2)` noise with
/// `sigma^2 = ||Y||_F^2 / (IJK 10^(snr_db/10))`. `snr_db = +inf` returns the
/// cube unchanged.
pub fn add_noise(y: &HsiCube, snr_db: f64, seed: u64) -> Result<HsiCube> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidParam(format!("snr {snr_db} dB")));
    }
    let power = frob_sq(y.matrix().as_ref());
    if power == 0.0 {
        return Err(Error::Degenerate("cannot scale noise to a zero cube".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(y.clone());
    }
    let n = (y.pixels() * y.bands()) as f64;
    let sigma = (power / (n * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut rng = seeded(seed, Stream::Noise);
    let m = y.matrix();
    let mut noisy = m.clone();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let g: f64 = StandardNormal.sample(&mut rng);
            noisy[(i, j)] += sigma * g;
        }
    }
    HsiCube::from_matrix(y.rows(), y.cols(), noisy)
}

/// `10 log10(||clean||^2 / ||noisy - clean||^2)`.
pub fn realized_snr_db(clean: &HsiCube, noisy: &HsiCube) -> Result<f64> {
    let (a, b) = (clean.matrix(), noisy.matrix());
    if (a.nrows(), a.ncols()) != (b.nrows(), b.ncols()) {
        return Err(Error::Shape("cubes differ in size".into()));
    }
    let noise = frob_sq((b - a).as_ref());
    Ok(10.0 * (frob_sq(a.as_ref()) / noise).log10())
}
