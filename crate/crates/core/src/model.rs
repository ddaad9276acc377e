//! Data model for the LL1 / linear-mixture view of a hyperspectral cube.
//!
//! A cube with `I x J` pixels and `K` bands is stored matricized as a `K x IJ`
//! matrix `Y`. Pixel `(i, j)` (0-based) lives in column `l = i + j * I`, i.e.
//! the spatial image is vectorized column-major. Every module in the crate uses
//! this single convention: row `r` of the abundance matrix `S` is the
//! column-major vectorization of the `I x J` abundance map `S_r`, and
//! `Y = C S` is the mixing model.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, frob_sq};
use crate::tv::{tv_value, TvParams};

/// Observed hyperspectral cube, held in matricized `K x IJ` form.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    rows: usize,
    cols: usize,
    data: Mat<f64>,
}

impl HsiCube {
    /// Wraps a `K x IJ` matrix as an `I x J x K` cube.
    pub fn from_matrix(rows: usize, cols: usize, data: Mat<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.nrows() == 0 {
            return Err(Error::InvalidDims("cube dimensions must be positive".into()));
        }
        if data.ncols() != rows * cols {
            return Err(Error::Shape(format!(
                "matricized cube has {} columns, expected I*J = {}",
                data.ncols(),
                rows * cols
            )));
        }
        if !all_finite(data.as_ref()) {
            return Err(Error::Numerical("cube contains non-finite values".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a cube from `f(i, j, k)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        bands: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let data = Mat::from_fn(bands, rows * cols, |k, l| f(l % rows, l / rows, k));
        Self::from_matrix(rows, cols, data)
    }

    /// `I`
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `J`
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `K`
    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// The `K x IJ` matricization.
    pub fn matrix(&self) -> &Mat<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> Mat<f64> {
        self.data
    }

    pub fn pixel_index(&self, i: usize, j: usize) -> usize {
        i + j * self.rows
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(k, self.pixel_index(i, j))]
    }

    pub fn frobenius_norm(&self) -> f64 {
        frob_sq(self.data.as_ref()).sqrt()
    }
}

/// Endmember signatures `C`, one column per material (`K x R`).
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix(Mat<f64>);

impl EndmemberMatrix {
    pub fn new(data: Mat<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidDims("endmember matrix must be non-empty".into()));
        }
        if !all_finite(data.as_ref()) {
            return Err(Error::Numerical("endmembers contain non-finite values".into()));
        }
        Ok(Self(data))
    }

    pub fn bands(&self) -> usize {
        self.0.nrows()
    }

    pub fn endmembers(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Mat<f64> {
        self.0
    }

    pub fn is_nonnegative(&self) -> bool {
        (0..self.0.ncols()).all(|j| self.0.col_as_slice(j).iter().all(|&v| v >= 0.0))
    }
}

/// Abundances `S` (`R x IJ`) together with the spatial shape of each map.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix {
    rows: usize,
    cols: usize,
    data: Mat<f64>,
}

impl AbundanceMatrix {
    pub fn new(rows: usize, cols: usize, data: Mat<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.nrows() == 0 {
            return Err(Error::InvalidDims("abundance dimensions must be positive".into()));
        }
        if data.ncols() != rows * cols {
            return Err(Error::Shape(format!(
                "abundance matrix has {} columns, expected I*J = {}",
                data.ncols(),
                rows * cols
            )));
        }
        if !all_finite(data.as_ref()) {
            return Err(Error::Numerical("abundances contain non-finite values".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks vectorized maps: row `r` becomes `vec(maps[r])`.
    pub fn from_maps(maps: &[Mat<f64>]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::InvalidDims("need at least one abundance map".into()))?;
        let (rows, cols) = (first.nrows(), first.ncols());
        let mut data = Mat::zeros(maps.len(), rows * cols);
        for (r, map) in maps.iter().enumerate() {
            if (map.nrows(), map.ncols()) != (rows, cols) {
                return Err(Error::Shape("abundance maps differ in shape".into()));
            }
            for (l, v) in tensorize_map(map.as_ref()).into_iter().enumerate() {
                data[(r, l)] = v;
            }
        }
        Self::new(rows, cols, data)
    }

    /// `I`
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `J`
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `R`
    pub fn endmembers(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> Mat<f64> {
        self.data
    }

    /// The `I x J` abundance map of endmember `r`.
    pub fn map_view(&self, r: usize) -> Result<Mat<f64>> {
        matricize_map(self, r)
    }

    /// Overwrites row `r` with `vec(map)`.
    pub fn set_map(&mut self, r: usize, map: &Mat<f64>) -> Result<()> {
        if r >= self.endmembers() {
            return Err(Error::Index { index: r, len: self.endmembers() });
        }
        if (map.nrows(), map.ncols()) != (self.rows, self.cols) {
            return Err(Error::Shape("map shape does not match abundance maps".into()));
        }
        write_map_row(&mut self.data, r, map);
        Ok(())
    }
}

pub(crate) fn read_map_row(data: &Mat<f64>, r: usize, rows: usize, cols: usize) -> Mat<f64> {
    Mat::from_fn(rows, cols, |i, j| data[(r, i + j * rows)])
}

pub(crate) fn write_map_row(data: &mut Mat<f64>, r: usize, map: &Mat<f64>) {
    let rows = map.nrows();
    for j in 0..map.ncols() {
        for (i, &v) in map.col_as_slice(j).iter().enumerate() {
            data[(r, i + j * rows)] = v;
        }
    }
}

/// `mat(S(r, :))`: output `[i, j] = S[r, i + j*I]`.
pub fn matricize_map(s: &AbundanceMatrix, r: usize) -> Result<Mat<f64>> {
    if r >= s.endmembers() {
        return Err(Error::Index { index: r, len: s.endmembers() });
    }
    Ok(read_map_row(&s.data, r, s.rows, s.cols))
}

/// Column-major `vec` of a map; inverse of [`matricize_map`].
pub fn tensorize_map(map: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(map.nrows() * map.ncols());
    for j in 0..map.ncols() {
        for i in 0..map.nrows() {
            out.push(map[(i, j)]);
        }
    }
    out
}

fn check_factor_shapes(c: &EndmemberMatrix, s: &AbundanceMatrix) -> Result<()> {
    if c.endmembers() != s.endmembers() {
        return Err(Error::Shape(format!(
            "C has {} columns but S has {} rows",
            c.endmembers(),
            s.endmembers()
        )));
    }
    Ok(())
}

fn check_cube_shapes(y: &HsiCube, c: &EndmemberMatrix, s: &AbundanceMatrix) -> Result<()> {
    check_factor_shapes(c, s)?;
    if y.bands() != c.bands() || (y.rows(), y.cols()) != (s.rows(), s.cols()) {
        return Err(Error::Shape(format!(
            "cube is {}x{}x{}, factors imply {}x{}x{}",
            y.rows(),
            y.cols(),
            y.bands(),
            s.rows(),
            s.cols(),
            c.bands()
        )));
    }
    Ok(())
}

/// The mixing map `Y = C S`.
pub fn synthesize(c: &EndmemberMatrix, s: &AbundanceMatrix) -> Result<HsiCube> {
    check_factor_shapes(c, s)?;
    HsiCube::from_matrix(s.rows(), s.cols(), c.matrix() * s.matrix())
}

pub(crate) fn residual_sq(y: &Mat<f64>, c: &Mat<f64>, s: &Mat<f64>) -> f64 {
    let mut fit = c * s;
    for j in 0..fit.ncols() {
        let yc = y.col_as_slice(j);
        for (f, &yv) in fit.col_as_slice_mut(j).iter_mut().zip(yc) {
            *f = yv - *f;
        }
    }
    frob_sq(fit.as_ref())
}

/// `1/2 ||Y - C S||_F^2 + sum_r theta_r phi(S_r)`.
pub fn objective(
    y: &HsiCube,
    c: &EndmemberMatrix,
    s: &AbundanceMatrix,
    tv: &TvParams,
) -> Result<f64> {
    check_cube_shapes(y, c, s)?;
    tv.validate(s.endmembers())?;
    Ok(0.5 * residual_sq(y.matrix(), c.matrix(), s.matrix()) + tv_value(s, tv))
}

/// `||Y - C S||_F / ||Y||_F`.
pub fn relative_fit(y: &HsiCube, c: &EndmemberMatrix, s: &AbundanceMatrix) -> Result<f64> {
    check_cube_shapes(y, c, s)?;
    let norm = y.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("relative fit of an all-zero cube".into()));
    }
    Ok(residual_sq(y.matrix(), c.matrix(), s.matrix()).sqrt() / norm)
}

/// Problem sizes: image `I x J`, `K` bands, map rank bound `L`, nuclear
/// radius `L~` and `R` endmembers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDims {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub rank: usize,
    pub endmembers: usize,
    pub nuclear_radius: f64,
}

impl ModelDims {
    /// Dimensions with the nuclear radius set to `1.5 * max(I, J, K)`.
    pub fn new(rows: usize, cols: usize, bands: usize, rank: usize, endmembers: usize) -> Result<Self> {
        let dims = Self {
            rows,
            cols,
            bands,
            rank,
            endmembers,
            nuclear_radius: default_nuclear_radius(rows, cols, bands),
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn with_nuclear_radius(mut self, radius: f64) -> Result<Self> {
        self.nuclear_radius = radius;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.bands == 0 || self.endmembers == 0 {
            return Err(Error::InvalidDims("I, J, K and R must be positive".into()));
        }
        if self.rank == 0 || self.rank > self.rows.min(self.cols) {
            return Err(Error::InvalidDims(format!(
                "L = {} must lie in 1..=min(I, J) = {}",
                self.rank,
                self.rows.min(self.cols)
            )));
        }
        if !(self.nuclear_radius > 0.0 && self.nuclear_radius.is_finite()) {
            return Err(Error::InvalidDims("nuclear radius must be positive".into()));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }
}

pub fn default_nuclear_radius(rows: usize, cols: usize, bands: usize) -> f64 {
    1.5 * rows.max(cols).max(bands) as f64
}

/// Outcome of the uniqueness check for uniform map rank `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentifiabilityReport {
    pub satisfied: bool,
    /// `IJ - L^2 R`; nonnegative when the size condition holds.
    pub size_margin: i64,
    /// `min(floor(I/L), R) + min(floor(J/L), R) + min(K, R) - (2R + 2)`.
    pub kruskal_margin: i64,
}

/// Evaluates the sufficient condition for essential uniqueness of the LL1
/// decomposition. Only informative: a violated condition does not prevent a
/// solve.
pub fn check_identifiability(dims: &ModelDims) -> Result<IdentifiabilityReport> {
    dims.validate()?;
    let (i, j, k, l, r) = (
        dims.rows as i64,
        dims.cols as i64,
        dims.bands as i64,
        dims.rank as i64,
        dims.endmembers as i64,
    );
    let size_margin = i * j - l * l * r;
    let kruskal_margin = (i / l).min(r) + (j / l).min(r) + k.min(r) - (2 * r + 2);
    Ok(IdentifiabilityReport {
        satisfied: size_margin >= 0 && kruskal_margin >= 0,
        size_margin,
        kruskal_margin,
    })
}

/// Largest `L` for which [`check_identifiability`] holds, if any.
pub fn max_identifiable_rank(rows: usize, cols: usize, bands: usize, endmembers: usize) -> Option<usize> {
    (1..=rows.min(cols)).rev().find(|&l| {
        ModelDims::new(rows, cols, bands, l, endmembers)
            .and_then(|d| check_identifiability(&d))
            .map(|rep| rep.satisfied)
            .unwrap_or(false)
    })
}
