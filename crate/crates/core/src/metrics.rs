//! Evaluation metrics: permutation-matched MSE and feasibility percentages.

use faer::Mat;

use crate::error::{Error, Result};
use crate::model::{read_map_row, AbundanceMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub value: f64,
    /// `matching[r]` is the estimated column paired with true column `r`.
    pub matching: Vec<usize>,
}

fn normalized_columns(m: &Mat<f64>, what: &str) -> Result<Vec<Vec<f64>>> {
    (0..m.ncols())
        .map(|j| {
            let col: Vec<f64> = (0..m.nrows()).map(|i| m[(i, j)]).collect();
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::Degenerate(format!("{what} column {j} has zero or non-finite norm")));
            }
            Ok(col.into_iter().map(|x| x / norm).collect())
        })
        .collect()
}

/// Squared distances between normalized columns: `cost[r][k]` pairs true
/// column `r` with estimated column `k`.
fn pairwise_cost(est: &Mat<f64>, truth: &Mat<f64>) -> Result<Vec<Vec<f64>>> {
    if (est.nrows(), est.ncols()) != (truth.nrows(), truth.ncols()) {
        return Err(Error::Shape(format!(
            "estimate {}x{} vs truth {}x{}",
            est.nrows(),
            est.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    if est.ncols() == 0 {
        return Err(Error::Degenerate("no columns to compare".into()));
    }
    let e = normalized_columns(est, "estimate")?;
    let t = normalized_columns(truth, "truth")?;
    Ok(t.iter()
        .map(|tc| {
            e.iter()
                .map(|ec| tc.iter().zip(ec).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect()
        })
        .collect())
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, `O(n^3)`). Returns `assign[row] = column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    assign
}

/// `(1/R) min_pi sum_r || c_r/||c_r|| - c^_{pi(r)}/||c^_{pi(r)}|| ||^2` over
/// the columns of `est` and `truth`.
pub fn mse_factor(est: &Mat<f64>, truth: &Mat<f64>) -> Result<MseReport> {
    let cost = pairwise_cost(est, truth)?;
    let matching = hungarian(&cost);
    let total: f64 = matching.iter().enumerate().map(|(r, &k)| cost[r][k]).sum();
    Ok(MseReport { value: total / cost.len() as f64, matching })
}

/// Abundance MSE: [`mse_factor`] applied to the transposed abundance matrices,
/// so each endmember's vectorized map is one column.
pub fn mse_abundances(est: &AbundanceMatrix, truth: &AbundanceMatrix) -> Result<MseReport> {
    if (est.rows(), est.cols()) != (truth.rows(), truth.cols()) {
        return Err(Error::Shape(format!(
            "abundance maps {}x{} vs {}x{}",
            est.rows(),
            est.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    mse_factor(&est.matrix().transpose().to_owned(), &truth.matrix().transpose().to_owned())
}

/// `max_l |1^T s_l - 1|`.
pub fn max_sto_violation(s: &AbundanceMatrix) -> f64 {
    let m = s.matrix();
    (0..m.ncols())
        .map(|l| ((0..m.nrows()).map(|r| m[(r, l)]).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Percentage of pixels whose abundances sum to one within `p`.
pub fn sto_feasibility(s: &AbundanceMatrix, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidParam(format!("tolerance p = {p} must be positive")));
    }
    let m = s.matrix();
    let ok = (0..m.ncols())
        .filter(|&l| ((0..m.nrows()).map(|r| m[(r, l)]).sum::<f64>() - 1.0).abs() <= p)
        .count();
    Ok(100.0 * ok as f64 / m.ncols() as f64)
}

/// Share of singular-value mass carried by the top `l` singular values of one
/// map, in percent. An all-zero map counts as 100.
pub fn map_energy_percent(map: &Mat<f64>, l: usize) -> Result<f64> {
    let sv = map
        .singular_values()
        .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
    let total: f64 = sv.iter().sum();
    if total == 0.0 {
        return Ok(100.0);
    }
    let mut sorted = sv;
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(100.0 * sorted.iter().take(l).sum::<f64>() / total)
}

/// Mean over endmembers of [`map_energy_percent`].
pub fn lr_feasibility(s: &AbundanceMatrix, l: usize) -> Result<f64> {
    if l == 0 || l > s.rows().min(s.cols()) {
        return Err(Error::InvalidDims(format!("L = {l} outside 1..={}", s.rows().min(s.cols()))));
    }
    let mut acc = 0.0;
    for r in 0..s.endmembers() {
        acc += map_energy_percent(&read_map_row(s.matrix(), r, s.rows(), s.cols()), l)?;
    }
    Ok(acc / s.endmembers() as f64)
}

pub(crate) fn lr_energy_percent(s: &AbundanceMatrix, l: usize) -> Result<f64> {
    lr_feasibility(s, l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub sto_percent: f64,
    pub lr_energy_percent: f64,
}

pub fn feasibility_report(s: &AbundanceMatrix, p: f64, l: usize) -> Result<FeasibilityReport> {
    Ok(FeasibilityReport { sto_percent: sto_feasibility(s, p)?, lr_energy_percent: lr_feasibility(s, l)? })
}
