//! The alternating gradient-projection outer loop with Nesterov-style
//! extrapolation.
//!
//! One iteration, with `C`, `S` the current iterates and `C'`, `S'` the
//! previous ones:
//!
//! ```text
//! C~   = C + mu1 (C - C')
//! C+   = max(C~ - alpha grad_C(Y, C~, S), 0)          alpha = 1 / sigma_max(S)^2
//! S~   = S + mu2 (S - S')
//! W0   = S~ - beta grad_S(Y, C+, S~)                  beta  = 1 / L_S(C+, S~)
//! S+   = AP(W0)
//! ```
//!
//! `mu1`, `mu2` follow the Nesterov sequence and are zero on the first two
//! iterations. The returned factors are always projected iterates, never the
//! extrapolated points.

use std::time::Instant;

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, extrapolate, frob_dist, frob_sq, sigma_max_sq};
use crate::metrics::{lr_energy_percent, max_sto_violation};
use crate::model::{residual_sq, AbundanceMatrix, EndmemberMatrix, HsiCube};
use crate::projection::{project_feasible_set, scaled, ApResult, ApSettings, FeasibilityMode};
use crate::rng::RNG_ALGORITHM;
use crate::tv::{tv_gradient, tv_lipschitz_term, tv_value, TvParams};

pub const DEFAULT_Q: f64 = 0.5;
pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_THETA: f64 = 1e-4;
pub const DEFAULT_OBJ_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_ITERS: usize = 1200;
/// Iteration cap used for large (real or semi-real) cubes.
pub const LARGE_CUBE_MAX_ITERS: usize = 2500;
pub const DEFAULT_STEP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub mode: FeasibilityMode,
    pub tv: TvParams,
    pub max_iters: usize,
    /// Stop once `|J_t - J_{t+1}| / J_t < obj_tol`.
    pub obj_tol: f64,
    pub ap: ApSettings,
    pub extrapolation: bool,
    /// Lower bound on the Lipschitz estimates, guarding collapsed iterates.
    pub step_floor: f64,
    pub seed: u64,
    /// `L` used for the low-rank energy column of the trace. Defaults to the
    /// mode's rank in `ExactRank` mode; without it the column is `NaN`.
    pub report_rank: Option<usize>,
}

impl SolverConfig {
    /// Defaults: `q = 0.5`, `eps = 1e-3`, `theta_r = 1e-4`, `obj_tol = 1e-5`,
    /// 1200 iterations, AP with 50 iterations at `1e-3`, extrapolation on.
    pub fn new(mode: FeasibilityMode, endmembers: usize) -> Self {
        Self {
            mode,
            tv: TvParams::uniform(endmembers, DEFAULT_THETA, DEFAULT_Q, DEFAULT_EPS),
            max_iters: DEFAULT_MAX_ITERS,
            obj_tol: DEFAULT_OBJ_TOL,
            ap: ApSettings::default(),
            extrapolation: true,
            step_floor: DEFAULT_STEP_FLOOR,
            seed: 0,
            report_rank: None,
        }
    }

    pub fn validate(&self, rows: usize, cols: usize, endmembers: usize) -> Result<()> {
        self.mode.validate(rows, cols)?;
        self.tv.validate(endmembers)?;
        if self.max_iters == 0 {
            return Err(Error::InvalidParam("max_iters must be positive".into()));
        }
        for (name, v) in [("obj_tol", self.obj_tol), ("ap_tol", self.ap.tol), ("step_floor", self.step_floor)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be positive")));
            }
        }
        if self.ap.max_iters == 0 {
            return Err(Error::InvalidParam("ap_max_iters must be positive".into()));
        }
        Ok(())
    }

    fn energy_rank(&self) -> Option<usize> {
        match (self.report_rank, self.mode) {
            (Some(l), _) => Some(l),
            (None, FeasibilityMode::ExactRank(l)) => Some(l),
            (None, FeasibilityMode::NuclearBall(_)) => None,
        }
    }
}

/// Nesterov extrapolation sequence for one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtrapolationState {
    pub gamma: f64,
}

impl Default for ExtrapolationState {
    fn default() -> Self {
        Self { gamma: 1.0 }
    }
}

/// Advances `gamma` and returns the weight `mu = (gamma - 1) / gamma_next`.
pub fn nesterov_step(state: &mut ExtrapolationState) -> f64 {
    let next = 0.5 * (1.0 + (1.0 + 4.0 * state.gamma * state.gamma).sqrt());
    let mu = (state.gamma - 1.0) / next;
    state.gamma = next;
    mu
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub time_s: f64,
    pub objective: f64,
    pub rel_fit: f64,
    pub alpha: f64,
    pub beta: f64,
    pub ap_iters: usize,
    pub sto_violation_max: f64,
    pub lr_energy_avg: f64,
    pub delta_c: f64,
    pub delta_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub initial_objective: f64,
    pub records: Vec<TraceRecord>,
    pub seed: u64,
    pub rng_algorithm: String,
}

impl RunTrace {
    /// `min_{t' <= t} (delta_c + delta_s)` for every recorded `t`.
    pub fn running_min_delta(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.min(r.delta_c + r.delta_s);
                best
            })
            .collect()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn mean_ap_iters(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.ap_iters as f64).sum::<f64>() / self.records.len() as f64
    }

    /// First iteration (1-based) whose objective is `<= target`.
    pub fn first_reaching(&self, target: f64) -> Option<usize> {
        self.records.iter().find(|r| r.objective <= target).map(|r| r.iter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMatrix,
    pub trace: RunTrace,
    pub termination: Termination,
}

impl RunOutput {
    pub fn iterations(&self) -> usize {
        self.trace.records.len()
    }

    pub fn final_objective(&self) -> f64 {
        self.trace
            .records
            .last()
            .map_or(self.trace.initial_objective, |r| r.objective)
    }
}

fn check_shapes(y: &HsiCube, c: &EndmemberMatrix, s: &AbundanceMatrix) -> Result<()> {
    if c.bands() != y.bands()
        || c.endmembers() != s.endmembers()
        || (s.rows(), s.cols()) != (y.rows(), y.cols())
    {
        return Err(Error::Shape(format!(
            "cube {}x{}x{}, C {}x{}, S {}x({}x{})",
            y.rows(),
            y.cols(),
            y.bands(),
            c.bands(),
            c.endmembers(),
            s.endmembers(),
            s.rows(),
            s.cols()
        )));
    }
    Ok(())
}

fn grad_c_raw(y: &Mat<f64>, c: &Mat<f64>, s: &Mat<f64>) -> Mat<f64> {
    let gram = s * s.transpose();
    c * &gram - y * s.transpose()
}

fn grad_s_data(cty: &Mat<f64>, ctc: &Mat<f64>, s: &Mat<f64>) -> Mat<f64> {
    ctc * s - cty
}

/// `C S S^T - Y S^T`, with `S S^T` formed once.
pub fn grad_c(y: &HsiCube, c: &EndmemberMatrix, s: &AbundanceMatrix) -> Result<Mat<f64>> {
    check_shapes(y, c, s)?;
    Ok(grad_c_raw(y.matrix(), c.matrix(), s.matrix()))
}

/// `C^T C S - C^T Y + grad TV(S)`.
pub fn grad_s(y: &HsiCube, c: &EndmemberMatrix, s: &AbundanceMatrix, tv: &TvParams) -> Result<Mat<f64>> {
    check_shapes(y, c, s)?;
    tv.validate(s.endmembers())?;
    let ct = c.matrix().transpose();
    let mut g = grad_s_data(&(ct * y.matrix()), &(ct * c.matrix()), s.matrix());
    if tv.is_active() {
        g += tv_gradient(s, tv);
    }
    Ok(g)
}

/// `alpha = 1 / max(sigma_max(S)^2, floor)`.
pub fn step_size_c(s: &AbundanceMatrix, step_floor: f64) -> f64 {
    1.0 / sigma_max_sq(s.matrix().as_ref()).max(step_floor)
}

/// `beta = 1 / max(sigma_max(C)^2 + TV curvature bound at S, floor)`.
pub fn step_size_s(c_next: &EndmemberMatrix, s: &AbundanceMatrix, tv: &TvParams, step_floor: f64) -> f64 {
    let lip = sigma_max_sq(c_next.matrix().as_ref()) + tv_lipschitz_term(s, tv);
    1.0 / lip.max(step_floor)
}

/// One extrapolated projected-gradient step on `C`. Returns `(C+, alpha)`.
pub fn update_c(
    y: &HsiCube,
    c: &EndmemberMatrix,
    c_prev: &EndmemberMatrix,
    s: &AbundanceMatrix,
    mu: f64,
    step_floor: f64,
) -> Result<(EndmemberMatrix, f64)> {
    check_shapes(y, c, s)?;
    check_shapes(y, c_prev, s)?;
    let alpha = step_size_c(s, step_floor);
    let c_ex = extrapolate(c.matrix(), c_prev.matrix(), mu);
    let g = grad_c_raw(y.matrix(), &c_ex, s.matrix());
    let next = Mat::from_fn(c_ex.nrows(), c_ex.ncols(), |k, r| {
        (c_ex[(k, r)] - alpha * g[(k, r)]).max(0.0)
    });
    if !all_finite(next.as_ref()) {
        return Err(Error::Numerical("non-finite endmember update".into()));
    }
    Ok((EndmemberMatrix::new(next)?, alpha))
}

/// One extrapolated gradient step on `S` followed by the AP projection.
/// Returns `(AP result, beta)`.
pub fn update_s(
    y: &HsiCube,
    c_next: &EndmemberMatrix,
    s: &AbundanceMatrix,
    s_prev: &AbundanceMatrix,
    mu: f64,
    config: &SolverConfig,
) -> Result<(ApResult, f64)> {
    check_shapes(y, c_next, s)?;
    check_shapes(y, c_next, s_prev)?;
    let ct = c_next.matrix().transpose();
    let cty = ct * y.matrix();
    let ctc = ct * c_next.matrix();
    let s_ex = AbundanceMatrix::new(s.rows(), s.cols(), extrapolate(s.matrix(), s_prev.matrix(), mu))?;
    let beta = step_size_s(c_next, &s_ex, &config.tv, config.step_floor);
    let mut g = grad_s_data(&cty, &ctc, s_ex.matrix());
    if config.tv.is_active() {
        g += tv_gradient(&s_ex, &config.tv);
    }
    let w0 = s_ex.matrix() - scaled(&g, beta);
    if !all_finite(w0.as_ref()) {
        return Err(Error::Numerical("non-finite abundance gradient step".into()));
    }
    let w0 = AbundanceMatrix::new(s.rows(), s.cols(), w0)?;
    Ok((project_feasible_set(&w0, config.mode, config.ap)?, beta))
}

fn objective_parts(y: &HsiCube, c: &EndmemberMatrix, s: &AbundanceMatrix, tv: &TvParams) -> (f64, f64) {
    let res = residual_sq(y.matrix(), c.matrix(), s.matrix());
    (0.5 * res + tv_value(s, tv), res)
}

/// Runs the solver from `(init_c, init_s)`. `init_s` should already be
/// feasible; callers normally obtain it from [`crate::init`].
pub fn run(
    y: &HsiCube,
    init_c: &EndmemberMatrix,
    init_s: &AbundanceMatrix,
    config: &SolverConfig,
) -> Result<RunOutput> {
    check_shapes(y, init_c, init_s)?;
    config.validate(y.rows(), y.cols(), init_c.endmembers())?;

    let y_norm_sq = frob_sq(y.matrix().as_ref());
    // Relative-change denominators are floored at rounding level of the data.
    let obj_floor = f64::EPSILON * 0.5 * y_norm_sq;
    let energy_rank = config.energy_rank();

    let mut c = init_c.clone();
    let mut c_prev = init_c.clone();
    let mut s = init_s.clone();
    let mut s_prev = init_s.clone();
    let mut ex_c = ExtrapolationState::default();
    let mut ex_s = ExtrapolationState::default();

    let (mut obj, _) = objective_parts(y, &c, &s, &config.tv);
    let mut trace = RunTrace {
        initial_objective: obj,
        records: Vec::new(),
        seed: config.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
    };
    if !obj.is_finite() {
        return Err(Error::Aborted { iteration: 0, reason: "initial objective is not finite".into(), trace: Box::new(trace) });
    }

    let start = Instant::now();
    let mut termination = Termination::MaxIterations;
    for t in 0..config.max_iters {
        let (mu_c, mu_s) = if config.extrapolation && t > 0 {
            (nesterov_step(&mut ex_c), nesterov_step(&mut ex_s))
        } else {
            (0.0, 0.0)
        };

        let step = update_c(y, &c, &c_prev, &s, mu_c, config.step_floor).and_then(|(c_next, alpha)| {
            let (ap, beta) = update_s(y, &c_next, &s, &s_prev, mu_s, config)?;
            Ok((c_next, alpha, ap, beta))
        });
        let (c_next, alpha, ap, beta) = match step {
            Ok(v) => v,
            Err(e) => {
                return Err(Error::Aborted { iteration: t + 1, reason: e.to_string(), trace: Box::new(trace) });
            }
        };
        let s_next = ap.projected;

        let (next_obj, res) = objective_parts(y, &c_next, &s_next, &config.tv);
        if !next_obj.is_finite() {
            return Err(Error::Aborted {
                iteration: t + 1,
                reason: "objective is not finite".into(),
                trace: Box::new(trace),
            });
        }
        let lr_energy = match energy_rank {
            Some(l) => lr_energy_percent(&s_next, l).unwrap_or(f64::NAN),
            None => f64::NAN,
        };
        trace.records.push(TraceRecord {
            iter: t + 1,
            time_s: start.elapsed().as_secs_f64(),
            objective: next_obj,
            rel_fit: if y_norm_sq > 0.0 { (res / y_norm_sq).sqrt() } else { 0.0 },
            alpha,
            beta,
            ap_iters: ap.iterations,
            sto_violation_max: max_sto_violation(&s_next),
            lr_energy_avg: lr_energy,
            delta_c: frob_dist(c_next.matrix().as_ref(), c.matrix().as_ref()),
            delta_s: frob_dist(s_next.matrix().as_ref(), s.matrix().as_ref()),
        });

        let rel_change = (obj - next_obj).abs() / obj.max(obj_floor).max(f64::MIN_POSITIVE);
        c_prev = std::mem::replace(&mut c, c_next);
        s_prev = std::mem::replace(&mut s, s_next);
        obj = next_obj;
        if rel_change < config.obj_tol {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(RunOutput { endmembers: c, abundances: s, trace, termination })
}
