//! JSON run configuration.
//!
//! ```json
//! { "mode": "lr", "l": 25, "theta": 1e-4, "init": "spa", "max_iters": 1200 }
//! ```
//!
//! Every key is optional. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::InitSpec;
use crate::model::{default_nuclear_radius, max_identifiable_rank};
use crate::projection::{ApSettings, FeasibilityMode};
use crate::solver::SolverConfig;
use crate::tv::TvParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    /// Exact per-map rank bound.
    #[default]
    Lr,
    /// Nuclear-norm ball.
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    #[default]
    Spa,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    Scalar(f64),
    PerEndmember(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub mode: Option<ModeKind>,
    pub l: Option<usize>,
    pub l_tilde: Option<f64>,
    pub theta: Option<Theta>,
    pub q: Option<f64>,
    pub eps: Option<f64>,
    pub init: Option<InitKind>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub obj_tol: Option<f64>,
    pub ap_max_iters: Option<usize>,
    pub ap_tol: Option<f64>,
    pub extrapolation: Option<bool>,
}

impl RunConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Values set in `other` win.
    pub fn merged(mut self, other: &RunConfigFile) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(mode, l, l_tilde, theta, q, eps, init, seed, max_iters, obj_tol, ap_max_iters, ap_tol, extrapolation);
        self
    }

    /// Resolves defaults against the cube dimensions.
    ///
    /// In `lr` mode a missing `l` becomes the largest rank for which the
    /// identifiability condition holds. In `nn` mode a missing `l_tilde`
    /// becomes `1.5 max(I, J, K)`.
    pub fn resolve(&self, rows: usize, cols: usize, bands: usize, endmembers: usize) -> Result<(SolverConfig, InitSpec)> {
        if endmembers == 0 {
            return Err(Error::Config("R must be positive".into()));
        }
        let mode = match self.mode.unwrap_or_default() {
            ModeKind::Lr => {
                let l = match self.l {
                    Some(l) => l,
                    None => max_identifiable_rank(rows, cols, bands, endmembers).ok_or_else(|| {
                        Error::Config("no identifiable rank for these dimensions; set l explicitly".into())
                    })?,
                };
                FeasibilityMode::ExactRank(l)
            }
            ModeKind::Nn => FeasibilityMode::NuclearBall(
                self.l_tilde.unwrap_or_else(|| default_nuclear_radius(rows, cols, bands)),
            ),
        };
        let mut cfg = SolverConfig::new(mode, endmembers);
        let (q, eps) = (self.q.unwrap_or(cfg.tv.q), self.eps.unwrap_or(cfg.tv.eps));
        cfg.tv = match &self.theta {
            None => TvParams::uniform(endmembers, cfg.tv.theta[0], q, eps),
            Some(Theta::Scalar(t)) => TvParams::uniform(endmembers, *t, q, eps),
            Some(Theta::PerEndmember(v)) => TvParams::new(v.clone(), q, eps)?,
        };
        cfg.seed = self.seed.unwrap_or(0);
        cfg.max_iters = self.max_iters.unwrap_or(cfg.max_iters);
        cfg.obj_tol = self.obj_tol.unwrap_or(cfg.obj_tol);
        let defaults = ApSettings::default();
        cfg.ap = ApSettings {
            max_iters: self.ap_max_iters.unwrap_or(defaults.max_iters),
            tol: self.ap_tol.unwrap_or(defaults.tol),
        };
        cfg.extrapolation = self.extrapolation.unwrap_or(true);
        cfg.report_rank = self.l;
        cfg.validate(rows, cols, endmembers).map_err(|e| Error::Config(e.to_string()))?;
        let init = match self.init.unwrap_or_default() {
            InitKind::Spa => InitSpec::Spa,
            InitKind::Random => InitSpec::Random { seed: cfg.seed },
        };
        Ok((cfg, init))
    }
}
