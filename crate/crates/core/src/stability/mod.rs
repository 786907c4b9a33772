//! Phase stationary laws, drift criteria and verdicts.

mod drift;
mod solver;
mod verdict;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov::MarkovError;
use crate::qbd::{QbdError, Window};

pub use crate::markov::StationaryDist;
pub use drift::{
    drift_check_continuous, drift_check_discrete, DecayFn, DriftCheck, DriftMode, DriftReport,
    DriftSpec, DriftViolation, LevelFn, PhaseFn,
};
pub use solver::phase_stationary;
pub use verdict::{
    classify, mean_drift, qbd_drift, qbd_verdict, CheckStatus, DriftEstimate, HypothesisReport,
    StabilityVerdict, Verdict,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("stationary law not certified at window {window}: tail mass {tail_mass:.3e}, residual {residual:.3e}")]
    NonCertification {
        window: usize,
        tail_mass: f64,
        residual: f64,
    },
    #[error("singular phase chain: phase {phase} has no path back to lower phases")]
    Singular { phase: usize },
    #[error("sup |f| = {sup_f} on the window exceeds the cap {cap}")]
    DriftUncertifiable { sup_f: f64, cap: f64 },
    #[error("invalid drift specification: {0}")]
    InvalidDriftSpec(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Qbd(#[from] QbdError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

/// Tolerances and window limits shared by the solvers and checkers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Strictness margin for drift signs, tail mass and residual.
    pub tol: f64,
    pub initial_window: usize,
    pub window_cap: usize,
    /// Bound `F` on `sup |f|`.
    pub f_cap: f64,
    /// Slack used for strict inequalities in the drift checks.
    pub slack: f64,
    pub window: Window,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            initial_window: 64,
            window_cap: 65536,
            f_cap: 1e9,
            slack: 1e-9,
            window: Window::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), StabilityError> {
        let positive = [("tol", self.tol), ("f_cap", self.f_cap)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(StabilityError::InvalidConfig(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        if !(self.slack >= 0.0 && self.slack.is_finite()) {
            return Err(StabilityError::InvalidConfig(format!(
                "slack = {}",
                self.slack
            )));
        }
        if self.initial_window < 2 || self.window_cap < self.initial_window {
            return Err(StabilityError::InvalidConfig(format!(
                "windows must satisfy 2 ≤ initial_window ({}) ≤ window_cap ({})",
                self.initial_window, self.window_cap
            )));
        }
        if self.window.phases.is_empty() || self.window.levels.is_empty() {
            return Err(StabilityError::InvalidConfig("empty check window".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SolverConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_configs_rejected() {
        let bad = [
            SolverConfig {
                tol: 0.0,
                ..Default::default()
            },
            SolverConfig {
                initial_window: 128,
                window_cap: 64,
                ..Default::default()
            },
            SolverConfig {
                slack: f64::NAN,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(matches!(
                c.validate(),
                Err(StabilityError::InvalidConfig(_))
            ));
        }
    }
}
