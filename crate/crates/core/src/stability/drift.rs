//! Lyapunov drift checks on a finite window of states.
//!
//! Both checks evaluate the expected Lyapunov increment of every window state
//! and test three conditions: a global upper bound `U`, the majorization by
//! `f(x) + h(L(y))` above `y*`, and `Σ f π < 0`. Violations are collected in
//! the report rather than returned as errors.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::markov::{ProbKernel, RateKernel, State2D, StationaryDist, Transitions};
use crate::qbd::Window;

use super::{SolverConfig, StabilityError};

pub type LevelFn = Arc<dyn Fn(i64) -> f64 + Send + Sync>;
pub type PhaseFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
pub type DecayFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// At most this many violations are stored; the count is always exact.
const MAX_STORED_VIOLATIONS: usize = 1000;

/// Lyapunov data `(L^Y, f, h, y*, U)`.
#[derive(Clone)]
pub struct DriftSpec {
    pub ly: LevelFn,
    pub f: PhaseFn,
    /// `None` means `h ≡ 0`.
    pub h: Option<DecayFn>,
    pub y_star: i64,
    pub u_bound: f64,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("h", &self.h.as_ref().map(|_| "<fn>"))
            .field("y_star", &self.y_star)
            .field("u_bound", &self.u_bound)
            .finish_non_exhaustive()
    }
}

impl DriftSpec {
    /// `L^Y(y) = y`, `h ≡ 0`.
    pub fn linear<F>(f: F, y_star: i64, u_bound: f64) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        DriftSpec {
            ly: Arc::new(|y| y as f64),
            f: Arc::new(f),
            h: None,
            y_star,
            u_bound,
        }
    }

    pub fn with_h<H>(mut self, h: H) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.h = Some(Arc::new(h));
        self
    }

    fn h_at(&self, l: f64) -> f64 {
        self.h.as_ref().map_or(0.0, |h| h(l))
    }

    /// Checks `L^Y` is nonnegative and strictly increasing on the window
    /// levels and `h` is nonnegative and nonincreasing along them.
    pub fn validate(&self, levels: impl Iterator<Item = i64>) -> Result<(), StabilityError> {
        let values: Vec<(i64, f64)> = levels.map(|y| (y, (self.ly)(y))).collect();
        for &(y, l) in &values {
            if !(l.is_finite() && l >= 0.0) {
                return Err(StabilityError::InvalidDriftSpec(format!("L^Y({y}) = {l}")));
            }
        }
        for w in values.windows(2) {
            if w[1].1 <= w[0].1 {
                return Err(StabilityError::InvalidDriftSpec(format!(
                    "L^Y is not strictly increasing: L^Y({}) = {} ≤ L^Y({}) = {}",
                    w[1].0, w[1].1, w[0].0, w[0].1
                )));
            }
            let (h0, h1) = (self.h_at(w[0].1), self.h_at(w[1].1));
            if h1 > h0 || h1 < 0.0 {
                return Err(StabilityError::InvalidDriftSpec(format!(
                    "h is not nonincreasing and nonnegative at L = {}",
                    w[1].1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftCheck {
    /// Increment exceeds `U`.
    UpperBound,
    /// Increment is not below `f(x) + h(L(y))` for `y ≥ y*`.
    Majorization,
    /// The state has no outgoing transitions.
    Absorbing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftViolation {
    pub state: State2D,
    pub check: DriftCheck,
    pub increment: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub mode: DriftMode,
    pub u_bound_ok: bool,
    pub majorization_ok: bool,
    /// `Σ f π < -tol`.
    pub mean_ok: bool,
    /// `sup |f|` on the stationary window is within the configured cap.
    pub f_bounded: bool,
    pub mean_f: f64,
    /// `-Σ f π` when the mean check passes.
    pub epsilon: Option<f64>,
    pub max_increment: f64,
    pub states_checked: usize,
    pub violation_count: usize,
    pub violations: Vec<DriftViolation>,
    pub notes: Vec<String>,
}

impl DriftReport {
    pub fn passed(&self) -> bool {
        self.u_bound_ok && self.majorization_ok && self.mean_ok && self.f_bounded
    }
}

impl fmt::Display for DriftReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode             {:?}", self.mode)?;
        writeln!(f, "passed           {}", self.passed())?;
        writeln!(f, "u_bound_ok       {}", self.u_bound_ok)?;
        writeln!(f, "majorization_ok  {}", self.majorization_ok)?;
        writeln!(
            f,
            "mean_ok          {} (Σ f π = {})",
            self.mean_ok, self.mean_f
        )?;
        writeln!(f, "f_bounded        {}", self.f_bounded)?;
        writeln!(f, "max_increment    {}", self.max_increment)?;
        writeln!(f, "states_checked   {}", self.states_checked)?;
        writeln!(f, "violations       {}", self.violation_count)?;
        for v in &self.violations {
            writeln!(
                f,
                "  {:?} at {}: increment {} vs bound {}",
                v.check, v.state, v.increment, v.bound
            )?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

fn run_checks<L>(
    mode: DriftMode,
    law: L,
    ds: &DriftSpec,
    pi: &StationaryDist,
    window: &Window,
    cfg: &SolverConfig,
) -> DriftReport
where
    L: Fn(State2D) -> Option<(Transitions, f64)>,
{
    let mut report = DriftReport {
        mode,
        u_bound_ok: true,
        majorization_ok: true,
        mean_ok: false,
        f_bounded: true,
        mean_f: 0.0,
        epsilon: None,
        max_increment: f64::NEG_INFINITY,
        states_checked: 0,
        violation_count: 0,
        violations: Vec::new(),
        notes: vec![format!(
            "checked on phases {:?} × levels {:?} only; irreducibility and the infinite tail are not certified",
            window.phases, window.levels
        )],
    };
    let record = |report: &mut DriftReport, v: DriftViolation| {
        report.violation_count += 1;
        if report.violations.len() < MAX_STORED_VIOLATIONS {
            report.violations.push(v);
        }
    };

    for s in window.states() {
        report.states_checked += 1;
        let Some((targets, weight)) = law(s) else {
            report.u_bound_ok = false;
            record(
                &mut report,
                DriftViolation {
                    state: s,
                    check: DriftCheck::Absorbing,
                    increment: f64::NAN,
                    bound: f64::NAN,
                },
            );
            continue;
        };
        let l0 = (ds.ly)(s.y);
        let inc: f64 = targets
            .iter()
            .map(|(t, w)| w * ((ds.ly)(t.y) - l0))
            .sum::<f64>()
            * weight;
        report.max_increment = report.max_increment.max(inc);
        if inc > ds.u_bound + cfg.slack {
            report.u_bound_ok = false;
            record(
                &mut report,
                DriftViolation {
                    state: s,
                    check: DriftCheck::UpperBound,
                    increment: inc,
                    bound: ds.u_bound,
                },
            );
        }
        if s.y >= ds.y_star {
            let bound = (ds.f)(s.x as usize) + ds.h_at(l0);
            let below = inc < bound + cfg.slack;
            if !below {
                report.majorization_ok = false;
                record(
                    &mut report,
                    DriftViolation {
                        state: s,
                        check: DriftCheck::Majorization,
                        increment: inc,
                        bound,
                    },
                );
            }
        }
    }

    let sup_f = (0..pi.len()).map(|x| (ds.f)(x).abs()).fold(0.0, f64::max);
    if sup_f > cfg.f_cap {
        report.f_bounded = false;
        report
            .notes
            .push(format!("sup |f| = {sup_f} exceeds the cap {}", cfg.f_cap));
    }
    report.mean_f = pi.expectation(|x| (ds.f)(x));
    report.mean_ok = report.mean_f < -cfg.tol;
    if report.mean_ok {
        report.epsilon = Some(-report.mean_f);
    }
    report
}

/// One-step check for a discrete-time chain (Lyapunov condition with `h`).
///
/// `pi` is the stationary law of the chain's limiting phase process.
pub fn drift_check_discrete<P: ProbKernel + ?Sized>(
    k: &P,
    ds: &DriftSpec,
    pi: &StationaryDist,
    window: &Window,
    cfg: &SolverConfig,
) -> Result<DriftReport, StabilityError> {
    ds.validate(window.levels.clone())?;
    Ok(run_checks(
        DriftMode::Discrete,
        |s| k.law(s).ok().map(|law| (law, 1.0)),
        ds,
        pi,
        window,
        cfg,
    ))
}

/// Rate-weighted check for a continuous-time process; `h` must vanish.
pub fn drift_check_continuous<K: RateKernel + ?Sized>(
    k: &K,
    ds: &DriftSpec,
    pi: &StationaryDist,
    window: &Window,
    cfg: &SolverConfig,
) -> Result<DriftReport, StabilityError> {
    ds.validate(window.levels.clone())?;
    if let Some(h) = &ds.h {
        if let Some(y) = window.levels.clone().find(|&y| h((ds.ly)(y)) != 0.0) {
            return Err(StabilityError::InvalidDriftSpec(format!(
                "continuous-time drift takes no h term, but h(L^Y({y})) ≠ 0"
            )));
        }
    }
    Ok(run_checks(
        DriftMode::Continuous,
        |s| {
            let out = k.outgoing(s);
            (!out.is_empty()).then_some((out, 1.0))
        },
        ds,
        pi,
        window,
        cfg,
    ))
}
