use std::fmt;

use serde::{Deserialize, Serialize};

use crate::markov::StationaryDist;
use crate::qbd::{check_rate_bounds, phase_kernel, QbdSpec, Window};

use super::{phase_stationary, SolverConfig, StabilityError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    /// Every hypothesis certified and the drift is negative beyond tolerance.
    Stable,
    /// Hypotheses certified but the drift is not negative. This is not a
    /// transience claim: the criterion is only sufficient.
    CriterionFails,
    Inconclusive,
}

impl Verdict {
    /// Process exit code: 0, 1 or 2.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Stable => 0,
            Verdict::CriterionFails => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "Stable",
            Verdict::CriterionFails => "CriterionFails",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Could not be decided within the window cap.
    Uncertified,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl HypothesisReport {
    pub fn new(name: &str, status: CheckStatus, detail: impl Into<String>) -> Self {
        HypothesisReport {
            name: name.to_string(),
            status,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    /// `π*(A_1 - A_{-1}) 1`, or the largest of the signed drifts for
    /// half-plane models.
    pub drift: Option<f64>,
    /// `tail_mass_bound · sup |f|`.
    pub drift_error: Option<f64>,
    /// `-drift` when stable.
    pub epsilon: Option<f64>,
    pub residual: Option<f64>,
    pub tail_mass_bound: Option<f64>,
    pub hypotheses: Vec<HypothesisReport>,
    /// Truncation window of the phase solve.
    pub phase_window: Option<usize>,
    /// Window of the structural checks.
    pub check_window: Window,
}

impl StabilityVerdict {
    pub fn exit_code(&self) -> i32 {
        self.verdict.exit_code()
    }

    pub fn hypothesis(&self, name: &str) -> Option<&HypothesisReport> {
        self.hypotheses.iter().find(|h| h.name == name)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.12e}"))
}

impl fmt::Display for StabilityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict          {}", self.verdict)?;
        writeln!(f, "drift            {}", opt(self.drift))?;
        writeln!(f, "drift_error      {}", opt(self.drift_error))?;
        writeln!(f, "epsilon          {}", opt(self.epsilon))?;
        writeln!(f, "residual         {}", opt(self.residual))?;
        writeln!(f, "tail_mass_bound  {}", opt(self.tail_mass_bound))?;
        writeln!(
            f,
            "phase_window     {}",
            self.phase_window.map_or("-".to_string(), |n| n.to_string())
        )?;
        writeln!(
            f,
            "check_window     phases {:?} levels {:?}",
            self.check_window.phases, self.check_window.levels
        )?;
        for h in &self.hypotheses {
            writeln!(f, "  [{:?}] {}: {}", h.status, h.name, h.detail)?;
        }
        Ok(())
    }
}

/// A drift value with the error bar induced by the truncated stationary law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub value: f64,
    pub error_bar: f64,
    pub sup_f: f64,
}

/// `Σ_x f(x) π(x)` with error bar `tail_mass_bound · sup |f|`.
pub fn mean_drift(
    pi: &StationaryDist,
    f: impl Fn(usize) -> f64,
    f_cap: f64,
) -> Result<DriftEstimate, StabilityError> {
    let mut value = 0.0;
    let mut sup_f: f64 = 0.0;
    for (x, p) in pi.probs.iter().enumerate() {
        let fx = f(x);
        sup_f = sup_f.max(fx.abs());
        value += fx * p;
    }
    let within = sup_f <= f_cap;
    if !within {
        return Err(StabilityError::DriftUncertifiable { sup_f, cap: f_cap });
    }
    Ok(DriftEstimate {
        value,
        error_bar: pi.tail_mass_bound * sup_f,
        sup_f,
    })
}

/// `π*(A_1 - A_{-1}) 1` (with multi-band operators, `Σ_m m π* A_m 1`).
pub fn qbd_drift(
    pi: &StationaryDist,
    spec: &QbdSpec,
    cfg: &SolverConfig,
) -> Result<DriftEstimate, StabilityError> {
    mean_drift(pi, |i| spec.level_drift(i), cfg.f_cap)
}

/// Three-way sign test: `Stable` iff `drift + err < -tol`, `CriterionFails`
/// iff `drift - err > tol`.
pub fn classify(drift: f64, err: f64, tol: f64) -> Verdict {
    if drift + err < -tol {
        Verdict::Stable
    } else if drift - err > tol {
        Verdict::CriterionFails
    } else {
        Verdict::Inconclusive
    }
}

/// Checks band structure, rate bounds and the phase stationary law, then
/// tests the sign of the drift.
pub fn qbd_verdict(spec: &QbdSpec, cfg: &SolverConfig) -> Result<StabilityVerdict, StabilityError> {
    cfg.validate()?;
    let window = cfg.window.clip_phases(spec.phases());
    let mut out = StabilityVerdict {
        verdict: Verdict::Inconclusive,
        drift: None,
        drift_error: None,
        epsilon: None,
        residual: None,
        tail_mass_bound: None,
        hypotheses: Vec::new(),
        phase_window: None,
        check_window: window.clone(),
    };

    out.hypotheses
        .push(match spec.validate(window.phases.clone()) {
            Ok(()) => HypothesisReport::new(
                "band",
                CheckStatus::Pass,
                format!("no phase jump beyond H^X = {}", spec.hx()),
            ),
            Err(e) => HypothesisReport::new("band", CheckStatus::Fail, e.to_string()),
        });

    let rb = check_rate_bounds(spec, &window);
    let scope = if rb.window_limited {
        " (window-limited)"
    } else {
        ""
    };
    out.hypotheses.push(HypothesisReport::new(
        "rate_bounds",
        if rb.pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        format!(
            "inf v = {} at {}, sup v = {} at {}{scope}",
            rb.inf_v, rb.argmin, rb.sup_v, rb.argmax
        ),
    ));

    let pi = match phase_stationary(&phase_kernel(spec), cfg) {
        Ok(pi) => {
            out.hypotheses.push(HypothesisReport::new(
                "phase_stationary",
                CheckStatus::Pass,
                format!("certified on {} phases", pi.truncation),
            ));
            out.residual = Some(pi.residual);
            out.tail_mass_bound = Some(pi.tail_mass_bound);
            out.phase_window = Some(pi.truncation);
            Some(pi)
        }
        Err(e) => {
            let status = match e {
                StabilityError::NonCertification {
                    window,
                    tail_mass,
                    residual,
                } => {
                    out.phase_window = Some(window);
                    out.tail_mass_bound = Some(tail_mass);
                    out.residual = Some(residual);
                    CheckStatus::Uncertified
                }
                _ => CheckStatus::Fail,
            };
            out.hypotheses.push(HypothesisReport::new(
                "phase_stationary",
                status,
                e.to_string(),
            ));
            None
        }
    };

    let Some(pi) = pi else {
        out.hypotheses.push(HypothesisReport::new(
            "drift",
            CheckStatus::Skipped,
            "no stationary law",
        ));
        return Ok(out);
    };
    match qbd_drift(&pi, spec, cfg) {
        Ok(d) => {
            out.drift = Some(d.value);
            out.drift_error = Some(d.error_bar);
            let v = classify(d.value, d.error_bar, cfg.tol);
            out.hypotheses.push(HypothesisReport::new(
                "drift",
                match v {
                    Verdict::Stable => CheckStatus::Pass,
                    Verdict::CriterionFails => CheckStatus::Fail,
                    Verdict::Inconclusive => CheckStatus::Uncertified,
                },
                format!("π*(A1 - A-1)1 = {:.12e} ± {:.3e}", d.value, d.error_bar),
            ));
            let structural_ok = out.hypotheses[..3]
                .iter()
                .all(|h| h.status == CheckStatus::Pass);
            out.verdict = if structural_ok {
                v
            } else {
                Verdict::Inconclusive
            };
            if out.verdict == Verdict::Stable {
                out.epsilon = Some(-d.value);
            }
        }
        Err(e) => out.hypotheses.push(HypothesisReport::new(
            "drift",
            CheckStatus::Uncertified,
            e.to_string(),
        )),
    }
    Ok(out)
}
