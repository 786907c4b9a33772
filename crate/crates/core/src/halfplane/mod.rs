//! Processes on `Z_+ × Z` whose phase dynamics depend only on the sign of
//! the level, and the coupled-queue model with binomial catastrophes.

mod catastrophe;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov::{RateKernel, State2D, Transitions, MIN_RATE};
use crate::qbd::{PhaseOperator, QbdError, QbdSpec, Window, DEFAULT_PHASE_WINDOW};
use crate::stability::{
    classify, mean_drift, phase_stationary, CheckStatus, DriftCheck, DriftEstimate, DriftViolation,
    HypothesisReport, LevelFn, PhaseFn, SolverConfig, StabilityError, StabilityVerdict,
    StationaryDist, Verdict,
};

pub use catastrophe::{
    binomial_masses, build_catastrophe_kernel, catastrophe_drift_functions, catastrophe_verdict,
    isolated_queue_operator, isolated_queue_stationary, BinomialMasses, CatastropheDrift,
    CatastropheKernel, CatastropheModel, BINOMIAL_CUTOFF,
};
pub use sweep::{
    stability_region_sweep, write_sweep_csv, Param, SweepAxis, SweepGrid, SweepRecord, SWEEP_HEADER,
};

const MAX_STORED_VIOLATIONS: usize = 1000;
/// Relative tolerance when comparing phase marginals across levels.
const MARGINAL_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum HalfPlaneError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Qbd(#[from] QbdError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("sweep thread pool: {0}")]
    ThreadPool(String),
}

/// A rate kernel on `Z_+ × Z` with its phase operators above and below the axis.
#[derive(Clone)]
pub struct HalfPlaneSpec {
    pub kernel: Arc<dyn RateKernel>,
    /// Phase rates for `y > 0`.
    pub q_plus: PhaseOperator,
    /// Phase rates for `y < 0`; `None` if the process never enters `y < 0`.
    pub q_minus: Option<PhaseOperator>,
    /// Right phase-jump bound on the axis.
    pub hx: usize,
    /// Level-jump bound toward the axis.
    pub hy: usize,
}

impl HalfPlaneSpec {
    /// Number of phases if both phase operators are finite.
    pub fn phases(&self) -> Option<usize> {
        let minus = match &self.q_minus {
            Some(q) => q.phases()?,
            None => 0,
        };
        Some(self.q_plus.phases()?.max(minus))
    }
}

impl fmt::Debug for HalfPlaneSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HalfPlaneSpec")
            .field("q_plus", &self.q_plus)
            .field("q_minus", &self.q_minus)
            .field("hx", &self.hx)
            .field("hy", &self.hy)
            .finish_non_exhaustive()
    }
}

/// Lyapunov data for the half-plane: `L(y) = ly_plus(y)` for `y ≥ 0` and
/// `ly_minus(-y)` for `y < 0`.
#[derive(Clone)]
pub struct HalfPlaneDriftSpec {
    pub ly_plus: LevelFn,
    pub ly_minus: LevelFn,
    pub f_plus: PhaseFn,
    pub f_minus: PhaseFn,
    pub u_bound: f64,
}

impl fmt::Debug for HalfPlaneDriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HalfPlaneDriftSpec")
            .field("u_bound", &self.u_bound)
            .finish_non_exhaustive()
    }
}

impl HalfPlaneDriftSpec {
    /// `L^Y_±(k) = k`, so `L(y) = |y|`.
    pub fn linear<F, G>(f_plus: F, f_minus: G, u_bound: f64) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
        G: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        HalfPlaneDriftSpec {
            ly_plus: Arc::new(|k| k as f64),
            ly_minus: Arc::new(|k| k as f64),
            f_plus: Arc::new(f_plus),
            f_minus: Arc::new(f_minus),
            u_bound,
        }
    }

    pub fn level(&self, y: i64) -> f64 {
        if y >= 0 {
            (self.ly_plus)(y)
        } else {
            (self.ly_minus)(-y)
        }
    }

    fn validate(&self, max_level: i64) -> Result<(), StabilityError> {
        for (name, ly) in [("L^Y_+", &self.ly_plus), ("L^Y_-", &self.ly_minus)] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=max_level.max(1) {
                let l = ly(k);
                if !(l.is_finite() && l >= 0.0 && l > prev) {
                    return Err(StabilityError::InvalidDriftSpec(format!(
                        "{name} must be nonnegative and strictly increasing; {name}({k}) = {l}"
                    )));
                }
                prev = l;
            }
        }
        let (a, b) = ((self.ly_plus)(0), (self.ly_minus)(0));
        if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(StabilityError::InvalidDriftSpec(format!(
                "L^Y_+(0) = {a} and L^Y_-(0) = {b} disagree on the axis"
            )));
        }
        Ok(())
    }
}

/// Half-plane process given by level bands: `A^+_m` for `y > 0`, `A^-_m` for
/// `y < 0` and `A^0_m` on the axis, each moving the level by `m`.
#[derive(Debug, Clone)]
pub struct HalfPlaneQbd {
    upper: BTreeMap<i64, PhaseOperator>,
    axis: BTreeMap<i64, PhaseOperator>,
    lower: BTreeMap<i64, PhaseOperator>,
    hx: usize,
}

impl HalfPlaneQbd {
    /// An empty `lower` means the process stays in `y ≥ 0` (the axis bands
    /// must then not move down).
    pub fn new(
        upper: BTreeMap<i64, PhaseOperator>,
        axis: BTreeMap<i64, PhaseOperator>,
        lower: BTreeMap<i64, PhaseOperator>,
        hx: usize,
    ) -> Result<Self, HalfPlaneError> {
        if upper.is_empty() || axis.is_empty() {
            return Err(HalfPlaneError::InvalidModel(
                "upper and axis bands must be nonempty".into(),
            ));
        }
        for (name, bands) in [("upper", &upper), ("axis", &axis), ("lower", &lower)] {
            if let Some(op) = bands.get(&0) {
                let phases = op
                    .phases()
                    .map_or(0..=DEFAULT_PHASE_WINDOW, |n| 0..=n.saturating_sub(1));
                op.validate_no_diagonal(&format!("{name} A0"), phases)?;
            }
        }
        Ok(HalfPlaneQbd {
            upper,
            axis,
            lower,
            hx,
        })
    }

    /// The quarter-plane QBD seen as a half-plane process that never leaves
    /// `y ≥ 0`. Only pure QBDs (`H^Y = 1`) are accepted.
    pub fn from_quarter_plane(spec: &QbdSpec) -> Result<Self, HalfPlaneError> {
        if spec.hy() != 1 {
            return Err(HalfPlaneError::InvalidModel(format!(
                "quarter-plane embedding needs H^Y = 1, got {}",
                spec.hy()
            )));
        }
        let upper: BTreeMap<i64, PhaseOperator> =
            spec.bands().map(|(m, op)| (m, op.clone())).collect();
        let axis = BTreeMap::from([(0, spec.b_zero().clone()), (1, spec.a_plus().clone())]);
        Self::new(upper, axis, BTreeMap::new(), spec.hx())
    }

    fn bands_at(&self, y: i64) -> &BTreeMap<i64, PhaseOperator> {
        match y {
            y if y > 0 => &self.upper,
            y if y < 0 => &self.lower,
            _ => &self.axis,
        }
    }

    pub fn spec(&self) -> HalfPlaneSpec {
        let sum = |bands: &BTreeMap<i64, PhaseOperator>| {
            let ops: Vec<&PhaseOperator> = bands.values().collect();
            PhaseOperator::sum(&ops)
        };
        let toward_axis = self
            .upper
            .keys()
            .filter(|&&m| m < 0)
            .map(|m| m.unsigned_abs())
            .chain(self.lower.keys().filter(|&&m| m > 0).map(|&m| m as u64))
            .max()
            .unwrap_or(1)
            .max(1);
        HalfPlaneSpec {
            kernel: Arc::new(self.clone()),
            q_plus: sum(&self.upper),
            q_minus: (!self.lower.is_empty()).then(|| sum(&self.lower)),
            hx: self.hx,
            hy: toward_axis as usize,
        }
    }
}

impl RateKernel for HalfPlaneQbd {
    fn outgoing(&self, s: State2D) -> Transitions {
        let x = s.x as usize;
        let mut out = Vec::new();
        for (&m, op) in self.bands_at(s.y) {
            for (j, r) in op.row(x) {
                if m == 0 && j == x {
                    continue;
                }
                if r >= MIN_RATE {
                    out.push((State2D::new(j as u64, s.y + m), r));
                }
            }
        }
        out
    }
}

/// Outcome of [`halfplane_verdict`]: the common verdict record plus the
/// signed drifts and axis diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneVerdict {
    #[serde(flatten)]
    pub record: StabilityVerdict,
    /// `Σ f_+ π_+*`.
    pub d_plus: Option<f64>,
    pub d_plus_error: Option<f64>,
    /// `Σ f_- π_-*`; `None` when the process never enters `y < 0`.
    pub d_minus: Option<f64>,
    pub d_minus_error: Option<f64>,
    pub pi_plus_zero: Option<f64>,
    pub pi_minus_zero: Option<f64>,
    /// Largest right phase jump observed on the axis within the window.
    pub effective_hx: usize,
    pub violation_count: usize,
    pub violations: Vec<DriftViolation>,
    pub notes: Vec<String>,
}

impl HalfPlaneVerdict {
    pub fn verdict(&self) -> Verdict {
        self.record.verdict
    }

    pub fn exit_code(&self) -> i32 {
        self.record.exit_code()
    }
}

impl fmt::Display for HalfPlaneVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.12e}"));
        write!(f, "{}", self.record)?;
        writeln!(
            f,
            "d_plus           {} ± {}",
            opt(self.d_plus),
            opt(self.d_plus_error)
        )?;
        writeln!(
            f,
            "d_minus          {} ± {}",
            opt(self.d_minus),
            opt(self.d_minus_error)
        )?;
        writeln!(f, "pi_plus(0)       {}", opt(self.pi_plus_zero))?;
        writeln!(f, "pi_minus(0)      {}", opt(self.pi_minus_zero))?;
        writeln!(f, "effective_hx     {}", self.effective_hx)?;
        writeln!(f, "violations       {}", self.violation_count)?;
        for v in self.violations.iter().take(20) {
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

/// Symmetric level range covering the configured window.
pub fn half_plane_window(w: &Window) -> Window {
    let l = w
        .levels
        .start()
        .unsigned_abs()
        .max(w.levels.end().unsigned_abs()) as i64;
    Window {
        phases: w.phases.clone(),
        levels: -l..=l,
    }
}

fn off_diagonal_marginal(out: &Transitions, x: usize) -> BTreeMap<usize, f64> {
    let mut m = BTreeMap::new();
    for (t, r) in out {
        let j = t.x as usize;
        if j != x {
            *m.entry(j).or_insert(0.0) += r;
        }
    }
    m
}

fn marginals_agree(a: &BTreeMap<usize, f64>, b: &[(usize, f64)], x: usize) -> bool {
    let b: Vec<&(usize, f64)> = b.iter().filter(|(j, _)| *j != x).collect();
    a.len() == b.len()
        && a.iter().zip(b).all(|((ja, ra), (jb, rb))| {
            ja == jb && (ra - rb).abs() <= MARGINAL_RTOL * ra.abs().max(rb.abs())
        })
}

struct Structure {
    homogeneity: HypothesisReport,
    jumps: HypothesisReport,
    rates: HypothesisReport,
    drift_bounds: HypothesisReport,
    effective_hx: usize,
    violations: Vec<DriftViolation>,
    violation_count: usize,
}

fn check_structure(
    spec: &HalfPlaneSpec,
    ds: &HalfPlaneDriftSpec,
    window: &Window,
    slack: f64,
) -> Structure {
    let phase_rows = |q: &PhaseOperator| -> Vec<Vec<(usize, f64)>> {
        window.phases.clone().map(|x| q.row(x)).collect()
    };
    let plus_rows = phase_rows(&spec.q_plus);
    let minus_rows = spec.q_minus.as_ref().map(&phase_rows);
    let hy = spec.hy as i64;

    let mut marginal_bad: Option<String> = None;
    let mut jump_bad: Option<String> = None;
    let mut effective_hx = 0usize;
    let (mut inf_v, mut sup_v) = (f64::INFINITY, 0.0f64);
    let mut argmin = State2D::default();
    let mut violations = Vec::new();
    let mut violation_count = 0usize;
    let (mut u_ok, mut maj_ok) = (true, true);

    for s in window.states() {
        // unreachable when nothing crosses below the axis (checked below)
        if s.y < 0 && minus_rows.is_none() {
            continue;
        }
        let x = s.x as usize;
        let out = spec.kernel.outgoing(s);
        let v: f64 = out.iter().map(|(_, r)| r).sum();
        if v < inf_v {
            inf_v = v;
            argmin = s;
        }
        sup_v = sup_v.max(v);

        let xi = x - *window.phases.start();
        let side = match s.y {
            y if y > 0 => Some(("+", &plus_rows)),
            y if y < 0 => minus_rows.as_ref().map(|r| ("-", r)),
            _ => None,
        };
        if let Some((sign, rows)) = side {
            if marginal_bad.is_none()
                && !marginals_agree(&off_diagonal_marginal(&out, x), &rows[xi], x)
            {
                marginal_bad = Some(format!("phase marginal at {s} differs from q_{sign}"));
            }
        }
        for (t, _) in &out {
            if s.y == 0 && t.x > s.x {
                effective_hx = effective_hx.max((t.x - s.x) as usize);
            }
            if jump_bad.is_none() {
                if s.y > 0 && t.y < s.y - hy || s.y < 0 && t.y > s.y + hy {
                    jump_bad = Some(format!("{s} → {t} jumps past H^Y = {hy} toward the axis"));
                }
                if minus_rows.is_none() && s.y >= 0 && t.y < 0 {
                    jump_bad = Some(format!("{s} → {t} enters y < 0 but no q_- was given"));
                }
            }
        }
        let l0 = ds.level(s.y);
        let inc: f64 = out.iter().map(|(t, r)| r * (ds.level(t.y) - l0)).sum();
        let mut record = |check, bound| {
            violation_count += 1;
            if violations.len() < MAX_STORED_VIOLATIONS {
                violations.push(DriftViolation {
                    state: s,
                    check,
                    increment: inc,
                    bound,
                });
            }
        };
        if inc > ds.u_bound + slack {
            u_ok = false;
            record(DriftCheck::UpperBound, ds.u_bound);
        }
        let f = match s.y {
            y if y > 0 => Some((ds.f_plus)(x)),
            y if y < 0 => Some((ds.f_minus)(x)),
            _ => None,
        };
        if let Some(f) = f {
            let below = inc < f + slack;
            if !below {
                maj_ok = false;
                record(DriftCheck::Majorization, f);
            }
        }
    }

    let status = |ok: bool| {
        if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        }
    };
    let rates_ok = inf_v > 0.0 && sup_v.is_finite();
    let hx_ok = effective_hx <= spec.hx;
    Structure {
        homogeneity: HypothesisReport::new(
            "level_homogeneity",
            status(marginal_bad.is_none()),
            marginal_bad
                .unwrap_or_else(|| "phase marginals match q_± at every window level".into()),
        ),
        jumps: HypothesisReport::new(
            "jump_bounds",
            status(jump_bad.is_none() && hx_ok),
            jump_bad.unwrap_or_else(|| {
                format!(
                    "H^Y = {hy}; axis phase jumps ≤ {effective_hx} (declared H^X = {})",
                    spec.hx
                )
            }),
        ),
        rates: HypothesisReport::new(
            "rate_bounds",
            status(rates_ok),
            format!("inf v = {inf_v} at {argmin}, sup v = {sup_v} (window-limited)"),
        ),
        drift_bounds: HypothesisReport::new(
            "drift_bounds",
            status(u_ok && maj_ok),
            format!(
                "U-bound {}, majorization by f_± {}",
                if u_ok { "holds" } else { "violated" },
                if maj_ok { "holds" } else { "violated" }
            ),
        ),
        effective_hx,
        violations,
        violation_count,
    }
}

fn solve_side(
    name: &str,
    q: &PhaseOperator,
    cfg: &SolverConfig,
) -> (Option<StationaryDist>, HypothesisReport) {
    match phase_stationary(q, cfg) {
        Ok(pi) => {
            let detail = format!(
                "π_{name}* certified on {} phases (tail {:.2e}, residual {:.2e})",
                pi.truncation, pi.tail_mass_bound, pi.residual
            );
            (
                Some(pi),
                HypothesisReport::new(
                    &format!("phase_stationary_{name}"),
                    CheckStatus::Pass,
                    detail,
                ),
            )
        }
        Err(e) => {
            let status = if matches!(e, StabilityError::NonCertification { .. }) {
                CheckStatus::Uncertified
            } else {
                CheckStatus::Fail
            };
            (
                None,
                HypothesisReport::new(&format!("phase_stationary_{name}"), status, e.to_string()),
            )
        }
    }
}

/// Evaluates the half-plane hypotheses on the window and the signs of
/// `d_± = Σ f_± π_±*`.
pub fn halfplane_verdict(
    spec: &HalfPlaneSpec,
    ds: &HalfPlaneDriftSpec,
    cfg: &SolverConfig,
) -> Result<HalfPlaneVerdict, StabilityError> {
    cfg.validate()?;
    let window = half_plane_window(&cfg.window).clip_phases(spec.phases());
    ds.validate(*window.levels.end())?;
    if !(ds.u_bound.is_finite()) {
        return Err(StabilityError::InvalidDriftSpec("U must be finite".into()));
    }

    let st = check_structure(spec, ds, &window, cfg.slack);
    let (pi_plus, plus_report) = solve_side("plus", &spec.q_plus, cfg);
    let (pi_minus, minus_report) = match &spec.q_minus {
        Some(q) => solve_side("minus", q, cfg),
        None => (
            None,
            HypothesisReport::new(
                "phase_stationary_minus",
                CheckStatus::Skipped,
                "process stays in y ≥ 0",
            ),
        ),
    };

    let mut notes = vec![format!(
        "U-bound checked for every level sign in {:?}; the half-plane condition is stated for y ≥ 0 only",
        window.levels
    )];
    let mut drift_reports = Vec::new();
    let mut estimate =
        |name: &str, pi: &Option<StationaryDist>, f: &PhaseFn| -> Option<DriftEstimate> {
            let pi = pi.as_ref()?;
            match mean_drift(pi, |x| f(x), cfg.f_cap) {
                Ok(d) => Some(d),
                Err(e) => {
                    notes.push(format!("d_{name}: {e}"));
                    None
                }
            }
        };
    let d_plus = estimate("plus", &pi_plus, &ds.f_plus);
    let d_minus = estimate("minus", &pi_minus, &ds.f_minus);

    let mut sides = Vec::new();
    for (name, d, pi_ok) in [
        ("plus", d_plus, pi_plus.is_some()),
        (
            "minus",
            d_minus,
            pi_minus.is_some() || spec.q_minus.is_none(),
        ),
    ] {
        if name == "minus" && spec.q_minus.is_none() {
            continue;
        }
        let report = match (d, pi_ok) {
            (Some(d), _) => {
                let v = classify(d.value, d.error_bar, cfg.tol);
                sides.push(v);
                HypothesisReport::new(
                    &format!("drift_{name}"),
                    match v {
                        Verdict::Stable => CheckStatus::Pass,
                        Verdict::CriterionFails => CheckStatus::Fail,
                        Verdict::Inconclusive => CheckStatus::Uncertified,
                    },
                    format!("d_{name} = {:.12e} ± {:.3e}", d.value, d.error_bar),
                )
            }
            _ => {
                sides.push(Verdict::Inconclusive);
                HypothesisReport::new(
                    &format!("drift_{name}"),
                    CheckStatus::Skipped,
                    "no stationary law or f uncertifiable",
                )
            }
        };
        drift_reports.push(report);
    }

    let structural = [
        &st.homogeneity,
        &plus_report,
        &minus_report,
        &st.jumps,
        &st.drift_bounds,
        &st.rates,
    ];
    let structural_ok = structural
        .iter()
        .all(|h| matches!(h.status, CheckStatus::Pass | CheckStatus::Skipped));
    let verdict = if !structural_ok {
        Verdict::Inconclusive
    } else if sides.iter().all(|&v| v == Verdict::Stable) {
        Verdict::Stable
    } else if sides.contains(&Verdict::CriterionFails) {
        Verdict::CriterionFails
    } else {
        Verdict::Inconclusive
    };

    let drift = match (d_plus, d_minus) {
        (Some(a), Some(b)) => Some(a.value.max(b.value)),
        (Some(a), None) if spec.q_minus.is_none() => Some(a.value),
        _ => None,
    };
    let dists: Vec<&StationaryDist> = pi_plus.iter().chain(pi_minus.iter()).collect();
    let fold_max = |g: fn(&StationaryDist) -> f64| {
        (!dists.is_empty()).then(|| dists.iter().map(|p| g(p)).fold(0.0, f64::max))
    };
    let mut hypotheses: Vec<HypothesisReport> = structural.into_iter().cloned().collect();
    hypotheses.extend(drift_reports);

    let record = StabilityVerdict {
        verdict,
        drift,
        drift_error: match (d_plus, d_minus) {
            (Some(a), Some(b)) => Some(a.error_bar.max(b.error_bar)),
            (Some(a), None) => Some(a.error_bar),
            _ => None,
        },
        epsilon: (verdict == Verdict::Stable).then(|| -drift.unwrap_or(0.0)),
        residual: fold_max(|p| p.residual),
        tail_mass_bound: fold_max(|p| p.tail_mass_bound),
        hypotheses,
        phase_window: dists.iter().map(|p| p.truncation).max(),
        check_window: window,
    };
    Ok(HalfPlaneVerdict {
        record,
        d_plus: d_plus.map(|d| d.value),
        d_plus_error: d_plus.map(|d| d.error_bar),
        d_minus: d_minus.map(|d| d.value),
        d_minus_error: d_minus.map(|d| d.error_bar),
        pi_plus_zero: pi_plus.as_ref().map(|p| p.get(0)),
        pi_minus_zero: pi_minus.as_ref().map(|p| p.get(0)),
        effective_hx: st.effective_hx,
        violation_count: st.violation_count,
        violations: st.violations,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::qbd_verdict;

    fn small_cfg() -> SolverConfig {
        SolverConfig {
            window: Window::new(30, 15),
            ..Default::default()
        }
    }

    fn mm1_halfplane(lambda: f64, mu: f64) -> HalfPlaneSpec {
        let qbd = QbdSpec::mm1(lambda, mu).unwrap();
        HalfPlaneQbd::from_quarter_plane(&qbd).unwrap().spec()
    }

    #[test]
    fn window_is_made_symmetric() {
        let w = half_plane_window(&Window::new(5, 7));
        assert_eq!(w.levels, -7..=7);
    }

    #[test]
    fn quarter_plane_reduction_matches() {
        for (lambda, mu) in [(0.5, 1.0), (2.0, 1.0), (1.0, 1.0)] {
            let qbd = QbdSpec::mm1(lambda, mu).unwrap();
            let spec = mm1_halfplane(lambda, mu);
            assert!(spec.q_minus.is_none());
            let ds = HalfPlaneDriftSpec::linear(move |_| lambda - mu, |_| 0.0, lambda);
            let hp = halfplane_verdict(&spec, &ds, &small_cfg()).unwrap();
            let q = qbd_verdict(&qbd, &small_cfg()).unwrap();
            assert_eq!(hp.verdict(), q.verdict, "λ={lambda} μ={mu}: {hp}");
            assert_eq!(hp.record.drift, q.drift);
        }
    }

    #[test]
    fn missing_lower_side_is_flagged_when_reached() {
        let up = BTreeMap::from([
            (1, PhaseOperator::from_entries([(0, 0, 1.0)]).unwrap()),
            (-1, PhaseOperator::from_entries([(0, 0, 2.0)]).unwrap()),
        ]);
        let axis = BTreeMap::from([
            (1, PhaseOperator::from_entries([(0, 0, 1.0)]).unwrap()),
            (-1, PhaseOperator::from_entries([(0, 0, 1.0)]).unwrap()),
        ]);
        let spec = HalfPlaneQbd::new(up, axis, BTreeMap::new(), 0)
            .unwrap()
            .spec();
        let ds = HalfPlaneDriftSpec::linear(|_| -1.0 + 1e-3, |_| 0.0, 2.0);
        let v = halfplane_verdict(&spec, &ds, &small_cfg()).unwrap();
        assert_eq!(v.verdict(), Verdict::Inconclusive);
        assert_eq!(
            v.record.hypothesis("jump_bounds").unwrap().status,
            CheckStatus::Fail
        );
    }

    #[test]
    fn two_sided_walk_towards_axis() {
        let op = |r: f64| PhaseOperator::from_entries([(0, 0, r)]).unwrap();
        let spec = HalfPlaneQbd::new(
            BTreeMap::from([(1, op(1.0)), (-1, op(3.0))]),
            BTreeMap::from([(1, op(1.0)), (-1, op(1.0))]),
            BTreeMap::from([(1, op(2.0)), (-1, op(1.5))]),
            0,
        )
        .unwrap()
        .spec();
        // L(y) = |y|: increment -2 above, -0.5 below, +2 on the axis
        let ds = HalfPlaneDriftSpec::linear(|_| -2.0 + 1e-6, |_| -0.5 + 1e-6, 2.0);
        let v = halfplane_verdict(&spec, &ds, &small_cfg()).unwrap();
        assert_eq!(v.verdict(), Verdict::Stable, "{v}");
        assert_eq!(v.violation_count, 0);
        assert!((v.record.drift.unwrap() + 0.5).abs() < 1e-5);

        let ds = HalfPlaneDriftSpec::linear(|_| -2.0 + 1e-6, |_| -0.5 + 1e-6, 1.0);
        let v = halfplane_verdict(&spec, &ds, &small_cfg()).unwrap();
        assert_eq!(v.verdict(), Verdict::Inconclusive);
        assert_eq!(v.violation_count, 1);
        assert_eq!(v.violations[0].state, State2D::new(0, 0));
    }

    #[test]
    fn mismatched_marginal_is_reported() {
        let spec = mm1_halfplane(0.5, 1.0);
        let wrong = HalfPlaneSpec {
            q_plus: PhaseOperator::from_entries([(0, 1, 1.0), (1, 0, 1.0)]).unwrap(),
            ..spec
        };
        let ds = HalfPlaneDriftSpec::linear(|_| -0.5 + 1e-6, |_| 0.0, 1.0);
        let v = halfplane_verdict(&wrong, &ds, &small_cfg()).unwrap();
        assert_eq!(
            v.record.hypothesis("level_homogeneity").unwrap().status,
            CheckStatus::Fail
        );
        assert_eq!(v.verdict(), Verdict::Inconclusive);
    }
}
