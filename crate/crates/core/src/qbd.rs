//! Level-dependent QBD processes on the quarter-plane.
//!
//! A [`QbdSpec`] holds banded phase operators: `A_m` moves the level by `m`
//! (pure QBD uses `m ∈ {-1, 0, 1}`), and `B_0` replaces `A_0` on level 0.
//! Diagonals of `A_0` and `B_0` are never stored; holding times come from the
//! total rate `v(i, k)`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov::{RateKernel, State2D, Transitions, MIN_RATE};

pub const DEFAULT_PHASE_WINDOW: usize = 200;
pub const DEFAULT_LEVEL_WINDOW: i64 = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QbdError {
    #[error("{operator}({row}, {col}) = {rate} jumps the phase by more than H^X = {hx}")]
    BandViolation {
        operator: String,
        row: usize,
        col: usize,
        rate: f64,
        hx: usize,
    },
    #[error("{operator}({row}, {col}) = {rate} is not a nonnegative finite rate")]
    InvalidEntry {
        operator: String,
        row: usize,
        col: usize,
        rate: f64,
    },
    #[error("{operator} has a diagonal entry at phase {phase}; diagonals are implied by row sums")]
    DiagonalEntry { operator: String, phase: usize },
    #[error("invalid QBD structure: {0}")]
    Structure(String),
}

type RowFn = dyn Fn(usize) -> Vec<(usize, f64)> + Send + Sync;

#[derive(Clone)]
enum Rows {
    Sparse(Arc<BTreeMap<usize, Vec<(usize, f64)>>>),
    Generator(Arc<RowFn>),
}

/// A nonnegative, row-finite phase operator `A(i, i')`, possibly infinite.
///
/// Rows are returned sorted by column with zero entries removed.
#[derive(Clone)]
pub struct PhaseOperator {
    rows: Rows,
    phases: Option<usize>,
}

impl fmt::Debug for PhaseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("PhaseOperator");
        d.field("phases", &self.phases);
        match &self.rows {
            Rows::Sparse(m) => d.field("entries", m),
            Rows::Generator(_) => d.field("entries", &"<generator>"),
        };
        d.finish()
    }
}

fn normalise_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.retain(|&(_, r)| r > 0.0);
    row.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (j, r) in row {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += r,
            _ => out.push((j, r)),
        }
    }
    out
}

impl PhaseOperator {
    /// The zero operator on infinitely many phases.
    pub fn zero() -> Self {
        PhaseOperator {
            rows: Rows::Sparse(Arc::new(BTreeMap::new())),
            phases: None,
        }
    }

    /// Finite operator from `(i, i', rate)` triples. Duplicates are summed and
    /// zero rates dropped. The phase count is `max index + 1` unless widened
    /// with [`PhaseOperator::with_phases`].
    pub fn from_entries<I>(entries: I) -> Result<Self, QbdError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut map: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        let mut phases = 0;
        for (i, j, r) in entries {
            if !(r.is_finite() && r >= 0.0) {
                return Err(QbdError::InvalidEntry {
                    operator: "operator".into(),
                    row: i,
                    col: j,
                    rate: r,
                });
            }
            phases = phases.max(i + 1).max(j + 1);
            map.entry(i).or_default().push((j, r));
        }
        let map = map
            .into_iter()
            .map(|(i, row)| (i, normalise_row(row)))
            .filter(|(_, row)| !row.is_empty())
            .collect();
        Ok(PhaseOperator {
            rows: Rows::Sparse(Arc::new(map)),
            phases: Some(phases),
        })
    }

    /// Operator given intensionally by its rows. `phases = None` means the
    /// phase space is countably infinite.
    pub fn from_fn<F>(phases: Option<usize>, f: F) -> Self
    where
        F: Fn(usize) -> Vec<(usize, f64)> + Send + Sync + 'static,
    {
        PhaseOperator {
            rows: Rows::Generator(Arc::new(f)),
            phases,
        }
    }

    /// `rate` on every diagonal entry `(i, i)`.
    pub fn diagonal(rate: f64, phases: Option<usize>) -> Self {
        Self::from_fn(phases, move |i| vec![(i, rate)])
    }

    /// `rate` on every entry `(i, i + offset)` whose target is a valid phase.
    pub fn shift(offset: i64, rate: f64, phases: Option<usize>) -> Self {
        Self::from_fn(phases, move |i| {
            let j = i as i64 + offset;
            if j < 0 || phases.is_some_and(|n| j as usize >= n) {
                Vec::new()
            } else {
                vec![(j as usize, rate)]
            }
        })
    }

    /// Restricts (or widens) the phase space to `0..n`; entries outside are dropped.
    pub fn with_phases(mut self, n: usize) -> Self {
        self.phases = Some(n);
        self
    }

    pub fn phases(&self) -> Option<usize> {
        self.phases
    }

    fn raw_row(&self, i: usize) -> Vec<(usize, f64)> {
        match &self.rows {
            Rows::Sparse(m) => m.get(&i).cloned().unwrap_or_default(),
            Rows::Generator(f) => f(i),
        }
    }

    /// Row `i` as sorted `(i', rate)` pairs with positive rates.
    pub fn row(&self, i: usize) -> Vec<(usize, f64)> {
        if self.phases.is_some_and(|n| i >= n) {
            return Vec::new();
        }
        let mut row = normalise_row(self.raw_row(i));
        if let Some(n) = self.phases {
            row.retain(|&(j, _)| j < n);
        }
        row
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .into_iter()
            .find(|&(c, _)| c == j)
            .map_or(0.0, |(_, r)| r)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().map(|(_, r)| r).sum()
    }

    /// Entrywise sum. The result is finite only if every term is.
    pub fn sum(ops: &[&PhaseOperator]) -> PhaseOperator {
        let phases = combined_phases(ops.iter().copied());
        let ops: Vec<PhaseOperator> = ops.iter().map(|&o| o.clone()).collect();
        PhaseOperator::from_fn(phases, move |i| {
            normalise_row(ops.iter().flat_map(|o| o.row(i)).collect())
        })
    }

    pub fn scaled(&self, c: f64) -> PhaseOperator {
        let inner = self.clone();
        PhaseOperator::from_fn(self.phases, move |i| {
            inner.row(i).into_iter().map(|(j, r)| (j, r * c)).collect()
        })
    }

    /// Largest `i' - i` over nonzero entries with `i` in `phases`.
    pub fn max_right_jump(&self, phases: RangeInclusive<usize>) -> Option<usize> {
        phases
            .flat_map(|i| self.row(i).into_iter().map(move |(j, _)| (i, j)))
            .filter(|&(i, j)| j > i)
            .map(|(i, j)| j - i)
            .max()
    }

    /// Checks entries are finite and nonnegative and that no entry in the
    /// window jumps right by more than `hx`.
    pub fn validate_band(
        &self,
        name: &str,
        hx: usize,
        phases: RangeInclusive<usize>,
    ) -> Result<(), QbdError> {
        for i in phases {
            for (j, r) in self.row(i) {
                if !r.is_finite() {
                    return Err(QbdError::InvalidEntry {
                        operator: name.into(),
                        row: i,
                        col: j,
                        rate: r,
                    });
                }
                if j > i + hx {
                    return Err(QbdError::BandViolation {
                        operator: name.into(),
                        row: i,
                        col: j,
                        rate: r,
                        hx,
                    });
                }
            }
        }
        Ok(())
    }

    pub(crate) fn validate_no_diagonal(
        &self,
        name: &str,
        phases: RangeInclusive<usize>,
    ) -> Result<(), QbdError> {
        for i in phases {
            if self.row(i).iter().any(|&(j, _)| j == i) {
                return Err(QbdError::DiagonalEntry {
                    operator: name.into(),
                    phase: i,
                });
            }
        }
        Ok(())
    }
}

/// Phase range × level range used for window-limited checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub phases: RangeInclusive<usize>,
    pub levels: RangeInclusive<i64>,
}

impl Default for Window {
    fn default() -> Self {
        Window {
            phases: 0..=DEFAULT_PHASE_WINDOW,
            levels: 0..=DEFAULT_LEVEL_WINDOW,
        }
    }
}

impl Window {
    pub fn new(max_phase: usize, max_level: i64) -> Self {
        Window {
            phases: 0..=max_phase,
            levels: 0..=max_level,
        }
    }

    /// Symmetric level range `-max_level..=max_level`.
    pub fn half_plane(max_phase: usize, max_level: i64) -> Self {
        Window {
            phases: 0..=max_phase,
            levels: -max_level..=max_level,
        }
    }

    pub fn states(&self) -> impl Iterator<Item = State2D> + '_ {
        self.phases
            .clone()
            .flat_map(move |x| self.levels.clone().map(move |y| State2D::new(x as u64, y)))
    }

    /// Clips the phase range to a finite phase count.
    pub fn clip_phases(&self, phases: Option<usize>) -> Window {
        let mut w = self.clone();
        if let Some(n) = phases {
            let hi = (*w.phases.end()).min(n.saturating_sub(1));
            w.phases = *w.phases.start()..=hi;
        }
        w
    }
}

/// Level-dependent QBD, optionally with level jumps larger than one.
#[derive(Debug, Clone)]
pub struct QbdSpec {
    bands: BTreeMap<i64, PhaseOperator>,
    boundary: PhaseOperator,
    hx: usize,
}

impl QbdSpec {
    /// Pure QBD from `A_1`, `A_0`, `A_{-1}`, `B_0` and the right-jump bound `H^X`.
    pub fn new(
        a_plus: PhaseOperator,
        a_zero: PhaseOperator,
        a_minus: PhaseOperator,
        b_zero: PhaseOperator,
        hx: usize,
    ) -> Result<Self, QbdError> {
        let bands = BTreeMap::from([(1, a_plus), (0, a_zero), (-1, a_minus)]);
        Self::multi_band(bands, b_zero, hx)
    }

    /// QBD with operators `A_m` for level jumps `m`, `|m| ≤ H^Y`.
    ///
    /// Down-jumps that would land below level 0 are dropped, and `B_0`
    /// replaces `A_0` on level 0.
    pub fn multi_band(
        mut bands: BTreeMap<i64, PhaseOperator>,
        b_zero: PhaseOperator,
        hx: usize,
    ) -> Result<Self, QbdError> {
        for m in [-1, 0, 1] {
            bands.entry(m).or_insert_with(PhaseOperator::zero);
        }
        let spec = QbdSpec {
            bands,
            boundary: b_zero,
            hx,
        };
        // explicit operators are validated in full, generators on the default window
        let check = spec
            .phases()
            .map_or(0..=DEFAULT_PHASE_WINDOW, |n| 0..=n.saturating_sub(1));
        spec.validate(check)?;
        Ok(spec)
    }

    /// Single-phase QBD: the M/M/1 queue.
    pub fn mm1(lambda: f64, mu: f64) -> Result<Self, QbdError> {
        Self::new(
            PhaseOperator::from_entries([(0, 0, lambda)])?,
            PhaseOperator::from_entries([])?.with_phases(1),
            PhaseOperator::from_entries([(0, 0, mu)])?,
            PhaseOperator::from_entries([])?.with_phases(1),
            0,
        )
    }

    pub fn hx(&self) -> usize {
        self.hx
    }

    /// Largest level jump `H^Y` (1 for a pure QBD).
    pub fn hy(&self) -> usize {
        self.bands
            .iter()
            .filter(|(m, op)| **m != 0 && !is_trivially_zero(op))
            .map(|(m, _)| m.unsigned_abs() as usize)
            .max()
            .unwrap_or(1)
            .max(1)
    }

    pub fn band(&self, m: i64) -> Option<&PhaseOperator> {
        self.bands.get(&m)
    }

    pub fn bands(&self) -> impl Iterator<Item = (i64, &PhaseOperator)> {
        self.bands.iter().map(|(m, op)| (*m, op))
    }

    pub fn a_plus(&self) -> &PhaseOperator {
        &self.bands[&1]
    }

    pub fn a_zero(&self) -> &PhaseOperator {
        &self.bands[&0]
    }

    pub fn a_minus(&self) -> &PhaseOperator {
        &self.bands[&-1]
    }

    pub fn b_zero(&self) -> &PhaseOperator {
        &self.boundary
    }

    /// Number of phases if every operator is finite.
    pub fn phases(&self) -> Option<usize> {
        combined_phases(self.bands.values().chain(std::iter::once(&self.boundary)))
    }

    /// Band, sign and diagonal checks over `phases`.
    pub fn validate(&self, phases: RangeInclusive<usize>) -> Result<(), QbdError> {
        for (m, op) in &self.bands {
            op.validate_band(&band_name(*m), self.hx, phases.clone())?;
        }
        self.boundary.validate_band("B0", self.hx, phases.clone())?;
        self.a_zero().validate_no_diagonal("A0", phases.clone())?;
        self.boundary.validate_no_diagonal("B0", phases)?;
        Ok(())
    }

    /// Entrywise scaling of every operator.
    pub fn scaled(&self, c: f64) -> QbdSpec {
        QbdSpec {
            bands: self
                .bands
                .iter()
                .map(|(m, op)| (*m, op.scaled(c)))
                .collect(),
            boundary: self.boundary.scaled(c),
            hx: self.hx,
        }
    }

    /// `f(i) = Σ_m m Σ_{i'} A_m(i, i')`: the level drift of phase `i` away
    /// from the boundary.
    pub fn level_drift(&self, i: usize) -> f64 {
        self.bands
            .iter()
            .filter(|(m, _)| **m != 0)
            .map(|(m, op)| *m as f64 * op.row_sum(i))
            .sum()
    }

    /// Total rate `v(i, k)`.
    pub fn total_rate(&self, i: usize, k: i64) -> f64 {
        let mut v = 0.0;
        for (m, op) in &self.bands {
            if *m == 0 && k == 0 {
                v += self.boundary.row_sum(i);
            } else if k + m >= 0 {
                v += op.row_sum(i);
            }
        }
        v
    }
}

fn is_trivially_zero(op: &PhaseOperator) -> bool {
    matches!(&op.rows, Rows::Sparse(m) if m.is_empty())
}

/// Phase count of a family of operators; empty explicit operators impose no
/// constraint, any infinite operator makes the result infinite.
fn combined_phases<'a>(ops: impl Iterator<Item = &'a PhaseOperator>) -> Option<usize> {
    ops.filter(|op| !(is_trivially_zero(op) && op.phases.is_none()))
        .map(PhaseOperator::phases)
        .try_fold(0usize, |acc, p| p.map(|p| acc.max(p)))
}

fn band_name(m: i64) -> String {
    match m {
        1 => "A1".into(),
        0 => "A0".into(),
        -1 => "A-1".into(),
        m => format!("A{m}"),
    }
}

/// Rate kernel of a QBD on `Z_+ × Z_+`.
#[derive(Debug, Clone)]
pub struct QbdKernel {
    spec: QbdSpec,
}

impl QbdKernel {
    pub fn spec(&self) -> &QbdSpec {
        &self.spec
    }
}

impl RateKernel for QbdKernel {
    fn outgoing(&self, s: State2D) -> Transitions {
        let (i, k) = (s.x as usize, s.y);
        if k < 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        for (m, op) in &self.spec.bands {
            let row = if *m == 0 && k == 0 {
                self.spec.boundary.row(i)
            } else if k + m >= 0 {
                op.row(i)
            } else {
                continue;
            };
            for (j, r) in row {
                if *m == 0 && j == i {
                    continue;
                }
                if r >= MIN_RATE {
                    out.push((State2D::new(j as u64, k + m), r));
                }
            }
        }
        out
    }
}

/// Rate kernel of the QBD, after band validation on the default window.
pub fn assemble_kernel(spec: &QbdSpec) -> Result<QbdKernel, QbdError> {
    let phases = spec
        .phases()
        .map_or(0..=DEFAULT_PHASE_WINDOW, |n| 0..=n.saturating_sub(1));
    spec.validate(phases)?;
    Ok(QbdKernel { spec: spec.clone() })
}

/// `q* = Σ_m A_m`: phase rates away from the boundary. Diagonal entries
/// (phase kept, level moved) are retained; they only affect `v*`.
pub fn phase_kernel(spec: &QbdSpec) -> PhaseOperator {
    let ops: Vec<&PhaseOperator> = spec.bands.values().collect();
    PhaseOperator::sum(&ops)
}

/// Extrema of `v(i, k)` over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub inf_v: f64,
    pub sup_v: f64,
    pub argmin: State2D,
    pub argmax: State2D,
    pub pass: bool,
    /// True when the phase space is infinite and the window does not cover it.
    pub window_limited: bool,
}

/// Non-explosiveness check `0 < inf v ≤ sup v < ∞` on a window.
///
/// `v(i, k)` does not depend on `k` once `k ≥ H^Y`, so only levels up to
/// `H^Y` are enumerated.
pub fn check_rate_bounds(spec: &QbdSpec, window: &Window) -> RateBounds {
    let window = window.clip_phases(spec.phases());
    let hy = spec.hy() as i64;
    let lo = (*window.levels.start()).max(0);
    let hi = (*window.levels.end()).min(lo.max(hy));
    let mut b = RateBounds {
        inf_v: f64::INFINITY,
        sup_v: 0.0,
        argmin: State2D::default(),
        argmax: State2D::default(),
        pass: false,
        window_limited: spec.phases().is_none_or(|n| *window.phases.end() + 1 < n),
    };
    for i in window.phases.clone() {
        for k in lo..=hi {
            let v = spec.total_rate(i, k);
            let s = State2D::new(i as u64, k);
            if v < b.inf_v {
                b.inf_v = v;
                b.argmin = s;
            }
            if v > b.sup_v || !v.is_finite() {
                b.sup_v = v;
                b.argmax = s;
            }
        }
    }
    b.pass = b.inf_v > 0.0 && b.sup_v.is_finite() && b.inf_v <= b.sup_v;
    b
}
