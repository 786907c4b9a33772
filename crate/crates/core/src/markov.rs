//! Countable-state Markov processes on `Z_+ × Z` and the jump-chain reduction.
//!
//! A [`RateKernel`] enumerates the outgoing transitions of a state on demand,
//! which is how infinite (banded) kernels are represented. [`SparseRateKernel`]
//! is the explicit, finite variant. The jump chain of a rate kernel moves from
//! `s` to `s'` with probability `q(s, s') / v(s)` where `v` is the total rate.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rates below this are rejected by explicit kernels.
pub const MIN_RATE: f64 = 1e-15;

/// Default tolerance for row sums and normalisation.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("state {0} has no outgoing transitions (absorbing)")]
    Absorbing(State2D),
    #[error("rate {rate} from {from} to {to} is not a positive finite number above {min}")]
    InvalidRate {
        from: State2D,
        to: State2D,
        rate: f64,
        min: f64,
    },
    #[error("self-loop at {0}: diagonal rates are implied, not stored")]
    SelfLoop(State2D),
    #[error("duplicate transition {from} -> {to}")]
    Duplicate { from: State2D, to: State2D },
    #[error("probabilities out of {0} sum to {1}, not 1")]
    RowSum(State2D, f64),
    #[error("invalid probability {prob} from {from} to {to}")]
    InvalidProbability {
        from: State2D,
        to: State2D,
        prob: f64,
    },
    #[error("quarter-plane state with negative level {0}")]
    NegativeLevel(i64),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

/// A state `(x, y)`: `x` is the phase, `y` the level.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct State2D {
    pub x: u64,
    pub y: i64,
}

impl State2D {
    pub const fn new(x: u64, y: i64) -> Self {
        State2D { x, y }
    }

    /// Constructor for quarter-plane contexts; rejects negative levels.
    pub fn quarter(x: u64, y: i64) -> Result<Self, MarkovError> {
        if y < 0 {
            return Err(MarkovError::NegativeLevel(y));
        }
        Ok(State2D { x, y })
    }
}

impl fmt::Display for State2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Outgoing transitions of one state: `(target, rate)`.
pub type Transitions = Vec<(State2D, f64)>;

/// Transition rates of a continuous-time process, enumerated per source state.
///
/// Implementations must only return strictly positive rates, no self-loops and
/// no duplicate targets. Kernels are immutable and shared across threads.
pub trait RateKernel: Send + Sync {
    fn outgoing(&self, s: State2D) -> Transitions;

    fn rate(&self, from: State2D, to: State2D) -> f64 {
        self.outgoing(from)
            .into_iter()
            .find(|(t, _)| *t == to)
            .map_or(0.0, |(_, r)| r)
    }
}

impl<K: RateKernel + ?Sized> RateKernel for &K {
    fn outgoing(&self, s: State2D) -> Transitions {
        (**self).outgoing(s)
    }
}

impl<K: RateKernel + ?Sized> RateKernel for Arc<K> {
    fn outgoing(&self, s: State2D) -> Transitions {
        (**self).outgoing(s)
    }
}

impl<K: RateKernel + ?Sized> RateKernel for Box<K> {
    fn outgoing(&self, s: State2D) -> Transitions {
        (**self).outgoing(s)
    }
}

/// Explicit finite rate map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRateKernel {
    rates: BTreeMap<State2D, Transitions>,
}

impl SparseRateKernel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a kernel from `(from, to, rate)` triples.
    pub fn from_triples<I>(triples: I) -> Result<Self, MarkovError>
    where
        I: IntoIterator<Item = (State2D, State2D, f64)>,
    {
        let mut k = Self::new();
        for (from, to, rate) in triples {
            k.insert(from, to, rate)?;
        }
        Ok(k)
    }

    pub fn insert(&mut self, from: State2D, to: State2D, rate: f64) -> Result<(), MarkovError> {
        if from == to {
            return Err(MarkovError::SelfLoop(from));
        }
        if !(rate.is_finite() && rate >= MIN_RATE) {
            return Err(MarkovError::InvalidRate {
                from,
                to,
                rate,
                min: MIN_RATE,
            });
        }
        let row = self.rates.entry(from).or_default();
        if row.iter().any(|(t, _)| *t == to) {
            return Err(MarkovError::Duplicate { from, to });
        }
        row.push((to, rate));
        row.sort_by_key(|e| e.0);
        Ok(())
    }

    /// Every state that appears as a source or a target.
    pub fn states(&self) -> Vec<State2D> {
        let mut all: Vec<State2D> = self
            .rates
            .iter()
            .flat_map(|(s, row)| std::iter::once(*s).chain(row.iter().map(|(t, _)| *t)))
            .collect();
        all.sort();
        all.dedup();
        all
    }

    pub fn len(&self) -> usize {
        self.rates.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

impl RateKernel for SparseRateKernel {
    fn outgoing(&self, s: State2D) -> Transitions {
        self.rates.get(&s).cloned().unwrap_or_default()
    }
}

/// A kernel with every rate multiplied by a positive constant.
#[derive(Debug, Clone)]
pub struct Scaled<K> {
    pub inner: K,
    pub factor: f64,
}

impl<K: RateKernel> RateKernel for Scaled<K> {
    fn outgoing(&self, s: State2D) -> Transitions {
        self.inner
            .outgoing(s)
            .into_iter()
            .map(|(t, r)| (t, r * self.factor))
            .collect()
    }
}

/// `v(s)`: the sum of all outgoing rates from `s`.
pub fn total_rate<K: RateKernel + ?Sized>(k: &K, s: State2D) -> Result<f64, MarkovError> {
    let out = k.outgoing(s);
    if out.is_empty() {
        return Err(MarkovError::Absorbing(s));
    }
    let v: f64 = out.iter().map(|(_, r)| r).sum();
    if v > 0.0 {
        Ok(v)
    } else {
        Err(MarkovError::Absorbing(s))
    }
}

/// One-step transition law of a discrete-time chain.
pub trait ProbKernel: Send + Sync {
    fn law(&self, s: State2D) -> Result<Transitions, MarkovError>;
}

/// The jump chain of a rate kernel, evaluated lazily.
#[derive(Debug, Clone)]
pub struct JumpChain<K> {
    kernel: K,
}

impl<K: RateKernel> JumpChain<K> {
    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    /// Returns the transition law together with the total rate `v(s)`.
    pub fn law_with_rate(&self, s: State2D) -> Result<(Transitions, f64), MarkovError> {
        let out = self.kernel.outgoing(s);
        let v: f64 = out.iter().map(|(_, r)| r).sum();
        if out.is_empty() || v <= 0.0 {
            return Err(MarkovError::Absorbing(s));
        }
        Ok((out.into_iter().map(|(t, r)| (t, r / v)).collect(), v))
    }
}

impl<K: RateKernel> ProbKernel for JumpChain<K> {
    fn law(&self, s: State2D) -> Result<Transitions, MarkovError> {
        self.law_with_rate(s).map(|(law, _)| law)
    }
}

/// Wraps `k` as its jump chain: `P(s, s') = q(s, s') / v(s)`.
pub fn jump_chain<K: RateKernel>(k: K) -> JumpChain<K> {
    JumpChain { kernel: k }
}

/// Explicit finite transition matrix with validated rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseProbKernel {
    probs: BTreeMap<State2D, Transitions>,
}

impl SparseProbKernel {
    pub fn from_rows(rows: BTreeMap<State2D, Transitions>, tol: f64) -> Result<Self, MarkovError> {
        for (from, row) in &rows {
            let mut sum = 0.0;
            for (to, p) in row {
                if !(p.is_finite() && (0.0..=1.0).contains(p)) {
                    return Err(MarkovError::InvalidProbability {
                        from: *from,
                        to: *to,
                        prob: *p,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > tol {
                return Err(MarkovError::RowSum(*from, sum));
            }
        }
        Ok(SparseProbKernel { probs: rows })
    }

    /// Materialises the jump chain of `k` on the given source states.
    pub fn jump_chain_of<K: RateKernel + ?Sized>(
        k: &K,
        states: impl IntoIterator<Item = State2D>,
    ) -> Result<Self, MarkovError> {
        let mut rows = BTreeMap::new();
        for s in states {
            let out = k.outgoing(s);
            let v: f64 = out.iter().map(|(_, r)| r).sum();
            if out.is_empty() || v <= 0.0 {
                return Err(MarkovError::Absorbing(s));
            }
            rows.insert(s, out.into_iter().map(|(t, r)| (t, r / v)).collect());
        }
        Ok(SparseProbKernel { probs: rows })
    }

    pub fn rows(&self) -> &BTreeMap<State2D, Transitions> {
        &self.probs
    }
}

impl ProbKernel for SparseProbKernel {
    fn law(&self, s: State2D) -> Result<Transitions, MarkovError> {
        self.probs.get(&s).cloned().ok_or(MarkovError::Absorbing(s))
    }
}

/// A truncated stationary distribution over phases `0..probs.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub probs: Vec<f64>,
    /// Size of the truncation window the vector was computed on.
    pub truncation: usize,
    /// Estimated probability mass not represented faithfully by `probs`.
    pub tail_mass_bound: f64,
    /// L1 balance defect of the uniformized chain.
    pub residual: f64,
}

impl StationaryDist {
    /// A distribution known exactly (finite support, zero residual).
    pub fn exact(probs: Vec<f64>) -> Self {
        let truncation = probs.len();
        StationaryDist {
            probs,
            truncation,
            tail_mass_bound: 0.0,
            residual: 0.0,
        }
    }

    pub fn get(&self, x: usize) -> f64 {
        self.probs.get(x).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `Σ_x f(x) π(x)`.
    pub fn expectation(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.probs.iter().enumerate().map(|(x, p)| f(x) * p).sum()
    }
}

/// Stationary law of the jump chain of the phase process:
/// `π̃(x) = π(x) v(x) / Σ_z π(z) v(z)`.
///
/// `v_star` is indexed by phase and must cover the support of `pi`. The tail
/// bound is rescaled by `max v / Σ π v`; the residual is carried over.
pub fn jump_stationary(pi: &StationaryDist, v_star: &[f64]) -> Result<StationaryDist, MarkovError> {
    let probs = jump_reweight(&pi.probs, v_star)?;
    let z: f64 = pi.probs.iter().zip(v_star).map(|(p, v)| p * v).sum();
    let v_max = v_star[..pi.len()].iter().copied().fold(0.0, f64::max);
    Ok(StationaryDist {
        probs,
        truncation: pi.truncation,
        tail_mass_bound: pi.tail_mass_bound * v_max / z,
        residual: pi.residual,
    })
}

fn jump_reweight(pi: &[f64], v_star: &[f64]) -> Result<Vec<f64>, MarkovError> {
    if v_star.len() < pi.len() {
        return Err(MarkovError::Degenerate(format!(
            "{} total rates for {} phases",
            v_star.len(),
            pi.len()
        )));
    }
    let mut out: Vec<f64> = Vec::with_capacity(pi.len());
    for (x, (&p, &v)) in pi.iter().zip(v_star).enumerate() {
        if p < 0.0 || !p.is_finite() {
            return Err(MarkovError::Degenerate(format!("pi({x}) = {p}")));
        }
        if p > 0.0 && !(v > 0.0 && v.is_finite()) {
            return Err(MarkovError::Degenerate(format!(
                "total rate {v} at phase {x} in the support of pi"
            )));
        }
        out.push(p * v);
    }
    let z: f64 = out.iter().sum();
    if !(z > 0.0 && z.is_finite()) {
        return Err(MarkovError::Degenerate(format!("normalising constant {z}")));
    }
    out.iter_mut().for_each(|w| *w /= z);
    Ok(out)
}
