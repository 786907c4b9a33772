//! Two queues with coupled binomial catastrophes, in the coordinates
//! `(X, Y) = (min(Q1, Q2), Q1 - Q2)`.

use std::borrow::Cow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use crate::markov::{RateKernel, State2D, Transitions, MIN_RATE};
use crate::qbd::PhaseOperator;
use crate::stability::{phase_stationary, SolverConfig, StationaryDist};

use super::{
    halfplane_verdict, HalfPlaneDriftSpec, HalfPlaneError, HalfPlaneSpec, HalfPlaneVerdict,
};

/// Binomial masses below this are dropped from the catastrophe law.
pub const BINOMIAL_CUTOFF: f64 = 1e-14;

/// Rows of the mass table precomputed at construction.
const CACHED_ROWS: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatastropheModel {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub gamma: f64,
    pub p: f64,
}

impl CatastropheModel {
    pub fn new(
        lambda1: f64,
        lambda2: f64,
        mu1: f64,
        mu2: f64,
        gamma: f64,
        p: f64,
    ) -> Result<Self, HalfPlaneError> {
        let m = CatastropheModel {
            lambda1,
            lambda2,
            mu1,
            mu2,
            gamma,
            p,
        };
        m.validate()?;
        Ok(m)
    }

    /// Arrival and service rates must be positive, `γ ≥ 0` (zero decouples
    /// the queues) and `p ∈ (0, 1]`.
    pub fn validate(&self) -> Result<(), HalfPlaneError> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HalfPlaneError::InvalidModel(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(HalfPlaneError::InvalidModel(format!(
                "gamma = {} must be nonnegative",
                self.gamma
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(HalfPlaneError::InvalidModel(format!(
                "p = {} must lie in (0, 1]",
                self.p
            )));
        }
        Ok(())
    }

    /// Queue 1 and queue 2 swapped.
    pub fn mirrored(&self) -> Self {
        CatastropheModel {
            lambda1: self.lambda2,
            lambda2: self.lambda1,
            mu1: self.mu2,
            mu2: self.mu1,
            ..*self
        }
    }

    /// All rates multiplied by `c`; `p` is unchanged.
    pub fn scaled(&self, c: f64) -> Self {
        CatastropheModel {
            lambda1: self.lambda1 * c,
            lambda2: self.lambda2 * c,
            mu1: self.mu1 * c,
            mu2: self.mu2 * c,
            gamma: self.gamma * c,
            p: self.p,
        }
    }
}

/// `(n, P(Bin(x, p) = n))` for `n ≥ 1` with mass at least [`BINOMIAL_CUTOFF`].
pub fn binomial_masses(x: u64, p: f64) -> Vec<(u64, f64)> {
    if x == 0 {
        return Vec::new();
    }
    if p >= 1.0 {
        return vec![(x, 1.0)];
    }
    let bin = Binomial::new(p, x).expect("p validated in (0, 1)");
    let mode = (((x + 1) as f64 * p).floor() as u64).clamp(1, x);
    let mut out = Vec::new();
    for n in (1..mode).rev() {
        let w = bin.pmf(n);
        if w < BINOMIAL_CUTOFF {
            break;
        }
        out.push((n, w));
    }
    out.reverse();
    for n in mode..=x {
        let w = bin.pmf(n);
        if w < BINOMIAL_CUTOFF {
            break;
        }
        out.push((n, w));
    }
    out
}

/// Truncated catastrophe laws, cached for small `x`.
#[derive(Debug)]
pub struct BinomialMasses {
    p: f64,
    rows: Vec<Vec<(u64, f64)>>,
}

impl BinomialMasses {
    pub fn new(p: f64) -> Self {
        BinomialMasses {
            p,
            rows: (0..CACHED_ROWS).map(|x| binomial_masses(x, p)).collect(),
        }
    }

    pub fn get(&self, x: u64) -> Cow<'_, [(u64, f64)]> {
        match self.rows.get(x as usize) {
            Some(r) => Cow::Borrowed(r),
            None => Cow::Owned(binomial_masses(x, self.p)),
        }
    }
}

/// Rates of the `(min, difference)` process.
#[derive(Debug, Clone)]
pub struct CatastropheKernel {
    model: CatastropheModel,
    masses: Arc<BinomialMasses>,
}

impl CatastropheKernel {
    pub fn new(model: CatastropheModel) -> Result<Self, HalfPlaneError> {
        model.validate()?;
        Ok(CatastropheKernel {
            model,
            masses: Arc::new(BinomialMasses::new(model.p)),
        })
    }

    pub fn model(&self) -> &CatastropheModel {
        &self.model
    }
}

impl RateKernel for CatastropheKernel {
    fn outgoing(&self, s: State2D) -> Transitions {
        let CatastropheModel {
            lambda1,
            lambda2,
            mu1,
            mu2,
            gamma,
            ..
        } = self.model;
        let (x, y) = (s.x, s.y);
        let at = |dx: i64, dy: i64| State2D::new((x as i64 + dx) as u64, y + dy);
        let mut out = Vec::with_capacity(8);
        match y.signum() {
            1 => {
                out.push((at(0, 1), lambda1));
                out.push((at(1, -1), lambda2));
                out.push((at(0, -1), mu1));
                if x >= 1 {
                    out.push((at(-1, 1), mu2));
                }
            }
            -1 => {
                out.push((at(1, 1), lambda1));
                out.push((at(0, -1), lambda2));
                if x >= 1 {
                    out.push((at(-1, -1), mu1));
                }
                out.push((at(0, 1), mu2));
            }
            _ => {
                out.push((at(0, 1), lambda1));
                out.push((at(0, -1), lambda2));
                if x >= 1 {
                    out.push((at(-1, -1), mu1));
                    out.push((at(-1, 1), mu2));
                }
            }
        }
        if gamma > 0.0 {
            for &(n, w) in self.masses.get(x).iter() {
                let r = gamma * w;
                if r >= MIN_RATE {
                    out.push((State2D::new(x - n, y), r));
                }
            }
        }
        out
    }
}

/// A single queue with catastrophes: `k → k+1` at `λ`, `k → k-1` at `μ`,
/// `k → k-n` at `γ P(Bin(k, p) = n)`.
pub fn isolated_queue_operator(lambda: f64, mu: f64, gamma: f64, p: f64) -> PhaseOperator {
    queue_operator(lambda, mu, gamma, Arc::new(BinomialMasses::new(p)))
}

fn queue_operator(lambda: f64, mu: f64, gamma: f64, masses: Arc<BinomialMasses>) -> PhaseOperator {
    PhaseOperator::from_fn(None, move |k| {
        let mut row = vec![(k + 1, lambda)];
        if k >= 1 {
            row.push((k - 1, mu));
        }
        if gamma > 0.0 {
            row.extend(
                masses
                    .get(k as u64)
                    .iter()
                    .map(|&(n, w)| (k - n as usize, gamma * w))
                    .filter(|&(_, r)| r >= MIN_RATE),
            );
        }
        row
    })
}

/// Stationary law of the isolated queue, by the censored phase solver.
pub fn isolated_queue_stationary(
    lambda: f64,
    mu: f64,
    gamma: f64,
    p: f64,
    cfg: &SolverConfig,
) -> Result<StationaryDist, HalfPlaneError> {
    CatastropheModel::new(lambda, lambda, mu, mu, gamma, p)?;
    Ok(phase_stationary(
        &isolated_queue_operator(lambda, mu, gamma, p),
        cfg,
    )?)
}

/// The half-plane description: `q_+` is queue 2 in isolation, `q_-` queue 1.
pub fn build_catastrophe_kernel(m: &CatastropheModel) -> Result<HalfPlaneSpec, HalfPlaneError> {
    let kernel = CatastropheKernel::new(*m)?;
    let masses = kernel.masses.clone();
    Ok(HalfPlaneSpec {
        q_plus: queue_operator(m.lambda2, m.mu2, m.gamma, masses.clone()),
        q_minus: Some(queue_operator(m.lambda1, m.mu1, m.gamma, masses)),
        kernel: Arc::new(kernel),
        hx: 0,
        hy: 1,
    })
}

/// The step functions `f_±` for `L^Y_±(k) = k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatastropheDrift {
    pub plus_zero: f64,
    pub plus_pos: f64,
    pub minus_zero: f64,
    pub minus_pos: f64,
}

impl CatastropheDrift {
    pub fn f_plus(&self, x: usize) -> f64 {
        if x == 0 {
            self.plus_zero
        } else {
            self.plus_pos
        }
    }

    pub fn f_minus(&self, x: usize) -> f64 {
        if x == 0 {
            self.minus_zero
        } else {
            self.minus_pos
        }
    }

    /// `d_+ = Σ f_+ π^(2)` in closed form given `π^(2)(0)`.
    pub fn d_plus(&self, pi2_zero: f64) -> f64 {
        self.plus_pos * (1.0 - pi2_zero) + self.plus_zero * pi2_zero
    }

    pub fn d_minus(&self, pi1_zero: f64) -> f64 {
        self.minus_pos * (1.0 - pi1_zero) + self.minus_zero * pi1_zero
    }
}

pub fn catastrophe_drift_functions(m: &CatastropheModel) -> CatastropheDrift {
    CatastropheDrift {
        plus_pos: (m.lambda1 - m.mu1) - (m.lambda2 - m.mu2),
        plus_zero: (m.lambda1 - m.mu1) - m.lambda2,
        minus_pos: (m.lambda2 - m.mu2) - (m.lambda1 - m.mu1),
        minus_zero: (m.lambda2 - m.mu2) - m.lambda1,
    }
}

/// Full half-plane verdict with `L(y) = |y|` and the closed-form `f_±`.
pub fn catastrophe_verdict(
    m: &CatastropheModel,
    cfg: &SolverConfig,
) -> Result<HalfPlaneVerdict, HalfPlaneError> {
    let spec = build_catastrophe_kernel(m)?;
    let f = catastrophe_drift_functions(m);
    let ds = HalfPlaneDriftSpec::linear(
        move |x| f.f_plus(x),
        move |x| f.f_minus(x),
        m.lambda1 + m.lambda2 + m.mu1 + m.mu2,
    );
    Ok(halfplane_verdict(&spec, &ds, cfg)?)
}
