//! Stability-region sweeps of the catastrophe model over a parameter grid.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stability::{SolverConfig, Verdict};

use super::{catastrophe_verdict, CatastropheModel, HalfPlaneError};

pub const SWEEP_HEADER: [&str; 11] = [
    "lambda1", "lambda2", "mu1", "mu2", "gamma", "p", "d_plus", "d_minus", "pi2_zero", "pi1_zero",
    "verdict",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Lambda1,
    Lambda2,
    Mu1,
    Mu2,
    Gamma,
    P,
}

impl Param {
    fn set(self, m: &mut CatastropheModel, v: f64) {
        match self {
            Param::Lambda1 => m.lambda1 = v,
            Param::Lambda2 => m.lambda2 = v,
            Param::Mu1 => m.mu1 = v,
            Param::Mu2 => m.mu2 = v,
            Param::Gamma => m.gamma = v,
            Param::P => m.p = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: Param,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// `n` evenly spaced values from `from` to `to` inclusive.
    pub fn linspace(param: Param, from: f64, to: f64, n: usize) -> Self {
        let values = match n {
            0 => Vec::new(),
            1 => vec![from],
            _ => (0..n)
                .map(|i| from + (to - from) * i as f64 / (n - 1) as f64)
                .collect(),
        };
        SweepAxis { param, values }
    }
}

/// One or two swept parameters around a base model. Points are ordered
/// with the inner axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub base: CatastropheModel,
    pub outer: SweepAxis,
    #[serde(default)]
    pub inner: Option<SweepAxis>,
}

impl SweepGrid {
    pub fn points(&self) -> Vec<CatastropheModel> {
        let mut out = Vec::new();
        for &a in &self.outer.values {
            let mut m = self.base;
            self.outer.param.set(&mut m, a);
            match &self.inner {
                Some(inner) => {
                    for &b in &inner.values {
                        let mut m = m;
                        inner.param.set(&mut m, b);
                        out.push(m);
                    }
                }
                None => out.push(m),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub model: CatastropheModel,
    pub d_plus: Option<f64>,
    pub d_minus: Option<f64>,
    pub pi2_zero: Option<f64>,
    pub pi1_zero: Option<f64>,
    pub verdict: Verdict,
    /// Why the point is inconclusive, when an error stopped its analysis.
    pub note: Option<String>,
}

fn evaluate(m: &CatastropheModel, cfg: &SolverConfig) -> SweepRecord {
    match catastrophe_verdict(m, cfg) {
        Ok(v) => SweepRecord {
            model: *m,
            d_plus: v.d_plus,
            d_minus: v.d_minus,
            pi2_zero: v.pi_plus_zero,
            pi1_zero: v.pi_minus_zero,
            verdict: v.verdict(),
            note: None,
        },
        Err(e) => SweepRecord {
            model: *m,
            d_plus: None,
            d_minus: None,
            pi2_zero: None,
            pi1_zero: None,
            verdict: Verdict::Inconclusive,
            note: Some(e.to_string()),
        },
    }
}

/// Evaluates every grid point, in parallel on `threads` workers (all
/// available cores when `None`). Records come back in grid order.
pub fn stability_region_sweep(
    grid: &SweepGrid,
    cfg: &SolverConfig,
    threads: Option<usize>,
) -> Result<Vec<SweepRecord>, HalfPlaneError> {
    let points = grid.points();
    if points.is_empty() {
        return Err(HalfPlaneError::InvalidModel("empty sweep grid".into()));
    }
    for m in &points {
        m.validate()?;
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| HalfPlaneError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| points.par_iter().map(|m| evaluate(m, cfg)).collect()))
}

pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<(), HalfPlaneError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for r in records {
        let m = &r.model;
        w.write_record([
            m.lambda1.to_string(),
            m.lambda2.to_string(),
            m.mu1.to_string(),
            m.mu2.to_string(),
            m.gamma.to_string(),
            m.p.to_string(),
            opt(r.d_plus),
            opt(r.d_minus),
            opt(r.pi2_zero),
            opt(r.pi1_zero),
            r.verdict.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
