//! Stationary distribution of a (possibly infinite) phase process.
//!
//! The chain is censored to `{0..n}`: any rate that would leave the window is
//! redirected to the last state `n - 1`. The finite chain is solved by state
//! reduction (GTH), eliminating states from the top down. Eliminating state
//! `k` only adds entries `(i, j)` with `i ≥ k - H` and `j < k`, where `H` is
//! the largest right jump, so rows stay inside the original upper band and are
//! kept as sorted sparse vectors.
//!
//! The window doubles until `‖π_n - π_2n‖₁` over `{0..n}` and the balance
//! residual of `π_2n` both fall below the tolerance.

use crate::markov::StationaryDist;
use crate::qbd::PhaseOperator;

use super::{SolverConfig, StabilityError};

type SparseRow = Vec<(usize, f64)>;

/// Global balance solution of the phase process with rates `q`.
pub fn phase_stationary(
    q: &PhaseOperator,
    cfg: &SolverConfig,
) -> Result<StationaryDist, StabilityError> {
    cfg.validate()?;
    if let Some(n) = q.phases() {
        if n == 0 {
            return Err(StabilityError::Singular { phase: 0 });
        }
        if n <= cfg.window_cap {
            let probs = censored_solve(q, n)?;
            let residual = balance_residual(q, &probs);
            if residual >= cfg.tol {
                return Err(StabilityError::NonCertification {
                    window: n,
                    tail_mass: 0.0,
                    residual,
                });
            }
            return Ok(StationaryDist {
                probs,
                truncation: n,
                tail_mass_bound: 0.0,
                residual,
            });
        }
    }

    let mut n = cfg.initial_window.min(cfg.window_cap);
    let mut prev = censored_solve(q, n)?;
    let mut tail = f64::INFINITY;
    let mut residual = f64::INFINITY;
    while n * 2 <= cfg.window_cap {
        let next = censored_solve(q, n * 2)?;
        tail = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        residual = balance_residual(q, &next);
        if tail < cfg.tol && residual < cfg.tol {
            return Ok(StationaryDist {
                probs: next,
                truncation: n * 2,
                tail_mass_bound: tail,
                residual,
            });
        }
        prev = next;
        n *= 2;
    }
    Err(StabilityError::NonCertification {
        window: n,
        tail_mass: tail,
        residual,
    })
}

/// Stationary vector of the chain censored to `{0..n}`.
fn censored_solve(q: &PhaseOperator, n: usize) -> Result<Vec<f64>, StabilityError> {
    let mut band = 0;
    let rows: Vec<SparseRow> = (0..n)
        .map(|i| {
            let mut row: SparseRow = Vec::new();
            for (j, r) in q.row(i) {
                let j = j.min(n - 1);
                if j == i {
                    continue;
                }
                band = band.max(j.saturating_sub(i));
                match row.last_mut() {
                    Some(last) if last.0 == j => last.1 += r,
                    _ => row.push((j, r)),
                }
            }
            row
        })
        .collect();
    gth(rows, band)
}

fn gth(mut rows: Vec<SparseRow>, band: usize) -> Result<Vec<f64>, StabilityError> {
    let n = rows.len();
    let mut exit = vec![0.0; n];
    for k in (1..n).rev() {
        let (lower, upper) = rows.split_at_mut(k);
        let row_k = &upper[0];
        let low = &row_k[..row_k.partition_point(|e| e.0 < k)];
        let s: f64 = low.iter().map(|e| e.1).sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(StabilityError::Singular { phase: k });
        }
        exit[k] = s;
        for (i, row_i) in lower.iter_mut().enumerate().skip(k.saturating_sub(band)) {
            if let Ok(pos) = row_i.binary_search_by_key(&k, |e| e.0) {
                let w = row_i[pos].1 / s;
                *row_i = merge_scaled(row_i, low, w, i);
            }
        }
    }

    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        let mut inflow = 0.0;
        for (i, row_i) in rows.iter().enumerate().take(k).skip(k.saturating_sub(band)) {
            if let Ok(pos) = row_i.binary_search_by_key(&k, |e| e.0) {
                inflow += pi[i] * row_i[pos].1;
            }
        }
        pi[k] = inflow / exit[k];
    }
    let z: f64 = pi.iter().sum();
    if !(z.is_finite() && z > 0.0) {
        return Err(StabilityError::Singular { phase: 0 });
    }
    pi.iter_mut().for_each(|p| *p /= z);
    Ok(pi)
}

/// `row + w * add`, dropping the self-loop at `skip`. Both inputs sorted.
fn merge_scaled(row: &[(usize, f64)], add: &[(usize, f64)], w: f64, skip: usize) -> SparseRow {
    let mut out = Vec::with_capacity(row.len() + add.len());
    let (mut a, mut b) = (0, 0);
    while a < row.len() || b < add.len() {
        let take_row = b >= add.len() || (a < row.len() && row[a].0 <= add[b].0);
        if take_row {
            let (j, mut r) = row[a];
            a += 1;
            if b < add.len() && add[b].0 == j {
                r += w * add[b].1;
                b += 1;
            }
            out.push((j, r));
        } else {
            let (j, r) = add[b];
            b += 1;
            if j != skip {
                out.push((j, w * r));
            }
        }
    }
    out
}

/// L1 defect of `π Q = 0` on the window against the uncensored rates,
/// divided by the largest total rate (the balance defect of the uniformized
/// chain). Rate that leaves the window counts as defect.
fn balance_residual(q: &PhaseOperator, pi: &[f64]) -> f64 {
    let n = pi.len();
    let mut flow = vec![0.0; n];
    let mut v_max: f64 = 0.0;
    for (i, &p) in pi.iter().enumerate() {
        let mut v = 0.0;
        for (j, r) in q.row(i) {
            if j == i {
                continue;
            }
            v += r;
            if j < n {
                flow[j] += p * r;
            }
        }
        flow[i] -= p * v;
        v_max = v_max.max(v);
    }
    if v_max == 0.0 {
        return 0.0;
    }
    flow.iter().map(|d| d.abs()).sum::<f64>() / v_max
}
