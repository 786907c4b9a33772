//! Independent reference computations for the integration and acceptance
//! tests. Nothing here calls the library's solvers.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense generator off-diagonal rates `q[i][j]`, diagonal ignored.
pub type Dense = Vec<Vec<f64>>;

pub fn dense_from_rows(n: usize, row: impl Fn(usize) -> Vec<(usize, f64)>) -> Dense {
    let mut q = vec![vec![0.0; n]; n];
    for (i, qi) in q.iter_mut().enumerate() {
        for (j, r) in row(i) {
            if j != i && j < n {
                qi[j] += r;
            }
        }
    }
    q
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// Stationary row of a stochastic matrix by repeated squaring of its lazy
/// version `(I + P) / 2`.
pub fn power_stationary(p: &Dense) -> Vec<f64> {
    let n = p.len();
    let mut m: Dense = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| 0.5 * p[i][j] + if i == j { 0.5 } else { 0.0 })
                .collect()
        })
        .collect();
    for _ in 0..60 {
        let mut next = matmul(&m, &m);
        // squaring amplifies row-sum rounding, so renormalize each time
        for row in next.iter_mut() {
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= z);
        }
        let spread = (0..n)
            .map(|j| {
                let col = next.iter().map(|r| r[j]);
                let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                    (l.min(v), h.max(v))
                });
                hi - lo
            })
            .fold(0.0, f64::max);
        m = next;
        if spread < 1e-14 {
            break;
        }
    }
    let mut pi: Vec<f64> = (0..n)
        .map(|j| m.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= z);
    pi
}

/// Stationary law of a CTMC by uniformization (`P = I + Q / Λ`) and power
/// iteration.
pub fn uniformized_stationary(q: &Dense) -> Vec<f64> {
    let n = q.len();
    let v: Vec<f64> = q.iter().map(|r| r.iter().sum()).collect();
    let lambda = v.iter().copied().fold(0.0, f64::max) * 1.05 + 1e-300;
    let p: Dense = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0 - v[i] / lambda
                    } else {
                        q[i][j] / lambda
                    }
                })
                .collect()
        })
        .collect();
    power_stationary(&p)
}

/// Jump chain `q / v` of a dense generator.
pub fn jump_matrix(q: &Dense) -> Dense {
    q.iter()
        .map(|r| {
            let v: f64 = r.iter().sum();
            r.iter().map(|x| x / v).collect()
        })
        .collect()
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum()
}

/// Random irreducible phase chain on `n` phases: nearest-neighbour rates
/// plus extra jumps at most `hx` to the right and arbitrarily far left.
pub fn random_banded_chain(rng: &mut ChaCha8Rng, n: usize, hx: usize) -> Vec<(usize, usize, f64)> {
    let mut entries = Vec::new();
    for i in 0..n {
        if i + 1 < n {
            entries.push((i, i + 1, rng.random_range(0.1..3.0)));
        }
        if i > 0 {
            entries.push((i, i - 1, rng.random_range(0.1..3.0)));
        }
        for _ in 0..rng.random_range(0..3) {
            let lo = 0;
            let hi = (i + hx).min(n - 1);
            let j = rng.random_range(lo..=hi);
            if j != i && j != i + 1 && j + 1 != i {
                entries.push((i, j, rng.random_range(0.05..5.0)));
            }
        }
    }
    entries
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `π(0)` of the queue `k → k+1` at `λ`, `k → k-1` at `μ`, `k → k-n` at
/// `γ Bin(k, p)(n)`, truncated at `n` states with escapes dropped, by
/// uniformization. Binomial weights are built from the recursion
/// `b(n+1) = b(n) (k-n) p / ((n+1)(1-p))`, not from a library pmf.
pub fn catastrophe_queue_pi0(lambda: f64, mu: f64, gamma: f64, p: f64, n: usize) -> f64 {
    let q = dense_from_rows(n, |k| {
        let mut row = vec![(k + 1, lambda)];
        if k >= 1 {
            row.push((k - 1, mu));
        }
        if gamma > 0.0 && k >= 1 {
            for (m, w) in binomial_row(k, p).into_iter().enumerate().skip(1) {
                row.push((k - m, gamma * w));
            }
        }
        row
    });
    uniformized_stationary(&q)[0]
}

fn binomial_row(k: usize, p: f64) -> Vec<f64> {
    if p >= 1.0 {
        let mut row = vec![0.0; k + 1];
        row[k] = 1.0;
        return row;
    }
    let mut row = vec![(1.0 - p).powi(k as i32)];
    for m in 0..k {
        let next = row[m] * (k - m) as f64 * p / ((m + 1) as f64 * (1.0 - p));
        row.push(next);
    }
    row
}
