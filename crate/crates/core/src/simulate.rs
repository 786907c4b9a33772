//! Monte Carlo paths of a rate kernel with recurrence diagnostics.
//!
//! Paths are built from the jump chain with exponential holding times of
//! rate `v(state)`. The random source is ChaCha8 seeded with `seed`;
//! replication `r` uses stream `r` of the same seed.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov::{RateKernel, State2D, Transitions};
use crate::qbd::Window;

/// Default bound on stored path points.
pub const MAX_PATH_POINTS: usize = 10_000;
/// Fewer returns than this mark the return-time estimate as censored.
pub const MIN_RETURNS: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state {state} is absorbing (reached at t = {time})")]
    Absorbing { state: State2D, time: f64 },
    #[error("path left the window at {state}, t = {time}")]
    WindowEscape { state: State2D, time: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("csv output failed: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Simulated time.
    Time(f64),
    /// Number of jumps.
    Jumps(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecurrenceSet {
    States(Vec<State2D>),
    /// `x ≤ max_x` and `min_y ≤ y ≤ max_y`.
    Rectangle {
        max_x: u64,
        min_y: i64,
        max_y: i64,
    },
}

impl RecurrenceSet {
    pub fn contains(&self, s: State2D) -> bool {
        match self {
            RecurrenceSet::States(v) => v.contains(&s),
            RecurrenceSet::Rectangle {
                max_x,
                min_y,
                max_y,
            } => s.x <= *max_x && (*min_y..=*max_y).contains(&s.y),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            RecurrenceSet::States(v) => v.is_empty(),
            RecurrenceSet::Rectangle { min_y, max_y, .. } => min_y > max_y,
        }
    }
}

fn default_path_points() -> usize {
    MAX_PATH_POINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub horizon: Horizon,
    pub initial: State2D,
    pub recurrence_set: RecurrenceSet,
    /// Addressable states; leaving it aborts the run.
    #[serde(default)]
    pub window: Option<Window>,
    #[serde(default = "default_path_points")]
    pub max_path_points: usize,
}

impl SimConfig {
    pub fn new(
        seed: u64,
        horizon: Horizon,
        initial: State2D,
        recurrence_set: RecurrenceSet,
    ) -> Self {
        SimConfig {
            seed,
            horizon,
            initial,
            recurrence_set,
            window: None,
            max_path_points: MAX_PATH_POINTS,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if let Horizon::Time(t) = self.horizon {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(SimError::InvalidConfig(format!("time horizon {t}")));
            }
        }
        if self.recurrence_set.is_empty() {
            return Err(SimError::InvalidConfig("empty recurrence set".into()));
        }
        if self.max_path_points < 2 {
            return Err(SimError::InvalidConfig(
                "max_path_points must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub x: u64,
    pub y: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub stream: u64,
    pub elapsed: f64,
    pub jumps: u64,
    pub final_state: State2D,
    /// Fraction of time spent in the recurrence set.
    pub fraction_in_set: f64,
    /// Mean time from leaving the set to re-entering it.
    pub mean_return_time: Option<f64>,
    pub returns: u64,
    /// Set when fewer than [`MIN_RETURNS`] returns were observed.
    pub censored: bool,
    /// Least-squares slope of `|Y_t|` against `t` over the sampled path.
    pub level_slope: f64,
    pub path: Vec<PathPoint>,
}

impl fmt::Display for SimReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed             {} (stream {})", self.seed, self.stream)?;
        writeln!(f, "elapsed          {}", self.elapsed)?;
        writeln!(f, "jumps            {}", self.jumps)?;
        writeln!(f, "final_state      {}", self.final_state)?;
        writeln!(f, "fraction_in_set  {}", self.fraction_in_set)?;
        match self.mean_return_time {
            Some(m) => writeln!(
                f,
                "mean_return_time {m}{}",
                if self.censored { " (censored)" } else { "" }
            )?,
            None => writeln!(f, "mean_return_time - (censored)")?,
        }
        writeln!(f, "returns          {}", self.returns)?;
        writeln!(f, "level_slope      {}", self.level_slope)?;
        writeln!(f, "path_points      {}", self.path.len())
    }
}

/// Step-by-step sampler of the jump process.
pub struct Simulator<'a, K: ?Sized> {
    kernel: &'a K,
    rng: ChaCha8Rng,
    state: State2D,
    time: f64,
}

impl<'a, K: RateKernel + ?Sized> Simulator<'a, K> {
    pub fn new(kernel: &'a K, initial: State2D, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Simulator {
            kernel,
            rng,
            state: initial,
            time: 0.0,
        }
    }

    pub fn state(&self) -> State2D {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Samples the holding time in the current state and the next state,
    /// without moving.
    pub fn sample(&mut self) -> Result<(f64, State2D), SimError> {
        let out = self.kernel.outgoing(self.state);
        let v: f64 = out.iter().map(|(_, r)| r).sum();
        if out.is_empty() || v <= 0.0 {
            return Err(SimError::Absorbing {
                state: self.state,
                time: self.time,
            });
        }
        let e: f64 = self.rng.sample(Exp1);
        let next = pick(&out, v, self.rng.random::<f64>());
        Ok((e / v, next))
    }

    /// Moves to the next state and returns the holding time spent.
    pub fn step(&mut self) -> Result<f64, SimError> {
        let (hold, next) = self.sample()?;
        self.time += hold;
        self.state = next;
        Ok(hold)
    }
}

/// Inversion on the cumulative rates.
fn pick(out: &Transitions, v: f64, u: f64) -> State2D {
    let target = u * v;
    let mut acc = 0.0;
    for (s, r) in out {
        acc += r;
        if target < acc {
            return *s;
        }
    }
    out[out.len() - 1].0
}

fn slope(path: &[PathPoint]) -> f64 {
    let n = path.len() as f64;
    if path.len() < 2 {
        return 0.0;
    }
    let mt = path.iter().map(|p| p.t).sum::<f64>() / n;
    let my = path.iter().map(|p| p.y.unsigned_abs() as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in path {
        let dt = p.t - mt;
        sxy += dt * (p.y.unsigned_abs() as f64 - my);
        sxx += dt * dt;
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Simulates one path (stream 0).
pub fn simulate<K: RateKernel + ?Sized>(k: &K, cfg: &SimConfig) -> Result<SimReport, SimError> {
    simulate_stream(k, cfg, 0)
}

/// Independent replications on streams `0..n`, run in parallel.
pub fn simulate_replications<K: RateKernel + ?Sized>(
    k: &K,
    cfg: &SimConfig,
    n: u64,
) -> Vec<Result<SimReport, SimError>> {
    (0..n)
        .into_par_iter()
        .map(|r| simulate_stream(k, cfg, r))
        .collect()
}

pub fn simulate_stream<K: RateKernel + ?Sized>(
    k: &K,
    cfg: &SimConfig,
    stream: u64,
) -> Result<SimReport, SimError> {
    cfg.validate()?;
    let mut sim = Simulator::new(k, cfg.initial, cfg.seed, stream);
    let set = &cfg.recurrence_set;
    let point = |t: f64, s: State2D| PathPoint { t, x: s.x, y: s.y };

    let mut in_set = set.contains(cfg.initial);
    let mut time_in_set = 0.0;
    let mut exit_time: Option<f64> = None;
    let (mut returns, mut return_sum) = (0u64, 0.0);
    let mut path = Vec::new();
    let mut jumps = 0u64;
    let g = cfg.max_path_points;

    match cfg.horizon {
        Horizon::Time(horizon) => {
            if horizon == 0.0 {
                path.push(point(0.0, cfg.initial));
            }
            let grid = |i: usize| horizon * i as f64 / (g - 1) as f64;
            let mut next_grid = 0usize;
            while sim.time() < horizon {
                let (hold, next) = sim.sample()?;
                let t_end = (sim.time() + hold).min(horizon);
                while next_grid < g
                    && (grid(next_grid) < t_end || (t_end >= horizon && next_grid == g - 1))
                {
                    path.push(point(grid(next_grid), sim.state()));
                    next_grid += 1;
                }
                if in_set {
                    time_in_set += t_end - sim.time();
                }
                if sim.time() + hold >= horizon {
                    break;
                }
                sim.time += hold;
                sim.state = next;
                jumps += 1;
                check_window(cfg, &sim)?;
                track(
                    set,
                    &sim,
                    &mut in_set,
                    &mut exit_time,
                    &mut returns,
                    &mut return_sum,
                );
            }
            sim.time = horizon;
        }
        Horizon::Jumps(n) => {
            let every = n.div_ceil(g as u64 - 1).max(1);
            path.push(point(0.0, cfg.initial));
            while jumps < n {
                let (hold, next) = sim.sample()?;
                if in_set {
                    time_in_set += hold;
                }
                sim.time += hold;
                sim.state = next;
                jumps += 1;
                check_window(cfg, &sim)?;
                track(
                    set,
                    &sim,
                    &mut in_set,
                    &mut exit_time,
                    &mut returns,
                    &mut return_sum,
                );
                if jumps.is_multiple_of(every) || jumps == n {
                    path.push(point(sim.time(), sim.state()));
                }
            }
        }
    }

    let elapsed = sim.time();
    let fraction_in_set = if elapsed > 0.0 {
        (time_in_set / elapsed).clamp(0.0, 1.0)
    } else if set.contains(cfg.initial) {
        1.0
    } else {
        0.0
    };
    Ok(SimReport {
        seed: cfg.seed,
        stream,
        elapsed,
        jumps,
        final_state: sim.state(),
        fraction_in_set,
        mean_return_time: (returns > 0).then(|| return_sum / returns as f64),
        returns,
        censored: returns < MIN_RETURNS,
        level_slope: slope(&path),
        path,
    })
}

fn check_window<K: RateKernel + ?Sized>(
    cfg: &SimConfig,
    sim: &Simulator<'_, K>,
) -> Result<(), SimError> {
    if let Some(w) = &cfg.window {
        let s = sim.state();
        if !(w.phases.contains(&(s.x as usize)) && w.levels.contains(&s.y)) {
            return Err(SimError::WindowEscape {
                state: s,
                time: sim.time(),
            });
        }
    }
    Ok(())
}

fn track<K: RateKernel + ?Sized>(
    set: &RecurrenceSet,
    sim: &Simulator<'_, K>,
    in_set: &mut bool,
    exit_time: &mut Option<f64>,
    returns: &mut u64,
    return_sum: &mut f64,
) {
    let now_in = set.contains(sim.state());
    match (*in_set, now_in) {
        (true, false) => *exit_time = Some(sim.time()),
        (false, true) => {
            if let Some(t0) = exit_time.take() {
                *returns += 1;
                *return_sum += sim.time() - t0;
            }
        }
        _ => {}
    }
    *in_set = now_in;
}

/// Monte Carlo estimate of `Σ q(s, s') (L(y') - L(y))` from `n` jump-chain
/// draws weighted by `v(s)`. Returns `(mean, standard error)`.
pub fn empirical_drift<K, L>(
    k: &K,
    s: State2D,
    ly: L,
    n: usize,
    seed: u64,
) -> Result<(f64, f64), SimError>
where
    K: RateKernel + ?Sized,
    L: Fn(i64) -> f64,
{
    if n == 0 {
        return Err(SimError::InvalidConfig(
            "sample count must be positive".into(),
        ));
    }
    let out = k.outgoing(s);
    let v: f64 = out.iter().map(|(_, r)| r).sum();
    if out.is_empty() || v <= 0.0 {
        return Err(SimError::Absorbing {
            state: s,
            time: 0.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l0 = ly(s.y);
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n {
        let t = pick(&out, v, rng.random::<f64>());
        let z = v * (ly(t.y) - l0);
        let d = z - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (z - mean);
    }
    let stderr = if n > 1 {
        (m2 / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, stderr))
}

/// Writes `t,x,y` rows.
pub fn write_trajectory_csv<W: Write>(path: &[PathPoint], out: W) -> Result<(), SimError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let err = |e: csv::Error| SimError::Csv(e.to_string());
    w.write_record(["t", "x", "y"]).map_err(err)?;
    for p in path {
        w.serialize(p).map_err(err)?;
    }
    w.flush().map_err(|e| SimError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::SparseRateKernel;
    use crate::qbd::{assemble_kernel, QbdSpec};

    fn mm1(lambda: f64, mu: f64) -> impl RateKernel {
        assemble_kernel(&QbdSpec::mm1(lambda, mu).unwrap()).unwrap()
    }

    fn small_set() -> RecurrenceSet {
        RecurrenceSet::Rectangle {
            max_x: 0,
            min_y: 0,
            max_y: 10,
        }
    }

    #[test]
    fn stable_queue_stays_low() {
        let cfg = SimConfig::new(7, Horizon::Time(1e5), State2D::new(0, 0), small_set());
        let r = simulate(&mm1(0.5, 1.0), &cfg).unwrap();
        // π(y ≤ 10) = 1 - 0.5^11
        assert!(r.fraction_in_set > 0.95, "{r}");
        assert!(r.level_slope.abs() < 0.01, "{r}");
        assert!(!r.censored);
        assert!(r.path.len() <= MAX_PATH_POINTS);
        assert_eq!(r.elapsed, 1e5);
    }

    #[test]
    fn overloaded_queue_grows_linearly() {
        let cfg = SimConfig::new(11, Horizon::Time(1e5), State2D::new(0, 0), small_set());
        let r = simulate(&mm1(2.0, 1.0), &cfg).unwrap();
        assert!((r.level_slope - 1.0).abs() < 0.2, "{r}");
    }

    #[test]
    fn zero_horizon_is_trivial() {
        let cfg = SimConfig::new(1, Horizon::Time(0.0), State2D::new(0, 3), small_set());
        let r = simulate(&mm1(0.5, 1.0), &cfg).unwrap();
        assert_eq!(r.path, vec![PathPoint { t: 0.0, x: 0, y: 3 }]);
        assert_eq!(r.jumps, 0);
        assert_eq!(r.fraction_in_set, 1.0);
        assert_eq!(r.level_slope, 0.0);
        assert!(r.censored);
    }

    #[test]
    fn reports_are_deterministic() {
        let k = mm1(0.8, 1.0);
        let cfg = SimConfig::new(42, Horizon::Jumps(5000), State2D::new(0, 0), small_set());
        assert_eq!(simulate(&k, &cfg).unwrap(), simulate(&k, &cfg).unwrap());
        let reps = simulate_replications(&k, &cfg, 3);
        assert_eq!(reps[0].as_ref().unwrap(), &simulate(&k, &cfg).unwrap());
        assert_ne!(
            reps[1].as_ref().unwrap().path,
            reps[2].as_ref().unwrap().path
        );
    }

    #[test]
    fn window_escape_records_time() {
        let mut cfg = SimConfig::new(3, Horizon::Time(1e4), State2D::new(0, 0), small_set());
        cfg.window = Some(Window::new(0, 5));
        match simulate(&mm1(2.0, 1.0), &cfg) {
            Err(SimError::WindowEscape { state, time }) => {
                assert_eq!(state.y, 6);
                assert!(time > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic_kernel_has_exact_drift() {
        let k = SparseRateKernel::from_triples([(State2D::new(0, 2), State2D::new(1, 5), 4.0)])
            .unwrap();
        let (m, se) = empirical_drift(&k, State2D::new(0, 2), |y| y as f64, 100, 9).unwrap();
        assert_eq!(m, 12.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn mm1_drift_estimate() {
        let (m, se) =
            empirical_drift(&mm1(0.5, 1.0), State2D::new(0, 4), |y| y as f64, 100_000, 5).unwrap();
        assert!((m + 0.5).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn holding_times_have_mean_one_over_v() {
        let k = mm1(0.5, 1.0);
        let s = State2D::new(0, 3);
        let mut sim = Simulator::new(&k, s, 17, 0);
        let n = 100_000;
        let holds: Vec<f64> = (0..n).map(|_| sim.sample().unwrap().0).collect();
        let mean = holds.iter().sum::<f64>() / n as f64;
        let var = holds.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0 / 1.5).abs() < 3.0 * se);
    }

    #[test]
    fn return_times_are_counted() {
        let cfg = SimConfig::new(
            5,
            Horizon::Time(1e4),
            State2D::new(0, 0),
            RecurrenceSet::States(vec![State2D::new(0, 0)]),
        );
        let r = simulate(&mm1(0.5, 1.0), &cfg).unwrap();
        assert!(r.returns > 100 && !r.censored);
        // regenerative identity: E[time away] = (1 - π0) / (π0 · rate out of 0)
        let want = 0.5 / (0.5 * 0.5);
        assert!(
            (r.mean_return_time.unwrap() - want).abs() / want < 0.1,
            "{r}"
        );
    }

    #[test]
    fn trajectory_csv_header() {
        let mut buf = Vec::new();
        write_trajectory_csv(
            &[PathPoint {
                t: 0.5,
                x: 1,
                y: -2,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x,y\n0.5,1,-2\n");
    }
}
