//! Reflected level chain: the idealised biased walk and the stage machine
//! driven by the constant-drift equation.

use crate::error::{usage, Error, Result};
use crate::noise::NoiseStream;
use crate::solver::{run_ensemble, SolverConfig, Stepper};
use crate::stats::{mean_se, wilson_interval};
use crate::torus_field::{infimum, supremum, Field};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Default stage timeout in time units.
pub const STAGE_TIMEOUT: f64 = 1e3;
const BOUNDARY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StageOutcome {
    /// Infimum doubled.
    Up,
    /// Infimum halved.
    Down,
    /// Supremum reached four times the start level.
    Blowout,
}

impl StageOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            StageOutcome::Up => "up",
            StageOutcome::Down => "down",
            StageOutcome::Blowout => "blowout",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub m: i32,
    pub p_up: f64,
    /// Grid, scheme, noise strength and diffusion of the stage equation.
    /// Its reaction and `t_end` are ignored.
    pub stage: Option<SolverConfig>,
    pub max_stages: usize,
    pub stage_timeout: f64,
}

impl ChainConfig {
    pub fn ideal(m: i32, p_up: f64) -> Result<Self> {
        let cfg = Self {
            m,
            p_up,
            stage: None,
            max_stages: usize::MAX,
            stage_timeout: STAGE_TIMEOUT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn embedded(m: i32, stage: SolverConfig) -> Result<Self> {
        let cfg = Self {
            m,
            p_up: 2.0 / 3.0,
            stage: Some(stage),
            max_stages: usize::MAX,
            stage_timeout: STAGE_TIMEOUT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m > -1 {
            return usage(format!("level M must be <= -1, got {}", self.m));
        }
        if !(self.p_up > 0.5 && self.p_up <= 1.0) {
            return usage(format!("p_up must lie in (1/2, 1], got {}", self.p_up));
        }
        if !(self.stage_timeout > 0.0) {
            return usage("stage timeout must be > 0");
        }
        Ok(())
    }

    /// Start level `M - 2`.
    pub fn start(&self) -> i32 {
        self.m - 2
    }

    /// Reflection level `M - 1`.
    pub fn top(&self) -> i32 {
        self.m - 1
    }
}

/// Path of the chain with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub m: i32,
    /// `x[0] = M - 2`.
    pub x: Vec<i32>,
    /// `outcomes[n]` produced the move from `x[n]` to `x[n+1]`.
    pub outcomes: Vec<StageOutcome>,
    /// Stage durations; empty for the ideal walk.
    pub durations: Vec<f64>,
    /// Step indices at which the top level was reached.
    pub alpha: Vec<u64>,
    /// Visits per level over `x[1..]`.
    pub occupation: BTreeMap<i32, u64>,
}

impl ChainRecord {
    fn new(m: i32) -> Self {
        Self {
            m,
            x: vec![m - 2],
            outcomes: Vec::new(),
            durations: Vec::new(),
            alpha: Vec::new(),
            occupation: BTreeMap::new(),
        }
    }

    fn push(&mut self, next: i32, outcome: StageOutcome, hit: bool) {
        self.x.push(next);
        self.outcomes.push(outcome);
        *self.occupation.entry(next).or_insert(0) += 1;
        if hit {
            self.alpha.push(self.outcomes.len() as u64);
        }
    }

    pub fn steps(&self) -> usize {
        self.outcomes.len()
    }

    /// Gaps between consecutive top hits, starting from time 0.
    pub fn excursion_lengths(&self) -> Vec<u64> {
        let mut prev = 0;
        self.alpha
            .iter()
            .map(|&a| {
                let d = a - prev;
                prev = a;
                d
            })
            .collect()
    }

    /// `alpha_n / n`, or `None` before the n-th hit.
    pub fn alpha_ratio(&self, n: usize) -> Option<f64> {
        if n == 0 || n > self.alpha.len() {
            return None;
        }
        Some(self.alpha[n - 1] as f64 / n as f64)
    }

    pub fn up_fraction(&self) -> f64 {
        let ups = self
            .outcomes
            .iter()
            .filter(|o| **o == StageOutcome::Up)
            .count();
        ups as f64 / self.outcomes.len().max(1) as f64
    }

    /// Rows `n,X_n,ell_n,outcome`; row 0 is the start with empty duration and outcome.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,X_n,ell_n,outcome\n");
        let _ = writeln!(s, "0,{},,start", self.x[0]);
        for (n, o) in self.outcomes.iter().enumerate() {
            let ell = match self.durations.get(n) {
                Some(d) => format!("{d:.16e}"),
                None => String::new(),
            };
            let _ = writeln!(s, "{},{},{},{}", n + 1, self.x[n + 1], ell, o.name());
        }
        s
    }
}

/// Biased +-1 walk from `M - 2`. An up-move from `M - 2` counts as a hit of
/// `M - 1` and the level is reset to `M - 2` at once.
pub fn run_ideal_chain(
    cfg: &ChainConfig,
    steps: usize,
    stream: &mut NoiseStream,
) -> Result<ChainRecord> {
    cfg.validate()?;
    if steps == 0 {
        return usage("run_ideal_chain needs steps >= 1");
    }
    let mut rec = ChainRecord::new(cfg.m);
    rec.x.reserve(steps);
    rec.outcomes.reserve(steps);
    let mut buf = vec![0.0; 4096.min(steps)];
    let mut used = buf.len();
    let mut x = cfg.start();
    for _ in 0..steps {
        if used == buf.len() {
            stream.fill_uniform(&mut buf);
            used = 0;
        }
        let u = buf[used];
        used += 1;
        if u < cfg.p_up {
            if x + 1 >= cfg.top() {
                x = cfg.start();
                rec.push(x, StageOutcome::Up, true);
            } else {
                x += 1;
                rec.push(x, StageOutcome::Up, false);
            }
        } else {
            x -= 1;
            rec.push(x, StageOutcome::Down, false);
        }
    }
    Ok(rec)
}

/// One row of [`excursion_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionRow {
    pub k: u32,
    pub bound: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    /// `mc_mean <= bound + 3 se`.
    pub pass: bool,
}

/// `sqrt(4pq) / (1 - sqrt(4pq)) * (q/p)^(k/2)`.
pub fn excursion_bound(p: f64, k: u32) -> f64 {
    let q = 1.0 - p;
    let r = (4.0 * p * q).sqrt();
    r / (1.0 - r) * (q / p).powf(k as f64 / 2.0)
}

const WALKS_PER_CHUNK: usize = 1000;
const MAX_WALK_STEPS: u64 = 100_000_000;

/// Monte Carlo mean of `sum_{n >= 0} 1{S_n <= -k}` for the p-biased walk from 0.
/// A walk stops once the chance of ever returning below `-k` is under `1e-12`.
pub fn excursion_bound_check(
    p: f64,
    k_grid: &[u32],
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<ExcursionRow>> {
    if !(p > 0.5 && p <= 1.0) {
        return usage(format!("p must lie in (1/2, 1], got {p}"));
    }
    if samples < 2 {
        return usage("excursion_bound_check needs at least 2 samples");
    }
    let q = 1.0 - p;
    let ratio = q / p;
    let deepest = k_grid.iter().copied().min().unwrap_or(0) as i64;
    // beyond this height the return probability to -deepest is negligible
    let escape = if q == 0.0 {
        1
    } else {
        ((1e-12f64).ln() / ratio.ln()).ceil() as i64 - deepest + 1
    };
    let chunks = samples.div_ceil(WALKS_PER_CHUNK);
    let per_chunk = run_ensemble(chunks, threads, |c| {
        let mut stream = NoiseStream::with_tag(seed, c as u64, 1);
        let n = WALKS_PER_CHUNK.min(samples - c * WALKS_PER_CHUNK);
        let mut buf = vec![0.0; 4096];
        let mut used = buf.len();
        let mut out = vec![vec![0.0; n]; k_grid.len()];
        for w in 0..n {
            let mut s: i64 = 0;
            let mut counts = vec![0u64; k_grid.len()];
            let mut t = 0;
            loop {
                for (ki, &k) in k_grid.iter().enumerate() {
                    if s <= -(k as i64) {
                        counts[ki] += 1;
                    }
                }
                if s >= escape.max(1) || t >= MAX_WALK_STEPS {
                    break;
                }
                if used == buf.len() {
                    stream.fill_uniform(&mut buf);
                    used = 0;
                }
                s += if buf[used] < p { 1 } else { -1 };
                used += 1;
                t += 1;
            }
            for (ki, c) in counts.iter().enumerate() {
                out[ki][w] = *c as f64;
            }
        }
        Ok(out)
    })?;
    let mut rows = Vec::with_capacity(k_grid.len());
    for (ki, &k) in k_grid.iter().enumerate() {
        let all: Vec<f64> = per_chunk
            .iter()
            .flat_map(|c| c[ki].iter().copied())
            .collect();
        let (m, se) = mean_se(&all);
        let bound = excursion_bound(p, k);
        rows.push(ExcursionRow {
            k,
            bound,
            mc_mean: m,
            mc_se: se,
            pass: m <= bound + 3.0 * se,
        });
    }
    Ok(rows)
}

/// `(1/n) sum_{j=1..n} 1{X_j <= -k}`.
pub fn occupation_fraction(record: &ChainRecord, k: i32) -> Result<f64> {
    let n = record.steps();
    if n < 1000 {
        return Err(Error::Precondition(format!(
            "occupation_fraction needs a record of >= 1000 steps, got {n}"
        )));
    }
    let hits: u64 = record.occupation.range(..=-k).map(|(_, c)| *c).sum();
    Ok(hits as f64 / n as f64)
}

/// Run the constant-drift stage from the flat profile `level`, stopping at
/// the first grid time where the infimum doubles or halves or the supremum
/// reaches four times the level (checked in that order).
pub fn run_embedded_stage(
    level: f64,
    cfg: &ChainConfig,
    stream: &mut NoiseStream,
) -> Result<(StageOutcome, f64)> {
    let stage = cfg
        .stage
        .as_ref()
        .ok_or_else(|| Error::Usage("embedded stage needs a solver configuration".into()))?;
    let cap = 2f64.powi(cfg.m - 1);
    if !(level > 0.0 && level <= cap * (1.0 + BOUNDARY_RTOL)) {
        return usage(format!(
            "stage level must lie in (0, 2^(M-1)] = (0, {cap}], got {level}"
        ));
    }
    let mut scfg = stage.clone();
    scfg.constant_drift = Some(0.5 * level);
    scfg.snapshot_times.clear();
    scfg.t_end = cfg.stage_timeout;
    let mut stepper = Stepper::new(&scfg)?;
    let mut u = Field::constant(scfg.grid, level);
    let mut xi = vec![0.0; scfg.grid.points()];
    let up = 2.0 * level * (1.0 - BOUNDARY_RTOL);
    let down = 0.5 * level * (1.0 + BOUNDARY_RTOL);
    let blow = 4.0 * level * (1.0 - BOUNDARY_RTOL);
    let max_steps = scfg.steps();
    for n in 0..max_steps {
        stream.fill(&mut xi);
        stepper.step_field(&mut u, &xi, n)?;
        let t = (n + 1) as f64 * scfg.dt;
        let lo = infimum(&u);
        if lo >= up {
            return Ok((StageOutcome::Up, t));
        }
        if lo <= down {
            return Ok((StageOutcome::Down, t));
        }
        if supremum(&u) >= blow {
            return Ok((StageOutcome::Blowout, t));
        }
    }
    Err(Error::StageTimeout {
        elapsed: max_steps as f64 * scfg.dt,
        inf: infimum(&u),
        sup: supremum(&u),
    })
}

/// Chain stages with the level updates: an up-move doubles the level below
/// the top and resets it to `M - 2` from the top; other outcomes halve it.
pub fn run_embedded_chain(
    cfg: &ChainConfig,
    stages: usize,
    stream: &mut NoiseStream,
) -> Result<ChainRecord> {
    cfg.validate()?;
    if stages == 0 {
        return usage("run_embedded_chain needs stages >= 1");
    }
    let stages = stages.min(cfg.max_stages);
    let mut rec = ChainRecord::new(cfg.m);
    let mut x = cfg.start();
    for _ in 0..stages {
        let level = 2f64.powi(x);
        let (outcome, ell) = run_embedded_stage(level, cfg, stream)?;
        let next = match outcome {
            StageOutcome::Up if x <= cfg.m - 2 => x + 1,
            StageOutcome::Up => cfg.start(),
            _ if x >= cfg.top() => cfg.start(),
            _ => x - 1,
        };
        rec.durations.push(ell);
        x = next;
        rec.push(x, outcome, x == cfg.top());
    }
    Ok(rec)
}

/// Outcome counts of independent stages from the same level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageCensus {
    pub stages: usize,
    pub up: usize,
    pub down: usize,
    pub blowout: usize,
    pub p_up: f64,
    /// Binomial standard error of `p_up`.
    pub p_up_se: f64,
    /// 95% Wilson interval for `p_up`.
    pub wilson: (f64, f64),
    pub mean_duration: f64,
    pub duration_se: f64,
}

/// Run `stages` independent stages from `2^(M-2)`, stage `i` on stream replica `i`.
pub fn stage_census(
    cfg: &ChainConfig,
    stages: usize,
    seed: u64,
    threads: usize,
) -> Result<StageCensus> {
    cfg.validate()?;
    if stages == 0 {
        return usage("stage_census needs stages >= 1");
    }
    let level = 2f64.powi(cfg.start());
    let runs = run_ensemble(stages, threads, |i| {
        let mut stream = NoiseStream::with_tag(seed, i as u64, 2);
        run_embedded_stage(level, cfg, &mut stream)
    })?;
    let count = |o: StageOutcome| runs.iter().filter(|r| r.0 == o).count();
    let up = count(StageOutcome::Up);
    let p = up as f64 / stages as f64;
    let durations: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (md, sd) = mean_se(&durations);
    Ok(StageCensus {
        stages,
        up,
        down: count(StageOutcome::Down),
        blowout: count(StageOutcome::Blowout),
        p_up: p,
        p_up_se: (p * (1.0 - p) / stages as f64).sqrt(),
        wilson: wilson_interval(up, stages, 1.96),
        mean_duration: md,
        duration_se: sd,
    })
}
