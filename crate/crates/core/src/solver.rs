//! Euler-Maruyama time stepping on the periodic grid.

use crate::error::{usage, Error, Result};
use crate::noise::NoiseStream;
use crate::reaction::{eval_V_truncated, DiffusionSpec, PotentialSpec};
use crate::spectral::Multiplier;
use crate::stats::{mean_se, ols, tree_sum};
use crate::torus_field::{infimum, spatial_mean, supremum, Field, TorusGrid};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Explicit,
    /// Implicit periodic Laplacian through the grid Fourier multiplier,
    /// explicit reaction and noise.
    SemiImplicit,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Explicit => "explicit",
            Scheme::SemiImplicit => "semi_implicit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub grid: TorusGrid,
    pub dt: f64,
    pub t_end: f64,
    pub lambda: f64,
    pub potential: PotentialSpec,
    pub diffusion: DiffusionSpec,
    pub truncation: Option<u32>,
    pub scheme: Scheme,
    pub clamp_nonnegative: bool,
    pub snapshot_times: Vec<f64>,
    /// Replace the reaction term by a constant forcing.
    pub constant_drift: Option<f64>,
    /// Keep every `record_stride`-th observable row (the final row is always kept).
    pub record_stride: usize,
}

impl SolverConfig {
    /// Explicit scheme with `dt = dx^2 / 4`, clamp on, `t_end = 1`.
    pub fn new(
        grid: TorusGrid,
        potential: PotentialSpec,
        diffusion: DiffusionSpec,
        lambda: f64,
    ) -> Self {
        let dx = grid.dx();
        Self {
            grid,
            dt: dx * dx / 4.0,
            t_end: 1.0,
            lambda,
            potential,
            diffusion,
            truncation: None,
            scheme: Scheme::Explicit,
            clamp_nonnegative: true,
            snapshot_times: Vec::new(),
            constant_drift: None,
            record_stride: 1,
        }
    }

    /// KPP reaction with `sigma(x) = x`.
    pub fn kpp(points: usize, lambda: f64) -> Result<Self> {
        Ok(Self::new(
            TorusGrid::new(points)?,
            PotentialSpec::kpp(),
            DiffusionSpec::linear(1.0),
            lambda,
        ))
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    /// Switch scheme; the semi-implicit default step is `dx`.
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        if scheme == Scheme::SemiImplicit {
            self.dt = self.grid.dx();
        } else {
            self.dt = self.grid.dx().powi(2) / 4.0;
        }
        self
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_clamp(mut self, on: bool) -> Self {
        self.clamp_nonnegative = on;
        self
    }

    pub fn with_truncation(mut self, n: Option<u32>) -> Self {
        self.truncation = n;
        self
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dx = self.grid.dx();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.scheme == Scheme::Explicit && self.dt > dx * dx / 2.0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "explicit scheme needs dt <= dx^2/2 = {}, got {}",
                dx * dx / 2.0,
                self.dt
            )));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!(
                "t_end must be >= 0, got {}",
                self.t_end
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("snapshot times must be sorted".into()));
        }
        if self
            .snapshot_times
            .iter()
            .any(|&t| t < 0.0 || t > self.t_end * (1.0 + 1e-12))
        {
            return Err(Error::Config(
                "snapshot times must lie in [0, t_end]".into(),
            ));
        }
        if self.truncation == Some(0) {
            return Err(Error::Config("truncation level must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        ((self.t_end / self.dt) - 1e-9).ceil().max(0.0) as u64
    }

    /// Canonical text of every parameter, hashed into trajectory digests.
    pub fn describe(&self) -> String {
        format!(
            "J={} dt={:e} t_end={:e} lambda={:e} potential={:?} sigma={:?} lip={:e} lower={:e} truncation={:?} scheme={} clamp={} snapshots={:?} constant_drift={:?} stride={}",
            self.grid.points(),
            self.dt,
            self.t_end,
            self.lambda,
            self.potential,
            self.diffusion.sigma(),
            self.diffusion.lip(),
            self.diffusion.lower(),
            self.truncation,
            self.scheme.name(),
            self.clamp_nonnegative,
            self.snapshot_times,
            self.constant_drift,
            self.record_stride
        )
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.describe().as_bytes()))
    }
}

/// Eigenvalues `(4/dx^2) sin^2(pi k / J)` of minus the periodic second difference.
pub fn laplacian_symbol(grid: TorusGrid) -> Vec<f64> {
    let j = grid.points();
    let dx = grid.dx();
    (0..j)
        .map(|k| {
            let s = (PI * k as f64 / j as f64).sin();
            4.0 / (dx * dx) * s * s
        })
        .collect()
}

/// Reusable single-step engine for one configuration.
#[derive(Debug, Clone)]
pub struct Stepper {
    cfg: SolverConfig,
    implicit: Option<(Multiplier, Vec<f64>)>,
    scratch: Vec<f64>,
    noise_scale: f64,
}

impl Stepper {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let implicit = match cfg.scheme {
            Scheme::Explicit => None,
            Scheme::SemiImplicit => {
                let symbol = laplacian_symbol(cfg.grid)
                    .into_iter()
                    .map(|mu| 1.0 / (1.0 + cfg.dt * mu))
                    .collect();
                Some((Multiplier::new(cfg.grid.points()), symbol))
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            implicit,
            scratch: vec![0.0; cfg.grid.points()],
            noise_scale: cfg.lambda * (cfg.dt / cfg.grid.dx()).sqrt(),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    #[inline]
    fn reaction(&self, x: f64) -> f64 {
        if let Some(c) = self.cfg.constant_drift {
            return c;
        }
        if !self.cfg.potential.drift_enabled {
            return 0.0;
        }
        match self.cfg.truncation {
            Some(n) => eval_V_truncated(&self.cfg.potential, n, x),
            None => self.cfg.potential.v_unchecked(x),
        }
    }

    /// Advance `u` by one step driven by the standard normals `xi`.
    /// `step_index` only labels a blow-up error.
    pub fn step(&mut self, u: &mut [f64], xi: &[f64], step_index: u64) -> Result<()> {
        let n = u.len();
        debug_assert_eq!(xi.len(), n);
        let dt = self.cfg.dt;
        let noisy = self.noise_scale != 0.0;
        match self.implicit {
            None => {
                let c = dt / (self.cfg.grid.dx() * self.cfg.grid.dx());
                for i in 0..n {
                    let left = u[if i == 0 { n - 1 } else { i - 1 }];
                    let right = u[if i + 1 == n { 0 } else { i + 1 }];
                    let ui = u[i];
                    let mut v = ui + c * (left - 2.0 * ui + right) + dt * self.reaction(ui);
                    if noisy {
                        v += self.noise_scale * self.cfg.diffusion.eval(ui) * xi[i];
                    }
                    self.scratch[i] = v;
                }
            }
            Some(_) => {
                for i in 0..n {
                    let ui = u[i];
                    let mut v = ui + dt * self.reaction(ui);
                    if noisy {
                        v += self.noise_scale * self.cfg.diffusion.eval(ui) * xi[i];
                    }
                    self.scratch[i] = v;
                }
                let (mult, symbol) = self.implicit.as_mut().unwrap();
                mult.apply(&mut self.scratch, symbol);
            }
        }
        let clamp = self.cfg.clamp_nonnegative;
        for (dst, &v) in u.iter_mut().zip(&self.scratch) {
            if !v.is_finite() {
                return Err(Error::BlowUp {
                    step: step_index,
                    time: (step_index + 1) as f64 * dt,
                });
            }
            *dst = if clamp && v < 0.0 { 0.0 } else { v };
        }
        Ok(())
    }

    pub fn step_field(&mut self, f: &mut Field, xi: &[f64], step_index: u64) -> Result<()> {
        self.step(f.values_mut(), xi, step_index)
    }
}

/// Observables and snapshots of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub inf: Vec<f64>,
    pub sup: Vec<f64>,
    pub mean: Vec<f64>,
    pub snapshots: Vec<(f64, Field)>,
    pub config_digest: String,
    pub seed: u64,
    pub replica: u64,
    pub dt: f64,
}

impl Trajectory {
    /// Build a trajectory from recorded fields (fixtures, external data).
    pub fn from_fields(times: Vec<f64>, fields: &[Field]) -> Result<Self> {
        if times.len() != fields.len() || times.is_empty() {
            return usage("from_fields: times and fields must be non-empty and aligned");
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return usage("from_fields: times must be strictly increasing");
        }
        let dt = if times.len() > 1 {
            times[1] - times[0]
        } else {
            0.0
        };
        Ok(Self {
            inf: fields.iter().map(infimum).collect(),
            sup: fields.iter().map(supremum).collect(),
            mean: fields.iter().map(spatial_mean).collect(),
            snapshots: times.iter().copied().zip(fields.iter().cloned()).collect(),
            times,
            config_digest: String::new(),
            seed: 0,
            replica: 0,
            dt,
        })
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn final_field(&self) -> Option<&Field> {
        self.snapshots.last().map(|s| &s.1)
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Field> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|(_, f)| f)
    }

    fn push_row(&mut self, t: f64, f: &Field) {
        self.times.push(t);
        self.inf.push(infimum(f));
        self.sup.push(supremum(f));
        self.mean.push(spatial_mean(f));
    }
}

struct Recorder {
    snaps: Vec<f64>,
    next: usize,
    stride: usize,
    dt: f64,
}

impl Recorder {
    fn record(&mut self, traj: &mut Trajectory, n: u64, total: u64, f: &Field) {
        let t = n as f64 * self.dt;
        if n % self.stride as u64 == 0 || n == total {
            traj.push_row(t, f);
        }
        while self.next < self.snaps.len() && self.snaps[self.next] <= t + 1e-9 * self.dt {
            traj.snapshots.push((self.snaps[self.next], f.clone()));
            self.next += 1;
        }
    }
}

fn empty_trajectory(cfg: &SolverConfig, stream: &NoiseStream) -> Trajectory {
    Trajectory {
        times: Vec::new(),
        inf: Vec::new(),
        sup: Vec::new(),
        mean: Vec::new(),
        snapshots: Vec::new(),
        config_digest: cfg.digest(),
        seed: stream.master_seed(),
        replica: stream.replica_id(),
        dt: cfg.dt,
    }
}

fn check_start(psi0: &Field, cfg: &SolverConfig) -> Result<()> {
    if psi0.grid() != cfg.grid {
        return usage("initial field is on a different grid");
    }
    if cfg.clamp_nonnegative && infimum(psi0) < 0.0 {
        return usage("initial field must be >= 0 when the clamp is on");
    }
    Ok(())
}

/// Run from `psi0` to `cfg.t_end`, recording `(t, L, U, mean)` every step.
pub fn simulate(psi0: &Field, cfg: &SolverConfig, stream: &mut NoiseStream) -> Result<Trajectory> {
    check_start(psi0, cfg)?;
    let mut stepper = Stepper::new(cfg)?;
    let total = cfg.steps();
    let mut traj = empty_trajectory(cfg, stream);
    let mut rec = Recorder {
        snaps: cfg.snapshot_times.clone(),
        next: 0,
        stride: cfg.record_stride.max(1),
        dt: cfg.dt,
    };
    let mut u = psi0.clone();
    let mut xi = vec![0.0; cfg.grid.points()];
    rec.record(&mut traj, 0, total, &u);
    for n in 0..total {
        if u.is_zero() {
            // zero is absorbing; skip the noise draws
            stream.seek(stream.step_counter() + 1);
        } else {
            stream.fill(&mut xi);
            stepper.step_field(&mut u, &xi, n)?;
        }
        rec.record(&mut traj, n + 1, total, &u);
    }
    Ok(traj)
}

/// Two runs driven by the same slabs.
pub fn simulate_pair_shared_noise(
    psi0_low: &Field,
    psi0_high: &Field,
    cfg: &SolverConfig,
    stream: &mut NoiseStream,
) -> Result<(Trajectory, Trajectory)> {
    check_start(psi0_low, cfg)?;
    check_start(psi0_high, cfg)?;
    if psi0_low
        .values()
        .iter()
        .zip(psi0_high.values())
        .any(|(a, b)| a > b)
    {
        return usage("simulate_pair_shared_noise needs psi0_low <= psi0_high pointwise");
    }
    let mut s_low = Stepper::new(cfg)?;
    let mut s_high = s_low.clone();
    let total = cfg.steps();
    let mut tl = empty_trajectory(cfg, stream);
    let mut th = tl.clone();
    let mk = || Recorder {
        snaps: cfg.snapshot_times.clone(),
        next: 0,
        stride: cfg.record_stride.max(1),
        dt: cfg.dt,
    };
    let (mut rl, mut rh) = (mk(), mk());
    let mut lo = psi0_low.clone();
    let mut hi = psi0_high.clone();
    let mut xi = vec![0.0; cfg.grid.points()];
    rl.record(&mut tl, 0, total, &lo);
    rh.record(&mut th, 0, total, &hi);
    for n in 0..total {
        stream.fill(&mut xi);
        s_low.step_field(&mut lo, &xi, n)?;
        s_high.step_field(&mut hi, &xi, n)?;
        rl.record(&mut tl, n + 1, total, &lo);
        rh.record(&mut th, n + 1, total, &hi);
    }
    Ok((tl, th))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate {
    pub slope: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// First time in the window at which `U` was exactly 0 (slope is then `-inf`).
    pub zero_hit: Option<f64>,
}

/// Least-squares slope of `log U_t` over `[t0, t1]`.
///
/// The regression standard error is inflated by `sqrt(n / n_eff)` with one
/// effectively independent point per time unit; the interval is `slope +- 2 se`.
pub fn estimate_lyapunov(traj: &Trajectory, window: (f64, f64)) -> Result<LyapunovEstimate> {
    let (t0, t1) = window;
    if !(t1 > t0) || t0 < 0.0 {
        return usage(format!("bad Lyapunov window ({t0}, {t1})"));
    }
    let eps = 1e-9 * t1.max(1.0);
    if traj.times.is_empty() || t1 > traj.t_end() + eps || t0 < traj.times[0] - eps {
        return usage(format!(
            "window ({t0}, {t1}) outside the trajectory [{}, {}]",
            traj.times.first().unwrap_or(&0.0),
            traj.t_end()
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &t) in traj.times.iter().enumerate() {
        if t < t0 - eps || t > t1 + eps {
            continue;
        }
        if traj.sup[i] <= 0.0 {
            return Ok(LyapunovEstimate {
                slope: f64::NEG_INFINITY,
                se: 0.0,
                ci_lo: f64::NEG_INFINITY,
                ci_hi: f64::NEG_INFINITY,
                zero_hit: Some(t),
            });
        }
        xs.push(t);
        ys.push(traj.sup[i].ln());
    }
    if xs.len() < 3 {
        return usage("Lyapunov window holds fewer than three observations");
    }
    let fit = ols(&xs, &ys);
    let n_eff = (t1 - t0).max(1.0).min(xs.len() as f64);
    let se = if fit.slope_se.is_finite() {
        fit.slope_se * (xs.len() as f64 / n_eff).sqrt()
    } else {
        0.0
    };
    Ok(LyapunovEstimate {
        slope: fit.slope,
        se,
        ci_lo: fit.slope - 2.0 * se,
        ci_hi: fit.slope + 2.0 * se,
        zero_hit: None,
    })
}

/// Ensemble mean of `(1/J) sum_x |psi(t,x)|^k` with its standard error.
pub fn moment_estimator(ensemble: &[Trajectory], k: f64, t: f64) -> Result<(f64, f64)> {
    if ensemble.len() < 30 {
        return usage(format!(
            "moment_estimator needs >= 30 replicas, got {}",
            ensemble.len()
        ));
    }
    let mut per = Vec::with_capacity(ensemble.len());
    for traj in ensemble {
        let f = traj
            .snapshot_at(t)
            .ok_or_else(|| Error::Usage(format!("time {t} was not snapshotted")))?;
        let pw: Vec<f64> = f.values().iter().map(|v| v.abs().powf(k)).collect();
        per.push(tree_sum(&pw) / pw.len() as f64);
    }
    Ok(mean_se(&per))
}

/// Run `f(replica)` for every replica on a pool of `threads` workers,
/// returning the results in replica order.
pub fn run_ensemble<T, F>(replicas: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..replicas).into_par_iter().map(&f).collect())
}
