//! Time averages, empirical invariant measures, agreement tests between
//! starts, noise-strength sweeps and roughness diagnostics of profiles.

use crate::error::{usage, Error, Result};
use crate::noise::NoiseStream;
use crate::reaction::DiffusionSpec;
use crate::solver::{estimate_lyapunov, run_ensemble, simulate, SolverConfig, Stepper, Trajectory};
use crate::stats::{mean, mean_se, ols, quantile_sorted, sorted, LinearFit};
use crate::torus_field::{holder_seminorm, infimum, spatial_mean, supremum, Field, TorusGrid};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Smallest level resolved by the persistence verdict.
pub const EPS_FLOOR: f64 = 1e-3;
/// Below this supremum a run counts as extinct.
pub const EXTINCTION_LEVEL: f64 = 1e-12;
/// Default snapshot spacing in time units.
pub const DECORRELATION_WINDOW: f64 = 1.0;
const MIN_SNAPSHOTS: usize = 30;
const MIN_TAIL_SNAPSHOTS: usize = 200;

/// Time average of `values` (aligned with `traj.times`) over `[t0, T]`,
/// left-endpoint rule.
fn window_average(traj: &Trajectory, values: &[f64], t0: f64) -> Result<f64> {
    let times = &traj.times;
    let t_end = traj.t_end();
    if times.len() < 2 || !(t_end > t0) {
        return usage(format!("no observations in the window [{t0}, {t_end}]"));
    }
    let mut acc = Vec::with_capacity(times.len());
    for i in 0..times.len() - 1 {
        if times[i] + 1e-12 < t0 {
            continue;
        }
        acc.push((times[i + 1] - times[i]) * values[i]);
    }
    if acc.is_empty() {
        return usage(format!("no observations in the window [{t0}, {t_end}]"));
    }
    let span = t_end - times[times.len() - 1 - acc.len()];
    Ok(crate::stats::tree_sum(&acc) / span)
}

/// `(1/T) int_0^T 1{L_t < eps} dt` on the recorded grid.
pub fn time_average_occupation(traj: &Trajectory, eps: f64) -> Result<f64> {
    if traj.t_end() < 10.0 - 1e-9 {
        return usage(format!(
            "occupation needs a trajectory of length >= 10, got {}",
            traj.t_end()
        ));
    }
    let ind: Vec<f64> = traj
        .inf
        .iter()
        .map(|&l| if l < eps { 1.0 } else { 0.0 })
        .collect();
    window_average(traj, &ind, traj.times[0])
}

/// Path functionals that get time-averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathFunctional {
    Inf,
    Sup,
    Mean,
}

impl PathFunctional {
    pub const ALL: [PathFunctional; 3] = [
        PathFunctional::Inf,
        PathFunctional::Sup,
        PathFunctional::Mean,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PathFunctional::Inf => "L",
            PathFunctional::Sup => "U",
            PathFunctional::Mean => "mean",
        }
    }

    fn series<'a>(&self, traj: &'a Trajectory) -> &'a [f64] {
        match self {
            PathFunctional::Inf => &traj.inf,
            PathFunctional::Sup => &traj.sup,
            PathFunctional::Mean => &traj.mean,
        }
    }
}

/// Time average of a path functional over `[t0, T]`.
pub fn time_average(traj: &Trajectory, functional: PathFunctional, t0: f64) -> Result<f64> {
    window_average(traj, functional.series(traj), t0)
}

/// Functionals of single snapshots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnapshotFunctional {
    Inf,
    Sup,
    Mean,
    Holder(f64),
}

impl SnapshotFunctional {
    pub fn name(&self) -> String {
        match self {
            SnapshotFunctional::Inf => "inf".into(),
            SnapshotFunctional::Sup => "sup".into(),
            SnapshotFunctional::Mean => "mean".into(),
            SnapshotFunctional::Holder(a) => format!("holder_{a}"),
        }
    }

    pub fn eval(&self, f: &Field) -> Result<f64> {
        Ok(match self {
            SnapshotFunctional::Inf => infimum(f),
            SnapshotFunctional::Sup => supremum(f),
            SnapshotFunctional::Mean => spatial_mean(f),
            SnapshotFunctional::Holder(a) => holder_seminorm(f, *a, &dyadic_lags(f.grid()))?,
        })
    }
}

fn dyadic_lags(grid: TorusGrid) -> Vec<usize> {
    let mut lags = Vec::new();
    let mut h = 1;
    while h <= grid.points() / 4 {
        lags.push(h);
        h *= 2;
    }
    lags
}

/// Summary statistics of one functional over the snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

/// Snapshots along one long run, spaced `thinning` apart after `burn_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub snapshots: Vec<(f64, Field)>,
    pub burn_in: f64,
    pub thinning: f64,
    /// Time at which the supremum fell below [`EXTINCTION_LEVEL`]; sampling stopped there.
    pub extinct_at: Option<f64>,
}

impl EmpiricalMeasure {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn values(&self, functional: SnapshotFunctional) -> Result<Vec<f64>> {
        self.snapshots
            .iter()
            .map(|(_, f)| functional.eval(f))
            .collect()
    }

    pub fn summarize(&self, functional: SnapshotFunctional) -> Result<FunctionalSummary> {
        if self.len() < MIN_SNAPSHOTS {
            return Err(Error::Precondition(format!(
                "statistics need >= {MIN_SNAPSHOTS} snapshots, got {}",
                self.len()
            )));
        }
        let v = self.values(functional)?;
        let (m, se) = mean_se(&v);
        let s = sorted(&v);
        Ok(FunctionalSummary {
            name: functional.name(),
            n: v.len(),
            mean: m,
            se,
            q05: quantile_sorted(&s, 0.05),
            q50: quantile_sorted(&s, 0.5),
            q95: quantile_sorted(&s, 0.95),
        })
    }

    /// Default battery: inf, sup, mean and Holder seminorms at 0.1, 0.25, 0.4.
    pub fn summary(&self) -> Result<Vec<FunctionalSummary>> {
        [
            SnapshotFunctional::Inf,
            SnapshotFunctional::Sup,
            SnapshotFunctional::Mean,
            SnapshotFunctional::Holder(0.1),
            SnapshotFunctional::Holder(0.25),
            SnapshotFunctional::Holder(0.4),
        ]
        .iter()
        .map(|f| self.summarize(*f))
        .collect()
    }
}

/// Rows `functional,n,mean,se,q05,q50,q95`.
pub fn summary_csv(rows: &[FunctionalSummary]) -> String {
    let mut s = String::from("functional,n,mean,se,q05,q50,q95\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.name, r.n, r.mean, r.se, r.q05, r.q50, r.q95
        );
    }
    s
}

/// Sample `total` snapshots at `burn_in + i * thinning` along one run from `psi0`.
/// `cfg.t_end` and `cfg.snapshot_times` are ignored.
pub fn kb_sample(
    cfg: &SolverConfig,
    psi0: &Field,
    burn_in: f64,
    thinning: f64,
    total: usize,
    stream: &mut NoiseStream,
) -> Result<EmpiricalMeasure> {
    if burn_in < 1.0 {
        return usage(format!("burn-in must be >= 1, got {burn_in}"));
    }
    if !(thinning > 0.0) {
        return usage("thinning must be > 0");
    }
    if psi0.grid() != cfg.grid {
        return usage("initial field is on a different grid");
    }
    let mut run = cfg.clone();
    run.snapshot_times.clear();
    run.t_end = burn_in + thinning * total.saturating_sub(1) as f64;
    let mut stepper = Stepper::new(&run)?;
    let mut u = psi0.clone();
    let mut xi = vec![0.0; run.grid.points()];
    let mut out = EmpiricalMeasure {
        snapshots: Vec::with_capacity(total),
        burn_in,
        thinning,
        extinct_at: None,
    };
    let steps = run.steps();
    let mut next = 0;
    for n in 0..steps {
        stream.fill(&mut xi);
        stepper.step_field(&mut u, &xi, n)?;
        let t = (n + 1) as f64 * run.dt;
        if supremum(&u) < EXTINCTION_LEVEL {
            out.extinct_at = Some(t);
            break;
        }
        while next < total && burn_in + next as f64 * thinning <= t + 1e-9 * run.dt {
            out.snapshots
                .push((burn_in + next as f64 * thinning, u.clone()));
            next += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSharing {
    /// Both starts use the same noise; the test is paired.
    Shared,
    /// Each start has its own noise; standard errors add in quadrature.
    Independent,
}

#[derive(Debug, Clone)]
pub struct ErgodicConfig {
    /// `t_end` is the averaging horizon.
    pub solver: SolverConfig,
    pub burn_in: f64,
    pub replicas: usize,
    pub noise: NoiseSharing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    pub functional: &'static str,
    pub mean_a: f64,
    pub se_a: f64,
    pub mean_b: f64,
    pub se_b: f64,
    /// Standard error of the difference.
    pub se_diff: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicReport {
    pub rows: Vec<AgreementRow>,
    pub all_pass: bool,
}

/// Compare time averages of `L`, `U` and the spatial mean over
/// `[burn_in, T]` from two starts; agreement means within 3 standard errors.
pub fn ergodic_agreement(
    psi0_a: &Field,
    psi0_b: &Field,
    cfg: &ErgodicConfig,
    seed: u64,
    threads: usize,
) -> Result<ErgodicReport> {
    if supremum(psi0_a) <= 0.0 || supremum(psi0_b) <= 0.0 {
        return usage("both starts must be positive somewhere");
    }
    if cfg.replicas < 2 {
        return usage("ergodic_agreement needs >= 2 replicas");
    }
    if !(cfg.burn_in >= 0.0 && cfg.burn_in < cfg.solver.t_end) {
        return usage("burn-in must lie in [0, T)");
    }
    let tag_b = match cfg.noise {
        NoiseSharing::Shared => 3,
        NoiseSharing::Independent => 4,
    };
    let per = run_ensemble(cfg.replicas, threads, |r| {
        let ta = simulate(
            psi0_a,
            &cfg.solver,
            &mut NoiseStream::with_tag(seed, r as u64, 3),
        )?;
        let tb = simulate(
            psi0_b,
            &cfg.solver,
            &mut NoiseStream::with_tag(seed, r as u64, tag_b),
        )?;
        let mut v = [[0.0; 3]; 2];
        for (k, f) in PathFunctional::ALL.iter().enumerate() {
            v[0][k] = time_average(&ta, *f, cfg.burn_in)?;
            v[1][k] = time_average(&tb, *f, cfg.burn_in)?;
        }
        Ok(v)
    })?;
    let mut rows = Vec::new();
    for (k, f) in PathFunctional::ALL.iter().enumerate() {
        let a: Vec<f64> = per.iter().map(|v| v[0][k]).collect();
        let b: Vec<f64> = per.iter().map(|v| v[1][k]).collect();
        let (ma, sa) = mean_se(&a);
        let (mb, sb) = mean_se(&b);
        let se_diff = match cfg.noise {
            NoiseSharing::Shared => {
                let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                mean_se(&d).1
            }
            NoiseSharing::Independent => (sa * sa + sb * sb).sqrt(),
        };
        rows.push(AgreementRow {
            functional: f.name(),
            mean_a: ma,
            se_a: sa,
            mean_b: mb,
            se_b: sb,
            se_diff,
            pass: (ma - mb).abs() <= 3.0 * se_diff,
        });
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(ErgodicReport { rows, all_pass })
}

/// Empirical `P{inf omega <= eps}` per level with a log-log slope.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTail {
    pub rows: Vec<(f64, f64)>,
    /// Fit of `log fraction` against `log eps` over the positive fractions;
    /// `None` with fewer than two of them.
    pub fit: Option<LinearFit>,
}

pub fn lower_tail_curve(measure: &EmpiricalMeasure, eps_grid: &[f64]) -> Result<LowerTail> {
    if measure.len() < MIN_TAIL_SNAPSHOTS {
        return Err(Error::Precondition(format!(
            "lower tail needs >= {MIN_TAIL_SNAPSHOTS} snapshots, got {}",
            measure.len()
        )));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0)) || eps_grid.windows(2).any(|w| w[1] <= w[0]) {
        return usage("eps grid must be positive and increasing");
    }
    let infs = measure.values(SnapshotFunctional::Inf)?;
    let n = infs.len() as f64;
    let rows: Vec<(f64, f64)> = eps_grid
        .iter()
        .map(|&e| (e, infs.iter().filter(|&&v| v <= e).count() as f64 / n))
        .collect();
    let pos: Vec<&(f64, f64)> = rows.iter().filter(|r| r.1 > 0.0).collect();
    let fit = (pos.len() >= 2).then(|| {
        let xs: Vec<f64> = pos.iter().map(|r| r.0.ln()).collect();
        let ys: Vec<f64> = pos.iter().map(|r| r.1.ln()).collect();
        ols(&xs, &ys)
    });
    Ok(LowerTail { rows, fit })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusStats {
    /// `max_r sup_{|y|<r} sup_x |w(x+y) - w(x)| / sqrt(r log(1/r))`.
    pub limsup: f64,
    /// `min_r sqrt(16 log(1/r) / (pi^2 r)) inf_x sup_{|y|<r} |w(x+y) - w(x)|`.
    pub liminf: f64,
    /// `lambda sup_x |sigma(w(x))|`.
    pub scale: f64,
    pub limsup_norm: f64,
    pub liminf_norm: f64,
}

/// Increment statistics of a fine profile at the scales `r_grid`.
///
/// Windows of a handful of cells are dominated by the lattice: the liminf
/// statistic collapses there, so useful grids start around `16 dx`.
pub fn modulus_estimator(
    snapshot: &Field,
    diffusion: &DiffusionSpec,
    lambda: f64,
    r_grid: &[f64],
) -> Result<ModulusStats> {
    let grid = snapshot.grid();
    let j = grid.points();
    let dx = grid.dx();
    if j < 1 << 12 {
        return usage(format!("modulus estimator needs J >= 4096, got {j}"));
    }
    if r_grid.is_empty() {
        return usage("empty r grid");
    }
    let mut rs = r_grid.to_vec();
    rs.sort_by(|a, b| a.total_cmp(b));
    if rs[0] < 4.0 * dx * (1.0 - 1e-9) || rs[rs.len() - 1] > 0.1 * (1.0 + 1e-9) {
        return usage(format!(
            "r grid must lie in [4 dx, 0.1] = [{}, 0.1]",
            4.0 * dx
        ));
    }
    let v = snapshot.values();
    let mut running = vec![0.0f64; j];
    let mut global: f64 = 0.0;
    let mut h = 0;
    let mut limsup: f64 = 0.0;
    let mut liminf = f64::INFINITY;
    for &r in &rs {
        let hmax = ((r / dx) - 1e-9).ceil() as usize - 1;
        while h < hmax {
            h += 1;
            for i in 0..j {
                let d = (v[(i + h) % j] - v[i])
                    .abs()
                    .max((v[(i + j - h) % j] - v[i]).abs());
                if d > running[i] {
                    running[i] = d;
                }
            }
        }
        global = running.iter().fold(global, |m, &d| m.max(d));
        let low = running.iter().fold(f64::INFINITY, |m, &d| m.min(d));
        let lg = (1.0 / r).ln();
        limsup = limsup.max(global / (r * lg).sqrt());
        liminf = liminf.min((16.0 * lg / (PI * PI * r)).sqrt() * low);
    }
    let scale = lambda
        * v.iter()
            .fold(0.0f64, |m, &x| m.max(diffusion.eval(x).abs()));
    if !(scale > 0.0) {
        return Err(Error::Domain(
            "lambda sup|sigma| is zero; nothing to normalise by".into(),
        ));
    }
    Ok(ModulusStats {
        limsup,
        liminf,
        scale,
        limsup_norm: limsup / scale,
        liminf_norm: liminf / scale,
    })
}

/// Dyadic scales `2^-k` inside `[min_cells dx, 0.1]`, `min_cells >= 4`.
pub fn dyadic_r_grid(grid: TorusGrid, min_cells: usize) -> Vec<f64> {
    let lo = min_cells.max(4) as f64 * grid.dx();
    (1..60)
        .map(|k| 0.5f64.powi(k))
        .filter(|&r| r >= lo * (1.0 - 1e-12) && r <= 0.1)
        .rev()
        .collect()
}

/// Middle-thirds Cantor set of finite depth, laid on the torus through
/// `u = (x + 1) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CantorSet {
    pub depth: u32,
}

impl CantorSet {
    pub fn contains(&self, u: f64) -> bool {
        let mut y = u;
        for _ in 0..self.depth {
            y *= 3.0;
            let d = y.floor();
            if d == 1.0 {
                return false;
            }
            y -= d;
        }
        true
    }

    pub fn indices(&self, grid: TorusGrid) -> Vec<usize> {
        (0..grid.points())
            .filter(|&i| self.contains((grid.coord(i) + 1.0) / 2.0))
            .collect()
    }

    pub fn dimension(&self) -> f64 {
        2f64.ln() / 3f64.ln()
    }
}

/// Box-counting dimension of `{omega(x) : x in G}` with boxes of side
/// `range * 2^-j` for each `j` in `box_levels`.
pub fn dimension_doubling(snapshot: &Field, set: &CantorSet, box_levels: &[u32]) -> Result<f64> {
    if box_levels.len() < 3 {
        return usage("box counting needs at least 3 scales");
    }
    let idx = set.indices(snapshot.grid());
    if idx.is_empty() {
        return usage("the set has no grid points");
    }
    let image: Vec<f64> = idx.iter().map(|&i| snapshot.values()[i]).collect();
    let lo = image.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = image.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let range = hi - lo;
    if !(range > 0.0) {
        return Ok(0.0);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &level in box_levels {
        let boxes = 1u64 << level;
        let mut hit = vec![false; boxes as usize];
        for &v in &image {
            let b = (((v - lo) / range) * boxes as f64).floor() as u64;
            hit[b.min(boxes - 1) as usize] = true;
        }
        let count = hit.iter().filter(|&&h| h).count() as f64;
        xs.push(level as f64 * 2f64.ln());
        ys.push(count.ln());
    }
    Ok(ols(&xs, &ys).slope)
}

/// Interpolate a profile linearly onto `cfg.grid` and run it for `t_fine`.
pub fn refine_snapshot(
    coarse: &Field,
    cfg: &SolverConfig,
    t_fine: f64,
    stream: &mut NoiseStream,
) -> Result<Field> {
    let cg = coarse.grid();
    let fg = cfg.grid;
    let cv = coarse.values();
    let ratio = cg.dx() / fg.dx();
    let vals: Vec<f64> = (0..fg.points())
        .map(|i| {
            let s = i as f64 / ratio;
            let k = s.floor() as usize;
            let w = s - k as f64;
            let a = cv[k % cg.points()];
            let b = cv[(k + 1) % cg.points()];
            a + w * (b - a)
        })
        .collect();
    let mut u = Field::new(fg, vals)?;
    let mut run = cfg.clone();
    run.snapshot_times.clear();
    run.t_end = t_fine;
    let mut stepper = Stepper::new(&run)?;
    let mut xi = vec![0.0; fg.points()];
    for n in 0..run.steps() {
        stream.fill(&mut xi);
        stepper.step_field(&mut u, &xi, n)?;
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Extinct,
    Persistent,
    Undecided,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Extinct => "extinct",
            Verdict::Persistent => "persistent",
            Verdict::Undecided => "undecided",
        }
    }
}

/// Per-replica thresholds of a sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// `t_end` is the horizon; `lambda` is overridden per point.
    pub solver: SolverConfig,
    pub replicas: usize,
    pub lyapunov_window: (f64, f64),
    pub eps_grid: Vec<f64>,
    /// A replica persists when its occupation of `{L < EPS_FLOOR}` is below
    /// this and its time-averaged `L` exceeds `persist_mean_inf`.
    pub persist_occupation: f64,
    pub persist_mean_inf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub lambda: f64,
    pub slope: f64,
    pub slope_ci_lo: f64,
    pub slope_ci_hi: f64,
    /// Ensemble-mean occupation per eps.
    pub occupation: Vec<(f64, f64)>,
    pub mean_inf: f64,
    pub replicas: usize,
    /// Replicas whose slope interval lies below 0.
    pub extinct_replicas: usize,
    pub persistent_replicas: usize,
    pub verdict: Verdict,
}

struct ReplicaPhase {
    slope: f64,
    ci_hi: f64,
    occupation: Vec<f64>,
    floor_occupation: f64,
    mean_inf: f64,
}

/// Run `replicas` trajectories from `psi0` at every `lambda`, replica `r`
/// using the same noise at every point.
pub fn phase_sweep(
    lambda_grid: &[f64],
    psi0: &Field,
    cfg: &SweepConfig,
    seed: u64,
    threads: usize,
) -> Result<Vec<PhasePoint>> {
    if lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return usage("lambda grid must be increasing");
    }
    if cfg.replicas < 2 {
        return usage("phase sweep needs >= 2 replicas");
    }
    lambda_grid
        .iter()
        .map(|&lambda| phase_point(lambda, psi0, cfg, seed, threads))
        .collect()
}

pub fn phase_point(
    lambda: f64,
    psi0: &Field,
    cfg: &SweepConfig,
    seed: u64,
    threads: usize,
) -> Result<PhasePoint> {
    let mut solver = cfg.solver.clone();
    solver.lambda = lambda;
    let per = run_ensemble(cfg.replicas, threads, |r| {
        let traj = simulate(psi0, &solver, &mut NoiseStream::with_tag(seed, r as u64, 5))?;
        let ly = estimate_lyapunov(&traj, cfg.lyapunov_window)?;
        let occupation = cfg
            .eps_grid
            .iter()
            .map(|&e| time_average_occupation(&traj, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReplicaPhase {
            slope: ly.slope,
            ci_hi: ly.ci_hi,
            occupation,
            floor_occupation: time_average_occupation(&traj, EPS_FLOOR)?,
            mean_inf: time_average(&traj, PathFunctional::Inf, 0.0)?,
        })
    })?;
    let finite: Vec<f64> = per
        .iter()
        .map(|p| p.slope)
        .filter(|s| s.is_finite())
        .collect();
    let (slope, lo, hi) = match finite.len() {
        0 => (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        1 => (finite[0], finite[0], finite[0]),
        _ => {
            let (m, se) = mean_se(&finite);
            (m, m - 2.0 * se, m + 2.0 * se)
        }
    };
    let occupation: Vec<(f64, f64)> = cfg
        .eps_grid
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            (
                e,
                mean(&per.iter().map(|p| p.occupation[k]).collect::<Vec<_>>()),
            )
        })
        .collect();
    let mean_inf = mean(&per.iter().map(|p| p.mean_inf).collect::<Vec<_>>());
    let floor_occ = mean(&per.iter().map(|p| p.floor_occupation).collect::<Vec<_>>());
    let verdict = if hi < -1e-3 {
        Verdict::Extinct
    } else if mean_inf > 10.0 * EPS_FLOOR && floor_occ < cfg.persist_occupation {
        Verdict::Persistent
    } else {
        Verdict::Undecided
    };
    Ok(PhasePoint {
        lambda,
        slope,
        slope_ci_lo: lo,
        slope_ci_hi: hi,
        occupation,
        mean_inf,
        replicas: per.len(),
        extinct_replicas: per.iter().filter(|p| p.ci_hi < 0.0).count(),
        persistent_replicas: per
            .iter()
            .filter(|p| {
                p.floor_occupation < cfg.persist_occupation && p.mean_inf > cfg.persist_mean_inf
            })
            .count(),
        verdict,
    })
}

pub fn phase_csv_header(eps_grid: &[f64]) -> String {
    let mut s = String::from("lambda,slope,slope_ci_lo,slope_ci_hi");
    for e in eps_grid {
        let _ = write!(s, ",occupation@{e:e}");
    }
    s.push_str(",verdict");
    s
}

pub fn phase_csv_row(p: &PhasePoint) -> String {
    let mut s = format!(
        "{:.16e},{:.16e},{:.16e},{:.16e}",
        p.lambda, p.slope, p.slope_ci_lo, p.slope_ci_hi
    );
    for (_, o) in &p.occupation {
        let _ = write!(s, ",{o:.16e}");
    }
    let _ = write!(s, ",{}", p.verdict.name());
    s
}

/// Largest persistent and smallest extinct noise strength, if both occur.
pub fn transition_window(points: &[PhasePoint]) -> Option<(f64, f64)> {
    let last_persistent = points
        .iter()
        .filter(|p| p.verdict == Verdict::Persistent)
        .map(|p| p.lambda)
        .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.max(l))));
    let first_extinct = points
        .iter()
        .filter(|p| p.verdict == Verdict::Extinct)
        .map(|p| p.lambda)
        .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.min(l))));
    Some((last_persistent?, first_extinct?))
}
