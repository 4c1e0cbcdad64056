//! Coupled pairs of solutions: natural, independent, PM and anchored (AM).

use crate::error::{usage, Result};
use crate::noise::{mixing_f, mixing_g, NoiseStream};
use crate::solver::{run_ensemble, SolverConfig, Stepper};
use crate::stats::{mean, mean_se, sorted, tree_sum, variance, wilson_interval};
use crate::torus_field::{haar_integral, holder_seminorm, infimum, sup_distance, supremum, Field};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingKind {
    Natural,
    Independent,
    PM,
    AM,
}

impl CouplingKind {
    /// Number of noise streams the construction consumes.
    pub fn arity(&self) -> usize {
        match self {
            CouplingKind::Natural => 1,
            CouplingKind::Independent | CouplingKind::PM => 2,
            CouplingKind::AM => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CouplingKind::Natural => "natural",
            CouplingKind::Independent => "independent",
            CouplingKind::PM => "pm",
            CouplingKind::AM => "am",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "natural" => Some(Self::Natural),
            "independent" => Some(Self::Independent),
            "pm" => Some(Self::PM),
            "am" => Some(Self::AM),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingState {
    pub psi1: Field,
    pub psi2: Field,
    pub anchor: Option<Field>,
    pub merged: bool,
    pub tau: Option<f64>,
    /// `(t, int (psi1 - psi2))` at the recorded steps.
    pub mass: Vec<(f64, f64)>,
    pub time: f64,
    pub step: u64,
}

impl CouplingState {
    /// Fresh state; the AM anchor starts from `max(psi1, psi2)`.
    pub fn new(psi1: Field, psi2: Field, kind: CouplingKind) -> Result<Self> {
        if psi1.grid() != psi2.grid() {
            return usage("coupled fields live on different grids");
        }
        let anchor = (kind == CouplingKind::AM).then(|| {
            let v = psi1
                .values()
                .iter()
                .zip(psi2.values())
                .map(|(a, b)| a.max(*b))
                .collect();
            Field::from_vec_unchecked(psi1.grid(), v)
        });
        let x0 = mass_gap(&psi1, &psi2);
        Ok(Self {
            psi1,
            psi2,
            anchor,
            merged: false,
            tau: None,
            mass: vec![(0.0, x0)],
            time: 0.0,
            step: 0,
        })
    }

    pub fn sup_gap(&self) -> f64 {
        sup_distance(&self.psi1, &self.psi2).unwrap_or(f64::INFINITY)
    }
}

fn mass_gap(a: &Field, b: &Field) -> f64 {
    let d: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x - y)
        .collect();
    haar_integral(&Field::from_vec_unchecked(a.grid(), d))
}

/// Scratch buffers for [`couple_step`].
#[derive(Debug, Clone)]
pub struct CouplingWorkspace {
    stepper: Stepper,
    xi: [Vec<f64>; 3],
    mixed: Vec<f64>,
}

impl CouplingWorkspace {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        let j = cfg.grid.points();
        Ok(Self {
            stepper: Stepper::new(cfg)?,
            xi: [vec![0.0; j], vec![0.0; j], vec![0.0; j]],
            mixed: vec![0.0; j],
        })
    }

    pub fn config(&self) -> &SolverConfig {
        self.stepper.config()
    }
}

/// `g(lead - follow) xi_lead + f(lead - follow) xi_own`, from pre-step fields.
fn mix_into(out: &mut [f64], lead: &[f64], follow: &[f64], xi_lead: &[f64], xi_own: &[f64]) {
    for i in 0..out.len() {
        let y = lead[i] - follow[i];
        out[i] = mixing_g(y) * xi_lead[i] + mixing_f(y) * xi_own[i];
    }
}

/// Advance the coupled system by one step.
///
/// Once merged, `psi1` moves by its own rule and `psi2` is overwritten with
/// it, so the two stay bit-identical.
pub fn couple_step(
    state: &mut CouplingState,
    kind: CouplingKind,
    streams: &mut [NoiseStream],
    ws: &mut CouplingWorkspace,
) -> Result<()> {
    if streams.len() != kind.arity() {
        return usage(format!(
            "{} coupling needs {} noise streams, got {}",
            kind.name(),
            kind.arity(),
            streams.len()
        ));
    }
    if kind == CouplingKind::AM && state.anchor.is_none() {
        return usage("AM coupling state has no anchor");
    }
    for (s, buf) in streams.iter_mut().zip(ws.xi.iter_mut()) {
        s.fill(buf);
    }
    let n = state.step;
    let [x0, x1, x2] = &ws.xi;
    match kind {
        CouplingKind::Natural => {
            ws.stepper.step_field(&mut state.psi1, x0, n)?;
            if !state.merged {
                ws.stepper.step_field(&mut state.psi2, x0, n)?;
            }
        }
        CouplingKind::Independent => {
            ws.stepper.step_field(&mut state.psi1, x0, n)?;
            if !state.merged {
                ws.stepper.step_field(&mut state.psi2, x1, n)?;
            }
        }
        CouplingKind::PM => {
            if !state.merged {
                mix_into(
                    &mut ws.mixed,
                    state.psi1.values(),
                    state.psi2.values(),
                    x0,
                    x1,
                );
                ws.stepper.step_field(&mut state.psi2, &ws.mixed, n)?;
            }
            ws.stepper.step_field(&mut state.psi1, x0, n)?;
        }
        CouplingKind::AM => {
            let anchor = state.anchor.as_mut().unwrap();
            mix_into(&mut ws.mixed, anchor.values(), state.psi1.values(), x0, x1);
            ws.stepper.step_field(&mut state.psi1, &ws.mixed, n)?;
            if !state.merged {
                mix_into(&mut ws.mixed, anchor.values(), state.psi2.values(), x0, x2);
                ws.stepper.step_field(&mut state.psi2, &ws.mixed, n)?;
            }
            ws.stepper.step_field(anchor, x0, n)?;
        }
    }
    if state.merged {
        state.psi2 = state.psi1.clone();
    }
    state.step += 1;
    state.time = state.step as f64 * ws.config().dt;
    Ok(())
}

/// Snap `psi2` onto `psi1` once their sup distance is within `merge_tol`.
pub fn detect_merge(state: &mut CouplingState, merge_tol: f64) {
    if state.merged {
        return;
    }
    if state.sup_gap() <= merge_tol {
        state.psi2 = state.psi1.clone();
        state.merged = true;
        state.tau = Some(state.time);
    }
}

/// Default merge tolerance for a pair of fields under `cfg`.
///
/// The discrete PM difference does not reach zero: once it is below the
/// one-step noise scale `(lambda Lip U)^2 dt / dx` it fluctuates at that
/// level. The tolerance is the larger of `1e-10 max U` and that floor.
pub fn default_merge_tol(cfg: &SolverConfig, u_max: f64) -> f64 {
    let floor = (cfg.lambda * cfg.diffusion.lip() * u_max).powi(2) * cfg.dt / cfg.grid.dx();
    (1e-10 * u_max).max(MERGE_FLOOR_FACTOR * floor)
}

/// Multiple of the one-step noise floor used by [`default_merge_tol`].
pub const MERGE_FLOOR_FACTOR: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRun {
    pub state: CouplingState,
    /// Space-time points with `psi2 > psi1 + 1e-9` (ordered data only).
    pub ordering_violations: u64,
    pub points_checked: u64,
}

/// Parameters of a coupling run.
#[derive(Debug, Clone)]
pub struct CouplingConfig {
    pub solver: SolverConfig,
    pub t_max: f64,
    /// `None` selects [`default_merge_tol`] at every step.
    pub merge_tol: Option<f64>,
    /// Record the mass gap every this many steps.
    pub mass_stride: u64,
    /// Count `psi2 > psi1 + 1e-9` points while unmerged.
    pub audit_ordering: bool,
}

impl CouplingConfig {
    pub fn new(solver: SolverConfig, t_max: f64) -> Self {
        Self {
            solver,
            t_max,
            merge_tol: None,
            mass_stride: 0,
            audit_ordering: false,
        }
    }
}

/// Streams `(seed, replica, tag)` for the tags the kind consumes.
pub fn coupling_streams(kind: CouplingKind, seed: u64, replica: u64) -> Vec<NoiseStream> {
    (0..kind.arity() as u64)
        .map(|tag| NoiseStream::with_tag(seed, replica, tag))
        .collect()
}

/// Run until merge or `t_max`.
pub fn run_coupling(
    psi1: &Field,
    psi2: &Field,
    kind: CouplingKind,
    cfg: &CouplingConfig,
    streams: &mut [NoiseStream],
) -> Result<CouplingRun> {
    let mut state = CouplingState::new(psi1.clone(), psi2.clone(), kind)?;
    let mut ws = CouplingWorkspace::new(&cfg.solver)?;
    let steps = ((cfg.t_max / cfg.solver.dt) - 1e-9).ceil().max(0.0) as u64;
    let mut violations = 0u64;
    let mut checked = 0u64;
    let tol = |s: &CouplingState| {
        cfg.merge_tol.unwrap_or_else(|| {
            default_merge_tol(&cfg.solver, supremum(&s.psi1).max(supremum(&s.psi2)))
        })
    };
    let m = tol(&state);
    detect_merge(&mut state, m);
    for _ in 0..steps {
        if state.merged {
            break;
        }
        couple_step(&mut state, kind, streams, &mut ws)?;
        if cfg.audit_ordering {
            for (a, b) in state.psi1.values().iter().zip(state.psi2.values()) {
                if *b > *a + 1e-9 {
                    violations += 1;
                }
            }
            checked += state.psi1.len() as u64;
        }
        if cfg.mass_stride > 0 && state.step % cfg.mass_stride == 0 {
            let x = mass_gap(&state.psi1, &state.psi2);
            state.mass.push((state.time, x));
        }
        let m = tol(&state);
        detect_merge(&mut state, m);
    }
    Ok(CouplingRun {
        state,
        ordering_violations: violations,
        points_checked: checked,
    })
}

/// `psi1 = b`, `psi2 = b - delta (1 + cos(pi x)) / 2`; L1 distance `delta`.
pub fn ordered_delta_pair(
    grid: crate::torus_field::TorusGrid,
    base: f64,
    delta: f64,
) -> Result<(Field, Field)> {
    let hi = Field::constant(grid, base);
    let lo = Field::from_fn(grid, |x| base - delta * (1.0 + (PI * x).cos()) / 2.0)?;
    Ok((hi, lo))
}

/// `psi1 = b`, `psi2 = b + delta (pi/4) cos(pi x)`; L1 distance `delta`, unordered.
pub fn crossing_delta_pair(
    grid: crate::torus_field::TorusGrid,
    base: f64,
    delta: f64,
) -> Result<(Field, Field)> {
    let a = Field::constant(grid, base);
    let b = Field::from_fn(grid, |x| base + delta * PI / 4.0 * (PI * x).cos())?;
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassAudit {
    pub times: Vec<f64>,
    /// Replica mean of `exp(-t) X(t)` and its standard error.
    pub mean_y: Vec<f64>,
    pub se_y: Vec<f64>,
    pub min_x: f64,
    pub monotone: bool,
}

/// Check that `Y(t) = exp(-t) X(t)` has a non-increasing replica mean
/// (within two standard errors of the difference) and that `X >= -tol`.
pub fn mass_supermartingale_audit(runs: &[CouplingState], tol: f64) -> Result<MassAudit> {
    if runs.is_empty() {
        return usage("mass audit needs at least one run");
    }
    let len = runs.iter().map(|r| r.mass.len()).min().unwrap();
    let times: Vec<f64> = runs[0].mass[..len].iter().map(|m| m.0).collect();
    let mut mean_y = Vec::with_capacity(len);
    let mut se_y = Vec::with_capacity(len);
    let mut ys_at: Vec<Vec<f64>> = Vec::with_capacity(len);
    let mut min_x = f64::INFINITY;
    for k in 0..len {
        let ys: Vec<f64> = runs
            .iter()
            .map(|r| {
                let (t, x) = r.mass[k];
                min_x = min_x.min(x);
                (-t).exp() * x
            })
            .collect();
        let (m, se) = if ys.len() > 1 {
            mean_se(&ys)
        } else {
            (ys[0], 0.0)
        };
        mean_y.push(m);
        se_y.push(if se.is_finite() { se } else { 0.0 });
        ys_at.push(ys);
    }
    let mut monotone = min_x >= -tol;
    for a in 0..len {
        for b in a + 1..len {
            let diff: Vec<f64> = ys_at[b]
                .iter()
                .zip(&ys_at[a])
                .map(|(y1, y0)| y1 - y0)
                .collect();
            let (d, se) = if diff.len() > 1 {
                mean_se(&diff)
            } else {
                (diff[0], 0.0)
            };
            if d > 2.0 * se + 1e-12 {
                monotone = false;
            }
        }
    }
    Ok(MassAudit {
        times,
        mean_y,
        se_y,
        min_x,
        monotone,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessRow {
    pub delta: f64,
    pub successes: usize,
    pub trials: usize,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Per-replica merge time (`None` = no merge by `t_max`).
    pub taus: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessTable {
    pub kind: CouplingKind,
    pub rows: Vec<SuccessRow>,
    /// Success never rises with `delta` beyond the 95% Wilson intervals.
    pub monotone: bool,
}

/// Merge probability by `t_max` for each initial L1 distance.
///
/// PM uses [`ordered_delta_pair`], AM uses [`crossing_delta_pair`]. Replica
/// `r` reuses the same streams at every `delta`.
pub fn coupling_success_experiment(
    delta_grid: &[f64],
    kind: CouplingKind,
    base: f64,
    cfg: &CouplingConfig,
    replicas: usize,
    seed: u64,
    threads: usize,
) -> Result<SuccessTable> {
    if delta_grid.iter().any(|&d| d < 0.0) {
        return usage("delta grid must be non-negative");
    }
    if !matches!(kind, CouplingKind::PM | CouplingKind::AM) {
        return usage("success experiment supports PM and AM");
    }
    let mut rows = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        let (a, b) = match kind {
            CouplingKind::PM => ordered_delta_pair(cfg.solver.grid, base, delta)?,
            _ => crossing_delta_pair(cfg.solver.grid, base, delta)?,
        };
        let taus = run_ensemble(replicas, threads, |r| {
            let mut streams = coupling_streams(kind, seed, r as u64);
            Ok(run_coupling(&a, &b, kind, cfg, &mut streams)?.state.tau)
        })?;
        let successes = taus.iter().filter(|t| t.is_some()).count();
        let (ci_lo, ci_hi) = wilson_interval(successes, replicas, 1.96);
        rows.push(SuccessRow {
            delta,
            successes,
            trials: replicas,
            p_hat: successes as f64 / replicas.max(1) as f64,
            ci_lo,
            ci_hi,
            taus,
        });
    }
    let mut monotone = true;
    for a in &rows {
        for b in &rows {
            if a.delta > b.delta && a.ci_lo > b.ci_hi {
                monotone = false;
            }
        }
    }
    Ok(SuccessTable {
        kind,
        rows,
        monotone,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalComparison {
    pub time: f64,
    pub coupled_mean: f64,
    pub reference_mean: f64,
    pub mean_z: f64,
    pub coupled_var: f64,
    pub reference_var: f64,
    pub var_z: f64,
    /// Two-proportion z for `L_t` below the pooled median.
    pub median_z: f64,
    pub agree: bool,
}

/// Compare the law of the second coupled field with a plain run of the same
/// start on independent noise, via `U_t` mean and variance and the pooled
/// median of `L_t`, each at 3 standard errors.
pub fn marginal_law_check(
    psi1: &Field,
    psi2: &Field,
    kind: CouplingKind,
    solver: &SolverConfig,
    times: &[f64],
    replicas: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<MarginalComparison>> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let dt = solver.dt;
    let idx: Vec<u64> = times.iter().map(|t| (t / dt).round() as u64).collect();
    let coupled = run_ensemble(replicas, threads, |r| {
        let mut streams = coupling_streams(kind, seed, r as u64);
        let mut state = CouplingState::new(psi1.clone(), psi2.clone(), kind)?;
        let mut ws = CouplingWorkspace::new(solver)?;
        let mut out = Vec::new();
        let last = ((t_max / dt) - 1e-9).ceil() as u64;
        for n in 1..=last {
            couple_step(&mut state, kind, &mut streams, &mut ws)?;
            if idx.contains(&n) {
                out.push((supremum(&state.psi2), infimum(&state.psi2)));
            }
        }
        Ok(out)
    })?;
    let reference = run_ensemble(replicas, threads, |r| {
        let mut stream = NoiseStream::with_tag(seed ^ 0x5EED_0F_7E57, r as u64, 15);
        let mut st = Stepper::new(solver)?;
        let mut u = psi2.clone();
        let mut xi = vec![0.0; u.len()];
        let mut out = Vec::new();
        let last = ((t_max / dt) - 1e-9).ceil() as u64;
        for n in 1..=last {
            stream.fill(&mut xi);
            st.step_field(&mut u, &xi, n - 1)?;
            if idx.contains(&n) {
                out.push((supremum(&u), infimum(&u)));
            }
        }
        Ok(out)
    })?;
    let mut rows = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let cu: Vec<f64> = coupled.iter().map(|o| o[k].0).collect();
        let ru: Vec<f64> = reference.iter().map(|o| o[k].0).collect();
        let cl: Vec<f64> = coupled.iter().map(|o| o[k].1).collect();
        let rl: Vec<f64> = reference.iter().map(|o| o[k].1).collect();
        let (cm, cse) = mean_se(&cu);
        let (rm, rse) = mean_se(&ru);
        let mean_z = (cm - rm) / (cse * cse + rse * rse).sqrt().max(1e-300);
        let var_se = |xs: &[f64]| {
            let m = mean(xs);
            let v = variance(xs);
            let m4 = mean(&xs.iter().map(|x| (x - m).powi(4)).collect::<Vec<_>>());
            ((m4 - v * v) / xs.len() as f64).max(0.0).sqrt()
        };
        let (cv, rv) = (variance(&cu), variance(&ru));
        let var_z = (cv - rv)
            / (var_se(&cu).powi(2) + var_se(&ru).powi(2))
                .sqrt()
                .max(1e-300);
        let mut pooled = cl.clone();
        pooled.extend_from_slice(&rl);
        let med = crate::stats::quantile_sorted(&sorted(&pooled), 0.5);
        let frac = |xs: &[f64]| xs.iter().filter(|&&x| x < med).count() as f64 / xs.len() as f64;
        let (pc, pr) = (frac(&cl), frac(&rl));
        let pp = 0.5 * (pc + pr);
        let n = replicas as f64;
        let median_z = (pc - pr) / (pp * (1.0 - pp) * 2.0 / n).sqrt().max(1e-300);
        let agree = mean_z.abs() <= 3.0 && var_z.abs() <= 3.0 && median_z.abs() <= 3.0;
        rows.push(MarginalComparison {
            time: t,
            coupled_mean: cm,
            reference_mean: rm,
            mean_z,
            coupled_var: cv,
            reference_var: rv,
            var_z,
            median_z,
            agree,
        });
    }
    Ok(rows)
}

/// Parameters of the regeneration schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridParams {
    /// Length of each independent phase.
    pub t0: f64,
    /// Length of each AM phase.
    pub t1: f64,
    /// Lower level of the good set.
    pub c0: f64,
    /// Holder bound of the good set.
    pub big_c0: f64,
    pub alpha: f64,
}

impl Default for HybridParams {
    fn default() -> Self {
        Self {
            t0: 0.5,
            t1: 1.0,
            c0: 0.1,
            big_c0: 10.0,
            alpha: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutcome {
    pub merged: bool,
    pub tau: Option<f64>,
    pub cycles: usize,
    pub time: f64,
}

fn in_good_set(f: &Field, p: &HybridParams) -> bool {
    let lags: Vec<usize> = (0..)
        .map(|k| 1usize << k)
        .take_while(|&h| h <= f.len() / 2)
        .collect();
    infimum(f) >= p.c0
        && holder_seminorm(f, p.alpha, &lags)
            .map(|h| h <= p.big_c0)
            .unwrap_or(false)
}

/// Regeneration schedule: natural coupling until both fields are in the
/// good set, then an independent phase of length `t0`, then an AM phase of
/// length `t1` started from the current pair; repeat until merge or
/// `max_time`.
pub fn hybrid_regeneration(
    psi1: &Field,
    psi2: &Field,
    params: &HybridParams,
    cfg: &CouplingConfig,
    max_time: f64,
    seed: u64,
    replica: u64,
) -> Result<HybridOutcome> {
    if !(params.big_c0 > 3.0 * params.c0) {
        return usage("hybrid schedule needs C0 > 3 c0");
    }
    let dt = cfg.solver.dt;
    let mut streams: Vec<NoiseStream> = (0..3)
        .map(|tag| NoiseStream::with_tag(seed, replica, tag))
        .collect();
    let mut ws = CouplingWorkspace::new(&cfg.solver)?;
    let mut a = psi1.clone();
    let mut b = psi2.clone();
    let mut time = 0.0;
    let mut step = 0u64;
    let mut cycles = 0;
    let sync = |streams: &mut [NoiseStream], step: u64| {
        streams.iter_mut().for_each(|s| s.seek(step));
    };
    let tol = |s: &CouplingState| {
        cfg.merge_tol.unwrap_or_else(|| {
            default_merge_tol(&cfg.solver, supremum(&s.psi1).max(supremum(&s.psi2)))
        })
    };
    while time < max_time {
        // natural phase
        let mut st = CouplingState::new(a.clone(), b.clone(), CouplingKind::Natural)?;
        while !(in_good_set(&st.psi1, params) && in_good_set(&st.psi2, params)) && time < max_time {
            st.step = step;
            sync(&mut streams, step);
            couple_step(&mut st, CouplingKind::Natural, &mut streams[..1], &mut ws)?;
            step += 1;
            time = step as f64 * dt;
            let m = tol(&st);
            detect_merge(&mut st, m);
            if st.merged {
                return Ok(HybridOutcome {
                    merged: true,
                    tau: Some(time),
                    cycles,
                    time,
                });
            }
        }
        // independent phase
        let mut st = CouplingState::new(st.psi1, st.psi2, CouplingKind::Independent)?;
        let end = time + params.t0;
        while time < end.min(max_time) {
            st.step = step;
            sync(&mut streams, step);
            couple_step(
                &mut st,
                CouplingKind::Independent,
                &mut streams[..2],
                &mut ws,
            )?;
            step += 1;
            time = step as f64 * dt;
        }
        // anchored phase
        let mut st = CouplingState::new(st.psi1, st.psi2, CouplingKind::AM)?;
        let end = time + params.t1;
        while time < end.min(max_time) {
            st.step = step;
            sync(&mut streams, step);
            couple_step(&mut st, CouplingKind::AM, &mut streams, &mut ws)?;
            step += 1;
            time = step as f64 * dt;
            let m = tol(&st);
            detect_merge(&mut st, m);
            if st.merged {
                return Ok(HybridOutcome {
                    merged: true,
                    tau: Some(time),
                    cycles: cycles + 1,
                    time,
                });
            }
        }
        a = st.psi1;
        b = st.psi2;
        cycles += 1;
    }
    Ok(HybridOutcome {
        merged: false,
        tau: None,
        cycles,
        time,
    })
}

/// Mean of the recorded mass series (used by reports).
pub fn mean_mass(state: &CouplingState) -> f64 {
    let xs: Vec<f64> = state.mass.iter().map(|m| m.1).collect();
    tree_sum(&xs) / xs.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_field::{l1_distance, TorusGrid};

    fn cfg(j: usize, lambda: f64) -> SolverConfig {
        SolverConfig::kpp(j, lambda).unwrap()
    }

    #[test]
    fn pm_with_equal_fields_stays_equal() {
        let c = cfg(16, 0.3);
        let f = Field::constant(c.grid, 0.5);
        let mut st = CouplingState::new(f.clone(), f, CouplingKind::PM).unwrap();
        let mut ws = CouplingWorkspace::new(&c).unwrap();
        let mut streams = coupling_streams(CouplingKind::PM, 1, 0);
        for _ in 0..200 {
            couple_step(&mut st, CouplingKind::PM, &mut streams, &mut ws).unwrap();
        }
        assert_eq!(st.psi1, st.psi2);
    }

    #[test]
    fn natural_with_equal_starts_is_identical() {
        let c = cfg(16, 0.3);
        let f = Field::constant(c.grid, 0.5);
        let mut st = CouplingState::new(f.clone(), f, CouplingKind::Natural).unwrap();
        let mut ws = CouplingWorkspace::new(&c).unwrap();
        let mut streams = coupling_streams(CouplingKind::Natural, 1, 0);
        for _ in 0..200 {
            couple_step(&mut st, CouplingKind::Natural, &mut streams, &mut ws).unwrap();
        }
        assert_eq!(st.psi1, st.psi2);
    }

    #[test]
    fn independent_copies_diverge() {
        let c = cfg(16, 0.3);
        let f = Field::constant(c.grid, 0.5);
        let mut apart = 0;
        for r in 0..100 {
            let mut st =
                CouplingState::new(f.clone(), f.clone(), CouplingKind::Independent).unwrap();
            let mut ws = CouplingWorkspace::new(&c).unwrap();
            let mut streams = coupling_streams(CouplingKind::Independent, 2, r);
            for _ in 0..100 {
                couple_step(&mut st, CouplingKind::Independent, &mut streams, &mut ws).unwrap();
            }
            if l1_distance(&st.psi1, &st.psi2).unwrap() > 0.0 {
                apart += 1;
            }
        }
        assert!(apart >= 99);
    }

    #[test]
    fn arity_is_checked() {
        let c = cfg(8, 0.3);
        let f = Field::constant(c.grid, 0.5);
        let mut st = CouplingState::new(f.clone(), f, CouplingKind::AM).unwrap();
        let mut ws = CouplingWorkspace::new(&c).unwrap();
        let mut two = coupling_streams(CouplingKind::PM, 1, 0);
        assert!(couple_step(&mut st, CouplingKind::AM, &mut two, &mut ws).is_err());
    }

    #[test]
    fn merge_examples() {
        let c = cfg(16, 0.3);
        let f = Field::constant(c.grid, 0.5);
        let mut st = CouplingState::new(f.clone(), f, CouplingKind::Independent).unwrap();
        detect_merge(&mut st, 0.0);
        assert!(st.merged);
        assert_eq!(st.tau, Some(0.0));
        let mut ws = CouplingWorkspace::new(&c).unwrap();
        let mut streams = coupling_streams(CouplingKind::Independent, 3, 0);
        for _ in 0..10_000 {
            couple_step(&mut st, CouplingKind::Independent, &mut streams, &mut ws).unwrap();
            assert_eq!(st.psi1.values(), st.psi2.values());
        }
    }

    #[test]
    fn mass_audit_on_equal_fields() {
        let c = cfg(16, 0.2);
        let f = Field::constant(c.grid, 0.5);
        let mut cc = CouplingConfig::new(c, 0.5);
        cc.merge_tol = Some(-1.0);
        cc.mass_stride = 64;
        let runs: Vec<CouplingState> = (0..4)
            .map(|r| {
                let mut s = coupling_streams(CouplingKind::PM, 1, r);
                run_coupling(&f, &f, CouplingKind::PM, &cc, &mut s)
                    .unwrap()
                    .state
            })
            .collect();
        let audit = mass_supermartingale_audit(&runs, 1e-12).unwrap();
        assert!(audit.mean_y.iter().all(|&y| y == 0.0));
        assert!(audit.monotone);
    }

    #[test]
    fn deterministic_mass_decays() {
        let c = cfg(32, 0.0);
        let (hi, lo) = ordered_delta_pair(c.grid, 0.5, 0.2).unwrap();
        let mut cc = CouplingConfig::new(c, 2.0);
        cc.merge_tol = Some(-1.0);
        cc.mass_stride = 16;
        let mut s = coupling_streams(CouplingKind::PM, 1, 0);
        let run = run_coupling(&hi, &lo, CouplingKind::PM, &cc, &mut s).unwrap();
        let ys: Vec<f64> = run.state.mass.iter().map(|(t, x)| (-t).exp() * x).collect();
        assert!(ys.windows(2).all(|w| w[1] < w[0]));
        assert!(run.state.mass.iter().all(|m| m.1 > 0.0));
    }

    #[test]
    fn delta_pairs_have_requested_l1_distance() {
        let g = TorusGrid::new(256).unwrap();
        let (a, b) = ordered_delta_pair(g, 0.5, 0.01).unwrap();
        assert!((l1_distance(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        let (a, b) = crossing_delta_pair(g, 0.5, 0.01).unwrap();
        assert!((l1_distance(&a, &b).unwrap() - 0.01).abs() < 1e-5);
    }

    #[test]
    fn zero_delta_merges_at_time_zero() {
        let c = cfg(16, 0.2);
        let cc = CouplingConfig::new(c, 0.1);
        let t = coupling_success_experiment(&[0.0], CouplingKind::AM, 0.5, &cc, 5, 1, 1).unwrap();
        assert_eq!(t.rows[0].successes, 5);
        assert!(t.rows[0].taus.iter().all(|x| *x == Some(0.0)));
    }
}
