//! Command-line orchestration.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! blow-up, stage timeout or I/O failure, 4 failed `--check`. Errors print a
//! single `error kind=<kind> msg=<text>` line on stderr.

use crate::appendix_kit::{run_appendix_battery, BatterySize};
use crate::chain::{run_embedded_chain, run_ideal_chain, ChainConfig};
use crate::config::{Config, KEYS};
use crate::couplings::{
    coupling_streams, crossing_delta_pair, ordered_delta_pair, run_coupling, CouplingConfig,
    CouplingKind,
};
use crate::ergodics::{
    kb_sample, lower_tail_curve, phase_csv_header, phase_csv_row, phase_point, summary_csv,
    SweepConfig, Verdict,
};
use crate::error::{Error, Result};
use crate::heat_kernel::{kernel, kernel_fourier, kernel_image_sum, KernelEvalConfig};
use crate::noise::{NoiseStream, RNG_IDENTITY};
use crate::quad::integrate;
use crate::reaction::compute_level_M;
use crate::solver::{run_ensemble, simulate};
use crate::stats::wilson_interval;
use crate::torus_field::{csv_header, csv_row, infimum};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

/// `git describe` of the build, or the package version outside a checkout.
pub const BUILD: &str = match option_env!("RDLAB_BUILD") {
    Some(b) => b,
    None => env!("CARGO_PKG_VERSION"),
};

#[derive(Debug, Parser)]
#[command(
    name = "rdlab",
    version,
    about = "Stochastic reaction-diffusion laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cross-check the image-sum and theta-series heat kernels.
    Kernel(Common),
    /// Simulate one path; write observables and snapshots.
    Simulate(Common),
    /// Lyapunov slope and occupation over a grid of noise strengths.
    Sweep(Common),
    /// Coupling merge experiment over initial distances.
    Couple(Common),
    /// Ideal or SPDE-embedded reflected chain.
    Chain(ChainArgs),
    /// Empirical invariant-measure statistics from one long run.
    Measure(Common),
    /// Validator battery for the auxiliary probability estimates.
    Appendix(Common),
    /// List every configuration key with its default.
    Keys,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Exit with code 4 when the run's acceptance check fails.
    #[arg(long)]
    check: bool,
    /// Reuse finished sweep points whose digest matches.
    #[arg(long)]
    resume: bool,
    /// Override a key, `--set key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
struct ChainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = ["ideal", "embedded"])]
    mode: Option<String>,
}

/// Result of a finished experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    /// `--check` was requested and failed for this reason.
    CheckFailed(String),
}

/// Map an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BlowUp { .. } | Error::StageTimeout { .. } | Error::Io(_) => 3,
        _ => 2,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Usage(_) => "usage",
        Error::Domain(_) => "domain",
        Error::Precondition(_) => "precondition",
        Error::Config(_) => "config",
        Error::BlowUp { .. } => "blow_up",
        Error::StageTimeout { .. } => "stage_timeout",
        Error::Io(_) => "io",
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::CheckFailed(why)) => {
            eprintln!("check failed: {}", one_line(&why));
            4
        }
        Err(e) => {
            let msg = match &e {
                Error::Usage(m) | Error::Domain(m) | Error::Precondition(m) | Error::Config(m) => {
                    m.clone()
                }
                Error::Io(io) => io.to_string(),
                other => other.to_string(),
            };
            eprintln!("error kind={} msg={}", error_kind(&e), one_line(&msg));
            exit_code(&e)
        }
    }
}

fn execute(cmd: Command) -> Result<Outcome> {
    let (name, common, mode) = match cmd {
        Command::Keys => {
            for k in KEYS {
                println!(
                    "{:<32} {:<20} {}",
                    k.name,
                    format!("[{}]", k.default),
                    k.help
                );
            }
            return Ok(Outcome::Pass);
        }
        Command::Kernel(c) => ("kernel", c, None),
        Command::Simulate(c) => ("simulate", c, None),
        Command::Sweep(c) => ("sweep", c, None),
        Command::Couple(c) => ("couple", c, None),
        Command::Chain(c) => ("chain", c.common, c.mode),
        Command::Measure(c) => ("measure", c, None),
        Command::Appendix(c) => ("appendix", c, None),
    };
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for kv in &common.set {
        cfg.apply_override(kv)?;
    }
    if let Some(s) = common.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(r) = common.replicas {
        cfg.set("replicas", &r.to_string())?;
    }
    if let Some(m) = mode {
        cfg.set("chain.mode", &m)?;
    }
    let threads = common
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    let mut exp = Experiment {
        name,
        seed: cfg.u64("seed")?,
        replicas: cfg.usize("replicas")?,
        cfg,
        out: common.out.clone(),
        threads,
        check: common.check,
        resume: common.resume,
        started: Instant::now(),
        meta: BTreeMap::new(),
        files: Vec::new(),
    };
    std::fs::create_dir_all(&exp.out)?;
    exp.write("config.echo", &exp.echo_file())?;
    let outcome = match name {
        "kernel" => exp.kernel(),
        "simulate" => exp.simulate(),
        "sweep" => exp.sweep(),
        "couple" => exp.couple(),
        "chain" => exp.chain(),
        "measure" => exp.measure(),
        _ => exp.appendix(),
    }?;
    exp.write_meta(&outcome)?;
    Ok(if exp.check { outcome } else { Outcome::Pass })
}

struct Experiment {
    name: &'static str,
    cfg: Config,
    seed: u64,
    replicas: usize,
    out: PathBuf,
    threads: usize,
    check: bool,
    resume: bool,
    started: Instant,
    meta: BTreeMap<String, Value>,
    files: Vec<String>,
}

fn verdict(pass: bool, why: impl FnOnce() -> String) -> Outcome {
    if pass {
        Outcome::Pass
    } else {
        Outcome::CheckFailed(why())
    }
}

impl Experiment {
    fn echo_file(&self) -> String {
        format!(
            "# rdlab {} {}\n# rng: {}\n{}",
            self.name,
            BUILD,
            RNG_IDENTITY,
            self.cfg.echo(self.name)
        )
    }

    fn write(&mut self, file: &str, contents: &str) -> Result<()> {
        std::fs::write(self.out.join(file), contents)?;
        if !self.files.iter().any(|f| f == file) {
            self.files.push(file.to_string());
        }
        Ok(())
    }

    fn note(&mut self, key: &str, v: impl Into<Value>) {
        self.meta.insert(key.to_string(), v.into());
    }

    fn write_meta(&mut self, outcome: &Outcome) -> Result<()> {
        let mut files = self.files.clone();
        files.push("meta.json".into());
        let check = match outcome {
            _ if !self.check => Value::Null,
            Outcome::Pass => json!({ "pass": true }),
            Outcome::CheckFailed(why) => json!({ "pass": false, "reason": why }),
        };
        let meta = json!({
            "subcommand": self.name,
            "config_digest": self.cfg.digest(self.name),
            "seed": self.seed,
            "replicas": self.replicas,
            "rng": RNG_IDENTITY,
            "build": BUILD,
            "threads": self.threads,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "outputs": files,
            "check": check,
            "details": self.meta,
        });
        let text = serde_json::to_string_pretty(&meta).expect("meta serialises") + "\n";
        self.write("meta.json", &text)
    }

    fn kernel(&mut self) -> Result<Outcome> {
        let c = &self.cfg;
        let modes = match c.get("kernel.fourier_modes") {
            "auto" => c.usize("grid.points")? / 2,
            _ => c.usize("kernel.fourier_modes")?,
        };
        let kcfg = KernelEvalConfig::new(
            c.usize("kernel.image_terms")?,
            modes,
            c.f64("kernel.crossover")?,
        )?;
        let times = c.list("kernel.times")?;
        let n = c.usize("kernel.points")?;
        if n == 0 {
            return Err(Error::Config("kernel.points must be >= 1".into()));
        }
        let tol = c.f64("kernel.tolerance")?;
        let lattice: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
        let mut csv = String::from("t,x,y,image,fourier,abs_err\n");
        let mut max_err = 0.0f64;
        let mut max_mass = 0.0f64;
        for &t in &times {
            for &x in &lattice {
                for &y in &lattice {
                    let a = kernel_image_sum(t, x, y, &kcfg)?;
                    let b = kernel_fourier(t, x, y, &kcfg)?;
                    let e = (a - b).abs();
                    max_err = max_err.max(e);
                    let _ = writeln!(csv, "{t:.16e},{x:.16e},{y:.16e},{a:.16e},{b:.16e},{e:.16e}");
                }
            }
            let mass = integrate(
                |y| kernel(t, 0.0, y, &kcfg).unwrap_or(f64::NAN),
                -1.0,
                1.0,
                1e-13,
            );
            max_mass = max_mass.max((mass - 1.0).abs());
        }
        self.write("kernel.csv", &csv)?;
        self.note("max_abs_err", max_err);
        self.note("max_mass_residual", max_mass);
        Ok(verdict(max_err <= tol && max_mass <= 1e-10, || {
            format!("max |image - fourier| = {max_err:e} (tolerance {tol:e}), mass residual {max_mass:e}")
        }))
    }

    fn simulate(&mut self) -> Result<Outcome> {
        let solver = self.cfg.solver()?;
        let psi0 = self.cfg.initial_field()?;
        let replica = self.cfg.u64("simulate.replica")?;
        let traj = simulate(&psi0, &solver, &mut NoiseStream::new(self.seed, replica))?;
        let mut obs = String::from("t,L,U,mean\n");
        for i in 0..traj.times.len() {
            let _ = writeln!(
                obs,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                traj.times[i], traj.inf[i], traj.sup[i], traj.mean[i]
            );
        }
        let mut snaps = csv_header(solver.grid);
        snaps.push('\n');
        for (t, f) in &traj.snapshots {
            snaps.push_str(&csv_row(*t, f));
            snaps.push('\n');
        }
        self.write("observables.csv", &obs)?;
        self.write("snapshots.csv", &snaps)?;
        self.note("solver_digest", traj.config_digest.clone());
        let lowest = traj
            .inf
            .iter()
            .copied()
            .chain(traj.snapshots.iter().map(|(_, f)| infimum(f)))
            .fold(f64::INFINITY, f64::min);
        self.note("min_inf", lowest);
        Ok(verdict(!solver.clamp_nonnegative || lowest >= 0.0, || {
            format!("negative value {lowest:e} with the clamp on")
        }))
    }

    fn sweep(&mut self) -> Result<Outcome> {
        let c = &self.cfg;
        let t_end = c.f64("sweep.t_end")?;
        let solver = c.solver()?.with_t_end(t_end).with_snapshots(Vec::new());
        let start = c.auto_f64("sweep.window_start")?.unwrap_or(t_end / 5.0);
        let eps = c.list("sweep.eps")?;
        let lambdas = c.list("sweep.lambdas")?;
        if lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sweep.lambdas must be increasing".into()));
        }
        if self.replicas < 2 {
            return Err(Error::Config("sweep needs replicas >= 2".into()));
        }
        let scfg = SweepConfig {
            solver: solver.clone(),
            replicas: self.replicas,
            lyapunov_window: (start, t_end),
            eps_grid: eps.clone(),
            persist_occupation: c.f64("sweep.persist_occupation")?,
            persist_mean_inf: c.f64("sweep.persist_mean_inf")?,
        };
        let psi0 = c.initial_field()?;
        // Every point is keyed by the echo without the lambda list.
        let base: String = c
            .echo("sweep")
            .lines()
            .filter(|l| !l.starts_with("sweep.lambdas"))
            .map(|l| format!("{l}\n"))
            .collect();
        let point_digest = |lambda: f64| {
            hex::encode(Sha256::digest(
                format!("{base}point = {lambda:.16e}\n").as_bytes(),
            ))
        };
        let ledger_path = self.out.join("phase.points");
        let mut done: BTreeMap<String, String> = BTreeMap::new();
        if self.resume {
            if let Ok(text) = std::fs::read_to_string(&ledger_path) {
                for line in text.lines() {
                    if let Some((d, row)) = line.split_once(' ') {
                        done.insert(d.to_string(), row.to_string());
                    }
                }
            }
        }
        let mut ledger = String::new();
        let mut rows = Vec::with_capacity(lambdas.len());
        let mut resumed = 0usize;
        for &lambda in &lambdas {
            let d = point_digest(lambda);
            let row = match done.get(&d) {
                Some(r) => {
                    resumed += 1;
                    r.clone()
                }
                None => phase_csv_row(&phase_point(lambda, &psi0, &scfg, self.seed, self.threads)?),
            };
            let _ = writeln!(ledger, "{d} {row}");
            // Persist progress after every point so an interrupted sweep can resume.
            self.write("phase.points", &ledger)?;
            rows.push(row);
        }
        let mut csv = phase_csv_header(&eps);
        csv.push('\n');
        for r in &rows {
            csv.push_str(r);
            csv.push('\n');
        }
        self.write("phase.csv", &csv)?;
        self.note("resumed_points", resumed);
        // No extinct point may sit below a persistent one.
        let verdicts: Vec<&str> = rows
            .iter()
            .map(|r| r.rsplit(',').next().unwrap_or(""))
            .collect();
        let first_extinct = verdicts.iter().position(|v| *v == Verdict::Extinct.name());
        let last_persistent = verdicts
            .iter()
            .rposition(|v| *v == Verdict::Persistent.name());
        let ordered = match (first_extinct, last_persistent) {
            (Some(e), Some(p)) => p < e,
            _ => true,
        };
        Ok(verdict(ordered, || {
            "an extinct point lies below a persistent one".to_string()
        }))
    }

    fn couple(&mut self) -> Result<Outcome> {
        let c = &self.cfg;
        let kind = CouplingKind::parse(c.get("couple.kind")).ok_or_else(|| {
            Error::Config(format!(
                "couple.kind: expected natural, independent, PM or AM, got '{}'",
                c.get("couple.kind")
            ))
        })?;
        let deltas = c.list("couple.deltas")?;
        if deltas.iter().any(|&d| d < 0.0) {
            return Err(Error::Config("couple.deltas must be >= 0".into()));
        }
        let base = c.f64("couple.base")?;
        let mut cc = CouplingConfig::new(c.solver()?, c.f64("couple.t_max")?);
        cc.merge_tol = c.auto_f64("couple.merge_tol")?;
        let grid = cc.solver.grid;
        let mut csv = String::from("replica,kind,delta,tau_or_timeout,merged\n");
        let mut counts = Vec::with_capacity(deltas.len());
        for &delta in &deltas {
            let (a, b) = match kind {
                CouplingKind::AM => crossing_delta_pair(grid, base, delta)?,
                _ => ordered_delta_pair(grid, base, delta)?,
            };
            let taus = run_ensemble(self.replicas, self.threads, |r| {
                let mut streams = coupling_streams(kind, self.seed, r as u64);
                Ok(run_coupling(&a, &b, kind, &cc, &mut streams)?.state.tau)
            })?;
            for (r, tau) in taus.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{r},{},{delta:.16e},{:.16e},{}",
                    kind.name(),
                    tau.unwrap_or(cc.t_max),
                    tau.is_some()
                );
            }
            counts.push((delta, taus.iter().filter(|t| t.is_some()).count()));
        }
        self.write("coupling.csv", &csv)?;
        let n = self.replicas;
        let ci: Vec<(f64, f64, f64)> = counts
            .iter()
            .map(|&(d, s)| {
                let (lo, hi) = wilson_interval(s, n, 1.96);
                (d, lo, hi)
            })
            .collect();
        let monotone = ci
            .iter()
            .all(|a| ci.iter().all(|b| !(a.0 > b.0 && a.1 > b.2)));
        self.note(
            "success",
            counts
                .iter()
                .map(|&(d, s)| json!({ "delta": d, "merged": s }))
                .collect::<Vec<_>>(),
        );
        Ok(verdict(monotone, || {
            "merge probability rises with the initial distance".to_string()
        }))
    }

    fn chain(&mut self) -> Result<Outcome> {
        let c = &self.cfg;
        let m = match c.get("chain.m") {
            "auto" => compute_level_M(&c.potential()?)?,
            v => v
                .parse::<i32>()
                .map_err(|_| Error::Config(format!("chain.m: expected an integer, got '{v}'")))?,
        };
        let mut stream = NoiseStream::new(self.seed, 0);
        match c.get("chain.mode") {
            "ideal" => {
                let p = c.f64("chain.p_up")?;
                let cc = ChainConfig::ideal(m, p)?;
                let rec = run_ideal_chain(&cc, c.usize("chain.steps")?, &mut stream)?;
                self.write("chain.csv", &rec.to_csv())?;
                let n = rec.steps() as f64;
                let up = rec.up_fraction();
                let ratio = rec.alpha_ratio(rec.alpha.len());
                self.note("up_fraction", up);
                self.note("hits", rec.alpha.len());
                self.note("alpha_ratio", ratio);
                let drift_ok = (up - p).abs() <= 4.0 * (p * (1.0 - p) / n).sqrt();
                let ratio_ok = ratio.is_none_or(|r| (0.617..=3.05).contains(&r));
                Ok(verdict(drift_ok && ratio_ok, || {
                    format!("up fraction {up} vs p {p}, alpha ratio {ratio:?}")
                }))
            }
            "embedded" => {
                let mut cc = ChainConfig::embedded(m, c.solver()?)?;
                cc.stage_timeout = c.f64("chain.stage_timeout")?;
                let stages = c.usize("chain.stages")?;
                cc.max_stages = stages;
                let rec = run_embedded_chain(&cc, stages, &mut stream)?;
                self.write("chain.csv", &rec.to_csv())?;
                let n = rec.steps() as f64;
                let up = rec.up_fraction();
                self.note("up_fraction", up);
                self.note("m", m);
                let floor = 2.0 / 3.0 - 2.0 * (up * (1.0 - up) / n).sqrt();
                Ok(verdict(up >= floor, || {
                    format!("up fraction {up} below 2/3 - 2 se = {floor}")
                }))
            }
            v => Err(Error::Config(format!(
                "chain.mode: expected ideal or embedded, got '{v}'"
            ))),
        }
    }

    fn measure(&mut self) -> Result<Outcome> {
        let c = &self.cfg;
        let solver = c.solver()?;
        let psi0 = c.initial_field()?;
        let m = kb_sample(
            &solver,
            &psi0,
            c.f64("measure.burn_in")?,
            c.f64("measure.thinning")?,
            c.usize("measure.snapshots")?,
            &mut NoiseStream::new(self.seed, 0),
        )?;
        let eps = c.list("measure.eps")?;
        if let Some(t) = m.extinct_at {
            self.note("extinct_at", t);
        }
        let summary = m.summary()?;
        self.write("measure_summary.csv", &summary_csv(&summary))?;
        if m.len() >= 200 && !eps.is_empty() {
            let tail = lower_tail_curve(&m, &eps)?;
            let mut csv = String::from("eps,probability\n");
            for (e, p) in &tail.rows {
                let _ = writeln!(csv, "{e:.16e},{p:.16e}");
            }
            self.write("lower_tail.csv", &csv)?;
            if let Some(f) = tail.fit {
                self.note("lower_tail_slope", f.slope);
            }
        }
        let positive = m.extinct_at.is_none() && m.snapshots.iter().all(|(_, f)| infimum(f) > 0.0);
        Ok(verdict(positive, || {
            "a retained snapshot touches zero or the run went extinct".to_string()
        }))
    }

    fn appendix(&mut self) -> Result<Outcome> {
        let c = &self.cfg;
        let size = BatterySize {
            small_ball_paths: c.usize("appendix.small_ball_paths")?,
            path_steps: c.usize("appendix.path_steps")?,
            sdi_paths: c.usize("appendix.sdi_paths")?,
            gauss_samples: c.usize("appendix.gauss_samples")?,
            coupling_samples: c.usize("appendix.coupling_samples")?,
            convolution_replicas: c.usize("appendix.convolution_replicas")?,
        };
        let report = run_appendix_battery(self.seed, size, self.threads)?;
        let text = serde_json::to_string_pretty(&report).expect("report serialises") + "\n";
        self.write("appendix_report.json", &text)?;
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        Ok(verdict(report.all_pass, || {
            format!("failed: {}", failed.join(","))
        }))
    }
}
