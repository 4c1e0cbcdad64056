//! Flat `dotted.key = value` experiment configuration.
//!
//! A file holds one `key = value` per line; `#` starts a comment. Every key
//! must appear in [`KEYS`]. Values resolve as defaults, then the file, then
//! `--set` overrides, in that order.

use crate::error::{Error, Result};
use crate::reaction::{DiffusionSpec, PotentialSpec, Sigma, Table};
use crate::solver::{Scheme, SolverConfig};
use crate::torus_field::{Field, TorusGrid};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

/// A documented configuration key.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
    }
}

/// Every accepted key. Keys without a section prefix, and the `grid`,
/// `potential`, `sigma`, `solver` and `init` sections, apply to all
/// subcommands; the remaining sections belong to the subcommand of the same
/// name.
pub const KEYS: &[Key] = &[
    key("seed", "1", "master seed"),
    key("replicas", "16", "ensemble size"),
    key("lambda", "0.2", "noise strength"),
    key("grid.points", "256", "grid size J (power of two)"),
    key("potential.family", "power", "power | tabulated"),
    key("potential.nu", "1", "F(x) = x^(1+nu) for the power family"),
    key("potential.table", "", "tabulated F as x:y,x:y,..."),
    key(
        "potential.m0",
        "2",
        "growth exponent declared for a tabulated F",
    ),
    key("sigma.kind", "linear", "linear | custom"),
    key("sigma.c", "1", "sigma(x) = c x for the linear kind"),
    key("sigma.table", "", "custom sigma as x:y,x:y,..."),
    key("sigma.lip", "", "Lipschitz constant (custom kind)"),
    key("sigma.lower", "0", "lower linear bound (custom kind)"),
    key("solver.scheme", "explicit", "explicit | semi_implicit"),
    key(
        "solver.dt",
        "auto",
        "time step; auto = dx^2/4 explicit, dx semi-implicit",
    ),
    key("solver.t_end", "1", "horizon"),
    key("solver.clamp", "true", "clamp negative values to 0"),
    key(
        "solver.truncation",
        "none",
        "truncation level N of V, or none",
    ),
    key(
        "solver.record_stride",
        "1",
        "keep every n-th observable row",
    ),
    key(
        "solver.snapshot_times",
        "",
        "comma-separated snapshot times",
    ),
    key(
        "init.level",
        "1",
        "initial profile level + amplitude cos(pi x)",
    ),
    key(
        "init.amplitude",
        "0",
        "cosine amplitude of the initial profile",
    ),
    key(
        "kernel.times",
        "0.01,0.02,0.05,0.1,0.2,0.5,1,2,5,10",
        "kernel times",
    ),
    key(
        "kernel.points",
        "20",
        "lattice size n; pairs (x_i, y_j) on an n x n grid",
    ),
    key("kernel.image_terms", "10", "image-sum truncation"),
    key(
        "kernel.fourier_modes",
        "auto",
        "theta-series truncation; auto = J/2",
    ),
    key(
        "kernel.crossover",
        "0.2",
        "image sum below this time, theta series above",
    ),
    key(
        "kernel.tolerance",
        "1e-10",
        "--check bound on |image - fourier|",
    ),
    key("simulate.replica", "0", "replica id of the simulated path"),
    key(
        "sweep.lambdas",
        "0.05,0.5,1,2,3",
        "increasing noise strengths",
    ),
    key("sweep.t_end", "20", "horizon of every sweep run (>= 10)"),
    key(
        "sweep.window_start",
        "auto",
        "Lyapunov window start; auto = t_end/5",
    ),
    key("sweep.eps", "0.1,0.01,0.001", "occupation thresholds"),
    key(
        "sweep.persist_occupation",
        "0.05",
        "per-replica floor-occupation cap",
    ),
    key(
        "sweep.persist_mean_inf",
        "0.05",
        "per-replica mean-infimum floor",
    ),
    key("couple.kind", "PM", "natural | independent | PM | AM"),
    key(
        "couple.deltas",
        "0.04,0.02,0.01,0.005",
        "initial L1 distances",
    ),
    key("couple.base", "0.5", "level of the reference profile"),
    key("couple.t_max", "1", "merge deadline"),
    key(
        "couple.merge_tol",
        "auto",
        "merge tolerance; auto = floor-aware default",
    ),
    key("chain.mode", "ideal", "ideal | embedded"),
    key("chain.m", "auto", "level M; auto = from the potential"),
    key(
        "chain.p_up",
        "0.6666666666666666",
        "up probability of the ideal walk",
    ),
    key("chain.steps", "100000", "ideal-chain steps"),
    key("chain.stages", "50", "embedded-chain stages"),
    key("chain.stage_timeout", "1000", "stage timeout in time units"),
    key("measure.burn_in", "5", "burn-in time (>= 1)"),
    key("measure.thinning", "1", "time between snapshots"),
    key("measure.snapshots", "100", "snapshots to keep"),
    key("measure.eps", "0.3,0.1,0.03,0.01", "lower-tail thresholds"),
    key(
        "appendix.small_ball_paths",
        "100000",
        "small-ball Monte Carlo paths",
    ),
    key(
        "appendix.path_steps",
        "1000",
        "steps per unit time of path Monte Carlo",
    ),
    key("appendix.sdi_paths", "20000", "SDI Monte Carlo paths"),
    key(
        "appendix.gauss_samples",
        "1000000",
        "negative-moment samples",
    ),
    key(
        "appendix.coupling_samples",
        "10000",
        "monotone-coupling samples",
    ),
    key(
        "appendix.convolution_replicas",
        "2000",
        "convolution-tail replicas",
    ),
];

/// Subcommand sections of [`KEYS`].
pub const SUBCOMMANDS: &[&str] = &[
    "kernel", "simulate", "sweep", "couple", "chain", "measure", "appendix",
];

fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

fn section(name: &str) -> Option<&str> {
    name.split_once('.').map(|(s, _)| s)
}

/// Resolved key/value pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|k| (k.name.to_string(), k.default.to_string()))
                .collect(),
        }
    }
}

impl Config {
    /// Parse file text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got '{line}'",
                    n + 1
                ))
            })?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip(e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if lookup(key).is_none() {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key '{key}' is not in the key table"))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Config(format!("{key}: expected a finite number, got '{v}'")))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        let v = self.get(key);
        v.parse::<u64>().map_err(|_| {
            Error::Config(format!("{key}: expected a non-negative integer, got '{v}'"))
        })
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        Ok(self.u64(key)? as usize)
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(Error::Config(format!(
                "{key}: expected true or false, got '{v}'"
            ))),
        }
    }

    /// `None` when the value is `auto`.
    pub fn auto_f64(&self, key: &str) -> Result<Option<f64>> {
        if self.get(key) == "auto" {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Config(format!("{key}: bad list entry '{s}'")))
            })
            .collect()
    }

    /// Keys that concern `subcommand`: shared keys plus its own section.
    pub fn relevant<'a>(&'a self, subcommand: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.values.iter().filter_map(move |(k, v)| {
            let s = section(k);
            let shared = s.is_none_or(|s| !SUBCOMMANDS.contains(&s));
            (shared || s == Some(subcommand)).then_some((k.as_str(), v.as_str()))
        })
    }

    /// Sorted `key = value` text of the keys that concern `subcommand`;
    /// parsing it back reproduces the run.
    pub fn echo(&self, subcommand: &str) -> String {
        let mut s = String::new();
        for (k, v) in self.relevant(subcommand) {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    /// SHA-256 of [`Config::echo`].
    pub fn digest(&self, subcommand: &str) -> String {
        hex::encode(Sha256::digest(self.echo(subcommand).as_bytes()))
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.usize("grid.points")?)
    }

    pub fn potential(&self) -> Result<PotentialSpec> {
        match self.get("potential.family") {
            "power" => PotentialSpec::power(self.f64("potential.nu")?),
            "tabulated" => PotentialSpec::tabulated(
                Table::parse(self.get("potential.table"))?,
                self.f64("potential.m0")?,
            ),
            v => Err(Error::Config(format!(
                "potential.family: expected power or tabulated, got '{v}'"
            ))),
        }
    }

    pub fn diffusion(&self) -> Result<DiffusionSpec> {
        match self.get("sigma.kind") {
            "linear" => Ok(DiffusionSpec::linear(self.f64("sigma.c")?)),
            "custom" => {
                let table = Table::parse(self.get("sigma.table"))?;
                if self.get("sigma.lip").is_empty() {
                    return Err(Error::Config(
                        "sigma.lip is required for sigma.kind = custom".into(),
                    ));
                }
                DiffusionSpec::new(
                    Sigma::Tabulated(table),
                    self.f64("sigma.lip")?,
                    self.f64("sigma.lower")?,
                )
            }
            v => Err(Error::Config(format!(
                "sigma.kind: expected linear or custom, got '{v}'"
            ))),
        }
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        let scheme = match self.get("solver.scheme") {
            "explicit" => Scheme::Explicit,
            "semi_implicit" => Scheme::SemiImplicit,
            v => {
                return Err(Error::Config(format!(
                    "solver.scheme: expected explicit or semi_implicit, got '{v}'"
                )))
            }
        };
        let truncation = match self.get("solver.truncation") {
            "none" | "" => None,
            _ => Some(self.u64("solver.truncation")? as u32),
        };
        let mut cfg = SolverConfig::new(
            self.grid()?,
            self.potential()?,
            self.diffusion()?,
            self.f64("lambda")?,
        )
        .with_scheme(scheme)
        .with_t_end(self.f64("solver.t_end")?)
        .with_clamp(self.bool("solver.clamp")?)
        .with_truncation(truncation)
        .with_record_stride(self.usize("solver.record_stride")?)
        .with_snapshots(self.list("solver.snapshot_times")?);
        if let Some(dt) = self.auto_f64("solver.dt")? {
            cfg = cfg.with_dt(dt);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `level + amplitude cos(pi x)`.
    pub fn initial_field(&self) -> Result<Field> {
        let level = self.f64("init.level")?;
        let amp = self.f64("init.amplitude")?;
        Field::from_fn(self.grid()?, |x| level + amp * (PI * x).cos())
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
