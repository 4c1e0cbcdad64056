//! Closed forms of the auxiliary probability estimates with Monte Carlo
//! validators.

use crate::error::{domain, usage, Error, Result};
use crate::noise::NoiseStream;
use crate::quad::integrate;
use crate::solver::run_ensemble;
use crate::stats::{ks_statistic, mean_se, ols, LinearFit};
use crate::torus_field::TorusGrid;
use serde::Serialize;
use statrs::function::gamma::gamma;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Asymptotic 99% quantile of the Kolmogorov distribution.
pub const KS_CRITICAL_1PCT: f64 = 1.6276;

/// Composite Simpson rule on `[0, cutoff]` with `nodes` panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub nodes: usize,
    pub cutoff: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes: 4096,
            cutoff: 40.0,
        }
    }
}

impl QuadratureConfig {
    pub fn new(nodes: usize, cutoff: f64) -> Result<Self> {
        if nodes < 64 {
            return usage(format!("quadrature needs >= 64 nodes, got {nodes}"));
        }
        if !(cutoff > 0.0) {
            return usage("quadrature cutoff must be > 0");
        }
        Ok(Self {
            nodes: nodes + nodes % 2,
            cutoff,
        })
    }

    pub fn simpson(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let n = self.nodes + self.nodes % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }
}

/// `sqrt(2/pi) int_0^c exp(-x^2/2) dx`, the probability that a standard
/// normal lies in `(-c, c)`.
fn half_gauss(c: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let c = c.min(40.0);
    (2.0 / PI).sqrt() * integrate(|x| (-0.5 * x * x).exp(), 0.0, c, 1e-15)
}

/// Brownian small-ball bound `P{inf_{s<A} B_s >= -eps}` as a Gaussian integral.
pub fn small_ball_probability(eps: f64, a: f64) -> Result<f64> {
    if !(eps > 0.0 && a > 0.0) {
        return domain(format!("small ball needs eps, A > 0, got {eps}, {a}"));
    }
    Ok(half_gauss(eps / a.sqrt()))
}

/// Same integral through a fixed composite rule.
pub fn small_ball_probability_with(eps: f64, a: f64, q: &QuadratureConfig) -> Result<f64> {
    if !(eps > 0.0 && a > 0.0) {
        return domain(format!("small ball needs eps, A > 0, got {eps}, {a}"));
    }
    let c = (eps / a.sqrt()).min(q.cutoff);
    Ok((2.0 / PI).sqrt() * q.simpson(|x| (-0.5 * x * x).exp(), 0.0, c))
}

const PATHS_PER_CHUNK: usize = 1000;

fn chunked<T: Send>(
    total: usize,
    threads: usize,
    f: impl Fn(usize, usize) -> Result<Vec<T>> + Sync + Send,
) -> Result<Vec<T>> {
    let chunks = total.div_ceil(PATHS_PER_CHUNK);
    let parts = run_ensemble(chunks, threads, |c| {
        f(c, PATHS_PER_CHUNK.min(total - c * PATHS_PER_CHUNK))
    })?;
    Ok(parts.into_iter().flatten().collect())
}

/// Monte Carlo of `P{inf_{s<A} B_s >= -eps}` with `steps` uniform steps.
///
/// Each path contributes the probability, given its skeleton, that the
/// Brownian bridges between grid points stay above `-eps`, which removes
/// the discrete-monitoring bias.
pub fn small_ball_mc(
    eps: f64,
    a: f64,
    paths: usize,
    steps: usize,
    seed: u64,
    threads: usize,
) -> Result<(f64, f64)> {
    if !(eps > 0.0 && a > 0.0) || paths < 2 || steps == 0 {
        return usage("small_ball_mc needs eps, A > 0, paths >= 2, steps >= 1");
    }
    let dt = a / steps as f64;
    let sd = dt.sqrt();
    let vals = chunked(paths, threads, |c, n| {
        let mut stream = NoiseStream::with_tag(seed, c as u64, 7);
        let mut z = vec![0.0; steps];
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            stream.fill(&mut z);
            let mut b = 0.0f64;
            let mut surv = 1.0;
            for &zi in &z {
                let next = b + sd * zi;
                if next < -eps {
                    surv = 0.0;
                    break;
                }
                surv *= 1.0 - (-2.0 * (b + eps) * (next + eps) / dt).exp();
                b = next;
            }
            out.push(surv);
        }
        Ok(out)
    })?;
    Ok(mean_se(&vals))
}

/// `sqrt(2/pi) int_0^c exp(-x^2/2) dx` with `c = 2 (a - eps e^{-t/2}) / b`.
pub fn sdi_hitting_bound(a: f64, b: f64, t: f64, eps: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && t > 0.0) {
        return domain(format!("sdi bound needs a, b, t > 0, got {a}, {b}, {t}"));
    }
    let top = a * (t / 2.0).exp();
    if !(eps > 0.0 && eps <= top) {
        return domain(format!(
            "eps must lie in (0, a e^(t/2)] = (0, {top}], got {eps}"
        ));
    }
    Ok(half_gauss(2.0 * (a - eps * (-t / 2.0).exp()) / b))
}

/// Monte Carlo of `P{inf_{s<t} X_s > eps^2, int_0^t e^{-s} X_s ds >= b^2}` for
/// `dX = X dt + X dW`, `X_0 = a^2`, sampled exactly on `steps` grid points.
pub fn sdi_mc(
    a: f64,
    b: f64,
    t: f64,
    eps: f64,
    paths: usize,
    steps: usize,
    seed: u64,
    threads: usize,
) -> Result<(f64, f64)> {
    sdi_hitting_bound(a, b, t, eps)?;
    if paths < 2 || steps == 0 {
        return usage("sdi_mc needs paths >= 2 and steps >= 1");
    }
    let dt = t / steps as f64;
    let sd = dt.sqrt();
    let floor = eps * eps;
    let vals = chunked(paths, threads, |c, n| {
        let mut stream = NoiseStream::with_tag(seed, c as u64, 8);
        let mut z = vec![0.0; steps];
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            stream.fill(&mut z);
            let mut x = a * a;
            let mut ok = true;
            let mut acc = 0.0;
            for (k, &zi) in z.iter().enumerate() {
                let next = x * (0.5 * dt + sd * zi).exp();
                let s0 = k as f64 * dt;
                acc += 0.5 * dt * ((-s0).exp() * x + (-(s0 + dt)).exp() * next);
                x = next;
                if x <= floor {
                    ok = false;
                    break;
                }
            }
            out.push(if ok && acc >= b * b { 1.0 } else { 0.0 });
        }
        Ok(out)
    })?;
    Ok(mean_se(&vals))
}

/// `Y = sup{y : H(y) <= G(X)}` per sample, found by bisection to `1e-12`.
///
/// `G >= H` is checked on `probe`; a violation is a precondition error.
pub fn monotone_coupling(
    x: &[f64],
    g: impl Fn(f64) -> f64,
    h: impl Fn(f64) -> f64,
    probe: &[f64],
) -> Result<Vec<f64>> {
    if let Some(p) = probe.iter().find(|&&p| g(p) < h(p) - 1e-15) {
        return Err(Error::Precondition(format!(
            "G < H at probe point {p}: G = {}, H = {}",
            g(*p),
            h(*p)
        )));
    }
    x.iter()
        .map(|&xi| {
            let u = g(xi);
            let mut lo = xi;
            if h(lo) > u {
                // G(x) >= H(x) fails off the probe grid
                return Err(Error::Precondition(format!("G < H at sample {xi}")));
            }
            let mut step = 1.0f64.max(xi.abs());
            let mut hi = xi + step;
            let mut guard = 0;
            while h(hi) <= u {
                lo = hi;
                step *= 2.0;
                hi = xi + step;
                guard += 1;
                if guard > 1100 {
                    return Err(Error::Domain(format!("H never exceeds {u}")));
                }
            }
            while hi - lo > 1e-12 * hi.abs().max(1.0) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if h(mid) <= u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(lo)
        })
        .collect()
}

/// `Gamma((1-s)/2) / ((2 var)^{s/2} sqrt(pi))`, the value of `E|X|^{-s}`.
pub fn gauss_negative_moment(s: f64, variance: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return domain(format!("s must lie in (0, 1), got {s}"));
    }
    if !(variance > 0.0) {
        return domain(format!("variance must be > 0, got {variance}"));
    }
    Ok(gamma((1.0 - s) / 2.0) / ((2.0 * variance).powf(s / 2.0) * PI.sqrt()))
}

/// `E[(|X| - a)_+^{-s}]` (zero where `|X| <= a`) by quadrature after the
/// substitution `x - a = w^{1/(1-s)}`.
pub fn shifted_negative_moment(s: f64, a: f64, variance: f64, q: &QuadratureConfig) -> Result<f64> {
    gauss_negative_moment(s, variance)?;
    if a < 0.0 {
        return domain("shift must be >= 0");
    }
    let v = variance.sqrt();
    let p = 1.0 / (1.0 - s);
    let top = (q.cutoff * v).powf(1.0 - s);
    let f = |w: f64| {
        let x = w.powf(p);
        p * (-(x + a).powi(2) / (2.0 * variance)).exp()
    };
    Ok(q.simpson(f, 0.0, top) / (v * (PI / 2.0).sqrt()))
}

/// Monte Carlo of `E[(|X| - a)_+^{-s}]` for `X ~ N(0, var)`.
pub fn negative_moment_mc(
    s: f64,
    a: f64,
    variance: f64,
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<(f64, f64)> {
    gauss_negative_moment(s, variance)?;
    if samples < 2 {
        return usage("negative_moment_mc needs >= 2 samples");
    }
    let sd = variance.sqrt();
    let vals = chunked(samples, threads, |c, n| {
        let mut stream = NoiseStream::with_tag(seed, c as u64, 9);
        let mut z = vec![0.0; n];
        stream.fill(&mut z);
        Ok(z.iter()
            .map(|&zi| {
                let d = (sd * zi).abs() - a;
                if d > 0.0 {
                    d.powf(-s)
                } else {
                    0.0
                }
            })
            .collect())
    })?;
    Ok(mean_se(&vals))
}

/// One row of the convolution tail table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub rho: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionTail {
    pub rows: Vec<TailRow>,
    /// `log P` against `rho^2` over rows with `0 < P < 1`.
    pub fit: Option<LinearFit>,
    /// `-slope * sqrt(T) lambda^2 Lip^2 L^2`.
    pub fitted_c: Option<f64>,
    /// Running `sup_t sup_x |I|` of every replica.
    pub sups: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvolutionSetup {
    pub t: f64,
    pub lambda: f64,
    pub lip: f64,
    pub level: f64,
    pub points: usize,
}

/// Stochastic convolution `dI = I'' dt + lambda s dW`, `I(0) = 0`, with
/// integrand `s = Lip (L + I)` clipped to `[-4 Lip L, 4 Lip L]`, tracking
/// `sup_{t <= T} sup_x |I|` per replica.
pub fn convolution_tail_check(
    setup: &ConvolutionSetup,
    rho_grid: &[f64],
    replicas: usize,
    seed: u64,
    threads: usize,
) -> Result<ConvolutionTail> {
    if !(setup.t > 0.0 && setup.lambda >= 0.0 && setup.lip >= 0.0 && setup.level > 0.0) {
        return usage("convolution check needs T, L > 0 and lambda, Lip >= 0");
    }
    if replicas < 2 {
        return usage("convolution check needs >= 2 replicas");
    }
    let grid = TorusGrid::new(setup.points)?;
    let dx = grid.dx();
    let dt = dx * dx / 4.0;
    let steps = ((setup.t / dt) - 1e-9).ceil() as u64;
    let noise = setup.lambda * (dt / dx).sqrt();
    let cap = 4.0 * setup.lip * setup.level;
    let j = grid.points();
    let sups = run_ensemble(replicas, threads, |r| {
        if noise == 0.0 {
            return Ok(0.0);
        }
        let mut stream = NoiseStream::with_tag(seed, r as u64, 10);
        let mut u = vec![0.0; j];
        let mut next = vec![0.0; j];
        let mut xi = vec![0.0; j];
        let mut best: f64 = 0.0;
        for _ in 0..steps {
            stream.fill(&mut xi);
            for i in 0..j {
                let left = u[(i + j - 1) % j];
                let right = u[(i + 1) % j];
                let s = (setup.lip * (setup.level + u[i])).clamp(-cap, cap);
                next[i] = u[i] + 0.25 * (left - 2.0 * u[i] + right) + noise * s * xi[i];
            }
            std::mem::swap(&mut u, &mut next);
            best = u.iter().fold(best, |m, v| m.max(v.abs()));
        }
        Ok(best)
    })?;
    let rows: Vec<TailRow> = rho_grid
        .iter()
        .map(|&rho| TailRow {
            rho,
            probability: sups.iter().filter(|&&s| s > rho).count() as f64 / replicas as f64,
        })
        .collect();
    let inner: Vec<&TailRow> = rows
        .iter()
        .filter(|r| r.probability > 0.0 && r.probability < 1.0)
        .collect();
    let fit = (inner.len() >= 3).then(|| {
        let xs: Vec<f64> = inner.iter().map(|r| r.rho * r.rho).collect();
        let ys: Vec<f64> = inner.iter().map(|r| r.probability.ln()).collect();
        ols(&xs, &ys)
    });
    let scale = setup.t.sqrt() * (setup.lambda * setup.lip * setup.level).powi(2);
    let fitted_c = fit.map(|f| -f.slope * scale);
    Ok(ConvolutionTail {
        rows,
        fit,
        fitted_c,
        sups,
    })
}

/// Outcome of one validator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateCheck {
    pub name: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixReport {
    pub seed: u64,
    pub checks: Vec<EstimateCheck>,
    pub all_pass: bool,
}

/// Problem sizes of the battery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatterySize {
    pub small_ball_paths: usize,
    pub path_steps: usize,
    pub sdi_paths: usize,
    pub gauss_samples: usize,
    pub coupling_samples: usize,
    pub convolution_replicas: usize,
}

impl Default for BatterySize {
    fn default() -> Self {
        Self {
            small_ball_paths: 100_000,
            path_steps: 1000,
            sdi_paths: 20_000,
            gauss_samples: 1_000_000,
            coupling_samples: 10_000,
            convolution_replicas: 2000,
        }
    }
}

fn check(name: &str, pass: bool, metrics: &[(&str, f64)]) -> EstimateCheck {
    EstimateCheck {
        name: name.into(),
        pass,
        metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Run every validator.
pub fn run_appendix_battery(
    seed: u64,
    size: BatterySize,
    threads: usize,
) -> Result<AppendixReport> {
    let mut checks = Vec::new();

    let exact = small_ball_probability(0.5, 1.0)?;
    let (mc, se) = small_ball_mc(
        0.5,
        1.0,
        size.small_ball_paths,
        size.path_steps,
        seed,
        threads,
    )?;
    checks.push(check(
        "small_ball",
        (mc - exact).abs() <= 0.01,
        &[("closed_form", exact), ("mc", mc), ("mc_se", se)],
    ));

    let s = 0.3;
    let exact = gauss_negative_moment(s, 1.0)?;
    let (m0, se0) = negative_moment_mc(s, 0.0, 1.0, size.gauss_samples, seed, threads)?;
    let (m5, se5) = negative_moment_mc(s, 0.5, 1.0, size.gauss_samples, seed, threads)?;
    checks.push(check(
        "gauss_negative_moment",
        (m0 - exact).abs() <= 3.0 * se0 && m5 < exact,
        &[
            ("s", s),
            ("closed_form", exact),
            ("mc", m0),
            ("mc_se", se0),
            ("mc_shift_0.5", m5),
            ("mc_shift_0.5_se", se5),
        ],
    ));

    // X ~ N(0,1) coupled to the larger of two N(1,1)
    let n = size.coupling_samples;
    let mut stream = NoiseStream::with_tag(seed, 0, 11);
    let mut x = vec![0.0; n];
    stream.fill(&mut x);
    let g = normal_cdf;
    let h = |y: f64| normal_cdf(y - 1.0).powi(2);
    let probe: Vec<f64> = (-800..=800).map(|i| i as f64 * 0.01).collect();
    let coupled = monotone_coupling(&x, g, h, &probe);
    let (ordered, ks, min_gap) = match &coupled {
        Ok(y) => {
            let gap = y
                .iter()
                .zip(&x)
                .map(|(a, b)| a - b)
                .fold(f64::INFINITY, f64::min);
            (gap >= -1e-12, ks_statistic(y, h), gap)
        }
        Err(_) => (false, f64::NAN, f64::NAN),
    };
    let crit = KS_CRITICAL_1PCT / (n as f64).sqrt();
    checks.push(check(
        "monotone_coupling",
        ordered && ks < crit,
        &[("min_gap", min_gap), ("ks", ks), ("ks_critical_1pct", crit)],
    ));

    let (a, b, t, eps) = (1.0, 1.0, 1.0, 0.1);
    let bound = sdi_hitting_bound(a, b, t, eps)?;
    let (p, pse) = sdi_mc(a, b, t, eps, size.sdi_paths, size.path_steps, seed, threads)?;
    checks.push(check(
        "sdi",
        p <= bound + 3.0 * pse,
        &[("bound", bound), ("mc", p), ("mc_se", pse)],
    ));

    let setup = ConvolutionSetup {
        t: 1.0,
        lambda: 0.5,
        lip: 1.0,
        level: 1.0,
        points: 64,
    };
    let rho: Vec<f64> = (0..8).map(|k| 0.5 + 0.15 * k as f64).collect();
    let tail = convolution_tail_check(&setup, &rho, size.convolution_replicas, seed, threads)?;
    let slope = tail.fit.map_or(f64::NAN, |f| f.slope);
    let slope_se = tail.fit.map_or(f64::NAN, |f| f.slope_se);
    checks.push(check(
        "convolution_tail",
        slope + 2.0 * slope_se < 0.0,
        &[
            ("slope_vs_rho2", slope),
            ("slope_se", slope_se),
            ("fitted_c", tail.fitted_c.unwrap_or(f64::NAN)),
            (
                "fitted_points",
                tail.rows
                    .iter()
                    .filter(|r| r.probability > 0.0 && r.probability < 1.0)
                    .count() as f64,
            ),
        ],
    ));

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(AppendixReport {
        seed,
        checks,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values of erf(c / sqrt 2) to full double precision.
    const ERF_REF: [(f64, f64); 4] = [
        (0.1, 0.07965567455405796),
        (0.5, 0.3829249225480262),
        (1.0, 0.6826894921370859),
        (2.5, 0.9875806693484477),
    ];

    #[test]
    fn small_ball_matches_erf() {
        for (c, want) in ERF_REF {
            let v = small_ball_probability(c, 1.0).unwrap();
            assert!((v - want).abs() < 1e-13, "{c} {}", v - want);
            let w = small_ball_probability_with(c, 1.0, &QuadratureConfig::default()).unwrap();
            assert!((v - w).abs() < 1e-12);
        }
        assert!((small_ball_probability(1.0, 1.0).unwrap() - 0.682689492).abs() < 1e-8);
        assert!((small_ball_probability(2.0, 4.0).unwrap() - 0.682689492).abs() < 1e-8);
        assert!((small_ball_probability(1e6, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(small_ball_probability(0.0, 1.0).is_err());
        assert!(QuadratureConfig::new(32, 10.0).is_err());
    }

    #[test]
    fn small_ball_mc_is_unbiased() {
        let exact = small_ball_probability(0.5, 1.0).unwrap();
        let (m, se) = small_ball_mc(0.5, 1.0, 4000, 200, 3, 2).unwrap();
        assert!((m - exact).abs() < 4.0 * se + 1e-3, "{m} {se} {exact}");
    }

    #[test]
    fn sdi_bound_edges() {
        let top = (0.5f64).exp();
        assert_eq!(sdi_hitting_bound(1.0, 1.0, 1.0, top).unwrap(), 0.0);
        assert!(sdi_hitting_bound(1.0, 1e9, 1.0, 0.1).unwrap() < 1e-8);
        assert!(sdi_hitting_bound(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(sdi_hitting_bound(1.0, 1.0, 1.0, 0.0).is_err());
        // erf(c / sqrt 2) with c = 2 (1 - 0.1 e^{-1/2})
        let v = sdi_hitting_bound(1.0, 1.0, 1.0, 0.1).unwrap();
        assert!((v - 0.9397136944195671).abs() < 1e-13, "{v}");
    }

    #[test]
    fn sdi_mc_respects_bound() {
        let bound = sdi_hitting_bound(1.0, 1.0, 1.0, 0.1).unwrap();
        let (p, se) = sdi_mc(1.0, 1.0, 1.0, 0.1, 3000, 200, 5, 2).unwrap();
        assert!(p <= bound + 3.0 * se, "{p} {bound}");
        assert!(p > 0.0);
    }

    #[test]
    fn coupling_closed_forms() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let g = |v: f64| v.clamp(0.0, 1.0);
        let h = |v: f64| (v - 1.0).clamp(0.0, 1.0);
        let y = monotone_coupling(&x, g, h, &[0.0, 0.5, 1.0, 1.5, 2.0]).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((b - (a + 1.0)).abs() < 1e-11, "{a} {b}");
        }
        let same = monotone_coupling(&x, normal_cdf, normal_cdf, &[0.0]).unwrap();
        for (a, b) in x.iter().zip(&same) {
            assert!((a - b).abs() < 1e-11);
        }
        assert!(matches!(
            monotone_coupling(&x, h, g, &[0.5]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn gauss_moment_oracles() {
        assert!((gauss_negative_moment(1e-9, 1.0).unwrap() - 1.0).abs() < 1e-8);
        let v = gauss_negative_moment(0.5, 1.0).unwrap();
        let closed = gamma(0.25) / (2f64.powf(0.25) * PI.sqrt());
        assert!((v - closed).abs() < 1e-14);
        // independent quadrature of E|X|^{-1/2} after x = w^2
        let q = QuadratureConfig::new(20_000, 40.0).unwrap();
        let quad =
            q.simpson(|w| 2.0 * (-w.powi(4) / 2.0).exp(), 0.0, 40f64.sqrt()) / (PI / 2.0).sqrt();
        assert!((v - quad).abs() < 1e-9, "{v} {quad}");
        assert!((shifted_negative_moment(0.5, 0.0, 1.0, &q).unwrap() - v).abs() < 1e-9);
        for a in [0.1, 0.5, 2.0] {
            assert!(shifted_negative_moment(0.5, a, 1.0, &q).unwrap() < v);
        }
        assert!(gauss_negative_moment(1.0, 1.0).is_err());
        assert!(gauss_negative_moment(0.0, 1.0).is_err());
    }

    #[test]
    fn gauss_moment_mc() {
        let exact = gauss_negative_moment(0.3, 2.0).unwrap();
        let (m, se) = negative_moment_mc(0.3, 0.0, 2.0, 200_000, 1, 2).unwrap();
        assert!((m - exact).abs() < 4.0 * se);
        let (m5, _) = negative_moment_mc(0.3, 0.5, 2.0, 200_000, 1, 2).unwrap();
        assert!(m5 < m);
    }

    #[test]
    fn convolution_tail_is_linear_in_the_level() {
        let mut setup = ConvolutionSetup {
            t: 0.25,
            lambda: 0.5,
            lip: 1.0,
            level: 1.0,
            points: 32,
        };
        let a = convolution_tail_check(&setup, &[0.5], 50, 4, 2).unwrap();
        setup.level = 2.0;
        let b = convolution_tail_check(&setup, &[1.0], 50, 4, 2).unwrap();
        for (x, y) in a.sups.iter().zip(&b.sups) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
        assert_eq!(a.rows[0].probability, b.rows[0].probability);
        setup.lambda = 0.0;
        let z = convolution_tail_check(&setup, &[1e-9], 10, 4, 1).unwrap();
        assert!(z.sups.iter().all(|&s| s == 0.0));
    }
}
