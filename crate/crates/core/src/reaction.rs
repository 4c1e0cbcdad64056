//! Reaction potentials `V(x) = x - F(x)` and the noise coefficient `sigma`.

use crate::error::{domain, Error, Result};
use std::fmt;
use std::sync::Arc;

/// Piecewise-linear function through sorted nodes, extended linearly past
/// both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::Config("table needs >= 2 matching nodes".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "table nodes must be strictly increasing".into(),
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Config("table entries must be finite".into()));
        }
        Ok(Self { xs, ys })
    }

    /// Parse `x:y,x:y,...`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for pair in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("bad table node '{pair}'")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad table number '{s}': {e}")))
            };
            xs.push(parse(a)?);
            ys.push(parse(b)?);
        }
        Self::new(xs, ys)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        y0 + (x - x0) * (y1 - y0) / (x1 - x0)
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }
}

/// The nonlinearity `F`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `F(x) = x^{1+nu}`.
    Power { nu: f64 },
    /// Tabulated `F` with linear interpolation.
    Tabulated(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub family: Potential,
    pub m0: f64,
    /// When false the solver drops the reaction term.
    pub drift_enabled: bool,
}

impl PotentialSpec {
    pub fn power(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Config(format!(
                "power exponent nu must be > 0, got {nu}"
            )));
        }
        Ok(Self {
            family: Potential::Power { nu },
            m0: 1.0 + nu,
            drift_enabled: true,
        })
    }

    /// `V(x) = x(1 - x)`.
    pub fn kpp() -> Self {
        Self::power(1.0).unwrap()
    }

    /// `V(x) = x - x^3`.
    pub fn allen_cahn() -> Self {
        Self::power(2.0).unwrap()
    }

    pub fn tabulated(table: Table, m0: f64) -> Result<Self> {
        if !(m0 > 1.0) {
            return Err(Error::Config(format!("m0 must be > 1, got {m0}")));
        }
        Ok(Self {
            family: Potential::Tabulated(table),
            m0,
            drift_enabled: true,
        })
    }

    pub fn without_drift(mut self) -> Self {
        self.drift_enabled = false;
        self
    }

    /// `F(x)`; `NaN` where undefined (negative `x`, non-integer power).
    #[inline]
    pub fn f_unchecked(&self, x: f64) -> f64 {
        match &self.family {
            Potential::Power { nu } => {
                let p = 1.0 + nu;
                if p == 2.0 {
                    x * x
                } else if p == 3.0 {
                    x * x * x
                } else if p.fract() == 0.0 {
                    x.powi(p as i32)
                } else if x < 0.0 {
                    f64::NAN
                } else {
                    x.powf(p)
                }
            }
            Potential::Tabulated(t) => t.eval(x),
        }
    }

    /// `V(x) = x - F(x)`, `NaN` where undefined.
    #[inline]
    pub fn v_unchecked(&self, x: f64) -> f64 {
        x - self.f_unchecked(x)
    }

    fn f_prime(&self, x: f64) -> f64 {
        match &self.family {
            Potential::Power { nu } => (1.0 + nu) * x.powf(*nu),
            Potential::Tabulated(_) => {
                let h = 1e-6 * (1.0 + x.abs());
                (self.f_unchecked(x + h) - self.f_unchecked((x - h).max(0.0)))
                    / (x + h - (x - h).max(0.0))
            }
        }
    }

    fn is_power(&self) -> Option<f64> {
        match self.family {
            Potential::Power { nu } => Some(nu),
            Potential::Tabulated(_) => None,
        }
    }
}

#[allow(non_snake_case)]
pub fn eval_V(spec: &PotentialSpec, x: f64) -> Result<f64> {
    let v = spec.v_unchecked(x);
    if v.is_nan() {
        return domain(format!("V({x}) undefined for a non-integer power"));
    }
    Ok(v)
}

/// `V_N(w)`: zero for `w <= 0`, `V(w)` below `N`, frozen at `V(N)` above.
#[allow(non_snake_case)]
pub fn eval_V_truncated(spec: &PotentialSpec, n: u32, w: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else if w < n as f64 {
        spec.v_unchecked(w)
    } else {
        spec.v_unchecked(n as f64)
    }
}

/// Outcome of the probe-grid checks on `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HypothesisReport {
    pub f_zero: bool,
    pub f_prime_nonnegative: bool,
    pub small_slope_below_one: bool,
    pub f_prime_unbounded: bool,
    pub polynomial_growth: bool,
    pub ratio_increasing_tail: bool,
    pub sup_v_finite: bool,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.f_zero
            && self.f_prime_nonnegative
            && self.small_slope_below_one
            && self.f_prime_unbounded
            && self.polynomial_growth
            && self.ratio_increasing_tail
            && self.sup_v_finite
    }
}

/// Check the standing hypotheses on a probe grid spanning `(0, x_max]`.
///
/// Unboundedness of `F'` is read as: `F'` exceeds 1 at the right end of the
/// grid and still grows there. Finiteness of `sup V` is read as: the
/// maximum of `V` over the grid is attained before the right end.
pub fn check_hypotheses(spec: &PotentialSpec, probe: &[f64]) -> HypothesisReport {
    let mut xs: Vec<f64> = probe.iter().copied().filter(|&x| x > 0.0).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n < 4 {
        return HypothesisReport {
            f_zero: false,
            f_prime_nonnegative: false,
            small_slope_below_one: false,
            f_prime_unbounded: false,
            polynomial_growth: false,
            ratio_increasing_tail: false,
            sup_v_finite: false,
        };
    }
    let f = |x: f64| spec.f_unchecked(x);
    let x_max = xs[n - 1];
    let f_zero = f(0.0).abs() < 1e-14;
    let f_prime_nonnegative = xs.iter().all(|&x| spec.f_prime(x) >= -1e-12);
    let head = (n / 100).max(1);
    let small_slope_below_one = xs[..head].iter().all(|&x| f(x) / x < 1.0);
    let fp_end = spec.f_prime(x_max);
    let fp_mid = spec.f_prime(x_max / 2.0);
    let f_prime_unbounded = fp_end > 1.0 && fp_end > fp_mid * (1.0 + 1e-9);
    let growth = |x: f64| f(x) / x.powf(spec.m0);
    let polynomial_growth = growth(x_max) <= growth(x_max / 2.0) * (1.0 + 1e-9) + 1e-12;
    let ratios: Vec<f64> = xs.iter().map(|&x| f(x) / x).collect();
    let start = ratios.iter().position(|&r| r >= 1.0).unwrap_or(n);
    let ratio_increasing_tail =
        start < n && ratios[start..].windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
    for (i, &x) in xs.iter().enumerate() {
        let v = spec.v_unchecked(x);
        if v > best {
            best = v;
            arg = i;
        }
    }
    let sup_v_finite = best.is_finite() && arg < n - 1;
    HypothesisReport {
        f_zero,
        f_prime_nonnegative,
        small_slope_below_one,
        f_prime_unbounded,
        polynomial_growth,
        ratio_increasing_tail,
        sup_v_finite,
    }
}

/// `max((64 Lip^2)^2, 1/4)`.
pub fn gamma_constant(lip: f64) -> f64 {
    let a = 64.0 * lip * lip;
    (a * a).max(0.25)
}

/// `sup_{y >= 0} (V(y) + gamma k^2 y) / (1 + gamma k^2)`.
#[allow(non_snake_case)]
pub fn moment_bound_R(spec: &PotentialSpec, k: f64, gamma: f64) -> Result<f64> {
    if !(k >= 2.0) {
        return domain(format!("moment order k must be >= 2, got {k}"));
    }
    if !(gamma > 0.0) {
        return domain(format!("gamma must be > 0, got {gamma}"));
    }
    let a = 1.0 + gamma * k * k;
    if let Some(nu) = spec.is_power() {
        return Ok(nu * a.powf(1.0 / nu) / (1.0 + nu).powf((1.0 + nu) / nu));
    }
    let h = |y: f64| (spec.v_unchecked(y) + gamma * k * k * y) / a;
    let x_max = match &spec.family {
        Potential::Tabulated(t) => t.x_max(),
        Potential::Power { .. } => unreachable!(),
    };
    Ok(numeric_sup(h, 0.0, x_max))
}

/// Grid search followed by golden-section refinement.
pub(crate) fn numeric_sup(h: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 4000;
    let step = (hi - lo) / n as f64;
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
    for i in 0..=n {
        let v = h(lo + i as f64 * step);
        if v > best {
            best = v;
            arg = i;
        }
    }
    let mut a = lo + (arg.max(1) - 1) as f64 * step;
    let mut b = lo + (arg + 1).min(n) as f64 * step;
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if h(c) > h(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(h(0.5 * (a + b)))
}

/// The largest negative `M` with `v/2 <= V(v) <= v` on `(0, 2^{M+1}]`.
#[allow(non_snake_case)]
pub fn compute_level_M(spec: &PotentialSpec) -> Result<i32> {
    // v* solves F(v) = v/2; F(v)/v is increasing for every family we accept.
    let g = |v: f64| spec.f_unchecked(v) / v - 0.5;
    let mut hi = 1.0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Config("F(v) = v/2 has no root".into()));
        }
    }
    let mut lo = hi;
    while g(lo) >= 0.0 {
        lo /= 2.0;
        if lo < 1e-30 {
            return Err(Error::Config(
                "F(v)/v does not drop below 1/2 near 0".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v_star = 0.5 * (lo + hi);
    let mut m = ((v_star.log2() + 1e-9).floor() as i32 - 1).min(-1);
    let holds = |m: i32| {
        let top = 2f64.powi(m + 1);
        (1..=2000).all(|i| {
            let v = top * i as f64 / 2000.0;
            let val = spec.v_unchecked(v);
            val >= 0.5 * v - 1e-12 * v && val <= v + 1e-12 * v
        })
    };
    while !holds(m) {
        m -= 1;
        if m < -60 {
            return Err(Error::Config("no admissible level M above -60".into()));
        }
    }
    if m < -60 {
        return Err(Error::Config("no admissible level M above -60".into()));
    }
    Ok(m)
}

/// The noise coefficient `sigma`.
#[derive(Clone)]
pub enum Sigma {
    /// `sigma(x) = c x`.
    Linear(f64),
    Tabulated(Table),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Linear(c) => write!(f, "Linear({c})"),
            Sigma::Tabulated(t) => write!(f, "Tabulated({t:?})"),
            Sigma::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// `sigma` with its Lipschitz constant and lower linear bound.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    sigma: Sigma,
    lip: f64,
    lower: f64,
}

impl DiffusionSpec {
    /// Validates `sigma(0) = 0` and `lower |a| <= |sigma(a)| <= lip |a|` on a
    /// lattice over `[-10, 10]`.
    pub fn new(sigma: Sigma, lip: f64, lower: f64) -> Result<Self> {
        if !(lip >= 0.0) || !(lower >= 0.0) || lower > lip {
            return Err(Error::Config(format!(
                "need 0 <= sigma.lower <= sigma.lip, got {lower} and {lip}"
            )));
        }
        let spec = Self { sigma, lip, lower };
        if spec.eval(0.0) != 0.0 {
            return Err(Error::Config("sigma(0) must be 0".into()));
        }
        for i in -400..=400 {
            let a = i as f64 / 40.0;
            let s = spec.eval(a).abs();
            if s > lip * a.abs() * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Config(format!(
                    "|sigma({a})| exceeds sigma.lip * |a|"
                )));
            }
            if lower > 0.0 && s < lower * a.abs() * (1.0 - 1e-9) - 1e-12 {
                return Err(Error::Config(format!(
                    "|sigma({a})| below sigma.lower * |a|"
                )));
            }
        }
        Ok(spec)
    }

    pub fn linear(c: f64) -> Self {
        Self {
            sigma: Sigma::Linear(c),
            lip: c.abs(),
            lower: c.abs(),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.sigma {
            Sigma::Linear(c) => c * x,
            Sigma::Tabulated(t) => t.eval(x),
            Sigma::Function(f) => f(x),
        }
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn sigma(&self) -> &Sigma {
        &self.sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe() -> Vec<f64> {
        (1..=2000).map(|i| i as f64 * 0.01).collect()
    }

    #[test]
    fn v_examples() {
        let kpp = PotentialSpec::kpp();
        assert_eq!(eval_V(&kpp, 1.0).unwrap(), 0.0);
        assert_eq!(eval_V(&kpp, 0.3).unwrap(), 0.3 * 0.7);
        let ac = PotentialSpec::allen_cahn();
        assert_eq!(eval_V(&ac, 1.0).unwrap(), 0.0);
        let half = PotentialSpec::power(0.5).unwrap();
        for s in [&kpp, &ac, &half] {
            assert_eq!(eval_V(s, 0.0).unwrap(), 0.0);
        }
        assert!(matches!(eval_V(&half, -0.5), Err(Error::Domain(_))));
        assert!(eval_V(&kpp, -0.5).is_ok());
    }

    #[test]
    fn truncation_examples() {
        let kpp = PotentialSpec::kpp();
        assert_eq!(eval_V_truncated(&kpp, 5, -3.0), 0.0);
        assert_eq!(eval_V_truncated(&kpp, 2, 5.0), -2.0);
        for i in 0..=300 {
            let x = i as f64 / 100.0;
            assert_eq!(eval_V_truncated(&kpp, 3, x), eval_V_truncated(&kpp, 4, x));
        }
    }

    #[test]
    fn truncations_decrease_in_n() {
        // V is decreasing beyond its maximiser, so V_N >= V_{N+1} from N = 1 on.
        for spec in [PotentialSpec::kpp(), PotentialSpec::allen_cahn()] {
            for n in 1..8u32 {
                for i in -50..1000 {
                    let w = i as f64 / 50.0;
                    assert!(eval_V_truncated(&spec, n, w) >= eval_V_truncated(&spec, n + 1, w));
                }
            }
        }
    }

    #[test]
    fn hypothesis_examples() {
        assert!(check_hypotheses(&PotentialSpec::kpp(), &probe()).all_pass());
        assert!(check_hypotheses(&PotentialSpec::allen_cahn(), &probe()).all_pass());
        assert!(check_hypotheses(&PotentialSpec::power(0.5).unwrap(), &probe()).all_pass());
        let lin =
            PotentialSpec::tabulated(Table::new(vec![0.0, 100.0], vec![0.0, 50.0]).unwrap(), 2.0)
                .unwrap();
        let r = check_hypotheses(&lin, &probe());
        assert!(!r.f_prime_unbounded);
        assert!(!r.all_pass());
    }

    #[test]
    fn sup_v_stabilises_as_grid_extends() {
        let spec = PotentialSpec::allen_cahn();
        let max_on = |x_max: f64| {
            (1..=10_000)
                .map(|i| spec.v_unchecked(x_max * i as f64 / 10_000.0))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let a = max_on(5.0);
        let b = max_on(50.0);
        assert!((a - b).abs() < 1e-3);
        assert!((a - 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_constant(1.0), 4096.0);
        assert_eq!(gamma_constant(0.0), 0.25);
        assert!((gamma_constant(0.1) - 0.4096).abs() < 1e-12);
    }

    #[test]
    fn moment_bound_closed_form_matches_grid_max() {
        let gamma = gamma_constant(0.1);
        for spec in [
            PotentialSpec::kpp(),
            PotentialSpec::allen_cahn(),
            PotentialSpec::power(0.5).unwrap(),
        ] {
            for k in [2.0, 3.0, 5.5] {
                let a = 1.0 + gamma * k * k;
                let closed = moment_bound_R(&spec, k, gamma).unwrap();
                let nu = match spec.family {
                    Potential::Power { nu } => nu,
                    _ => unreachable!(),
                };
                let hi = 4.0 * a.powf(1.0 / nu) + 1.0;
                let oracle =
                    numeric_sup(|y| (spec.v_unchecked(y) + gamma * k * k * y) / a, 0.0, hi);
                assert!(
                    ((closed - oracle) / oracle).abs() < 1e-10,
                    "{closed} vs {oracle}"
                );
            }
        }
        let kpp = PotentialSpec::kpp();
        let r = moment_bound_R(&kpp, 2.0, gamma).unwrap();
        assert!((r - (1.0 + gamma * 4.0) / 4.0).abs() < 1e-14);
        assert!(moment_bound_R(&kpp, 1.5, gamma).is_err());
    }

    #[test]
    fn moment_bound_monotone_and_power_scaling() {
        let gamma = gamma_constant(1.0);
        let spec = PotentialSpec::allen_cahn();
        let mut prev = 0.0;
        for k in 2..40 {
            let r = moment_bound_R(&spec, k as f64, gamma).unwrap();
            assert!(r > prev);
            prev = r;
            // k^{2/nu} scaling
            let ratio = r / (k as f64).powf(2.0 / 2.0);
            assert!(ratio < 2.0 * gamma.sqrt());
        }
    }

    #[test]
    fn tabulated_moment_bound_uses_numeric_search() {
        let xs: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let tab = PotentialSpec::tabulated(Table::new(xs, ys).unwrap(), 2.0).unwrap();
        let gamma = 0.25;
        let got = moment_bound_R(&tab, 2.0, gamma).unwrap();
        let exact = (1.0 + gamma * 4.0) / 4.0;
        assert!((got - exact).abs() < 1e-3);
    }

    #[test]
    fn level_m_examples() {
        assert_eq!(compute_level_M(&PotentialSpec::kpp()).unwrap(), -2);
        assert_eq!(compute_level_M(&PotentialSpec::allen_cahn()).unwrap(), -2);
        assert_eq!(
            compute_level_M(&PotentialSpec::power(0.5).unwrap()).unwrap(),
            -3
        );
        // dense-grid oracle for KPP: v/2 <= v - v^2 <= v exactly on (0, 1/2]
        for i in 1..=10_000 {
            let v = 0.5 * i as f64 / 10_000.0;
            assert!(v - v * v >= 0.5 * v - 1e-15);
        }
        assert!(0.6 - 0.36 < 0.3);
    }

    #[test]
    fn diffusion_validation() {
        assert!(DiffusionSpec::new(Sigma::Linear(1.0), 1.0, 1.0).is_ok());
        assert!(DiffusionSpec::new(Sigma::Linear(1.0), 0.5, 0.0).is_err());
        assert!(DiffusionSpec::new(Sigma::Linear(1.0), 1.0, 2.0).is_err());
        let shifted = Sigma::Function(Arc::new(|x| x + 0.1));
        assert!(DiffusionSpec::new(shifted, 5.0, 0.0).is_err());
        let sin = Sigma::Function(Arc::new(|x: f64| x.sin()));
        let d = DiffusionSpec::new(sin, 1.0, 0.0).unwrap();
        assert_eq!(d.eval(0.0), 0.0);
        let tab = Table::parse("-1:-2, 0:0, 1:1").unwrap();
        let d = DiffusionSpec::new(Sigma::Tabulated(tab), 2.0, 1.0).unwrap();
        assert_eq!(d.eval(0.5), 0.5);
        assert_eq!(d.eval(-0.5), -1.0);
    }
}
