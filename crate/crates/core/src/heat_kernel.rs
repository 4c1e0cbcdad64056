//! The heat kernel of `d^2/dx^2` on the torus of length 2.
//!
//! Two representations are provided: the Gaussian image sum, which converges
//! fast for small times, and the theta (cosine) series, which converges fast
//! for large times.

use crate::error::{domain, Error, Result};
use crate::quad;
use crate::spectral::{signed_freq, Multiplier};
use crate::torus_field::Field;
use statrs::function::erf::erf;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEvalConfig {
    /// Images `|k| <= image_terms` of the Gaussian sum (raised automatically
    /// to [`image_terms_for`] when that is larger).
    pub image_terms: usize,
    /// Cosine modes `|k| <= fourier_modes`.
    pub fourier_modes: usize,
    /// Below this time the dispatcher uses the image sum.
    pub crossover_time: f64,
}

impl Default for KernelEvalConfig {
    fn default() -> Self {
        Self {
            image_terms: 10,
            fourier_modes: 128,
            crossover_time: 0.2,
        }
    }
}

impl KernelEvalConfig {
    pub fn new(image_terms: usize, fourier_modes: usize, crossover_time: f64) -> Result<Self> {
        if image_terms == 0 || fourier_modes == 0 {
            return Err(Error::Config("kernel truncations must be >= 1".into()));
        }
        if !(crossover_time > 0.0) {
            return Err(Error::Config("crossover_time must be > 0".into()));
        }
        Ok(Self {
            image_terms,
            fourier_modes,
            crossover_time,
        })
    }

    /// Default truncations for a grid of `j` points (`fourier_modes = j/2`).
    pub fn for_grid(j: usize) -> Self {
        Self {
            fourier_modes: (j / 2).max(1),
            ..Self::default()
        }
    }
}

/// Number of images after which the neglected tail is below machine epsilon.
pub fn image_terms_for(t: f64) -> usize {
    3 + (10.0 * t.sqrt()).ceil() as usize
}

/// Representative of `x - y` in `[-1, 1)`.
pub fn torus_diff(x: f64, y: f64) -> f64 {
    let d = x - y;
    let r = d - 2.0 * (d / 2.0).round();
    if r >= 1.0 {
        r - 2.0
    } else {
        r
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("kernel time must be > 0, got {t}"));
    }
    Ok(())
}

pub fn kernel_image_sum(t: f64, x: f64, y: f64, cfg: &KernelEvalConfig) -> Result<f64> {
    check_time(t)?;
    let d = torus_diff(x, y);
    let k_max = cfg.image_terms.max(image_terms_for(t)) as i64;
    let mut s = (-(d * d) / (4.0 * t)).exp();
    for k in 1..=k_max {
        let a = d + 2.0 * k as f64;
        let b = d - 2.0 * k as f64;
        s += (-(a * a) / (4.0 * t)).exp() + (-(b * b) / (4.0 * t)).exp();
    }
    Ok(s / (4.0 * PI * t).sqrt())
}

pub fn kernel_fourier(t: f64, x: f64, y: f64, cfg: &KernelEvalConfig) -> Result<f64> {
    check_time(t)?;
    let d = torus_diff(x, y);
    let mut s = 0.5;
    for k in 1..=cfg.fourier_modes {
        let kf = k as f64;
        let w = (-PI * PI * kf * kf * t).exp();
        if w == 0.0 {
            break;
        }
        s += w * (PI * kf * d).cos();
    }
    Ok(s)
}

/// Image sum below the crossover time, cosine series above it.
pub fn kernel(t: f64, x: f64, y: f64, cfg: &KernelEvalConfig) -> Result<f64> {
    if t < cfg.crossover_time {
        kernel_image_sum(t, x, y, cfg)
    } else {
        kernel_fourier(t, x, y, cfg)
    }
}

/// Heat semigroup applied on the grid through the multiplier `exp(-pi^2 k^2 t)`.
pub fn apply_semigroup(f: &Field, t: f64) -> Result<Field> {
    if !(t >= 0.0) {
        return domain(format!("semigroup time must be >= 0, got {t}"));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let n = f.len();
    let symbol: Vec<f64> = (0..n)
        .map(|k| {
            let q = signed_freq(k, n);
            (-PI * PI * q * q * t).exp()
        })
        .collect();
    let mut out = f.clone();
    Multiplier::new(n).apply(out.values_mut(), &symbol);
    Ok(out)
}

/// Mass that the time-`s` kernel centred at 0 puts on the arc `(c, b)`,
/// `b - c <= 2`.
fn arc_mass(s: f64, c: f64, b: f64, cfg: &KernelEvalConfig) -> f64 {
    if s < cfg.crossover_time {
        let sd = (4.0 * s).sqrt();
        let k_max = image_terms_for(s) as i64;
        let mut m = 0.0;
        for k in -k_max..=k_max {
            let shift = 2.0 * k as f64;
            m += 0.5 * (erf((b + shift) / sd) - erf((c + shift) / sd));
        }
        m
    } else {
        let mut m = 0.5 * (b - c);
        for k in 1..=cfg.fourier_modes.max(64) {
            let kf = k as f64;
            let w = (-PI * PI * kf * kf * s).exp();
            if w < 1e-300 {
                break;
            }
            m += w * ((PI * kf * b).sin() - (PI * kf * c).sin()) / (PI * kf);
        }
        m
    }
}

/// `int_T |p_s(x,y) - p_s(z,y)| dy` in closed form.
///
/// For separation `a` the two kernels cross at the midpoints `a/2` and
/// `a/2 - 1`, so the integral is `2 (2 m - 1)` with `m` the mass of the arc
/// of length 1 centred at the first pole.
pub fn kernel_l1_inner(s: f64, x: f64, z: f64, cfg: &KernelEvalConfig) -> Result<f64> {
    check_time(s)?;
    let a = torus_diff(x, z).abs();
    if a == 0.0 {
        return Ok(0.0);
    }
    let m = arc_mass(s, a / 2.0 - 1.0, a / 2.0, cfg);
    Ok((2.0 * (2.0 * m - 1.0)).max(0.0))
}

/// `int_0^{t_max} int_T |p_s(x,y) - p_s(z,y)| dy ds`.
pub fn kernel_l1_difference(x: f64, z: f64, t_max: f64, cfg: &KernelEvalConfig) -> Result<f64> {
    if !(t_max > 0.0) {
        return domain(format!("t_max must be > 0, got {t_max}"));
    }
    if torus_diff(x, z) == 0.0 {
        return Ok(0.0);
    }
    // Beyond s = 6 the integrand is below exp(-pi^2 * 6).
    let upper = t_max.min(6.0).sqrt();
    let a = torus_diff(x, z).abs();
    let knee = a.min(upper);
    // s = u^2 removes the square-root behaviour at s = 0.
    let v = quad::integrate_pieces(
        |u| {
            if u <= 0.0 {
                0.0
            } else {
                2.0 * u * kernel_l1_inner(u * u, x, z, cfg).unwrap_or(0.0)
            }
        },
        0.0,
        upper,
        &[knee],
        1e-12,
    );
    Ok(v)
}

/// `int_0^{t_max} int_T |p_s(x,y) - p_s(z,y)|^2 dy ds` from the cosine series
/// `sum_k (1 - cos(pi k d)) (1 - exp(-2 pi^2 k^2 t_max)) / (pi^2 k^2)`,
/// summed as `|d|/2 - d^2/4` minus the exponentially small remainder.
pub fn kernel_l2_difference(x: f64, z: f64, t_max: f64, _cfg: &KernelEvalConfig) -> Result<f64> {
    if !(t_max > 0.0) {
        return domain(format!("t_max must be > 0, got {t_max}"));
    }
    let d = torus_diff(x, z).abs();
    if d == 0.0 {
        return Ok(0.0);
    }
    let mut tail = 0.0;
    if t_max.is_finite() {
        let mut k = 1u64;
        loop {
            let kf = k as f64;
            let w = (-2.0 * PI * PI * kf * kf * t_max).exp();
            if w < 1e-18 * (kf * kf) * d.max(1e-300) || k > 10_000_000 {
                break;
            }
            tail += (1.0 - (PI * kf * d).cos()) * w / (kf * kf);
            k += 1;
        }
    }
    Ok(d / 2.0 - d * d / 4.0 - tail / (PI * PI))
}

/// One row of the cross-representation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelErrorRow {
    pub t: f64,
    pub d: f64,
    pub image: f64,
    pub fourier: f64,
    pub abs_err: f64,
}

/// Compare both representations on a lattice of times and separations.
pub fn representation_table(
    times: &[f64],
    separations: &[f64],
    cfg: &KernelEvalConfig,
) -> Result<Vec<KernelErrorRow>> {
    let mut rows = Vec::with_capacity(times.len() * separations.len());
    for &t in times {
        for &d in separations {
            let image = kernel_image_sum(t, d, 0.0, cfg)?;
            let fourier = kernel_fourier(t, d, 0.0, cfg)?;
            rows.push(KernelErrorRow {
                t,
                d,
                image,
                fourier,
                abs_err: (image - fourier).abs(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_field::{supremum, TorusGrid};

    fn cfg() -> KernelEvalConfig {
        KernelEvalConfig::default()
    }

    // Independent oracle: plain composite Simpson rule.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn image_sum_at_quarter_matches_wide_oracle() {
        let wide = KernelEvalConfig::new(50, 128, 0.2).unwrap();
        let v = kernel_image_sum(0.25, 0.1, 0.1, &cfg()).unwrap();
        let o = kernel_image_sum(0.25, 0.1, 0.1, &wide).unwrap();
        assert!((v - o).abs() < 1e-15);
        // leading term (4 pi t)^{-1/2} plus small image corrections
        let lead = (PI).sqrt().recip();
        assert!(v > lead && v - lead < 0.05);
    }

    #[test]
    fn image_sum_symmetry_and_period() {
        let c = cfg();
        for &(t, x, y) in &[(0.03, 0.2, -0.7), (1.3, 0.9, 0.1), (0.2, -0.99, 0.98)] {
            let a = kernel_image_sum(t, x, y, &c).unwrap();
            assert!((a - kernel_image_sum(t, y, x, &c).unwrap()).abs() < 1e-15);
            assert!((a - kernel_image_sum(t, x + 2.0, y, &c).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn nonpositive_time_is_domain_error() {
        assert!(matches!(
            kernel_image_sum(0.0, 0.0, 0.0, &cfg()),
            Err(Error::Domain(_))
        ));
        assert!(kernel_fourier(-1.0, 0.0, 0.0, &cfg()).is_err());
    }

    #[test]
    fn fourier_examples() {
        let c = cfg();
        assert!((kernel_fourier(50.0, 0.3, -0.4, &c).unwrap() - 0.5).abs() < 1e-15);
        let a = kernel_image_sum(0.5, 0.3, -0.2, &c).unwrap();
        let b = kernel_fourier(0.5, 0.3, -0.2, &c).unwrap();
        assert!((a - b).abs() < 1e-12);
        for &t in &[0.01, 0.3, 2.0] {
            let m = simpson(|y| kernel(t, 0.4, y, &c).unwrap(), -1.0, 1.0, 4000);
            assert!((m - 1.0).abs() < 1e-10, "t={t} mass={m}");
        }
    }

    #[test]
    fn semigroup_examples() {
        let g = TorusGrid::new(64).unwrap();
        let one = Field::constant(g, 1.0);
        assert_eq!(apply_semigroup(&one, 0.7).unwrap(), one);
        let c = Field::from_fn(g, |x| (PI * x).cos()).unwrap();
        let t = 0.13;
        let got = apply_semigroup(&c, t).unwrap();
        let decay = (-PI * PI * t).exp();
        for (a, b) in got.values().iter().zip(c.values()) {
            assert!((a - decay * b).abs() < 1e-14);
        }
        assert_eq!(apply_semigroup(&c, 0.0).unwrap(), c);
        assert!(supremum(&got) <= supremum(&c));
    }

    #[test]
    fn l2_closed_form_matches_direct_quadrature() {
        let c = cfg();
        for &(x, z, tm) in &[(0.1, -0.15, 1.0), (0.5, -0.5, 0.3), (0.0, 0.0625, 2.0)] {
            let series = kernel_l2_difference(x, z, tm, &c).unwrap();
            // direct: inner integral in y by Simpson, outer in s = u^2.
            let inner = |s: f64| {
                quad::integrate_pieces(
                    |y| {
                        let d = kernel(s, x, y, &c).unwrap() - kernel(s, z, y, &c).unwrap();
                        d * d
                    },
                    -1.0,
                    1.0,
                    &[
                        x - 8.0 * s.sqrt(),
                        x,
                        x + 8.0 * s.sqrt(),
                        z - 8.0 * s.sqrt(),
                        z,
                        z + 8.0 * s.sqrt(),
                    ],
                    1e-12 / s.sqrt().min(1.0),
                )
            };
            let direct = quad::integrate(
                |u| {
                    if u == 0.0 {
                        0.0
                    } else {
                        2.0 * u * inner(u * u)
                    }
                },
                0.0,
                tm.sqrt(),
                1e-11,
            );
            assert!(
                (series - direct).abs() < 1e-8,
                "x={x} z={z}: series {series} direct {direct}"
            );
        }
    }

    #[test]
    fn l2_ratio_bounded_over_dyadic_separations() {
        let c = cfg();
        assert_eq!(kernel_l2_difference(0.3, 0.3, 1.0, &c).unwrap(), 0.0);
        for j in 3..=12 {
            let d = 2f64.powi(-j);
            let r = kernel_l2_difference(d, 0.0, f64::INFINITY, &c).unwrap() / d;
            assert!(r > 0.4 && r <= 0.5, "ratio {r}");
        }
    }

    #[test]
    fn l1_inner_matches_brute_force() {
        let c = cfg();
        for &(s, x, z) in &[(0.001, 0.1, 0.0), (0.05, 0.3, -0.2), (0.7, 0.9, -0.9)] {
            let fast = kernel_l1_inner(s, x, z, &c).unwrap();
            let brute = simpson(
                |y| (kernel(s, x, y, &c).unwrap() - kernel(s, z, y, &c).unwrap()).abs(),
                -1.0,
                1.0,
                200_000,
            );
            assert!((fast - brute).abs() < 1e-7, "s={s}: {fast} vs {brute}");
        }
    }

    #[test]
    fn l1_difference_properties() {
        let c = cfg();
        assert_eq!(kernel_l1_difference(0.2, 0.2, 1.0, &c).unwrap(), 0.0);
        assert!(kernel_l1_difference(0.2, 0.1, 0.0, &c).is_err());
        let a = kernel_l1_difference(0.2, 0.1, 0.1, &c).unwrap();
        let b = kernel_l1_difference(0.2, 0.1, 1.0, &c).unwrap();
        assert!(b >= a);
        // ratio against d log+(1/d) stays bounded, and the full-time integral
        // respects the series bound from the triangle inequality
        let mut ratios = Vec::new();
        for j in 3..=8 {
            let d = 2f64.powi(-j);
            let v = kernel_l1_difference(d, 0.0, f64::INFINITY, &c).unwrap();
            let logp = (1.0 / d).max(std::f64::consts::E).ln();
            ratios.push(v / (d * logp));
            let bound: f64 = (1..200_000)
                .map(|k| {
                    let kf = k as f64;
                    (d * PI * kf).min(1.0) / (kf * kf)
                })
                .sum::<f64>()
                * 2.0
                * 2f64.sqrt()
                / (PI * PI);
            assert!(v <= bound, "d={d}: {v} > {bound}");
        }
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi < 1.0 && lo > 0.05, "{ratios:?}");
    }

    #[test]
    fn l1_difference_matches_nested_quadrature() {
        let c = cfg();
        let (x, z, tm) = (0.25, 0.0, 0.5);
        let fast = kernel_l1_difference(x, z, tm, &c).unwrap();
        let brute = simpson(
            |u| {
                if u == 0.0 {
                    return 0.0;
                }
                let s = u * u;
                2.0 * u
                    * simpson(
                        |y| (kernel(s, x, y, &c).unwrap() - kernel(s, z, y, &c).unwrap()).abs(),
                        -1.0,
                        1.0,
                        20_000,
                    )
            },
            0.0,
            tm.sqrt(),
            400,
        );
        assert!((fast - brute).abs() < 1e-5, "{fast} vs {brute}");
    }
}
