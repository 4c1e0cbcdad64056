//! Discretised space-time white noise.
//!
//! Slabs are addressed by `(master_seed, replica, tag, step)`: the ChaCha
//! key comes from the seed, the stream id from `(replica, tag)`, and each
//! step starts at its own block offset, so any slab can be regenerated in
//! isolation and replicas never share randomness.

use crate::error::{usage, Error, Result};
use crate::torus_field::{Field, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Identity string written next to every output.
pub const RNG_IDENTITY: &str =
    "ChaCha8Rng (rand_chacha 0.9), StandardNormal (rand_distr 0.5 ziggurat), stream = replica*16 + tag, 2^24 words per step";

/// Words reserved per step; enough for about four million normals.
const WORDS_PER_STEP: u128 = 1 << 24;
const TAGS: u64 = 16;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-addressed noise source owned by one trajectory.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    master_seed: u64,
    replica_id: u64,
    tag: u64,
    step_counter: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(master_seed: u64, replica_id: u64) -> Self {
        Self::with_tag(master_seed, replica_id, 0)
    }

    /// Independent sub-stream `tag` (< 16) of the same replica.
    pub fn with_tag(master_seed: u64, replica_id: u64, tag: u64) -> Self {
        assert!(tag < TAGS, "noise tag must be < {TAGS}");
        let mut s = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replica_id.wrapping_mul(TAGS).wrapping_add(tag));
        Self {
            master_seed,
            replica_id,
            tag,
            step_counter: 0,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn replica_id(&self) -> u64 {
        self.replica_id
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    /// Jump to an arbitrary step.
    pub fn seek(&mut self, step: u64) {
        self.step_counter = step;
    }

    fn position(&mut self) {
        self.rng
            .set_word_pos(self.step_counter as u128 * WORDS_PER_STEP);
        self.step_counter += 1;
    }

    /// Fill `out` with the standard normals of the current step and advance.
    pub fn fill(&mut self, out: &mut [f64]) {
        self.position();
        for v in out.iter_mut() {
            *v = self.rng.sample(StandardNormal);
        }
    }

    /// Fill `out` with uniforms on `[0, 1)` from the current step and advance.
    pub fn fill_uniform(&mut self, out: &mut [f64]) {
        self.position();
        for v in out.iter_mut() {
            *v = self.rng.random::<f64>();
        }
    }

    pub fn next_slab(&mut self, grid: TorusGrid) -> NoiseSlab {
        let mut xi = vec![0.0; grid.points()];
        self.fill(&mut xi);
        NoiseSlab { grid, xi }
    }
}

/// One step of i.i.d. standard normals, one per grid cell.
///
/// The physical increment of cell `i` is `sqrt(dt dx) xi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSlab {
    pub grid: TorusGrid,
    pub xi: Vec<f64>,
}

/// `sqrt(min(|y|, 1))`.
#[inline]
pub fn mixing_f(y: f64) -> f64 {
    y.abs().min(1.0).sqrt()
}

/// `sqrt(1 - min(|y|, 1))`.
#[inline]
pub fn mixing_g(y: f64) -> f64 {
    (1.0 - y.abs().min(1.0)).sqrt()
}

/// Entrywise `gw * s1 + fw * s2`.
pub fn mix_slabs(s1: &NoiseSlab, s2: &NoiseSlab, gw: &Field, fw: &Field) -> Result<NoiseSlab> {
    let grid = s1.grid;
    if s2.grid != grid || gw.grid() != grid || fw.grid() != grid {
        return usage("mix_slabs: grid mismatch");
    }
    let mut xi = Vec::with_capacity(grid.points());
    for i in 0..grid.points() {
        let (g, f) = (gw.values()[i], fw.values()[i]);
        if (g * g + f * f - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "mixing weights at cell {i} violate g^2 + f^2 = 1"
            )));
        }
        xi.push(g * s1.xi[i] + f * s2.xi[i]);
    }
    Ok(NoiseSlab { grid, xi })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenessReport {
    pub slabs: usize,
    pub cell_variances: Vec<f64>,
    /// `(i, j, covariance)` for every pair of distinct cells.
    pub cross_covariances: Vec<(usize, usize, f64)>,
    pub lag1_correlations: Vec<f64>,
    pub max_variance_z: f64,
    pub max_covariance_z: f64,
    pub max_lag1_z: f64,
    pub threshold_z: f64,
    pub pass: bool,
}

/// Per-cell variance, cross-cell covariance and lag-one time correlation of
/// a slab sequence, each standardised and compared with a four-sigma
/// threshold (raised to a Bonferroni level when many statistics are tested).
pub fn whiteness_test(slabs: &[NoiseSlab]) -> Result<WhitenessReport> {
    let n = slabs.len();
    if n < 10_000 {
        return usage(format!("whiteness_test needs >= 10^4 slabs, got {n}"));
    }
    let j = slabs[0].xi.len();
    if slabs.iter().any(|s| s.xi.len() != j) {
        return usage("whiteness_test: slabs of different sizes");
    }
    let nf = n as f64;
    let mut mean = vec![0.0; j];
    for s in slabs {
        for (m, x) in mean.iter_mut().zip(&s.xi) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut cov = vec![0.0; j * j];
    let mut lag = vec![0.0; j];
    for (k, s) in slabs.iter().enumerate() {
        for a in 0..j {
            let da = s.xi[a] - mean[a];
            for b in a..j {
                cov[a * j + b] += da * (s.xi[b] - mean[b]);
            }
            if k + 1 < n {
                lag[a] += da * (slabs[k + 1].xi[a] - mean[a]);
            }
        }
    }
    let cell_variances: Vec<f64> = (0..j).map(|a| cov[a * j + a] / (nf - 1.0)).collect();
    let mut cross = Vec::new();
    for a in 0..j {
        for b in a + 1..j {
            cross.push((a, b, cov[a * j + b] / (nf - 1.0)));
        }
    }
    let lag1: Vec<f64> = (0..j)
        .map(|a| lag[a] / (nf - 1.0) / cell_variances[a])
        .collect();
    let max_variance_z = cell_variances
        .iter()
        .map(|v| (v - 1.0).abs() / (2.0 / nf).sqrt())
        .fold(0.0, f64::max);
    let max_covariance_z = cross
        .iter()
        .map(|c| c.2.abs() * nf.sqrt())
        .fold(0.0, f64::max);
    let max_lag1_z = lag1.iter().map(|r| r.abs() * nf.sqrt()).fold(0.0, f64::max);
    let tests = (j + cross.len() + j) as f64;
    let normal = Normal::standard();
    let bonferroni = normal.inverse_cdf(1.0 - 1e-4 / (2.0 * tests));
    let threshold_z = bonferroni.max(4.0);
    let pass = max_variance_z <= threshold_z
        && max_covariance_z <= threshold_z
        && max_lag1_z <= threshold_z;
    Ok(WhitenessReport {
        slabs: n,
        cell_variances,
        cross_covariances: cross,
        lag1_correlations: lag1,
        max_variance_z,
        max_covariance_z,
        max_lag1_z,
        threshold_z,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(j: usize) -> TorusGrid {
        TorusGrid::new(j).unwrap()
    }

    #[test]
    fn slabs_are_reproducible_and_addressable() {
        let g = grid(16);
        let mut a = NoiseStream::new(7, 3);
        let mut b = NoiseStream::new(7, 3);
        let a0 = a.next_slab(g);
        let a1 = a.next_slab(g);
        assert_eq!(a0, b.next_slab(g));
        let mut c = NoiseStream::new(7, 3);
        c.seek(1);
        assert_eq!(a1, c.next_slab(g));
        assert_ne!(a0, NoiseStream::new(7, 4).next_slab(g));
        assert_ne!(a0, NoiseStream::with_tag(7, 3, 1).next_slab(g));
        assert_ne!(a0, NoiseStream::new(8, 3).next_slab(g));
    }

    #[test]
    fn slab_moments() {
        let g = grid(1000);
        let mut s = NoiseStream::new(1, 0);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..1000 {
            for x in s.next_slab(g).xi {
                sum += x;
                sq += x * x;
            }
        }
        let n = 1e6;
        let m = sum / n;
        assert!(m.abs() < 4e-3);
        let v = sq / n - m * m;
        assert!((v - 1.0).abs() < 0.01);
    }

    #[test]
    fn mixing_examples() {
        assert_eq!((mixing_f(0.0), mixing_g(0.0)), (0.0, 1.0));
        assert_eq!((mixing_f(1.0), mixing_g(1.0)), (1.0, 0.0));
        assert_eq!(mixing_f(0.25), 0.5);
        assert!((mixing_g(0.25) - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(mixing_f(-3.0), 1.0);
        for i in 0..100 {
            let y = i as f64 / 37.0 - 1.3;
            let (f, g) = (mixing_f(y), mixing_g(y));
            assert!((f * f + g * g - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mix_extremes_return_inputs() {
        let g = grid(8);
        let mut s = NoiseStream::new(2, 0);
        let (a, b) = (s.next_slab(g), s.next_slab(g));
        let one = Field::constant(g, 1.0);
        let zero = Field::zeros(g);
        assert_eq!(mix_slabs(&a, &b, &one, &zero).unwrap(), a);
        assert_eq!(mix_slabs(&a, &b, &zero, &one).unwrap(), b);
        let bad = Field::constant(g, 0.9);
        assert!(matches!(
            mix_slabs(&a, &b, &bad, &bad),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn half_mixture_is_white() {
        let g = grid(8);
        let h = Field::constant(g, 0.5f64.sqrt());
        let mut s1 = NoiseStream::with_tag(3, 0, 0);
        let mut s2 = NoiseStream::with_tag(3, 0, 1);
        let slabs: Vec<NoiseSlab> = (0..100_000)
            .map(|_| mix_slabs(&s1.next_slab(g), &s2.next_slab(g), &h, &h).unwrap())
            .collect();
        let r = whiteness_test(&slabs).unwrap();
        assert!(r.pass, "{r:?}");
        let bound = 4.0 / (slabs.len() as f64).sqrt();
        assert!(r.cross_covariances.iter().all(|c| c.2.abs() <= bound));
        assert!(r.cell_variances.iter().all(|v| (v - 1.0).abs() < 0.02));
    }

    #[test]
    fn whiteness_detects_reused_slabs() {
        let g = grid(8);
        let mut s = NoiseStream::new(4, 0);
        let pure: Vec<NoiseSlab> = (0..20_000).map(|_| s.next_slab(g)).collect();
        assert!(whiteness_test(&pure).unwrap().pass);
        let mut reused = Vec::new();
        for slab in pure.iter().take(10_000) {
            reused.push(slab.clone());
            reused.push(slab.clone());
        }
        let r = whiteness_test(&reused).unwrap();
        assert!(!r.pass);
        assert!(r.max_lag1_z > 20.0);
        assert!(whiteness_test(&pure[..100]).is_err());
    }

    #[test]
    fn f_has_square_root_modulus() {
        for i in 0..200 {
            for k in 0..50 {
                let y = i as f64 / 200.0;
                let z = k as f64 / 50.0;
                assert!((mixing_f(y) - mixing_f(z)).abs() <= (y - z).abs().sqrt() + 1e-15);
            }
        }
    }
}
