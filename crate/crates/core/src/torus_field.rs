//! Uniform periodic grid on `[-1, 1)` and scalar observables of profiles.

use crate::error::{usage, Error, Result};
use crate::stats::tree_sum;

/// `J` equispaced points on the torus of length 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    points: usize,
}

impl TorusGrid {
    pub fn new(points: usize) -> Result<Self> {
        if points < 4 || points % 2 != 0 {
            return usage(format!(
                "grid needs an even number of points >= 4, got {points}"
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dx(&self) -> f64 {
        2.0 / self.points as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.dx()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coord(i)).collect()
    }

    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.points as isize) as usize
    }
}

/// A finite profile on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return usage("empty field");
        }
        if values.len() != grid.points() {
            return usage(format!(
                "field has {} values but the grid has {} points",
                values.len(),
                grid.points()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return usage(format!("non-finite field value at index {i}"));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.points());
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self::from_vec_unchecked(grid, vec![c; grid.points()])
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.coords().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Field {
        Self::from_vec_unchecked(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

fn same_grid(f: &Field, g: &Field) -> Result<()> {
    if f.grid != g.grid {
        return usage(format!(
            "grid mismatch: {} vs {} points",
            f.grid.points(),
            g.grid.points()
        ));
    }
    Ok(())
}

pub fn infimum(f: &Field) -> f64 {
    f.values.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn supremum(f: &Field) -> f64 {
    f.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Left-endpoint rule `dx * sum(values)`.
pub fn haar_integral(f: &Field) -> f64 {
    f.grid.dx() * tree_sum(&f.values)
}

pub fn spatial_mean(f: &Field) -> f64 {
    haar_integral(f) / 2.0
}

pub fn l1_distance(f: &Field, g: &Field) -> Result<f64> {
    same_grid(f, g)?;
    let d: Vec<f64> = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok(f.grid.dx() * tree_sum(&d))
}

pub fn sup_distance(f: &Field, g: &Field) -> Result<f64> {
    same_grid(f, g)?;
    Ok(f.values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Discrete Holder seminorm over the given index lags.
///
/// Every pair `(i, i + h mod J)` is used, including the ones that straddle
/// the seam at `x = 1 ~ -1`; the distance is the periodic one,
/// `min(h dx, 2 - h dx)`.
pub fn holder_seminorm(f: &Field, alpha: f64, lags: &[usize]) -> Result<f64> {
    if lags.is_empty() {
        return usage("holder_seminorm needs at least one lag");
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "holder exponent {alpha} outside (0, 1]"
        )));
    }
    let n = f.len();
    let dx = f.grid.dx();
    let mut best: f64 = 0.0;
    for &h in lags {
        if h == 0 || h > n / 2 {
            return usage(format!("lag {h} outside 1..={}", n / 2));
        }
        let dist = (h as f64 * dx).min(2.0 - h as f64 * dx);
        let scale = dist.powf(alpha);
        let v = &f.values;
        let mut m: f64 = 0.0;
        for i in 0..n {
            m = m.max((v[(i + h) % n] - v[i]).abs());
        }
        best = best.max(m / scale);
    }
    Ok(best)
}

/// Largest `||f(t_j) - f(t_i)||_sup / (t_j - t_i)^theta` over snapshot pairs.
pub fn temporal_increment_stat(series: &[(f64, Field)], theta: f64) -> Result<f64> {
    if series.len() < 2 {
        return usage("temporal_increment_stat needs at least two snapshots");
    }
    if !(theta > 0.0 && theta < 0.25) {
        return Err(Error::Domain(format!("theta {theta} outside (0, 1/4)")));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return usage("snapshot times must be strictly increasing");
    }
    let mut best: f64 = 0.0;
    for (i, (ti, fi)) in series.iter().enumerate() {
        for (tj, fj) in &series[i + 1..] {
            best = best.max(sup_distance(fj, fi)? / (tj - ti).powf(theta));
        }
    }
    Ok(best)
}

/// Header line `t,x_0,...,x_{J-1}`.
pub fn csv_header(grid: TorusGrid) -> String {
    let mut s = String::from("t");
    for i in 0..grid.points() {
        s.push_str(&format!(",x_{i}"));
    }
    s
}

/// One CSV row with 17 significant digits per value.
pub fn csv_row(t: f64, f: &Field) -> String {
    let mut s = format!("{t:.16e}");
    for v in &f.values {
        s.push_str(&format!(",{v:.16e}"));
    }
    s
}

/// Parse rows written by [`csv_header`] / [`csv_row`].
pub fn parse_csv(text: &str) -> Result<Vec<(f64, Field)>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Usage("empty csv".into()))?;
    let j = header.split(',').count() - 1;
    let grid = TorusGrid::new(j)?;
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let nums: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
        let nums = nums.map_err(|e| Error::Usage(format!("csv row {}: {e}", n + 1)))?;
        if nums.len() != j + 1 {
            return usage(format!("csv row {} has {} columns", n + 1, nums.len()));
        }
        out.push((nums[0], Field::new(grid, nums[1..].to_vec())?));
    }
    Ok(out)
}
