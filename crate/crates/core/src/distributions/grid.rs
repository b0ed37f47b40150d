//! Piecewise-constant densities on axis-aligned phase-space grids.

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::phase_space::PhasePoint;

const RIEMANN_TOL: f64 = 1e-9;

/// A nonnegative density tabulated on a regular box grid, normalized so the
/// Riemann sum `Σ value · cell_volume = 1`.
///
/// Axes follow the flat `(q¹..qⁿ, k₁..kₙ)` ordering; values are stored
/// row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    dof: usize,
    low: Vec<f64>,
    high: Vec<f64>,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl GridDensity {
    /// Build from already-normalized values; rejects anything off by more
    /// than `1e-9` in the Riemann sum.
    pub fn new(low: Vec<f64>, high: Vec<f64>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let g = Self::validate_geometry(low, high, shape, values)?;
        let sum = g.riemann_sum();
        if (sum - 1.0).abs() > RIEMANN_TOL {
            return Err(Error::InvalidDistribution(format!(
                "grid Riemann sum is {sum}, not 1"
            )));
        }
        Ok(g)
    }

    /// Build from raw nonnegative values, normalizing the Riemann sum.
    pub fn normalized(
        low: Vec<f64>,
        high: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut g = Self::validate_geometry(low, high, shape, values)?;
        let sum = g.riemann_sum();
        if sum <= 0.0 {
            return Err(Error::InvalidDistribution(
                "grid values are all zero; nothing to normalize".into(),
            ));
        }
        for v in &mut g.values {
            *v /= sum;
        }
        Ok(g)
    }

    /// Tabulate a density function at cell centers and normalize.
    pub fn tabulate<F>(low: Vec<f64>, high: Vec<f64>, shape: Vec<usize>, density: F) -> Result<Self>
    where
        F: Fn(&PhasePoint) -> f64 + Sync + Send,
    {
        let len: usize = shape.iter().product();
        let probe = Self::validate_geometry(low, high, shape, vec![0.0; len])?;
        let values = exec::map_indices(len, |idx| {
            let x = probe.cell_center(idx);
            density(&x)
        });
        Self::normalized(probe.low, probe.high, probe.shape, values)
    }

    /// The uniform density on a box, exactly: a single cell per axis.
    pub fn uniform_box(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let dims = low.len();
        let volume: f64 = low.iter().zip(&high).map(|(a, b)| b - a).product();
        if volume <= 0.0 {
            return Err(Error::InvalidDistribution(
                "uniform box needs positive extent on every axis".into(),
            ));
        }
        Self::new(low, high, vec![1; dims], vec![1.0 / volume])
    }

    /// Construct without the Riemann-sum check. Remapped grids are
    /// discretized approximations; their normalization drift is a measured
    /// quantity, not a constructor invariant.
    pub(crate) fn from_parts_relaxed(
        low: Vec<f64>,
        high: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::validate_geometry(low, high, shape, values)
    }

    fn validate_geometry(
        low: Vec<f64>,
        high: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let dims = low.len();
        if dims == 0 || dims % 2 != 0 {
            return Err(Error::InvalidDistribution(format!(
                "grid needs an even, positive number of axes, got {dims}"
            )));
        }
        if high.len() != dims || shape.len() != dims {
            return Err(Error::InvalidDistribution(
                "bounds and shape must agree on the number of axes".into(),
            ));
        }
        if low
            .iter()
            .zip(&high)
            .any(|(a, b)| !a.is_finite() || !b.is_finite() || a >= b)
        {
            return Err(Error::InvalidDistribution(
                "grid bounds must be finite with low < high".into(),
            ));
        }
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::InvalidDistribution("grid shape has a zero axis".into()));
        }
        let len: usize = shape.iter().product();
        if values.len() != len {
            return Err(Error::InvalidDistribution(format!(
                "expected {len} cell values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDistribution(
                "grid values must be finite and nonnegative".into(),
            ));
        }
        Ok(GridDensity {
            dof: dims / 2,
            low,
            high,
            shape,
            values,
        })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_volume(&self) -> f64 {
        self.low
            .iter()
            .zip(&self.high)
            .zip(&self.shape)
            .map(|((a, b), &s)| (b - a) / s as f64)
            .product()
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.high[axis] - self.low[axis]) / self.shape[axis] as f64
    }

    pub fn riemann_sum(&self) -> f64 {
        exec::sum(&self.values) * self.cell_volume()
    }

    pub(crate) fn cell_center(&self, index: usize) -> PhasePoint {
        let mut flat = vec![0.0; self.low.len()];
        let mut rem = index;
        for axis in (0..self.low.len()).rev() {
            let i = rem % self.shape[axis];
            rem /= self.shape[axis];
            flat[axis] = self.low[axis] + (i as f64 + 0.5) * self.step(axis);
        }
        PhasePoint::from_flat(&nalgebra::DVector::from_vec(flat))
    }

    fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (axis, &i) in multi.iter().enumerate() {
            idx = idx * self.shape[axis] + i;
        }
        idx
    }

    /// Piecewise-constant lookup: the value of the containing cell, zero
    /// outside the box.
    pub fn density_at(&self, x: &PhasePoint) -> f64 {
        let flat = x.to_flat();
        let mut multi = vec![0usize; self.low.len()];
        for axis in 0..self.low.len() {
            let v = flat[axis];
            if v < self.low[axis] || v > self.high[axis] {
                return 0.0;
            }
            let i = ((v - self.low[axis]) / self.step(axis)).floor() as isize;
            multi[axis] = (i.max(0) as usize).min(self.shape[axis] - 1);
        }
        self.values[self.flat_index(&multi)]
    }

    /// Multilinear interpolation between cell-center nodes, clamped at the
    /// boundary. Used by pushforward, where piecewise-constant lookup would
    /// alias badly on non-grid-aligned maps.
    pub fn interpolate_at(&self, x: &PhasePoint) -> f64 {
        let dims = self.low.len();
        let flat = x.to_flat();
        // For each axis find the lower node and the interpolation fraction.
        let mut base = vec![0usize; dims];
        let mut frac = vec![0.0f64; dims];
        for axis in 0..dims {
            let v = flat[axis];
            if v < self.low[axis] || v > self.high[axis] {
                return 0.0;
            }
            let h = self.step(axis);
            let t = (v - self.low[axis]) / h - 0.5;
            let cells = self.shape[axis];
            if t <= 0.0 || cells == 1 {
                base[axis] = 0;
                frac[axis] = 0.0;
            } else if t >= (cells - 1) as f64 {
                base[axis] = cells - 1;
                frac[axis] = 0.0;
            } else {
                base[axis] = t.floor() as usize;
                frac[axis] = t - t.floor();
            }
        }
        let mut acc = 0.0;
        let corners = 1usize << dims;
        let mut multi = vec![0usize; dims];
        for corner in 0..corners {
            let mut weight = 1.0;
            for (axis, b) in base.iter().enumerate() {
                let hi = (corner >> axis) & 1 == 1;
                if hi {
                    weight *= frac[axis];
                    multi[axis] = (b + 1).min(self.shape[axis] - 1);
                } else {
                    weight *= 1.0 - frac[axis];
                    multi[axis] = *b;
                }
            }
            if weight != 0.0 {
                acc += weight * self.values[self.flat_index(&multi)];
            }
        }
        acc
    }

    /// Draw one sample: a cell by its probability mass, then a uniform
    /// position within it. `cum` is the cumulative mass table from
    /// [`GridDensity::cumulative_mass`].
    pub(crate) fn sample_flat_into<R: Rng>(&self, cum: &[f64], rng: &mut R, out: &mut [f64]) {
        let u: f64 = rng.random();
        let cell = match cum.binary_search_by(|c| c.partial_cmp(&u).expect("finite mass")) {
            Ok(i) | Err(i) => i.min(cum.len() - 1),
        };
        let mut rem = cell;
        let dims = self.low.len();
        let mut multi = vec![0usize; dims];
        for axis in (0..dims).rev() {
            multi[axis] = rem % self.shape[axis];
            rem /= self.shape[axis];
        }
        for axis in 0..dims {
            let h = self.step(axis);
            let a = self.low[axis] + multi[axis] as f64 * h;
            out[axis] = a + rng.random::<f64>() * h;
        }
    }

    pub(crate) fn cumulative_mass(&self) -> Result<Vec<f64>> {
        let vol = self.cell_volume();
        let mut acc = 0.0;
        let cum: Vec<f64> = self
            .values
            .iter()
            .map(|v| {
                acc += v * vol;
                acc
            })
            .collect();
        if acc <= 0.0 {
            return Err(Error::InvalidDistribution(
                "grid has zero total mass; cannot sample".into(),
            ));
        }
        Ok(cum)
    }

    /// Moments treat each cell as a uniform block: means use cell centers,
    /// variances add the within-cell term `Δ²/12`, which makes single-cell
    /// uniform boxes exact.
    pub(crate) fn axis_moments(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let dims = self.low.len();
        let vol = self.cell_volume();
        let mut mean = vec![0.0; dims];
        for axis in 0..dims {
            mean[axis] = exec::sum(
                &exec::map_indices(self.values.len(), |i| {
                    self.values[i] * vol * self.cell_center(i).to_flat()[axis]
                }),
            );
        }
        let mut var = vec![0.0; dims];
        for axis in 0..dims {
            let mu = mean[axis];
            let within = self.step(axis) * self.step(axis) / 12.0;
            var[axis] = exec::sum(&exec::map_indices(self.values.len(), |i| {
                let c = self.cell_center(i).to_flat()[axis];
                self.values[i] * vol * ((c - mu) * (c - mu) + within)
            }));
        }
        // Cross moments q_i k_i; within-cell axes are independent.
        let n = self.dof;
        let mut cross = vec![0.0; n];
        for axis in 0..n {
            let (mq, mk) = (mean[axis], mean[n + axis]);
            cross[axis] = exec::sum(&exec::map_indices(self.values.len(), |i| {
                let f = self.cell_center(i).to_flat();
                self.values[i] * vol * (f[axis] - mq) * (f[n + axis] - mk)
            }));
        }
        (mean, var, cross)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_box_is_exactly_normalized() {
        let g = GridDensity::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(g.riemann_sum(), 1.0);
        assert_eq!(g.density_at(&PhasePoint::scalar(0.5, 0.5)), 1.0);
        assert_eq!(g.density_at(&PhasePoint::scalar(1.5, 0.5)), 0.0);
    }

    #[test]
    fn rejects_unnormalized_and_negative_values() {
        let bad = GridDensity::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1, 1], vec![2.0]);
        assert!(bad.is_err());
        let neg = GridDensity::normalized(vec![0.0, 0.0], vec![1.0, 1.0], vec![1, 1], vec![-1.0]);
        assert!(neg.is_err());
        let zero = GridDensity::normalized(vec![0.0, 0.0], vec![1.0, 1.0], vec![2, 2], vec![0.0; 4]);
        assert!(zero.is_err());
    }

    #[test]
    fn uniform_box_moments_are_exact() {
        let g = GridDensity::uniform_box(vec![0.0, 0.0], vec![3.0, 1.0]).unwrap();
        let (mean, var, cross) = g.axis_moments();
        assert_relative_eq!(mean[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(var[0], 9.0 / 12.0, epsilon = 1e-12);
        assert_relative_eq!(var[1], 1.0 / 12.0, epsilon = 1e-12);
        assert_relative_eq!(cross[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tabulated_gaussian_sums_to_one() {
        let g = GridDensity::tabulate(vec![-6.0, -6.0], vec![6.0, 6.0], vec![100, 100], |x| {
            (-0.5 * (x.q[0] * x.q[0] + x.k[0] * x.k[0])).exp()
        })
        .unwrap();
        assert_relative_eq!(g.riemann_sum(), 1.0, epsilon = 1e-12);
        let peak = g.density_at(&PhasePoint::scalar(0.0, 0.0));
        assert_relative_eq!(peak, 1.0 / (2.0 * std::f64::consts::PI), max_relative = 1e-2);
    }

    #[test]
    fn interpolation_matches_values_at_cell_centers() {
        let g = GridDensity::tabulate(vec![0.0, 0.0], vec![1.0, 1.0], vec![8, 8], |x| {
            1.0 + x.q[0] + 2.0 * x.k[0]
        })
        .unwrap();
        for idx in [0usize, 13, 37, 63] {
            let c = g.cell_center(idx);
            assert_relative_eq!(g.interpolate_at(&c), g.values()[idx], max_relative = 1e-12);
        }
        // Linear fields are reproduced exactly between interior nodes.
        let x = PhasePoint::scalar(0.4, 0.55);
        let linear = g.values()[0] / (1.0 + g.cell_center(0).q[0] + 2.0 * g.cell_center(0).k[0]);
        assert_relative_eq!(
            g.interpolate_at(&x),
            linear * (1.0 + 0.4 + 2.0 * 0.55),
            max_relative = 1e-12
        );
    }
}
