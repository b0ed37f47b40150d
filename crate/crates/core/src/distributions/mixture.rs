//! Finite Gaussian mixtures, the workhorse non-Gaussian test corpus.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::phase_space::{LinearPart, PhasePoint};

use super::gaussian::AnalyticGaussian;

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<(f64, AnalyticGaussian)>,
}

impl GaussianMixture {
    pub fn new(components: Vec<(f64, AnalyticGaussian)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution("mixture has no components".into()));
        }
        let dof = components[0].1.dof();
        if components.iter().any(|(_, g)| g.dof() != dof) {
            return Err(Error::InvalidDistribution(
                "mixture components have mixed dimensions".into(),
            ));
        }
        if components.iter().any(|(w, _)| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidDistribution(
                "mixture weights must be positive".into(),
            ));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidDistribution(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(GaussianMixture { components })
    }

    /// Equal-weight pair of unit Gaussians centered at `(±a, 0)`.
    pub fn two_blob(a: f64) -> Result<Self> {
        let left = AnalyticGaussian::uncorrelated(-a, 0.0, 1.0, 1.0)?;
        let right = AnalyticGaussian::uncorrelated(a, 0.0, 1.0, 1.0)?;
        Self::new(vec![(0.5, left), (0.5, right)])
    }

    pub fn components(&self) -> &[(f64, AnalyticGaussian)] {
        &self.components
    }

    pub fn dof(&self) -> usize {
        self.components[0].1.dof()
    }

    /// Mixture mean `Σ wᵢ μᵢ`.
    pub fn mean(&self) -> DVector<f64> {
        let m = 2 * self.dof();
        let mut mean = DVector::zeros(m);
        for (w, g) in &self.components {
            mean += g.mean() * *w;
        }
        mean
    }

    /// Total covariance by the law of total variance:
    /// `Σ wᵢ (Σᵢ + μᵢμᵢᵀ) − μμᵀ`.
    pub fn cov(&self) -> DMatrix<f64> {
        let m = 2 * self.dof();
        let mean = self.mean();
        let mut second = DMatrix::zeros(m, m);
        for (w, g) in &self.components {
            second += (g.cov() + g.mean() * g.mean().transpose()) * *w;
        }
        second - &mean * mean.transpose()
    }

    pub fn density_at(&self, x: &PhasePoint) -> f64 {
        self.components
            .iter()
            .map(|(w, g)| w * g.density_at(x))
            .sum()
    }

    /// Draw one sample: pick a component by weight, then sample it.
    pub(crate) fn sample_flat_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, g) in &self.components {
            acc += w;
            if u < acc {
                g.sample_flat_into(rng, out);
                return;
            }
        }
        // Rounding in the cumulative sum can leave u just past the end.
        self.components
            .last()
            .expect("nonempty")
            .1
            .sample_flat_into(rng, out);
    }

    /// Exact image under an affine map, component by component.
    pub fn affine_image(&self, part: &LinearPart) -> Result<Self> {
        let mapped = self
            .components
            .iter()
            .map(|(w, g)| Ok((*w, g.affine_image(part)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(mapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_weights() {
        let g = AnalyticGaussian::standard(1);
        assert!(GaussianMixture::new(vec![(0.5, g.clone()), (0.4, g.clone())]).is_err());
        assert!(GaussianMixture::new(vec![(1.5, g.clone()), (-0.5, g)]).is_err());
        assert!(GaussianMixture::new(vec![]).is_err());
    }

    #[test]
    fn two_blob_variance_follows_total_variance_law() {
        let a = 3.0;
        let mix = GaussianMixture::two_blob(a).unwrap();
        let cov = mix.cov();
        assert_relative_eq!(cov[(0, 0)], 1.0 + a * a, epsilon = 1e-12);
        assert_relative_eq!(cov[(1, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(0, 1)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(mix.mean()[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn density_is_the_weighted_sum() {
        let mix = GaussianMixture::two_blob(2.0).unwrap();
        let x = PhasePoint::scalar(0.0, 0.0);
        let unit = AnalyticGaussian::uncorrelated(2.0, 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(
            mix.density_at(&x),
            unit.density_at(&x),
            max_relative = 1e-12
        );
    }
}
