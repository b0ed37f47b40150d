//! Analytic Gaussian densities over phase space.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::phase_space::{LinearPart, PhasePoint};

/// Eigenvalue ratio below which a covariance is treated as degenerate.
const COV_CONDITION_FLOOR: f64 = 1e-12;

/// A full-covariance Gaussian over `(q¹..qⁿ, k₁..kₙ)`.
///
/// Correlated covariances are first class: any Hamiltonian shear creates
/// `q`-`k` correlation immediately, so the uncorrelated product form is just
/// the special case of a diagonal `Σ`.
#[derive(Debug, Clone)]
pub struct AnalyticGaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    /// Clean lower-triangular Cholesky factor of `cov`.
    chol_l: DMatrix<f64>,
}

impl PartialEq for AnalyticGaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl AnalyticGaussian {
    /// Build from a mean vector of length `2n` and a symmetric positive
    /// definite covariance. Degenerate or asymmetric covariances are
    /// rejected.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if m == 0 || m % 2 != 0 {
            return Err(Error::InvalidDistribution(format!(
                "mean length must be a positive even number, got {m}"
            )));
        }
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::InvalidDistribution(format!(
                "covariance must be {m}x{m}, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution(
                "non-finite mean or covariance".into(),
            ));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::InvalidDistribution(format!(
                "covariance is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        let eigen = cov.clone().symmetric_eigen();
        let max_eig = eigen.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min_eig = eigen.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if min_eig <= COV_CONDITION_FLOOR * max_eig {
            return Err(Error::InvalidDistribution(format!(
                "covariance is not positive definite (eigenvalues in [{min_eig:.3e}, {max_eig:.3e}])"
            )));
        }
        let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
            Error::InvalidDistribution("covariance factorization failed".into())
        })?;
        Ok(AnalyticGaussian {
            mean,
            cov,
            chol_l: chol.l(),
        })
    }

    /// Standard Gaussian: zero mean, identity covariance.
    pub fn standard(dof: usize) -> Self {
        Self::new(DVector::zeros(2 * dof), DMatrix::identity(2 * dof, 2 * dof))
            .expect("identity covariance is positive definite")
    }

    /// One degree of freedom, uncorrelated.
    pub fn uncorrelated(mean_q: f64, mean_k: f64, sigma_q: f64, sigma_k: f64) -> Result<Self> {
        Self::new(
            DVector::from_vec(vec![mean_q, mean_k]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![
                sigma_q * sigma_q,
                sigma_k * sigma_k,
            ])),
        )
    }

    pub fn dof(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `det Σ`, from the cached Cholesky factor.
    pub fn det_cov(&self) -> f64 {
        let mut det = 1.0;
        for i in 0..self.chol_l.nrows() {
            det *= self.chol_l[(i, i)] * self.chol_l[(i, i)];
        }
        det
    }

    /// Density at a point, `(2π)^{-n} (det Σ)^{-1/2} exp(−½ δᵀΣ⁻¹δ)`.
    pub fn density_at(&self, x: &PhasePoint) -> f64 {
        let delta = x.to_flat() - &self.mean;
        // δᵀΣ⁻¹δ = ‖L⁻¹δ‖² with Σ = LLᵀ.
        let y = self
            .chol_l
            .solve_lower_triangular(&delta)
            .expect("cholesky factor is nonsingular");
        let quad = y.norm_squared();
        let n = self.dof() as f64;
        (2.0 * std::f64::consts::PI).powf(-n) * self.det_cov().powf(-0.5) * (-0.5 * quad).exp()
    }

    /// Draw one sample as flat coordinates into `out`.
    pub(crate) fn sample_flat_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let m = self.mean.len();
        debug_assert_eq!(out.len(), m);
        // z = μ + Lξ, accumulated without temporaries.
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.mean[i];
        }
        for j in 0..m {
            let xi: f64 = rng.sample(StandardNormal);
            for i in j..m {
                out[i] += self.chol_l[(i, j)] * xi;
            }
        }
    }

    /// Exact image under an affine map: mean `Mμ + b`, covariance `MΣMᵀ`.
    pub fn affine_image(&self, part: &LinearPart) -> Result<Self> {
        let mean = &part.matrix * &self.mean + &part.offset;
        let cov = &part.matrix * &self.cov * part.matrix.transpose();
        // Symmetrize against rounding before re-validating.
        let cov = (&cov + cov.transpose()) * 0.5;
        Self::new(mean, cov)
    }

    /// Mean and 2x2 covariance of the `(qⁱ, kᵢ)` marginal.
    pub fn pair_marginal(&self, axis: usize) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dof();
        assert!(axis < n, "axis out of range");
        let idx = [axis, n + axis];
        let mean = DVector::from_fn(2, |i, _| self.mean[idx[i]]);
        let cov = DMatrix::from_fn(2, 2, |i, j| self.cov[(idx[i], idx[j])]);
        (mean, cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_non_spd_and_asymmetric_covariances() {
        let mean = DVector::zeros(2);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(AnalyticGaussian::new(mean.clone(), indefinite).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(AnalyticGaussian::new(mean.clone(), asym).is_err());
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(AnalyticGaussian::new(mean, singular).is_err());
    }

    #[test]
    fn standard_density_at_origin_is_one_over_two_pi() {
        let g = AnalyticGaussian::standard(1);
        assert_relative_eq!(
            g.density_at(&PhasePoint::scalar(0.0, 0.0)),
            1.0 / (2.0 * std::f64::consts::PI),
            max_relative = 1e-14
        );
    }

    #[test]
    fn density_peak_is_reciprocal_of_two_pi_sigma_product() {
        let g = AnalyticGaussian::uncorrelated(0.7, -1.2, 2.0, 0.5).unwrap();
        assert_relative_eq!(
            g.density_at(&PhasePoint::scalar(0.7, -1.2)),
            1.0 / (2.0 * std::f64::consts::PI * 2.0 * 0.5),
            max_relative = 1e-14
        );
    }

    #[test]
    fn affine_image_follows_the_covariance_rule() {
        let g = AnalyticGaussian::uncorrelated(0.0, 0.0, 2.0, 0.5).unwrap();
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let rot = LinearPart {
            matrix: DMatrix::from_row_slice(2, 2, &[c, c, -c, c]),
            offset: DVector::zeros(2),
        };
        let img = g.affine_image(&rot).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.125, -1.875, -1.875, 2.125]);
        assert_relative_eq!(img.cov(), &expected, epsilon = 1e-12);
        assert_relative_eq!(img.det_cov(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn det_cov_is_invariant_under_reciprocal_scaling() {
        let g = AnalyticGaussian::uncorrelated(0.0, 0.0, 2.0, 0.5).unwrap();
        let scale = LinearPart {
            matrix: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]),
            offset: DVector::zeros(2),
        };
        let img = g.affine_image(&scale).unwrap();
        assert_relative_eq!(img.cov()[(0, 0)], 16.0, epsilon = 1e-12);
        assert_relative_eq!(img.cov()[(1, 1)], 0.0625, epsilon = 1e-12);
        assert_relative_eq!(img.det_cov(), g.det_cov(), epsilon = 1e-12);
    }

    #[test]
    fn pair_marginal_extracts_the_right_block() {
        let mut cov = DMatrix::identity(4, 4);
        cov[(0, 2)] = 0.25;
        cov[(2, 0)] = 0.25;
        let g = AnalyticGaussian::new(DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]), cov).unwrap();
        let (mean, block) = g.pair_marginal(0);
        assert_eq!(mean.as_slice(), &[1.0, 3.0]);
        assert_eq!(block[(0, 1)], 0.25);
    }
}
