//! Differential entropy `I[ρ] = −∫ ρ ln ρ` of phase-space distributions.
//!
//! Natural logarithm throughout, so values are in nats. Analytic Gaussians
//! have the closed form `ln((2πe)ⁿ √det Σ)`; grids use the plug-in Riemann
//! sum; particle ensembles use the Kozachenko-Leonenko k-nearest-neighbor
//! estimator. Entropy over continuous variables is coordinate dependent in
//! general and invariant exactly under unimodular-Jacobian (in particular
//! canonical) maps, which is what [`entropy_under_map`] measures.

pub mod knn;

use serde::Serialize;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::distributions::{
    AnalyticGaussian, Distribution, GridDensity, ParticleEnsemble, PushforwardOptions,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::phase_space::PhaseMap;
use crate::rng::{self, Stream};

/// Number of bootstrap resamples behind a k-nearest-neighbor stderr.
pub const BOOTSTRAP_RESAMPLES: usize = 20;

/// Relative magnitude of the optional duplicate-breaking jitter.
pub const JITTER_SCALE: f64 = 1e-12;

/// How to compute an entropy value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum EntropyMethod {
    /// Closed form; valid for analytic Gaussians only.
    Analytic,
    /// Riemann plug-in sum over a grid density.
    Grid,
    /// Kozachenko-Leonenko estimate from equal-weight samples.
    Knn { k: usize, jitter: bool },
}

impl EntropyMethod {
    pub fn default_knn() -> Self {
        EntropyMethod::Knn { k: 4, jitter: false }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EntropyMethod::Analytic => "analytic",
            EntropyMethod::Grid => "grid_plugin",
            EntropyMethod::Knn { .. } => "knn",
        }
    }
}

/// An entropy value in nats with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub value: f64,
    /// `analytic`, `grid_plugin`, or `knn`.
    pub method: &'static str,
    /// Bootstrap standard error; only estimators carry one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

/// `ln((2πe)ⁿ √det Σ)`; reduces to `ln(2πe σ_q σ_k)` for an uncorrelated
/// single degree of freedom.
pub fn entropy_analytic(g: &AnalyticGaussian) -> EntropyEstimate {
    let n = g.dof() as f64;
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    EntropyEstimate {
        value: n * two_pi_e.ln() + 0.5 * g.det_cov().ln(),
        method: "analytic",
        stderr: None,
    }
}

/// Plug-in Riemann sum `−Σ ρᵢ ln(ρᵢ) · cell_volume`, with `0 ln 0 = 0`.
pub fn entropy_grid(g: &GridDensity) -> EntropyEstimate {
    let vol = g.cell_volume();
    let total = exec::sum_by(g.values(), |&v| if v > 0.0 { -v * v.ln() } else { 0.0 });
    EntropyEstimate {
        value: total * vol,
        method: "grid_plugin",
        stderr: None,
    }
}

/// Kozachenko-Leonenko estimate in nats:
/// `ψ(N) − ψ(k) + ln V_d + (d/N) Σᵢ ln εᵢ`,
/// where `εᵢ` is the distance from sample `i` to its `k`-th nearest
/// neighbor and `V_d` the unit-ball volume in `d = 2n` dimensions.
///
/// Weighted ensembles are out of scope for this estimator. Duplicate points
/// make some `εᵢ = 0`; that fails loudly unless `jitter` is on, in which
/// case coordinates are perturbed uniformly by `±1e-12` of the data scale
/// (drawn from the jitter stream of `seed`) before the neighbor search.
///
/// The standard error comes from `BOOTSTRAP_RESAMPLES` seeded bootstrap
/// replicates of the mean over the per-point contributions `d ln εᵢ`,
/// holding the neighbor structure fixed.
pub fn entropy_knn(
    ens: &ParticleEnsemble,
    k: usize,
    jitter: bool,
    seed: u64,
) -> Result<EntropyEstimate> {
    if !ens.is_equal_weight() {
        return Err(Error::UnsupportedRepresentation(
            "k-nearest-neighbor entropy requires equal weights".into(),
        ));
    }
    let n = ens.len();
    if k == 0 || n < k + 1 {
        return Err(Error::Domain(format!(
            "need at least k+1 = {} samples, got {n}",
            k + 1
        )));
    }
    let dim = 2 * ens.dof();
    let mut coords = ens.coords().to_vec();
    if jitter {
        let scale = data_scale(&coords, dim);
        let delta = JITTER_SCALE * scale;
        exec::for_each_chunk_mut(&mut coords, exec::CHUNK * dim, |chunk_idx, chunk| {
            let mut rng = rng::substream(seed, Stream::Jitter, chunk_idx as u64);
            for v in chunk.iter_mut() {
                *v += rand::Rng::random_range(&mut rng, -delta..=delta);
            }
        });
    }
    let tree = knn::KdTree::build(dim, coords);
    let eps = exec::map_indices(n, |i| tree.kth_neighbor_distance(i, k));
    let zeros = eps.iter().filter(|&&e| e == 0.0).count();
    if zeros > 0 {
        return Err(Error::JitterRequired(format!(
            "{zeros} of {n} points have a coincident {k}-th neighbor"
        )));
    }
    let contributions: Vec<f64> = exec::map_collect(&eps, |&e| dim as f64 * e.ln());
    let constant = digamma(n as f64) - digamma(k as f64) + ln_unit_ball_volume(dim);
    let value = constant + exec::sum(&contributions) / n as f64;

    let replicate_means = exec::map_indices(BOOTSTRAP_RESAMPLES, |b| {
        let mut rng = rng::substream(seed, Stream::Bootstrap, b as u64);
        let mut total = 0.0;
        for _ in 0..n {
            let i = rand::Rng::random_range(&mut rng, 0..n);
            total += contributions[i];
        }
        constant + total / n as f64
    });
    let mean_rep = exec::sum(&replicate_means) / BOOTSTRAP_RESAMPLES as f64;
    let var = replicate_means
        .iter()
        .map(|m| (m - mean_rep) * (m - mean_rep))
        .sum::<f64>()
        / (BOOTSTRAP_RESAMPLES - 1) as f64;

    Ok(EntropyEstimate {
        value,
        method: "knn",
        stderr: Some(var.sqrt()),
    })
}

/// `ln V_d` for the Euclidean unit ball in `d` dimensions.
pub fn ln_unit_ball_volume(d: usize) -> f64 {
    let d = d as f64;
    0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d + 1.0)
}

fn data_scale(coords: &[f64], dim: usize) -> f64 {
    let mut scale = 0.0f64;
    for axis in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in coords.chunks_exact(dim) {
            lo = lo.min(p[axis]);
            hi = hi.max(p[axis]);
        }
        scale = scale.max(hi - lo);
    }
    scale.max(1e-300)
}

/// Entropy of a distribution by the requested method. Methods are strict
/// about representation: `Analytic` needs a Gaussian, `Grid` a grid,
/// `Knn` an equal-weight ensemble.
pub fn entropy_of(dist: &Distribution, method: EntropyMethod, seed: u64) -> Result<EntropyEstimate> {
    match (dist, method) {
        (Distribution::Gaussian(g), EntropyMethod::Analytic) => Ok(entropy_analytic(g)),
        (Distribution::Grid(g), EntropyMethod::Grid) => Ok(entropy_grid(g)),
        (Distribution::Ensemble(e), EntropyMethod::Knn { k, jitter }) => {
            entropy_knn(e, k, jitter, seed)
        }
        (d, m) => Err(Error::UnsupportedRepresentation(format!(
            "{} entropy is not defined for a {} distribution",
            m.name(),
            d.kind()
        ))),
    }
}

/// Entropy before and after a pushforward, by the same method on both
/// sides. For a linear map with matrix `M` the analytic difference is
/// exactly `ln |det M|`, zero for canonical maps.
pub fn entropy_under_map(
    dist: &Distribution,
    map: &PhaseMap,
    method: EntropyMethod,
    opts: &PushforwardOptions,
) -> Result<(EntropyEstimate, EntropyEstimate)> {
    let before = entropy_of(dist, method, opts.seed)?;
    let mapped = dist.pushforward(map, opts)?;
    let after = entropy_of(&mapped, method, opts.seed)?;
    Ok((before, after))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn ln_2pi_e() -> f64 {
        (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
    }

    #[test]
    fn gaussian_entropy_depends_only_on_the_sigma_product() {
        let unit = AnalyticGaussian::uncorrelated(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(entropy_analytic(&unit).value, ln_2pi_e(), epsilon = 1e-14);
        let stretched = AnalyticGaussian::uncorrelated(3.0, -1.0, 2.0, 0.5).unwrap();
        assert_relative_eq!(entropy_analytic(&stretched).value, ln_2pi_e(), epsilon = 1e-14);
        // ln(2πe) = 2.837877...
        assert_relative_eq!(
            entropy_analytic(&unit).value,
            2.837877066409345,
            epsilon = 1e-12
        );
    }

    #[test]
    fn correlated_gaussian_entropy_uses_the_determinant() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.125, -1.875, -1.875, 2.125]);
        let g = AnalyticGaussian::new(nalgebra::DVector::zeros(2), cov).unwrap();
        // det Σ = 1 for this rotated covariance, so entropy is unchanged.
        assert_relative_eq!(entropy_analytic(&g).value, ln_2pi_e(), epsilon = 1e-12);
    }

    #[test]
    fn grid_entropy_of_uniform_boxes_is_log_area() {
        let unit = GridDensity::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(entropy_grid(&unit).value, 0.0);
        let two = GridDensity::uniform_box(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        assert_relative_eq!(entropy_grid(&two).value, 2.0 * 2.0f64.ln(), epsilon = 1e-12);
        // Resolution does not matter for a constant density.
        let fine = GridDensity::tabulate(vec![0.0, 0.0], vec![2.0, 2.0], vec![37, 53], |_| 1.0)
            .unwrap();
        assert_relative_eq!(entropy_grid(&fine).value, 2.0 * 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn grid_entropy_of_a_tabulated_gaussian_converges() {
        let g = GridDensity::tabulate(vec![-6.0, -6.0], vec![6.0, 6.0], vec![400, 400], |x| {
            (-0.5 * (x.q[0] * x.q[0] + x.k[0] * x.k[0])).exp()
        })
        .unwrap();
        assert_relative_eq!(entropy_grid(&g).value, ln_2pi_e(), epsilon = 1e-3);
    }

    #[test]
    fn knn_recovers_the_gaussian_oracle() {
        let dist = Distribution::Gaussian(AnalyticGaussian::standard(1));
        let ens = dist.sample(100_000, 21).unwrap();
        let est = entropy_knn(&ens, 4, false, 21).unwrap();
        assert!(
            (est.value - ln_2pi_e()).abs() < 0.05,
            "knn {} vs analytic {}",
            est.value,
            ln_2pi_e()
        );
        assert!(est.stderr.unwrap() > 0.0);
    }

    #[test]
    fn knn_recovers_uniform_log_areas() {
        let unit =
            Distribution::Grid(GridDensity::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
        let est = entropy_knn(&unit.sample(100_000, 22).unwrap(), 4, false, 22).unwrap();
        assert!(est.value.abs() < 0.05, "uniform [0,1]^2 gave {}", est.value);

        let two =
            Distribution::Grid(GridDensity::uniform_box(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap());
        let est = entropy_knn(&two.sample(100_000, 23).unwrap(), 4, false, 23).unwrap();
        assert!(
            (est.value - 2.0 * 2.0f64.ln()).abs() < 0.05,
            "uniform [0,2]^2 gave {}",
            est.value
        );
    }

    #[test]
    fn knn_rejects_weighted_ensembles_and_tiny_samples() {
        let coords = vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0];
        let weighted = ParticleEnsemble::new(1, coords.clone(), vec![0.5, 0.25, 0.25], 0).unwrap();
        assert!(matches!(
            entropy_knn(&weighted, 1, false, 0),
            Err(Error::UnsupportedRepresentation(_))
        ));
        let small = ParticleEnsemble::equal_weight(1, coords, 0).unwrap();
        assert!(entropy_knn(&small, 4, false, 0).is_err());
    }

    #[test]
    fn duplicates_fail_loudly_and_jitter_rescues_them() {
        let mut coords = vec![0.0; 40];
        for (i, v) in coords.iter_mut().enumerate() {
            *v = (i / 4) as f64; // every pair of particles coincides
        }
        let ens = ParticleEnsemble::equal_weight(1, coords, 0).unwrap();
        assert!(matches!(
            entropy_knn(&ens, 1, false, 0),
            Err(Error::JitterRequired(_))
        ));
        let est = entropy_knn(&ens, 1, true, 0).unwrap();
        assert!(est.value.is_finite());
    }

    #[test]
    fn entropy_shift_under_linear_maps_is_log_det() {
        let g = AnalyticGaussian::uncorrelated(0.0, 0.0, 2.0, 0.5).unwrap();
        let dist = Distribution::Gaussian(g);
        let canon = PhaseMap::linear(
            "scale(2)",
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]),
        );
        let opts = PushforwardOptions::default();
        let (b, a) = entropy_under_map(&dist, &canon, EntropyMethod::Analytic, &opts).unwrap();
        assert_relative_eq!(a.value - b.value, 0.0, epsilon = 1e-12);

        let dilate = PhaseMap::linear(
            "dilate(2)",
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]),
        );
        let (b, a) = entropy_under_map(&dist, &dilate, EntropyMethod::Analytic, &opts).unwrap();
        assert_relative_eq!(a.value - b.value, 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn knn_is_rotation_invariant_within_tolerance() {
        let dist =
            Distribution::Gaussian(AnalyticGaussian::uncorrelated(0.0, 0.0, 2.0, 0.5).unwrap());
        let ens = Distribution::Ensemble(dist.sample(100_000, 24).unwrap());
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let rot = PhaseMap::linear("rotate(pi/4)", DMatrix::from_row_slice(2, 2, &[c, c, -c, c]));
        let opts = PushforwardOptions::default();
        let (b, a) = entropy_under_map(&ens, &rot, EntropyMethod::default_knn(), &opts).unwrap();
        assert!(
            (a.value - b.value).abs() <= 0.02,
            "rotation shifted knn entropy by {}",
            a.value - b.value
        );
    }

    #[test]
    fn digamma_and_ball_volume_match_known_values() {
        // ψ(1) = −γ, ψ(4) = −γ + 1 + 1/2 + 1/3; V₂ = π.
        let gamma = 0.5772156649015329;
        assert_relative_eq!(digamma(1.0), -gamma, epsilon = 1e-12);
        assert_relative_eq!(digamma(4.0), -gamma + 11.0 / 6.0, epsilon = 1e-12);
        assert_relative_eq!(
            ln_unit_ball_volume(2),
            std::f64::consts::PI.ln(),
            epsilon = 1e-12
        );
    }
}
