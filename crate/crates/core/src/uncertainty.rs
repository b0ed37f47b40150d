//! The classical spread-entropy bound.
//!
//! At fixed entropy the uncorrelated Gaussian is the minimal-spread state,
//! so along any entropy-conserving (Hamiltonian) evolution
//!
//! ```text
//! σ_q σ_k ≥ e^{I₀} / (2πe)
//! ```
//!
//! with `I₀` the initial entropy, and equality exactly for uncorrelated
//! Gaussian packets. The inequality direction follows from the Gaussian
//! maximum-entropy property: a uniform square already violates the opposite
//! direction (its ratio is `2πe/12 ≈ 1.42`), and the randomized corpus in
//! the acceptance suite confirms `≥` across mixtures, uniforms, and evolved
//! ensembles. `I₀` here is the time-zero entropy; instantaneous entropy is
//! reported alongside it in trajectory records.
//!
//! The quantum side of the comparison is a fixed floor `ħ/2` with pure-state
//! entropy zero by convention; it is display-only and has no dynamics here.

use serde::Serialize;

use crate::distributions::{AnalyticGaussian, Distribution, GridDensity, ParticleEnsemble};
use crate::entropy::{self, EntropyEstimate, EntropyMethod};
use crate::error::{Error, Result};

const TWO_PI_E: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::E;

/// Saturation tolerance for exact (analytic) entropies.
pub const SATURATION_TOL_ANALYTIC: f64 = 1e-9;

/// `e^{I₀}/(2πe)`, the per-pair spread floor.
pub fn bound_from_entropy(i0: f64) -> f64 {
    i0.exp() / TWO_PI_E
}

/// Total-product floor for `n` degrees of freedom, `e^{I₀}/(2πe)ⁿ`.
pub fn bound_from_entropy_total(i0: f64, dof: usize) -> f64 {
    i0.exp() / TWO_PI_E.powi(dof as i32)
}

/// The distribution that minimizes `σ_q σ_k` at entropy `I₀`: the
/// uncorrelated Gaussian with `σ_q = σ_k = √(e^{I₀}/(2πe))`.
pub fn minimal_spread_distribution(i0: f64, means: (f64, f64)) -> Result<AnalyticGaussian> {
    if !i0.is_finite() {
        return Err(Error::Domain("entropy must be finite".into()));
    }
    let sigma = bound_from_entropy(i0).sqrt();
    AnalyticGaussian::uncorrelated(means.0, means.1, sigma, sigma)
}

/// One `(qⁱ, kᵢ)` pair checked against its marginal-entropy floor.
#[derive(Debug, Clone, Serialize)]
pub struct PairBound {
    pub axis: usize,
    pub product: f64,
    pub entropy: f64,
    pub bound: f64,
    pub ratio: f64,
    pub saturated: bool,
}

/// Bound check outcome. `product`, `bound`, and `ratio` are totals over all
/// pairs; for one degree of freedom they coincide with the single pair.
#[derive(Debug, Clone, Serialize)]
pub struct UncertaintyReport {
    pub product: f64,
    pub entropy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_stderr: Option<f64>,
    pub bound: f64,
    pub ratio: f64,
    pub saturated: bool,
    pub pairs: Vec<PairBound>,
}

/// Sampling configuration for estimator-backed checks on analytic inputs.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheckOptions {
    pub seed: u64,
    /// Particle count when the distribution must be sampled for the
    /// k-nearest-neighbor estimator.
    pub sample_count: usize,
}

impl Default for BoundCheckOptions {
    fn default() -> Self {
        BoundCheckOptions {
            seed: 0,
            sample_count: 100_000,
        }
    }
}

/// Check the spread floor for a distribution.
///
/// The total entropy sets the total bound; each pair is additionally
/// checked against its own marginal entropy (computed from the pair's 2x2
/// covariance for Gaussians, from projected samples otherwise). Saturation
/// means the ratio is 1 within `1e-9` for analytic entropies or within
/// three standard errors for estimated ones.
pub fn check_bound(
    dist: &Distribution,
    method: EntropyMethod,
    opts: &BoundCheckOptions,
) -> Result<UncertaintyReport> {
    let moments = dist.moments()?;
    let n = moments.dof();
    let total_entropy = entropy_for_bound(dist, method, opts)?;
    let i0 = total_entropy.value;

    let mut pairs = Vec::with_capacity(n);
    for axis in 0..n {
        let product = moments.spread_product(axis);
        let pair_entropy = if n == 1 {
            i0
        } else {
            pair_marginal_entropy(dist, axis, method, opts)?
        };
        let bound = bound_from_entropy(pair_entropy);
        let ratio = product / bound;
        let tol = saturation_tol(total_entropy.stderr);
        pairs.push(PairBound {
            axis,
            product,
            entropy: pair_entropy,
            bound,
            ratio,
            saturated: (ratio - 1.0).abs() <= tol,
        });
    }

    let product = moments.total_spread_product();
    let bound = bound_from_entropy_total(i0, n);
    let ratio = product / bound;
    let tol = saturation_tol(total_entropy.stderr);
    let saturated = (ratio - 1.0).abs() <= tol && pairs.iter().all(|p| p.saturated);
    Ok(UncertaintyReport {
        product,
        entropy: i0,
        entropy_stderr: total_entropy.stderr,
        bound,
        ratio,
        saturated,
        pairs,
    })
}

fn saturation_tol(stderr: Option<f64>) -> f64 {
    match stderr {
        None => SATURATION_TOL_ANALYTIC,
        Some(s) => 3.0 * s,
    }
}

fn entropy_for_bound(
    dist: &Distribution,
    method: EntropyMethod,
    opts: &BoundCheckOptions,
) -> Result<EntropyEstimate> {
    match (dist, method) {
        (Distribution::Gaussian(g), EntropyMethod::Analytic) => Ok(entropy::entropy_analytic(g)),
        (Distribution::Grid(g), EntropyMethod::Grid) => Ok(entropy::entropy_grid(g)),
        (Distribution::Ensemble(e), EntropyMethod::Knn { k, jitter }) => {
            entropy::entropy_knn(e, k, jitter, opts.seed)
        }
        (_, EntropyMethod::Knn { k, jitter }) => {
            let ens = dist.sample(opts.sample_count, opts.seed)?;
            entropy::entropy_knn(&ens, k, jitter, opts.seed)
        }
        (d, m) => Err(Error::UnsupportedRepresentation(format!(
            "cannot take {} entropy of a {} distribution for the bound check",
            m.name(),
            d.kind()
        ))),
    }
}

fn pair_marginal_entropy(
    dist: &Distribution,
    axis: usize,
    method: EntropyMethod,
    opts: &BoundCheckOptions,
) -> Result<f64> {
    match (dist, method) {
        (Distribution::Gaussian(g), EntropyMethod::Analytic) => {
            let (_, cov) = g.pair_marginal(axis);
            Ok(TWO_PI_E.ln() + 0.5 * cov.determinant().ln())
        }
        (_, EntropyMethod::Knn { k, jitter }) => {
            let ens = match dist {
                Distribution::Ensemble(e) => e.clone(),
                other => other.sample(opts.sample_count, opts.seed)?,
            };
            let projected = project_pair(&ens, axis)?;
            Ok(entropy::entropy_knn(&projected, k, jitter, opts.seed)?.value)
        }
        (Distribution::Grid(g), EntropyMethod::Grid) => {
            let marginal = marginalize_grid_pair(g, axis)?;
            Ok(entropy::entropy_grid(&marginal).value)
        }
        (d, m) => Err(Error::UnsupportedRepresentation(format!(
            "cannot take a {} pair marginal of a {} distribution",
            m.name(),
            d.kind()
        ))),
    }
}

fn project_pair(e: &ParticleEnsemble, axis: usize) -> Result<ParticleEnsemble> {
    let n = e.dof();
    let mut coords = Vec::with_capacity(2 * e.len());
    for i in 0..e.len() {
        let f = e.flat(i);
        coords.push(f[axis]);
        coords.push(f[n + axis]);
    }
    ParticleEnsemble::new(1, coords, e.weights().to_vec(), e.seed())
}

fn marginalize_grid_pair(g: &GridDensity, axis: usize) -> Result<GridDensity> {
    let n = g.dof();
    let dims = 2 * n;
    let (qi, ki) = (axis, n + axis);
    let shape2 = vec![g.shape()[qi], g.shape()[ki]];
    let mut values = vec![0.0; shape2[0] * shape2[1]];
    // Volume of the summed-out axes per cell.
    let mut other_vol = 1.0;
    for a in 0..dims {
        if a != qi && a != ki {
            other_vol *= g.step(a);
        }
    }
    let mut multi = vec![0usize; dims];
    for (idx, v) in g.values().iter().enumerate() {
        let mut rem = idx;
        for a in (0..dims).rev() {
            multi[a] = rem % g.shape()[a];
            rem /= g.shape()[a];
        }
        values[multi[qi] * shape2[1] + multi[ki]] += v * other_vol;
    }
    GridDensity::new(
        vec![g.low()[qi], g.low()[ki]],
        vec![g.high()[qi], g.high()[ki]],
        shape2,
        values,
    )
}

/// The quantum comparison column: a fixed spread floor `ħ/2` and the
/// pure-state entropy, which is zero by convention.
#[derive(Debug, Clone, Serialize)]
pub struct QuantumComparison {
    pub floor: f64,
    pub entropy: f64,
    pub label: &'static str,
}

pub fn quantum_comparison(hbar_like: f64) -> Result<QuantumComparison> {
    if !hbar_like.is_finite() || hbar_like <= 0.0 {
        return Err(Error::Domain(format!(
            "scale constant must be positive, got {hbar_like}"
        )));
    }
    Ok(QuantumComparison {
        floor: hbar_like / 2.0,
        entropy: 0.0,
        label: "pure state: 0",
    })
}
