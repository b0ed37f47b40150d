//! Distributions over phase space in four interchangeable forms.
//!
//! The state of a reducible system is a normalized density `ρ` over phase
//! space. Depending on what is known analytically it is carried as an
//! [`AnalyticGaussian`], a [`GaussianMixture`], a weighted
//! [`ParticleEnsemble`], or a [`GridDensity`]; [`Distribution`] dispatches
//! the shared operations (moments, sampling, pointwise density, pushforward
//! under a phase-space map).
//!
//! Pushforward follows the density transformation law: mapped mass keeps
//! its weight, and pointwise values pick up the inverse Jacobian
//! determinant. Weights are never resampled or renormalized; transport
//! preserves them exactly.

mod ensemble;
mod gaussian;
mod grid;
mod mixture;

pub use ensemble::ParticleEnsemble;
pub use gaussian::AnalyticGaussian;
pub use grid::GridDensity;
pub use mixture::GaussianMixture;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::phase_space::{PhaseMap, PhasePoint};
use crate::rng::{self, Stream};

/// First and second moments per degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean_q: Vec<f64>,
    pub mean_k: Vec<f64>,
    pub sigma_q: Vec<f64>,
    pub sigma_k: Vec<f64>,
    /// Pearson coefficient of each `(qⁱ, kᵢ)` pair.
    pub corr_qk: Vec<f64>,
}

impl Moments {
    fn from_mean_cov(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let n = mean.len() / 2;
        let mut m = Moments {
            mean_q: Vec::with_capacity(n),
            mean_k: Vec::with_capacity(n),
            sigma_q: Vec::with_capacity(n),
            sigma_k: Vec::with_capacity(n),
            corr_qk: Vec::with_capacity(n),
        };
        for i in 0..n {
            let vq = cov[(i, i)];
            let vk = cov[(n + i, n + i)];
            if vq <= 0.0 || vk <= 0.0 {
                return Err(Error::DegenerateDistribution(format!(
                    "zero spread on axis {i}"
                )));
            }
            let (sq, sk) = (vq.sqrt(), vk.sqrt());
            m.mean_q.push(mean[i]);
            m.mean_k.push(mean[n + i]);
            m.sigma_q.push(sq);
            m.sigma_k.push(sk);
            m.corr_qk.push((cov[(i, n + i)] / (sq * sk)).clamp(-1.0, 1.0));
        }
        Ok(m)
    }

    pub fn dof(&self) -> usize {
        self.sigma_q.len()
    }

    /// The Gaussian with these moments, built pair by pair (cross-pair
    /// covariances are not part of `Moments` and are set to zero).
    pub fn fit_gaussian(&self) -> Result<AnalyticGaussian> {
        let n = self.dof();
        let mut mean = DVector::zeros(2 * n);
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            mean[i] = self.mean_q[i];
            mean[n + i] = self.mean_k[i];
            cov[(i, i)] = self.sigma_q[i] * self.sigma_q[i];
            cov[(n + i, n + i)] = self.sigma_k[i] * self.sigma_k[i];
            let c = self.corr_qk[i] * self.sigma_q[i] * self.sigma_k[i];
            cov[(i, n + i)] = c;
            cov[(n + i, i)] = c;
        }
        AnalyticGaussian::new(mean, cov)
    }

    /// `σ_qⁱ σ_kᵢ` for one pair.
    pub fn spread_product(&self, axis: usize) -> f64 {
        self.sigma_q[axis] * self.sigma_k[axis]
    }

    /// Product of the per-pair spreads over all degrees of freedom.
    pub fn total_spread_product(&self) -> f64 {
        (0..self.dof()).map(|i| self.spread_product(i)).product()
    }
}

/// How an analytic distribution is converted to particles when an operation
/// needs them (nonlinear pushforward, integrator evolution).
#[derive(Debug, Clone, Copy)]
pub struct PushforwardOptions {
    pub ensemble_count: usize,
    pub seed: u64,
}

impl Default for PushforwardOptions {
    fn default() -> Self {
        PushforwardOptions {
            ensemble_count: 100_000,
            seed: 0,
        }
    }
}

/// A normalized density over phase space.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Gaussian(AnalyticGaussian),
    Mixture(GaussianMixture),
    Ensemble(ParticleEnsemble),
    Grid(GridDensity),
}

impl From<AnalyticGaussian> for Distribution {
    fn from(g: AnalyticGaussian) -> Self {
        Distribution::Gaussian(g)
    }
}

impl From<GaussianMixture> for Distribution {
    fn from(m: GaussianMixture) -> Self {
        Distribution::Mixture(m)
    }
}

impl From<ParticleEnsemble> for Distribution {
    fn from(e: ParticleEnsemble) -> Self {
        Distribution::Ensemble(e)
    }
}

impl From<GridDensity> for Distribution {
    fn from(g: GridDensity) -> Self {
        Distribution::Grid(g)
    }
}

impl Distribution {
    pub fn dof(&self) -> usize {
        match self {
            Distribution::Gaussian(g) => g.dof(),
            Distribution::Mixture(m) => m.dof(),
            Distribution::Ensemble(e) => e.dof(),
            Distribution::Grid(g) => g.dof(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Distribution::Gaussian(_) => "gaussian",
            Distribution::Mixture(_) => "mixture",
            Distribution::Ensemble(_) => "ensemble",
            Distribution::Grid(_) => "grid",
        }
    }

    /// Exact moments for analytic forms, weighted sample moments for
    /// ensembles, Riemann-sum moments for grids.
    pub fn moments(&self) -> Result<Moments> {
        match self {
            Distribution::Gaussian(g) => Moments::from_mean_cov(g.mean(), g.cov()),
            Distribution::Mixture(m) => Moments::from_mean_cov(&m.mean(), &m.cov()),
            Distribution::Ensemble(e) => ensemble_moments(e),
            Distribution::Grid(g) => {
                let (mean, var, cross) = g.axis_moments();
                let dims = mean.len();
                let mut cov = DMatrix::zeros(dims, dims);
                let n = dims / 2;
                for a in 0..dims {
                    cov[(a, a)] = var[a];
                }
                for i in 0..n {
                    cov[(i, n + i)] = cross[i];
                    cov[(n + i, i)] = cross[i];
                }
                Moments::from_mean_cov(&DVector::from_vec(mean), &cov)
            }
        }
    }

    /// Pointwise density. Ensembles carry no pointwise density.
    pub fn density_at(&self, x: &PhasePoint) -> Result<f64> {
        if x.dof() != self.dof() {
            return Err(Error::Domain(format!(
                "point dimension {} does not match distribution dimension {}",
                x.dof(),
                self.dof()
            )));
        }
        match self {
            Distribution::Gaussian(g) => Ok(g.density_at(x)),
            Distribution::Mixture(m) => Ok(m.density_at(x)),
            Distribution::Grid(g) => Ok(g.density_at(x)),
            Distribution::Ensemble(_) => Err(Error::UnsupportedRepresentation(
                "particle ensembles have no pointwise density".into(),
            )),
        }
    }

    /// Draw `count` i.i.d. samples with equal weights `1/count`.
    /// Deterministic for a fixed seed, independent of thread count.
    pub fn sample(&self, count: usize, seed: u64) -> Result<ParticleEnsemble> {
        if count < 2 {
            return Err(Error::InvalidDistribution(format!(
                "sample count must be at least 2, got {count}"
            )));
        }
        let stride = 2 * self.dof();
        let mut coords = vec![0.0f64; count * stride];
        match self {
            Distribution::Gaussian(g) => {
                exec::for_each_chunk_mut(&mut coords, exec::CHUNK * stride, |chunk_idx, chunk| {
                    let mut rng = rng::substream(seed, Stream::Sampling, chunk_idx as u64);
                    for flat in chunk.chunks_mut(stride) {
                        g.sample_flat_into(&mut rng, flat);
                    }
                });
            }
            Distribution::Mixture(m) => {
                exec::for_each_chunk_mut(&mut coords, exec::CHUNK * stride, |chunk_idx, chunk| {
                    let mut rng = rng::substream(seed, Stream::Sampling, chunk_idx as u64);
                    for flat in chunk.chunks_mut(stride) {
                        m.sample_flat_into(&mut rng, flat);
                    }
                });
            }
            Distribution::Grid(g) => {
                let cum = g.cumulative_mass()?;
                let total = *cum.last().expect("nonempty grid");
                let cum: Vec<f64> = cum.iter().map(|c| c / total).collect();
                exec::for_each_chunk_mut(&mut coords, exec::CHUNK * stride, |chunk_idx, chunk| {
                    let mut rng = rng::substream(seed, Stream::Sampling, chunk_idx as u64);
                    for flat in chunk.chunks_mut(stride) {
                        g.sample_flat_into(&cum, &mut rng, flat);
                    }
                });
            }
            Distribution::Ensemble(e) => {
                // Resample by weight with replacement.
                let mut acc = 0.0;
                let cum: Vec<f64> = e
                    .weights()
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                exec::for_each_chunk_mut(&mut coords, exec::CHUNK * stride, |chunk_idx, chunk| {
                    let mut rng = rng::substream(seed, Stream::Sampling, chunk_idx as u64);
                    for flat in chunk.chunks_mut(stride) {
                        let u: f64 = rng.random();
                        let i = match cum
                            .binary_search_by(|c| c.partial_cmp(&u).expect("finite weight"))
                        {
                            Ok(i) | Err(i) => i.min(cum.len() - 1),
                        };
                        flat.copy_from_slice(e.flat(i));
                    }
                });
            }
        }
        ParticleEnsemble::equal_weight(self.dof(), coords, seed)
    }

    /// Transport the distribution along a phase-space map.
    ///
    /// Ensembles move point by point with weights unchanged. Analytic forms
    /// map exactly under affine maps; under nonlinear maps they degrade to
    /// an ensemble of `opts.ensemble_count` particles rather than being
    /// linearized, so entropy bookkeeping stays honest. Grids remap by
    /// inverse lookup with the Jacobian factor.
    pub fn pushforward(&self, map: &PhaseMap, opts: &PushforwardOptions) -> Result<Distribution> {
        if map.dof() != self.dof() {
            return Err(Error::Domain(format!(
                "map dimension {} does not match distribution dimension {}",
                map.dof(),
                self.dof()
            )));
        }
        match self {
            Distribution::Ensemble(e) => Ok(Distribution::Ensemble(e.map_points(map)?)),
            Distribution::Gaussian(g) => match map.linear_part() {
                Some(part) => Ok(Distribution::Gaussian(g.affine_image(part)?)),
                None => self
                    .sample(opts.ensemble_count, opts.seed)?
                    .map_points(map)
                    .map(Distribution::Ensemble),
            },
            Distribution::Mixture(m) => match map.linear_part() {
                Some(part) => Ok(Distribution::Mixture(m.affine_image(part)?)),
                None => self
                    .sample(opts.ensemble_count, opts.seed)?
                    .map_points(map)
                    .map(Distribution::Ensemble),
            },
            Distribution::Grid(g) => grid_pushforward(g, map).map(Distribution::Grid),
        }
    }
}

fn ensemble_moments(e: &ParticleEnsemble) -> Result<Moments> {
    let n = e.dof();
    let count = e.len();
    let w = e.weights();
    let mut mean = vec![0.0; 2 * n];
    for (axis, slot) in mean.iter_mut().enumerate() {
        *slot = exec::sum(&exec::map_indices(count, |i| w[i] * e.flat(i)[axis]));
    }
    let mut m = Moments {
        mean_q: mean[..n].to_vec(),
        mean_k: mean[n..].to_vec(),
        sigma_q: Vec::with_capacity(n),
        sigma_k: Vec::with_capacity(n),
        corr_qk: Vec::with_capacity(n),
    };
    for axis in 0..n {
        let (mq, mk) = (mean[axis], mean[n + axis]);
        let vq = exec::sum(&exec::map_indices(count, |i| {
            let d = e.flat(i)[axis] - mq;
            w[i] * d * d
        }));
        let vk = exec::sum(&exec::map_indices(count, |i| {
            let d = e.flat(i)[n + axis] - mk;
            w[i] * d * d
        }));
        if vq <= 0.0 || vk <= 0.0 {
            return Err(Error::DegenerateDistribution(format!(
                "ensemble has zero spread on axis {axis}"
            )));
        }
        let cross = exec::sum(&exec::map_indices(count, |i| {
            let f = e.flat(i);
            w[i] * (f[axis] - mq) * (f[n + axis] - mk)
        }));
        let (sq, sk) = (vq.sqrt(), vk.sqrt());
        m.sigma_q.push(sq);
        m.sigma_k.push(sk);
        m.corr_qk.push((cross / (sq * sk)).clamp(-1.0, 1.0));
    }
    Ok(m)
}

fn grid_pushforward(g: &GridDensity, map: &PhaseMap) -> Result<GridDensity> {
    if !map.has_inverse() {
        return Err(Error::UnsupportedPushforward(format!(
            "map `{}` has no inverse on the grid support",
            map.name()
        )));
    }
    let dims = 2 * g.dof();
    // Image bounding box from a forward-mapped boundary lattice. For affine
    // maps the corners are exact extremes; the lattice also covers mildly
    // nonlinear maps.
    let per_axis: usize = if map.linear_part().is_some() { 2 } else { 5 };
    let mut low = vec![f64::INFINITY; dims];
    let mut high = vec![f64::NEG_INFINITY; dims];
    let lattice: usize = per_axis.pow(dims as u32);
    for node in 0..lattice {
        let mut rem = node;
        let mut x = vec![0.0; dims];
        for axis in 0..dims {
            let i = rem % per_axis;
            rem /= per_axis;
            let t = i as f64 / (per_axis - 1) as f64;
            x[axis] = g.low()[axis] + t * (g.high()[axis] - g.low()[axis]);
        }
        let y = map
            .apply(&PhasePoint::from_flat(&DVector::from_vec(x)))
            .to_flat();
        for axis in 0..dims {
            low[axis] = low[axis].min(y[axis]);
            high[axis] = high[axis].max(y[axis]);
        }
    }
    let shape = g.shape().to_vec();
    let constant_det = map
        .linear_part()
        .map(|p| p.matrix.determinant().abs());
    // Geometry-only template for the new cell centers.
    let template = GridDensity::from_parts_relaxed(
        low.clone(),
        high.clone(),
        shape.clone(),
        vec![1.0; g.values().len()],
    )?;
    let values = exec::map_indices(g.values().len(), |idx| {
        let y = template.cell_center(idx);
        let x = match map.invert(&y) {
            Some(x) => x,
            None => return Ok(0.0),
        };
        let inside = x
            .to_flat()
            .iter()
            .zip(g.low().iter().zip(g.high()))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
        if !inside {
            return Ok(0.0);
        }
        let det = match constant_det {
            Some(d) => d,
            None => crate::phase_space::jacobian_at(map, &x)?.determinant().abs(),
        };
        if det <= 0.0 {
            return Err(Error::UnsupportedPushforward(
                "map is singular on the grid support".into(),
            ));
        }
        Ok(g.interpolate_at(&x) / det)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    GridDensity::from_parts_relaxed(low, high, shape, values)
}
