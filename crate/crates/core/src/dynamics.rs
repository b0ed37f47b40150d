//! Hamiltonian flows on distributions.
//!
//! Quadratic energies carry an exact flow matrix and propagate analytic
//! Gaussians in closed form (`μ(t) = M(t)μ`, `Σ(t) = M(t) Σ M(t)ᵀ`).
//! Everything else integrates particle ensembles with splitting schemes
//! whose one-step maps are exactly canonical: symplectic Euler, leapfrog,
//! and the fourth-order Yoshida composition. Conservation of entropy along
//! the flow is structural (the step map is canonical), not an accuracy
//! statement, which is why even the first-order scheme conserves it.
//!
//! Particle evolution is embarrassingly parallel and bitwise deterministic:
//! particles advance independently in fixed chunks, steps run innermost per
//! particle (this also caches the force between a step's closing and the
//! next step's opening kick), and diagnostics reduce by the fixed-order
//! compensated summation in [`crate::exec`].

use std::io::Write as IoWrite;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::distributions::{Distribution, Moments, ParticleEnsemble};
use crate::entropy::{self, EntropyEstimate, EntropyMethod};
use crate::error::{Error, Result};
use crate::exec;
use crate::numfmt::fmt_g12;
use crate::phase_space::{jacobian_at, PhaseMap, PhasePoint, SymplecticForm};
use crate::uncertainty;

type EnergyFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
type FlowFn = dyn Fn(f64) -> DMatrix<f64> + Send + Sync;

/// An autonomous Hamiltonian `H(q, k)` with its gradients.
///
/// `separable` declares `H = T(k) + V(q)`, the precondition for the
/// explicit splitting integrators. Quadratic systems may carry `linear_flow`
/// (the exact flow matrix `t ↦ M(t)`) and `quadratic_form` (the matrix `A`
/// of `H = ½ zᵀA z`, used for exact mean energies of Gaussians).
#[derive(Clone)]
pub struct HamiltonianSystem {
    name: String,
    dof: usize,
    energy: Arc<EnergyFn>,
    grad_q: Arc<GradFn>,
    grad_k: Arc<GradFn>,
    separable: bool,
    linear_flow: Option<Arc<FlowFn>>,
    quadratic_form: Option<DMatrix<f64>>,
}

impl std::fmt::Debug for HamiltonianSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianSystem")
            .field("name", &self.name)
            .field("dof", &self.dof)
            .field("separable", &self.separable)
            .field("linear_flow", &self.linear_flow.is_some())
            .finish()
    }
}

impl HamiltonianSystem {
    pub fn new<H, Gq, Gk>(
        name: impl Into<String>,
        dof: usize,
        energy: H,
        grad_q: Gq,
        grad_k: Gk,
        separable: bool,
    ) -> Self
    where
        H: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        Gq: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        Gk: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        HamiltonianSystem {
            name: name.into(),
            dof,
            energy: Arc::new(energy),
            grad_q: Arc::new(grad_q),
            grad_k: Arc::new(grad_k),
            separable,
            linear_flow: None,
            quadratic_form: None,
        }
    }

    pub fn with_linear_flow<F>(mut self, flow: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.linear_flow = Some(Arc::new(flow));
        self
    }

    pub fn with_quadratic_form(mut self, a: DMatrix<f64>) -> Self {
        self.quadratic_form = Some(a);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn is_separable(&self) -> bool {
        self.separable
    }

    pub fn energy(&self, q: &[f64], k: &[f64]) -> f64 {
        (self.energy)(q, k)
    }

    pub fn energy_at(&self, x: &PhasePoint) -> f64 {
        self.energy(x.q.as_slice(), x.k.as_slice())
    }

    pub fn grad_q_into(&self, q: &[f64], k: &[f64], out: &mut [f64]) {
        (self.grad_q)(q, k, out)
    }

    pub fn grad_k_into(&self, q: &[f64], k: &[f64], out: &mut [f64]) {
        (self.grad_k)(q, k, out)
    }

    pub fn linear_flow(&self, t: f64) -> Option<DMatrix<f64>> {
        self.linear_flow.as_ref().map(|f| f(t))
    }

    pub fn has_linear_flow(&self) -> bool {
        self.linear_flow.is_some()
    }

    pub fn quadratic_form(&self) -> Option<&DMatrix<f64>> {
        self.quadratic_form.as_ref()
    }

    /// Mean energy of a distribution: closed form `½(tr(AΣ) + μᵀAμ)` for
    /// quadratic systems on analytic forms, weighted particle average on
    /// ensembles, energy at the mean otherwise.
    pub fn mean_energy(&self, dist: &Distribution) -> Result<f64> {
        match dist {
            Distribution::Ensemble(e) => {
                let n = e.dof();
                let w = e.weights();
                Ok(exec::sum(&exec::map_indices(e.len(), |i| {
                    let f = e.flat(i);
                    w[i] * self.energy(&f[..n], &f[n..])
                })))
            }
            Distribution::Gaussian(g) => {
                if let Some(a) = &self.quadratic_form {
                    let mu = g.mean();
                    let tr = (a * g.cov()).trace();
                    Ok(0.5 * (tr + (mu.transpose() * a * mu)[(0, 0)]))
                } else {
                    let x = PhasePoint::from_flat(g.mean());
                    Ok(self.energy_at(&x))
                }
            }
            _ => {
                let m = dist.moments()?;
                let n = m.dof();
                let flat: Vec<f64> = m.mean_q.iter().chain(m.mean_k.iter()).copied().collect();
                Ok(self.energy(&flat[..n], &flat[n..]))
            }
        }
    }

    /// Check gradients against central finite differences of the energy at
    /// each point, within `1e-6` relative.
    pub fn validate_gradients(&self, points: &[PhasePoint]) -> Result<()> {
        let n = self.dof;
        let mut gq = vec![0.0; n];
        let mut gk = vec![0.0; n];
        for x in points {
            let h = 1e-6 * x.inf_norm().max(1.0);
            self.grad_q_into(x.q.as_slice(), x.k.as_slice(), &mut gq);
            self.grad_k_into(x.q.as_slice(), x.k.as_slice(), &mut gk);
            for axis in 0..n {
                let mut qp = x.q.clone();
                let mut qm = x.q.clone();
                qp[axis] += h;
                qm[axis] -= h;
                let fd_q = (self.energy(qp.as_slice(), x.k.as_slice())
                    - self.energy(qm.as_slice(), x.k.as_slice()))
                    / (2.0 * h);
                let mut kp = x.k.clone();
                let mut km = x.k.clone();
                kp[axis] += h;
                km[axis] -= h;
                let fd_k = (self.energy(x.q.as_slice(), kp.as_slice())
                    - self.energy(x.q.as_slice(), km.as_slice()))
                    / (2.0 * h);
                let scale_q = gq[axis].abs().max(1.0);
                let scale_k = gk[axis].abs().max(1.0);
                if (gq[axis] - fd_q).abs() > 1e-6 * scale_q
                    || (gk[axis] - fd_k).abs() > 1e-6 * scale_k
                {
                    return Err(Error::Domain(format!(
                        "gradient of `{}` disagrees with finite differences at {x}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Check exact-flow structure: `M(0) = I`, symplecticity of `M(t)`, and
    /// the group law `M(t+s) = M(t)M(s)`, all within `1e-12`.
    pub fn validate_linear_flow(&self, times: &[f64]) -> Result<()> {
        let flow = self
            .linear_flow
            .as_ref()
            .ok_or_else(|| Error::Domain(format!("`{}` has no exact flow", self.name)))?;
        let m = 2 * self.dof;
        let id = DMatrix::<f64>::identity(m, m);
        if (flow(0.0) - &id).amax() > 1e-12 {
            return Err(Error::Domain(format!(
                "`{}` flow at t=0 is not identity",
                self.name
            )));
        }
        let omega = SymplecticForm::standard(self.dof);
        for &t in times {
            let mt = flow(t);
            let resid = (mt.transpose() * omega.matrix() * &mt - omega.matrix()).amax();
            if resid > 1e-12 {
                return Err(Error::Domain(format!(
                    "`{}` flow at t={t} is not symplectic (residual {resid:.3e})",
                    self.name
                )));
            }
            for &s in times {
                let lhs = flow(t + s);
                let rhs = flow(t) * flow(s);
                if (lhs - rhs).amax() > 1e-12 {
                    return Err(Error::Domain(format!(
                        "`{}` flow violates M(t+s) = M(t)M(s) at t={t}, s={s}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Splitting schemes with exactly canonical one-step maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// First order: drift then kick.
    SymplecticEuler,
    /// Second order: kick-drift-kick.
    Leapfrog,
    /// Fourth order: Yoshida's palindromic leapfrog composition.
    Yoshida4,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::SymplecticEuler => "symplectic_euler",
            Scheme::Leapfrog => "leapfrog",
            Scheme::Yoshida4 => "yoshida4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "symplectic_euler" => Ok(Scheme::SymplecticEuler),
            "leapfrog" => Ok(Scheme::Leapfrog),
            "yoshida4" => Ok(Scheme::Yoshida4),
            other => Err(Error::UnknownName {
                kind: "scheme",
                name: other.into(),
                valid: "symplectic_euler, leapfrog, yoshida4".into(),
            }),
        }
    }
}

/// The concrete update sequence; symplectic Euler's adjoint swaps the
/// drift/kick order, which is what makes the reverse pass an exact inverse.
#[derive(Debug, Clone, Copy)]
enum Kernel {
    Splitting(&'static [f64]),
    EulerDriftKick,
    EulerKickDrift,
}

const LEAPFROG_WEIGHTS: [f64; 1] = [1.0];

fn yoshida_weights() -> &'static [f64; 3] {
    use std::sync::OnceLock;
    static W: OnceLock<[f64; 3]> = OnceLock::new();
    W.get_or_init(|| {
        let c = 2.0f64.cbrt();
        let w1 = 1.0 / (2.0 - c);
        // Closing the palindrome with 1 − 2w1 keeps the step total exact.
        [w1, 1.0 - 2.0 * w1, w1]
    })
}

fn kernel_for(scheme: Scheme) -> Kernel {
    match scheme {
        Scheme::SymplecticEuler => Kernel::EulerDriftKick,
        Scheme::Leapfrog => Kernel::Splitting(&LEAPFROG_WEIGHTS),
        Scheme::Yoshida4 => Kernel::Splitting(yoshida_weights()),
    }
}

fn adjoint(kernel: Kernel) -> Kernel {
    match kernel {
        // Palindromic compositions are self-adjoint.
        Kernel::Splitting(w) => Kernel::Splitting(w),
        Kernel::EulerDriftKick => Kernel::EulerKickDrift,
        Kernel::EulerKickDrift => Kernel::EulerDriftKick,
    }
}

#[inline]
fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Advance one particle `steps` steps in place. `force`/`vel` are scratch
/// buffers of length `dof`; the force persists across steps, so splitting
/// kernels evaluate `∂H/∂q` once per step after the first.
fn run_particle(
    sys: &HamiltonianSystem,
    flat: &mut [f64],
    kernel: Kernel,
    dt: f64,
    steps: usize,
    force: &mut [f64],
    vel: &mut [f64],
) {
    let n = sys.dof();
    let (q, k) = flat.split_at_mut(n);
    match kernel {
        Kernel::Splitting(weights) => {
            sys.grad_q_into(q, k, force);
            for _ in 0..steps {
                for &w in weights {
                    let h = w * dt;
                    axpy(k, force, -0.5 * h);
                    sys.grad_k_into(q, k, vel);
                    axpy(q, vel, h);
                    sys.grad_q_into(q, k, force);
                    axpy(k, force, -0.5 * h);
                }
            }
        }
        Kernel::EulerDriftKick => {
            for _ in 0..steps {
                sys.grad_k_into(q, k, vel);
                axpy(q, vel, dt);
                sys.grad_q_into(q, k, force);
                axpy(k, force, -dt);
            }
        }
        Kernel::EulerKickDrift => {
            for _ in 0..steps {
                sys.grad_q_into(q, k, force);
                axpy(k, force, -dt);
                sys.grad_k_into(q, k, vel);
                axpy(q, vel, dt);
            }
        }
    }
}

fn ensure_splitting_applies(sys: &HamiltonianSystem, scheme: Scheme) -> Result<()> {
    if !sys.is_separable() {
        return Err(Error::UnsupportedScheme(format!(
            "{} is a splitting scheme and needs a separable energy; `{}` is not",
            scheme.name(),
            sys.name()
        )));
    }
    Ok(())
}

/// One integrator step. The step viewed as a phase-space map is exactly
/// canonical; accuracy in `dt` is a separate question.
pub fn step(
    sys: &HamiltonianSystem,
    x: &PhasePoint,
    scheme: Scheme,
    dt: f64,
) -> Result<PhasePoint> {
    ensure_splitting_applies(sys, scheme)?;
    if !dt.is_finite() {
        return Err(Error::Domain("step size must be finite".into()));
    }
    if x.dof() != sys.dof() {
        return Err(Error::Domain("point dimension does not match system".into()));
    }
    let n = sys.dof();
    let mut flat = x.to_flat().as_slice().to_vec();
    let mut force = vec![0.0; n];
    let mut vel = vec![0.0; n];
    run_particle(sys, &mut flat, kernel_for(scheme), dt, 1, &mut force, &mut vel);
    let out = PhasePoint::from_flat(&DVector::from_vec(flat));
    if !out.is_finite() {
        return Err(Error::Domain(format!(
            "integrator step of `{}` produced non-finite coordinates from {x}",
            sys.name()
        )));
    }
    Ok(out)
}

/// The one-step map as a [`PhaseMap`], for canonicity checks.
pub fn step_map(sys: &HamiltonianSystem, scheme: Scheme, dt: f64) -> Result<PhaseMap> {
    ensure_splitting_applies(sys, scheme)?;
    let sys = sys.clone();
    let name = format!("{}({}, dt={dt})", scheme.name(), sys.name());
    let dof = sys.dof();
    Ok(PhaseMap::from_fn(dof, name, move |x: &PhasePoint| {
        let n = sys.dof();
        let mut flat = x.to_flat().as_slice().to_vec();
        let mut force = vec![0.0; n];
        let mut vel = vec![0.0; n];
        run_particle(&sys, &mut flat, kernel_for(scheme), dt, 1, &mut force, &mut vel);
        PhasePoint::from_flat(&DVector::from_vec(flat))
    }))
}

fn advance_ensemble(
    sys: &HamiltonianSystem,
    ens: &mut ParticleEnsemble,
    kernel: Kernel,
    dt: f64,
    steps: usize,
) -> Result<()> {
    if steps == 0 {
        return Ok(());
    }
    let n = sys.dof();
    let stride = 2 * n;
    let bad = AtomicBool::new(false);
    exec::for_each_chunk_mut(ens.coords_mut(), exec::CHUNK * stride, |_, chunk| {
        let mut force = vec![0.0; n];
        let mut vel = vec![0.0; n];
        for flat in chunk.chunks_mut(stride) {
            run_particle(sys, flat, kernel, dt, steps, &mut force, &mut vel);
        }
        if chunk.iter().any(|v| !v.is_finite()) {
            bad.store(true, Ordering::Relaxed);
        }
    });
    if bad.into_inner() {
        return Err(Error::Domain(format!(
            "evolution under `{}` produced non-finite coordinates",
            sys.name()
        )));
    }
    Ok(())
}

/// Advance every particle `steps` steps of size `dt`.
pub fn evolve_ensemble(
    sys: &HamiltonianSystem,
    ens: &ParticleEnsemble,
    scheme: Scheme,
    dt: f64,
    steps: usize,
) -> Result<ParticleEnsemble> {
    ensure_splitting_applies(sys, scheme)?;
    let mut out = ens.clone();
    advance_ensemble(sys, &mut out, kernel_for(scheme), dt, steps)?;
    Ok(out)
}

/// Exact reverse of [`evolve_ensemble`] with the same arguments: runs the
/// adjoint kernel with negated step, which undoes the forward pass to
/// round-off.
pub fn evolve_ensemble_back(
    sys: &HamiltonianSystem,
    ens: &ParticleEnsemble,
    scheme: Scheme,
    dt: f64,
    steps: usize,
) -> Result<ParticleEnsemble> {
    ensure_splitting_applies(sys, scheme)?;
    let mut out = ens.clone();
    advance_ensemble(sys, &mut out, adjoint(kernel_for(scheme)), -dt, steps)?;
    Ok(out)
}

/// Integrator configuration. `t_final` may be zero (diagnostics of the
/// initial state only); a positive horizon must cover at least one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    pub output_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            scheme: Scheme::Leapfrog,
            dt: 1e-3,
            t_final: 10.0,
            output_every: 100,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::Config {
                path: "integrator.dt".into(),
                message: format!("must be > 0, got {}", self.dt),
            });
        }
        if !self.t_final.is_finite() || self.t_final < 0.0 {
            return Err(Error::Config {
                path: "integrator.t_final".into(),
                message: format!("must be >= 0, got {}", self.t_final),
            });
        }
        if self.t_final > 0.0 && self.t_final < self.dt {
            return Err(Error::Config {
                path: "integrator.t_final".into(),
                message: "a positive horizon must be at least one step long".into(),
            });
        }
        if self.output_every == 0 {
            return Err(Error::Config {
                path: "integrator.output_every".into(),
                message: "must be >= 1".into(),
            });
        }
        Ok(())
    }

    fn total_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Diagnostics at one output time.
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub t: f64,
    pub moments: Moments,
    pub entropy: EntropyEstimate,
    /// Product of per-pair spreads `Π σ_qⁱ σ_kᵢ`.
    pub spread_product: f64,
    /// Spread floor `e^{I₀}/(2πe)ⁿ` from the initial entropy `I₀`;
    /// constant along the trajectory by construction.
    pub bound: f64,
    pub energy: f64,
}

/// Time-ordered diagnostics along one evolution.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryRecord {
    /// CSV with the fixed header
    /// `t,mean_q,mean_k,sigma_q,sigma_k,corr_qk,product,entropy,entropy_stderr,bound,energy`.
    /// Moment columns report the first degree of freedom; `product` and
    /// `bound` are totals over pairs. All numbers use `%.12g`; a missing
    /// stderr is an empty field.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "t,mean_q,mean_k,sigma_q,sigma_k,corr_qk,product,entropy,entropy_stderr,bound,energy"
        )?;
        for row in &self.rows {
            let stderr = row.entropy.stderr.map(fmt_g12).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt_g12(row.t),
                fmt_g12(row.moments.mean_q[0]),
                fmt_g12(row.moments.mean_k[0]),
                fmt_g12(row.moments.sigma_q[0]),
                fmt_g12(row.moments.sigma_k[0]),
                fmt_g12(row.moments.corr_qk[0]),
                fmt_g12(row.spread_product),
                fmt_g12(row.entropy.value),
                stderr,
                fmt_g12(row.bound),
                fmt_g12(row.energy),
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    /// `max_t |I(t) − I(0)|`.
    pub fn max_entropy_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        self.rows
            .iter()
            .map(|r| (r.entropy.value - first.entropy.value).abs())
            .fold(0.0, f64::max)
    }

    /// Worst shortfall `max_t (bound − product(t))`, negative when the
    /// floor holds everywhere with margin.
    pub fn max_bound_shortfall(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.bound - r.spread_product)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evolution settings beyond the integrator itself.
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub entropy: EntropyMethod,
    pub seed: u64,
    /// Particle count when an analytic input must degrade to an ensemble.
    pub ensemble_count: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            entropy: EntropyMethod::default_knn(),
            seed: 0,
            ensemble_count: 100_000,
        }
    }
}

/// A finished evolution: diagnostics plus the final state for round trips.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub record: TrajectoryRecord,
    pub final_state: Distribution,
}

/// Evolve a distribution and record diagnostics at every output time.
///
/// Analytic Gaussians ride the exact flow when the system has one (entropy
/// is then reported analytically); otherwise the input is converted to an
/// ensemble of `opts.ensemble_count` particles and advanced particle-wise.
/// Grid densities do not evolve.
pub fn evolve(
    sys: &HamiltonianSystem,
    dist: &Distribution,
    cfg: &IntegratorConfig,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    cfg.validate()?;
    if dist.dof() != sys.dof() {
        return Err(Error::Domain(format!(
            "distribution dimension {} does not match system dimension {}",
            dist.dof(),
            sys.dof()
        )));
    }
    match dist {
        Distribution::Gaussian(_) if sys.has_linear_flow() => evolve_gaussian_exact(sys, dist, cfg),
        Distribution::Grid(_) => Err(Error::UnsupportedRepresentation(
            "grid densities do not evolve; sample them into an ensemble first".into(),
        )),
        Distribution::Ensemble(e) => evolve_particles(sys, e.clone(), cfg, opts),
        _ => {
            let ens = dist.sample(opts.ensemble_count, opts.seed)?;
            evolve_particles(sys, ens, cfg, opts)
        }
    }
}

fn evolve_gaussian_exact(
    sys: &HamiltonianSystem,
    dist: &Distribution,
    cfg: &IntegratorConfig,
) -> Result<Evolution> {
    let Distribution::Gaussian(g0) = dist else {
        unreachable!("caller matched Gaussian")
    };
    let delta = cfg.dt * cfg.output_every as f64;
    let mut times: Vec<f64> = Vec::new();
    let mut t = 0.0;
    while t < cfg.t_final - 1e-12 * cfg.t_final.max(1.0) {
        times.push(t);
        t += delta;
    }
    times.push(cfg.t_final);

    let mut rows = Vec::with_capacity(times.len());
    let mut bound = 0.0;
    let mut last = g0.clone();
    for (j, &t) in times.iter().enumerate() {
        let flow = sys.linear_flow(t).expect("exact flow present");
        let part = crate::phase_space::LinearPart {
            matrix: flow,
            offset: DVector::zeros(2 * sys.dof()),
        };
        let gt = g0.affine_image(&part)?;
        let state = Distribution::Gaussian(gt.clone());
        let moments = state.moments()?;
        let est = entropy::entropy_analytic(&gt);
        if j == 0 {
            bound = uncertainty::bound_from_entropy_total(est.value, sys.dof());
        }
        rows.push(TrajectoryRow {
            t,
            spread_product: moments.total_spread_product(),
            energy: sys.mean_energy(&state)?,
            moments,
            entropy: est,
            bound,
        });
        last = gt;
    }
    Ok(Evolution {
        record: TrajectoryRecord { rows },
        final_state: Distribution::Gaussian(last),
    })
}

fn evolve_particles(
    sys: &HamiltonianSystem,
    mut ens: ParticleEnsemble,
    cfg: &IntegratorConfig,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    ensure_splitting_applies(sys, cfg.scheme)?;
    let kernel = kernel_for(cfg.scheme);
    let total = cfg.total_steps();
    let mut rows = Vec::new();
    let mut done = 0usize;
    let mut bound = 0.0;
    loop {
        let t = done as f64 * cfg.dt;
        let state = Distribution::Ensemble(ens.clone());
        let est = entropy::entropy_of(&state, opts.entropy, opts.seed)
            .map_err(|e| Error::Domain(format!("entropy at t={t}: {e}")))?;
        if rows.is_empty() {
            bound = uncertainty::bound_from_entropy_total(est.value, sys.dof());
        }
        let moments = state.moments()?;
        rows.push(TrajectoryRow {
            t,
            spread_product: moments.total_spread_product(),
            energy: sys.mean_energy(&state)?,
            moments,
            entropy: est,
            bound,
        });
        if done >= total {
            break;
        }
        let batch = cfg.output_every.min(total - done);
        advance_ensemble(sys, &mut ens, kernel, cfg.dt, batch).map_err(|e| {
            Error::Domain(format!(
                "between t={t} and t={}: {e}",
                (done + batch) as f64 * cfg.dt
            ))
        })?;
        done += batch;
    }
    Ok(Evolution {
        record: TrajectoryRecord { rows },
        final_state: Distribution::Ensemble(ens),
    })
}

/// Paths of the distribution centroid and of a point particle started at
/// the same initial mean, under the same evolution operator.
#[derive(Debug, Clone)]
pub struct CentroidTrack {
    pub times: Vec<f64>,
    pub centroid: Vec<PhasePoint>,
    pub point: Vec<PhasePoint>,
    /// Sup-norm gap per output time.
    pub deviation: Vec<f64>,
    /// Running maximum of `deviation`; the reported divergence envelope.
    pub envelope: Vec<f64>,
}

/// Track the ensemble centroid against the point particle from the same
/// initial mean. For linear flows the two coincide to round-off (the mean
/// of a linear map is the map of the mean); for nonlinear systems the gap
/// is a diagnostic with no pass/fail attached.
pub fn centroid_track(
    sys: &HamiltonianSystem,
    dist: &Distribution,
    cfg: &IntegratorConfig,
    opts: &EvolveOptions,
) -> Result<CentroidTrack> {
    cfg.validate()?;
    let m0 = dist.moments()?;
    let mean0 = PhasePoint::new(
        DVector::from_vec(m0.mean_q.clone()),
        DVector::from_vec(m0.mean_k.clone()),
    )?;

    if let (Distribution::Gaussian(_), true) = (dist, sys.has_linear_flow()) {
        let evolution = evolve(sys, dist, cfg, opts)?;
        let mut track = CentroidTrack {
            times: Vec::new(),
            centroid: Vec::new(),
            point: Vec::new(),
            deviation: Vec::new(),
            envelope: Vec::new(),
        };
        let mut env = 0.0f64;
        for row in &evolution.record.rows {
            let c = PhasePoint::new(
                DVector::from_vec(row.moments.mean_q.clone()),
                DVector::from_vec(row.moments.mean_k.clone()),
            )?;
            let flow = sys.linear_flow(row.t).expect("exact flow present");
            let p = PhasePoint::from_flat(&(flow * mean0.to_flat()));
            let dev = (c.to_flat() - p.to_flat()).amax();
            env = env.max(dev);
            track.times.push(row.t);
            track.centroid.push(c);
            track.point.push(p);
            track.deviation.push(dev);
            track.envelope.push(env);
        }
        return Ok(track);
    }

    ensure_splitting_applies(sys, cfg.scheme)?;
    let mut ens = match dist {
        Distribution::Ensemble(e) => e.clone(),
        Distribution::Grid(_) => {
            return Err(Error::UnsupportedRepresentation(
                "grid densities do not evolve".into(),
            ))
        }
        other => other.sample(opts.ensemble_count, opts.seed)?,
    };
    let kernel = kernel_for(cfg.scheme);
    let total = cfg.total_steps();
    let n = sys.dof();
    let mut point_flat = mean0.to_flat().as_slice().to_vec();
    let mut force = vec![0.0; n];
    let mut vel = vec![0.0; n];

    let mut track = CentroidTrack {
        times: Vec::new(),
        centroid: Vec::new(),
        point: Vec::new(),
        deviation: Vec::new(),
        envelope: Vec::new(),
    };
    let mut env = 0.0f64;
    let mut done = 0usize;
    loop {
        let m = Distribution::Ensemble(ens.clone()).moments()?;
        let c = PhasePoint::new(DVector::from_vec(m.mean_q), DVector::from_vec(m.mean_k))?;
        let p = PhasePoint::from_flat(&DVector::from_row_slice(&point_flat));
        let dev = (c.to_flat() - p.to_flat()).amax();
        env = env.max(dev);
        track.times.push(done as f64 * cfg.dt);
        track.centroid.push(c);
        track.point.push(p);
        track.deviation.push(dev);
        track.envelope.push(env);
        if done >= total {
            break;
        }
        let batch = cfg.output_every.min(total - done);
        advance_ensemble(sys, &mut ens, kernel, cfg.dt, batch)?;
        run_particle(sys, &mut point_flat, kernel, cfg.dt, batch, &mut force, &mut vel);
        done += batch;
    }
    Ok(track)
}

/// Max-abs residual of `JᵀΩJ − Ω` for one integrator step at one point,
/// with a finite-difference Jacobian.
pub fn step_symplectic_residual(
    sys: &HamiltonianSystem,
    scheme: Scheme,
    x: &PhasePoint,
    dt: f64,
) -> Result<f64> {
    let map = step_map(sys, scheme, dt)?;
    let j = jacobian_at(&map, x)?;
    let omega = SymplecticForm::standard(sys.dof());
    Ok((j.transpose() * omega.matrix() * &j - omega.matrix()).amax())
}
