//! Named systems, maps, and initial states, plus the JSON scenario schema.
//!
//! A scenario document pins everything a run needs: the Hamiltonian, the
//! initial distribution and its representation, the integrator, the entropy
//! estimator, and one seed. The schema is strict; unknown keys are errors,
//! because a silently ignored typo in a physics parameter invalidates a
//! run. Validation failures name the dotted path of the offending key.
//!
//! Defaults: leapfrog with `dt = 1e-3`, `t_final = 10`, an output every 100
//! steps, an ensemble of 10⁵ particles, k-nearest-neighbor entropy with
//! `k = 4` and jitter off, standard Gaussian initial state, seed 0.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{AnalyticGaussian, Distribution, GaussianMixture, GridDensity};
use crate::dynamics::{HamiltonianSystem, IntegratorConfig, Scheme};
use crate::entropy::EntropyMethod;
use crate::error::{Error, Result};
use crate::phase_space::PhaseMap;

pub const SYSTEM_NAMES: &[&str] = &["free", "harmonic", "inverted", "pendulum", "quartic"];
pub const MAP_NAMES: &[&str] = &["identity", "scale", "dilate", "rotate", "shear"];
pub const DISTRIBUTION_NAMES: &[&str] = &["gaussian", "uniform_box", "two_blob_mixture"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianDoc {
    pub name: String,
    /// Angular frequency of `harmonic` and `inverted` (default 1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// Quartic coupling of `quartic` (default 1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Degrees of freedom for `free`, `harmonic`, `inverted` (default 1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dof: Option<usize>,
}

impl HamiltonianDoc {
    pub fn named(name: &str) -> Self {
        HamiltonianDoc {
            name: name.into(),
            omega: None,
            lambda: None,
            dof: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDoc {
    pub name: String,
    /// Gaussian mean, length `2n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Gaussian covariance, `2n x 2n` rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
    /// Uniform box corners.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high: Option<Vec<f64>>,
    /// Blob separation of `two_blob_mixture`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

impl Default for InitialDoc {
    fn default() -> Self {
        InitialDoc {
            name: "gaussian".into(),
            mean: None,
            cov: None,
            low: None,
            high: None,
            a: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationDoc {
    pub kind: String,
    /// Particle count for `ensemble`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Cells per axis for `grid`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high: Option<Vec<f64>>,
}

impl Default for RepresentationDoc {
    fn default() -> Self {
        RepresentationDoc {
            kind: "ensemble".into(),
            count: None,
            shape: None,
            low: None,
            high: None,
        }
    }
}

fn default_dt() -> f64 {
    1e-3
}
fn default_t_final() -> f64 {
    10.0
}
fn default_output_every() -> usize {
    100
}
fn default_scheme() -> String {
    "leapfrog".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorDoc {
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
}

impl Default for IntegratorDoc {
    fn default() -> Self {
        IntegratorDoc {
            scheme: default_scheme(),
            dt: default_dt(),
            t_final: default_t_final(),
            output_every: default_output_every(),
        }
    }
}

fn default_method() -> String {
    "knn".into()
}
fn default_k() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyDoc {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub jitter: bool,
}

impl Default for EntropyDoc {
    fn default() -> Self {
        EntropyDoc {
            method: default_method(),
            k: default_k(),
            jitter: false,
        }
    }
}

/// A validated scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub hamiltonian: HamiltonianDoc,
    #[serde(default)]
    pub initial: InitialDoc,
    #[serde(default)]
    pub representation: RepresentationDoc,
    #[serde(default)]
    pub integrator: IntegratorDoc,
    #[serde(default)]
    pub entropy: EntropyDoc,
    #[serde(default)]
    pub seed: u64,
}

/// Parse and validate a scenario document. Serializing the result and
/// loading it again yields an identical scenario.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.system()?;
        let dist = self.analytic_initial()?;
        self.integrator()?.validate()?;
        self.entropy_method()?;
        match self.representation.kind.as_str() {
            "analytic" => {}
            "ensemble" => {
                let count = self.representation.count.unwrap_or(100_000);
                if count < 2 {
                    return Err(Error::config(
                        "representation.count",
                        format!("ensembles need at least 2 particles, got {count}"),
                    ));
                }
            }
            "grid" => {
                let dims = 2 * dist.dof();
                let shape = self.representation.shape.as_ref().ok_or_else(|| {
                    Error::config("representation.shape", "grid representation needs a shape")
                })?;
                let low = self.representation.low.as_ref().ok_or_else(|| {
                    Error::config("representation.low", "grid representation needs bounds")
                })?;
                let high = self.representation.high.as_ref().ok_or_else(|| {
                    Error::config("representation.high", "grid representation needs bounds")
                })?;
                if shape.len() != dims || low.len() != dims || high.len() != dims {
                    return Err(Error::config(
                        "representation.shape",
                        format!("shape and bounds must have {dims} axes"),
                    ));
                }
                if shape.iter().any(|&s| s == 0) {
                    return Err(Error::config("representation.shape", "axes must be nonzero"));
                }
                if low.iter().zip(high).any(|(a, b)| a >= b) {
                    return Err(Error::config("representation.low", "bounds need low < high"));
                }
            }
            other => {
                return Err(Error::config(
                    "representation.kind",
                    format!("unknown kind `{other}` (valid: analytic, ensemble, grid)"),
                ))
            }
        }
        if self.representation.kind != "grid"
            && (self.representation.shape.is_some()
                || self.representation.low.is_some()
                || self.representation.high.is_some())
        {
            return Err(Error::config(
                "representation.shape",
                "shape and bounds apply to the grid kind only",
            ));
        }
        if self.representation.kind != "ensemble" && self.representation.count.is_some() {
            return Err(Error::config(
                "representation.count",
                "count applies to the ensemble kind only",
            ));
        }
        if dist.dof() != self.system()?.dof() {
            return Err(Error::config(
                "initial",
                format!(
                    "initial distribution has {} dof but the system has {}",
                    dist.dof(),
                    self.system()?.dof()
                ),
            ));
        }
        Ok(())
    }

    /// Build the named Hamiltonian.
    pub fn system(&self) -> Result<HamiltonianSystem> {
        build_system(&self.hamiltonian)
    }

    /// The initial distribution in its analytic form, before representation.
    pub fn analytic_initial(&self) -> Result<Distribution> {
        build_initial(&self.initial)
    }

    /// The initial distribution with the representation applied.
    pub fn initial_distribution(&self) -> Result<Distribution> {
        let analytic = self.analytic_initial()?;
        match self.representation.kind.as_str() {
            "analytic" => Ok(analytic),
            "ensemble" => {
                let count = self.representation.count.unwrap_or(100_000);
                Ok(Distribution::Ensemble(analytic.sample(count, self.seed)?))
            }
            "grid" => {
                let shape = self.representation.shape.clone().expect("validated");
                let low = self.representation.low.clone().expect("validated");
                let high = self.representation.high.clone().expect("validated");
                let grid = GridDensity::tabulate(low, high, shape, |x| {
                    analytic.density_at(x).unwrap_or(0.0)
                })?;
                Ok(Distribution::Grid(grid))
            }
            other => Err(Error::config(
                "representation.kind",
                format!("unknown kind `{other}`"),
            )),
        }
    }

    pub fn integrator(&self) -> Result<IntegratorConfig> {
        let cfg = IntegratorConfig {
            scheme: Scheme::parse(&self.integrator.scheme)?,
            dt: self.integrator.dt,
            t_final: self.integrator.t_final,
            output_every: self.integrator.output_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn entropy_method(&self) -> Result<EntropyMethod> {
        if self.entropy.k == 0 {
            return Err(Error::config("entropy.k", "k must be >= 1"));
        }
        match self.entropy.method.as_str() {
            "analytic" => Ok(EntropyMethod::Analytic),
            "grid" => Ok(EntropyMethod::Grid),
            "knn" => Ok(EntropyMethod::Knn {
                k: self.entropy.k,
                jitter: self.entropy.jitter,
            }),
            other => Err(Error::config(
                "entropy.method",
                format!("unknown method `{other}` (valid: analytic, grid, knn)"),
            )),
        }
    }
}

fn reject_param(path: &str, present: bool, system: &str) -> Result<()> {
    if present {
        return Err(Error::config(
            path,
            format!("not a parameter of `{system}`"),
        ));
    }
    Ok(())
}

/// Construct a named Hamiltonian system.
///
/// - `free`: `H = Σ kᵢ²/2`, exact shear flow.
/// - `harmonic(ω)`: `H = Σ (kᵢ² + ω²qᵢ²)/2`, exact rotation flow.
/// - `inverted(ω)`: `H = Σ (kᵢ² − ω²qᵢ²)/2`, exact hyperbolic flow.
/// - `pendulum`: `H = k²/2 − cos q`.
/// - `quartic(λ)`: `H = k²/2 + λq⁴/4`.
pub fn build_system(doc: &HamiltonianDoc) -> Result<HamiltonianSystem> {
    let dof = doc.dof.unwrap_or(1);
    if dof == 0 {
        return Err(Error::config("hamiltonian.dof", "must be >= 1"));
    }
    let check_omega = |context: &str| -> Result<f64> {
        let omega = doc.omega.unwrap_or(1.0);
        if !omega.is_finite() || omega <= 0.0 {
            return Err(Error::config(
                "hamiltonian.omega",
                format!("must be positive for `{context}`, got {omega}"),
            ));
        }
        Ok(omega)
    };
    match doc.name.as_str() {
        "free" => {
            reject_param("hamiltonian.omega", doc.omega.is_some(), "free")?;
            reject_param("hamiltonian.lambda", doc.lambda.is_some(), "free")?;
            Ok(HamiltonianSystem::new(
                "free",
                dof,
                |_q: &[f64], k: &[f64]| 0.5 * k.iter().map(|v| v * v).sum::<f64>(),
                |_q, _k, out| out.fill(0.0),
                |_q, k, out| out.copy_from_slice(k),
                true,
            )
            .with_linear_flow(move |t| {
                let mut m = DMatrix::identity(2 * dof, 2 * dof);
                for i in 0..dof {
                    m[(i, dof + i)] = t;
                }
                m
            })
            .with_quadratic_form(block_quadratic(dof, 0.0, 1.0)))
        }
        "harmonic" => {
            reject_param("hamiltonian.lambda", doc.lambda.is_some(), "harmonic")?;
            let omega = check_omega("harmonic")?;
            Ok(HamiltonianSystem::new(
                "harmonic",
                dof,
                move |q: &[f64], k: &[f64]| {
                    0.5 * (k.iter().map(|v| v * v).sum::<f64>()
                        + omega * omega * q.iter().map(|v| v * v).sum::<f64>())
                },
                move |q, _k, out| {
                    for (o, qv) in out.iter_mut().zip(q) {
                        *o = omega * omega * qv;
                    }
                },
                |_q, k, out| out.copy_from_slice(k),
                true,
            )
            .with_linear_flow(move |t| {
                let (c, s) = ((omega * t).cos(), (omega * t).sin());
                let mut m = DMatrix::zeros(2 * dof, 2 * dof);
                for i in 0..dof {
                    m[(i, i)] = c;
                    m[(i, dof + i)] = s / omega;
                    m[(dof + i, i)] = -omega * s;
                    m[(dof + i, dof + i)] = c;
                }
                m
            })
            .with_quadratic_form(block_quadratic(dof, omega * omega, 1.0)))
        }
        "inverted" => {
            reject_param("hamiltonian.lambda", doc.lambda.is_some(), "inverted")?;
            let omega = check_omega("inverted")?;
            Ok(HamiltonianSystem::new(
                "inverted",
                dof,
                move |q: &[f64], k: &[f64]| {
                    0.5 * (k.iter().map(|v| v * v).sum::<f64>()
                        - omega * omega * q.iter().map(|v| v * v).sum::<f64>())
                },
                move |q, _k, out| {
                    for (o, qv) in out.iter_mut().zip(q) {
                        *o = -omega * omega * qv;
                    }
                },
                |_q, k, out| out.copy_from_slice(k),
                true,
            )
            .with_linear_flow(move |t| {
                let (c, s) = ((omega * t).cosh(), (omega * t).sinh());
                let mut m = DMatrix::zeros(2 * dof, 2 * dof);
                for i in 0..dof {
                    m[(i, i)] = c;
                    m[(i, dof + i)] = s / omega;
                    m[(dof + i, i)] = omega * s;
                    m[(dof + i, dof + i)] = c;
                }
                m
            })
            .with_quadratic_form(block_quadratic(dof, -omega * omega, 1.0)))
        }
        "pendulum" => {
            reject_param("hamiltonian.omega", doc.omega.is_some(), "pendulum")?;
            reject_param("hamiltonian.lambda", doc.lambda.is_some(), "pendulum")?;
            reject_param("hamiltonian.dof", doc.dof.is_some(), "pendulum")?;
            Ok(HamiltonianSystem::new(
                "pendulum",
                1,
                |q: &[f64], k: &[f64]| 0.5 * k[0] * k[0] - q[0].cos(),
                |q, _k, out| out[0] = q[0].sin(),
                |_q, k, out| out[0] = k[0],
                true,
            ))
        }
        "quartic" => {
            reject_param("hamiltonian.omega", doc.omega.is_some(), "quartic")?;
            reject_param("hamiltonian.dof", doc.dof.is_some(), "quartic")?;
            let lambda = doc.lambda.unwrap_or(1.0);
            if !lambda.is_finite() || lambda <= 0.0 {
                return Err(Error::config(
                    "hamiltonian.lambda",
                    format!("must be positive, got {lambda}"),
                ));
            }
            Ok(HamiltonianSystem::new(
                "quartic",
                1,
                move |q: &[f64], k: &[f64]| 0.5 * k[0] * k[0] + 0.25 * lambda * q[0].powi(4),
                move |q, _k, out| out[0] = lambda * q[0] * q[0] * q[0],
                |_q, k, out| out[0] = k[0],
                true,
            ))
        }
        other => Err(Error::UnknownName {
            kind: "hamiltonian",
            name: other.into(),
            valid: SYSTEM_NAMES.join(", "),
        }),
    }
}

fn block_quadratic(dof: usize, qq: f64, kk: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(2 * dof, 2 * dof);
    for i in 0..dof {
        a[(i, i)] = qq;
        a[(dof + i, dof + i)] = kk;
    }
    a
}

/// Construct a named initial distribution in analytic form.
pub fn build_initial(doc: &InitialDoc) -> Result<Distribution> {
    match doc.name.as_str() {
        "gaussian" => {
            for (path, present) in [
                ("initial.low", doc.low.is_some()),
                ("initial.high", doc.high.is_some()),
                ("initial.a", doc.a.is_some()),
            ] {
                reject_param(path, present, "gaussian")?;
            }
            let mean = doc.mean.clone().unwrap_or_else(|| vec![0.0, 0.0]);
            let dims = mean.len();
            let cov = match &doc.cov {
                None => DMatrix::identity(dims, dims),
                Some(rows) => {
                    if rows.len() != dims || rows.iter().any(|r| r.len() != dims) {
                        return Err(Error::config(
                            "initial.cov",
                            format!("must be {dims}x{dims} to match the mean"),
                        ));
                    }
                    DMatrix::from_fn(dims, dims, |i, j| rows[i][j])
                }
            };
            let g = AnalyticGaussian::new(DVector::from_vec(mean), cov)
                .map_err(|e| Error::config("initial.cov", e.to_string()))?;
            Ok(Distribution::Gaussian(g))
        }
        "uniform_box" => {
            for (path, present) in [
                ("initial.mean", doc.mean.is_some()),
                ("initial.cov", doc.cov.is_some()),
                ("initial.a", doc.a.is_some()),
            ] {
                reject_param(path, present, "uniform_box")?;
            }
            let low = doc.low.clone().unwrap_or_else(|| vec![0.0, 0.0]);
            let high = doc.high.clone().unwrap_or_else(|| vec![1.0, 1.0]);
            let grid = GridDensity::uniform_box(low, high)
                .map_err(|e| Error::config("initial.low", e.to_string()))?;
            Ok(Distribution::Grid(grid))
        }
        "two_blob_mixture" => {
            for (path, present) in [
                ("initial.mean", doc.mean.is_some()),
                ("initial.cov", doc.cov.is_some()),
                ("initial.low", doc.low.is_some()),
                ("initial.high", doc.high.is_some()),
            ] {
                reject_param(path, present, "two_blob_mixture")?;
            }
            let a = doc.a.unwrap_or(3.0);
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::config("initial.a", format!("must be positive, got {a}")));
            }
            Ok(Distribution::Mixture(GaussianMixture::two_blob(a)?))
        }
        other => Err(Error::UnknownName {
            kind: "distribution",
            name: other.into(),
            valid: DISTRIBUTION_NAMES.join(", "),
        }),
    }
}

/// Parameters for a named phase-space map.
#[derive(Debug, Clone, Copy, Default)]
pub struct MapParams {
    /// Scale factor of `scale` and `dilate`.
    pub a: Option<f64>,
    /// Rotation angle of `rotate`.
    pub theta: Option<f64>,
    /// Shear coefficient of `shear`.
    pub s: Option<f64>,
    /// Degrees of freedom (default 1).
    pub dof: Option<usize>,
}

/// Construct a named map.
///
/// - `identity`
/// - `scale(a)`: `(q, k) ↦ (aq, k/a)`, canonical for any `a ≠ 0`.
/// - `dilate(a)`: `(q, k) ↦ (aq, ak)`, canonical only at `a = 1`.
/// - `rotate(θ)`: rotation in each `(qⁱ, kᵢ)` plane, canonical.
/// - `shear(s)`: `(q, k) ↦ (q + sk, k)`, canonical.
pub fn build_map(name: &str, params: &MapParams) -> Result<PhaseMap> {
    let dof = params.dof.unwrap_or(1);
    if dof == 0 {
        return Err(Error::config("map.dof", "must be >= 1"));
    }
    let m = 2 * dof;
    let need = |v: Option<f64>, path: &str| -> Result<f64> {
        let v = v.ok_or_else(|| Error::config(path, "parameter required"))?;
        if !v.is_finite() {
            return Err(Error::config(path, "must be finite"));
        }
        Ok(v)
    };
    match name {
        "identity" => Ok(PhaseMap::identity(dof)),
        "scale" => {
            let a = need(params.a, "map.a")?;
            if a == 0.0 {
                return Err(Error::config("map.a", "must be nonzero"));
            }
            let mut mat = DMatrix::zeros(m, m);
            for i in 0..dof {
                mat[(i, i)] = a;
                mat[(dof + i, dof + i)] = 1.0 / a;
            }
            Ok(PhaseMap::linear(format!("scale({a})"), mat))
        }
        "dilate" => {
            let a = need(params.a, "map.a")?;
            if a == 0.0 {
                return Err(Error::config("map.a", "must be nonzero"));
            }
            Ok(PhaseMap::linear(
                format!("dilate({a})"),
                DMatrix::identity(m, m) * a,
            ))
        }
        "rotate" => {
            let theta = need(params.theta, "map.theta")?;
            let (c, s) = (theta.cos(), theta.sin());
            let mut mat = DMatrix::zeros(m, m);
            for i in 0..dof {
                mat[(i, i)] = c;
                mat[(i, dof + i)] = s;
                mat[(dof + i, i)] = -s;
                mat[(dof + i, dof + i)] = c;
            }
            Ok(PhaseMap::linear(format!("rotate({theta})"), mat))
        }
        "shear" => {
            let s = need(params.s, "map.s")?;
            let mut mat = DMatrix::identity(m, m);
            for i in 0..dof {
                mat[(i, dof + i)] = s;
            }
            Ok(PhaseMap::linear(format!("shear({s})"), mat))
        }
        other => Err(Error::UnknownName {
            kind: "map",
            name: other.into(),
            valid: MAP_NAMES.join(", "),
        }),
    }
}

/// The registry contents as JSON, for the CLI `registry` subcommand.
pub fn registry_listing() -> serde_json::Value {
    serde_json::json!({
        "systems": [
            {"name": "free", "params": {"dof": "int >= 1, default 1"}},
            {"name": "harmonic", "params": {"omega": "real > 0, default 1", "dof": "int >= 1, default 1"}},
            {"name": "inverted", "params": {"omega": "real > 0, default 1", "dof": "int >= 1, default 1"}},
            {"name": "pendulum", "params": {}},
            {"name": "quartic", "params": {"lambda": "real > 0, default 1"}},
        ],
        "maps": [
            {"name": "identity", "params": {}},
            {"name": "scale", "params": {"a": "real != 0"}, "canonical": true},
            {"name": "dilate", "params": {"a": "real != 0"}, "canonical": "only at a = 1"},
            {"name": "rotate", "params": {"theta": "real"}, "canonical": true},
            {"name": "shear", "params": {"s": "real"}, "canonical": true},
        ],
        "distributions": [
            {"name": "gaussian", "params": {"mean": "[2n reals], default [0,0]", "cov": "[2n x 2n reals], default identity"}},
            {"name": "uniform_box", "params": {"low": "[2n reals], default [0,0]", "high": "[2n reals], default [1,1]"}},
            {"name": "two_blob_mixture", "params": {"a": "real > 0, default 3"}},
        ],
        "schemes": ["symplectic_euler", "leapfrog", "yoshida4"],
    })
}
