//! Phase-space points, differentiable maps, and the canonical condition.
//!
//! Coordinates are ordered `(q¹..qⁿ, k₁..kₙ)` everywhere; the symplectic
//! form [`SymplecticForm`] is built for that ordering. A map is canonical
//! when its Jacobian `J` satisfies `JᵀΩJ = Ω` at every sampled point, which
//! is what preserves phase-space areas and hence densities and entropy.
//! Canonicity is checked on point samples, never proven globally: maps are
//! black-box functions and sampling is the testable contract.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// A point `(q, k)` in 2n-dimensional phase space. `q` carries arbitrary
/// units and `k` their inverse, so each product `qⁱ·kᵢ` is a pure number.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: DVector<f64>,
    pub k: DVector<f64>,
}

impl PhasePoint {
    pub fn new(q: DVector<f64>, k: DVector<f64>) -> Result<Self> {
        if q.len() != k.len() || q.is_empty() {
            return Err(Error::Domain(format!(
                "q and k must have equal length >= 1, got {} and {}",
                q.len(),
                k.len()
            )));
        }
        let p = PhasePoint { q, k };
        if !p.is_finite() {
            return Err(Error::Domain("non-finite phase-space coordinates".into()));
        }
        Ok(p)
    }

    /// One degree of freedom.
    pub fn scalar(q: f64, k: f64) -> Self {
        PhasePoint {
            q: DVector::from_element(1, q),
            k: DVector::from_element(1, k),
        }
    }

    /// From a flat `(q¹..qⁿ, k₁..kₙ)` coordinate vector.
    pub fn from_flat(z: &DVector<f64>) -> Self {
        let n = z.len() / 2;
        PhasePoint {
            q: DVector::from_fn(n, |i, _| z[i]),
            k: DVector::from_fn(n, |i, _| z[n + i]),
        }
    }

    /// Flat `(q¹..qⁿ, k₁..kₙ)` coordinate vector.
    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.dof();
        DVector::from_fn(2 * n, |i, _| if i < n { self.q[i] } else { self.k[i - n] })
    }

    /// Number of degrees of freedom `n`.
    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.k.iter()).all(|v| v.is_finite())
    }

    /// Max-abs coordinate, used to scale finite-difference steps.
    pub fn inf_norm(&self) -> f64 {
        self.q
            .iter()
            .chain(self.k.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl fmt::Display for PhasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(q={:?}, k={:?})", self.q.as_slice(), self.k.as_slice())
    }
}

/// Coordinate labels for a 2n-dimensional chart, `q1..qn, k1..kn`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chart {
    labels: Vec<String>,
}

impl Chart {
    pub fn standard(dof: usize) -> Self {
        let mut labels = Vec::with_capacity(2 * dof);
        for i in 1..=dof {
            labels.push(format!("q{i}"));
        }
        for i in 1..=dof {
            labels.push(format!("k{i}"));
        }
        Chart { labels }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dof(&self) -> usize {
        self.labels.len() / 2
    }
}

/// The standard symplectic form `Ω = [[0, I], [−I, 0]]` in `(q, k)` ordering.
#[derive(Debug, Clone)]
pub struct SymplecticForm {
    omega: DMatrix<f64>,
}

impl SymplecticForm {
    pub fn standard(dof: usize) -> Self {
        let m = 2 * dof;
        let mut omega = DMatrix::zeros(m, m);
        for i in 0..dof {
            omega[(i, dof + i)] = 1.0;
            omega[(dof + i, i)] = -1.0;
        }
        SymplecticForm { omega }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }
}

/// Linear (optionally affine) structure of a map, when known. Enables exact
/// covariance pushforward and an exact Jacobian.
#[derive(Debug, Clone)]
pub struct LinearPart {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

type ForwardFn = dyn Fn(&PhasePoint) -> PhasePoint + Send + Sync;
type JacobianFn = dyn Fn(&PhasePoint) -> DMatrix<f64> + Send + Sync;

/// A differentiable map of phase space.
///
/// The Jacobian is the analytic one when provided, otherwise a central
/// finite difference with step `h = FD_STEP_SCALE · max(1, |x|_∞)` and
/// per-entry error `O(h²)`.
#[derive(Clone)]
pub struct PhaseMap {
    dof: usize,
    name: String,
    forward: Arc<ForwardFn>,
    jacobian: Option<Arc<JacobianFn>>,
    inverse: Option<Arc<ForwardFn>>,
    linear: Option<Arc<LinearPart>>,
}

/// Relative finite-difference step for numerical Jacobians.
pub const FD_STEP_SCALE: f64 = 1e-5;

impl fmt::Debug for PhaseMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseMap")
            .field("dof", &self.dof)
            .field("name", &self.name)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("invertible", &self.inverse.is_some())
            .field("linear", &self.linear.is_some())
            .finish()
    }
}

impl PhaseMap {
    /// A black-box map; Jacobians fall back to finite differences.
    pub fn from_fn<F>(dof: usize, name: impl Into<String>, forward: F) -> Self
    where
        F: Fn(&PhasePoint) -> PhasePoint + Send + Sync + 'static,
    {
        PhaseMap {
            dof,
            name: name.into(),
            forward: Arc::new(forward),
            jacobian: None,
            inverse: None,
            linear: None,
        }
    }

    /// A linear map `x ↦ Mx` on flat `(q, k)` coordinates. Jacobian and,
    /// when `M` is invertible, the inverse come for free.
    pub fn linear(name: impl Into<String>, matrix: DMatrix<f64>) -> Self {
        let m = matrix.nrows();
        assert_eq!(m, matrix.ncols(), "linear phase map must be square");
        assert_eq!(m % 2, 0, "phase space dimension must be even");
        Self::affine(name, matrix, DVector::zeros(m))
    }

    /// An affine map `x ↦ Mx + b`.
    pub fn affine(name: impl Into<String>, matrix: DMatrix<f64>, offset: DVector<f64>) -> Self {
        let dof = matrix.nrows() / 2;
        let part = Arc::new(LinearPart {
            matrix: matrix.clone(),
            offset: offset.clone(),
        });
        let fwd = {
            let part = Arc::clone(&part);
            move |x: &PhasePoint| PhasePoint::from_flat(&(&part.matrix * x.to_flat() + &part.offset))
        };
        let jac = {
            let matrix = matrix.clone();
            move |_x: &PhasePoint| matrix.clone()
        };
        let inverse = matrix.clone().try_inverse().map(|inv| {
            let offset = offset.clone();
            Arc::new(move |y: &PhasePoint| PhasePoint::from_flat(&(&inv * (y.to_flat() - &offset))))
                as Arc<ForwardFn>
        });
        PhaseMap {
            dof,
            name: name.into(),
            forward: Arc::new(fwd),
            jacobian: Some(Arc::new(jac)),
            inverse,
            linear: Some(part),
        }
    }

    pub fn identity(dof: usize) -> Self {
        Self::linear("identity", DMatrix::identity(2 * dof, 2 * dof))
    }

    /// Attach an analytic Jacobian.
    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&PhasePoint) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Attach an exact inverse.
    pub fn with_inverse<I>(mut self, inverse: I) -> Self
    where
        I: Fn(&PhasePoint) -> PhasePoint + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn apply(&self, x: &PhasePoint) -> PhasePoint {
        (self.forward)(x)
    }

    pub fn invert(&self, y: &PhasePoint) -> Option<PhasePoint> {
        self.inverse.as_ref().map(|inv| inv(y))
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn linear_part(&self) -> Option<&LinearPart> {
        self.linear.as_deref()
    }

    /// Composite `self ∘ other` (apply `other` first). Jacobians chain, and
    /// linear parts compose when both maps have them.
    pub fn compose(&self, other: &PhaseMap) -> PhaseMap {
        assert_eq!(self.dof, other.dof, "composed maps must share dimension");
        if let (Some(a), Some(b)) = (self.linear.as_deref(), other.linear.as_deref()) {
            // (M_a (M_b x + o_b)) + o_a
            let matrix = &a.matrix * &b.matrix;
            let offset = &a.matrix * &b.offset + &a.offset;
            return PhaseMap::affine(format!("{}∘{}", self.name, other.name), matrix, offset);
        }
        let outer = Arc::clone(&self.forward);
        let inner = Arc::clone(&other.forward);
        let mut composed = PhaseMap::from_fn(self.dof, format!("{}∘{}", self.name, other.name), {
            move |x: &PhasePoint| outer(&inner(x))
        });
        if let (Some(jo), Some(ji)) = (self.jacobian.clone(), other.jacobian.clone()) {
            let inner = Arc::clone(&other.forward);
            composed.jacobian = Some(Arc::new(move |x: &PhasePoint| {
                let mid = inner(x);
                jo(&mid) * ji(x)
            }));
        }
        if let (Some(io), Some(ii)) = (self.inverse.clone(), other.inverse.clone()) {
            composed.inverse = Some(Arc::new(move |y: &PhasePoint| ii(&io(y))));
        }
        composed
    }
}

/// Uniform random points in the centered box `[−half_width, half_width]^{2n}`,
/// drawn from the sampling stream of `seed`. The standard point cloud for
/// canonicity checks.
pub fn sample_box_points(dof: usize, count: usize, half_width: f64, seed: u64) -> Vec<PhasePoint> {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, crate::rng::Stream::Sampling);
    (0..count)
        .map(|_| {
            let q = DVector::from_fn(dof, |_, _| rng.random_range(-half_width..half_width));
            let k = DVector::from_fn(dof, |_, _| rng.random_range(-half_width..half_width));
            PhasePoint { q, k }
        })
        .collect()
}

/// Jacobian of `map` at `x`: analytic when available, else central finite
/// differences.
pub fn jacobian_at(map: &PhaseMap, x: &PhasePoint) -> Result<DMatrix<f64>> {
    if let Some(jac) = &map.jacobian {
        let j = jac(x);
        ensure_finite_matrix(&j, x)?;
        return Ok(j);
    }
    finite_difference_jacobian(map, x)
}

fn finite_difference_jacobian(map: &PhaseMap, x: &PhasePoint) -> Result<DMatrix<f64>> {
    let m = 2 * map.dof();
    let h = FD_STEP_SCALE * x.inf_norm().max(1.0);
    let base = x.to_flat();
    let mut j = DMatrix::zeros(m, m);
    for col in 0..m {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[col] += h;
        minus[col] -= h;
        let fp = map.apply(&PhasePoint::from_flat(&plus)).to_flat();
        let fm = map.apply(&PhasePoint::from_flat(&minus)).to_flat();
        for row in 0..m {
            j[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    ensure_finite_matrix(&j, x)?;
    Ok(j)
}

fn ensure_finite_matrix(j: &DMatrix<f64>, x: &PhasePoint) -> Result<()> {
    if j.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite Jacobian at {x}")));
    }
    Ok(())
}

/// Outcome of a canonical-condition check over a point sample.
#[derive(Debug, Clone, Serialize)]
pub struct CanonicalReport {
    pub pass: bool,
    /// `max_x ‖J(x)ᵀ Ω J(x) − Ω‖_max`.
    pub max_symplectic_residual: f64,
    /// `max_x |det J(x) − 1|`, implied by symplecticity but checked
    /// independently.
    pub max_det_residual: f64,
    pub points_checked: usize,
    pub tol: f64,
}

/// Check `JᵀΩJ = Ω` at each point; pass iff the worst max-abs residual is
/// within `tol`. The `|det J − 1|` residual is reported alongside but does
/// not gate the verdict.
pub fn check_canonical(map: &PhaseMap, points: &[PhasePoint], tol: f64) -> Result<CanonicalReport> {
    if tol <= 0.0 {
        return Err(Error::Domain(format!("tol must be > 0, got {tol}")));
    }
    let omega = SymplecticForm::standard(map.dof());
    let residuals: Vec<Result<(f64, f64)>> = crate::exec::map_collect(points, |x| {
        let j = jacobian_at(map, x)?;
        let lhs = j.transpose() * omega.matrix() * &j;
        let sym = (lhs - omega.matrix()).amax();
        let det = (j.determinant() - 1.0).abs();
        Ok((sym, det))
    });
    let mut max_sym = 0.0f64;
    let mut max_det = 0.0f64;
    for r in residuals {
        let (s, d) = r?;
        max_sym = max_sym.max(s);
        max_det = max_det.max(d);
    }
    Ok(CanonicalReport {
        pass: max_sym <= tol,
        max_symplectic_residual: max_sym,
        max_det_residual: max_det,
        points_checked: points.len(),
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn sample_points(n: usize, dof: usize, seed: u64) -> Vec<PhasePoint> {
        let mut rng = crate::rng::stream(seed, crate::rng::Stream::Sampling);
        (0..n)
            .map(|_| {
                let q = DVector::from_fn(dof, |_, _| rng.random_range(-2.0..2.0));
                let k = DVector::from_fn(dof, |_, _| rng.random_range(-2.0..2.0));
                PhasePoint::new(q, k).unwrap()
            })
            .collect()
    }

    #[test]
    fn phase_point_rejects_mismatched_or_non_finite() {
        assert!(PhasePoint::new(DVector::zeros(2), DVector::zeros(3)).is_err());
        assert!(PhasePoint::new(DVector::zeros(0), DVector::zeros(0)).is_err());
        let bad = DVector::from_vec(vec![f64::NAN]);
        assert!(PhasePoint::new(bad, DVector::zeros(1)).is_err());
    }

    #[test]
    fn symplectic_form_invariants() {
        for dof in 1..4 {
            let omega = SymplecticForm::standard(dof);
            let m = omega.matrix();
            assert_eq!((m + m.transpose()).amax(), 0.0);
            let sq = m * m;
            let neg_id = -DMatrix::<f64>::identity(2 * dof, 2 * dof);
            assert_eq!((sq - neg_id).amax(), 0.0);
        }
    }

    #[test]
    fn identity_map_is_canonical_with_zero_residual() {
        let map = PhaseMap::identity(2);
        let report = check_canonical(&map, &sample_points(10, 2, 1), 1e-12).unwrap();
        assert!(report.pass);
        assert_eq!(report.max_symplectic_residual, 0.0);
        assert_eq!(report.max_det_residual, 0.0);
    }

    #[test]
    fn reciprocal_scaling_is_exactly_canonical() {
        // (q, k) -> (2q, k/2) keeps the area element.
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let map = PhaseMap::linear("scale(2)", m);
        let report = check_canonical(&map, &sample_points(10, 1, 2), 1e-15).unwrap();
        assert!(report.pass);
        assert_eq!(report.max_symplectic_residual, 0.0);
        assert_eq!(report.max_det_residual, 0.0);
    }

    #[test]
    fn uniform_dilation_fails_with_residual_three() {
        // J = 2I gives JᵀΩJ = 4Ω, so the max-abs residual is exactly 3.
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let map = PhaseMap::linear("dilate(2)", m);
        let report = check_canonical(&map, &sample_points(10, 1, 3), 1e-9).unwrap();
        assert!(!report.pass);
        assert_eq!(report.max_symplectic_residual, 3.0);
        assert_eq!(report.max_det_residual, 3.0);
    }

    #[test]
    fn rotations_are_canonical_for_all_angles() {
        let mut rng = crate::rng::stream(4, crate::rng::Stream::Sampling);
        for _ in 0..100 {
            let theta: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let m = DMatrix::from_row_slice(
                2,
                2,
                &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()],
            );
            let map = PhaseMap::linear("rotate", m);
            let report = check_canonical(&map, &sample_points(5, 1, 5), 1e-12).unwrap();
            assert!(report.pass, "rotation by {theta} failed");
        }
    }

    #[test]
    fn jacobian_of_linear_map_is_its_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.25, 2.0]);
        let map = PhaseMap::linear("m", m.clone());
        let j = jacobian_at(&map, &PhasePoint::scalar(0.7, -0.3)).unwrap();
        assert_eq!(j, m);
    }

    #[test]
    fn finite_difference_matches_analytic_on_a_nonlinear_map() {
        // Leapfrog step of the pendulum energy k²/2 − cos q, dt = 0.1.
        let dt = 0.1;
        let fwd = move |x: &PhasePoint| {
            let (q, k) = (x.q[0], x.k[0]);
            let kh = k - 0.5 * dt * q.sin();
            let q1 = q + dt * kh;
            let k1 = kh - 0.5 * dt * q1.sin();
            PhasePoint::scalar(q1, k1)
        };
        let numeric = PhaseMap::from_fn(1, "pendulum-step", fwd);
        let x = PhasePoint::scalar(0.3, 0.1);
        let j_fd = jacobian_at(&numeric, &x).unwrap();

        // Hand differentiation of the same update.
        let (q, k) = (x.q[0], x.k[0]);
        let kh = k - 0.5 * dt * q.sin();
        let q1 = q + dt * kh;
        let dq1_dq = 1.0 - 0.5 * dt * dt * q.cos();
        let dq1_dk = dt;
        let dkh_dq = -0.5 * dt * q.cos();
        let dk1_dq = dkh_dq - 0.5 * dt * q1.cos() * dq1_dq;
        let dk1_dk = 1.0 - 0.5 * dt * dt * q1.cos();
        let j_exact = DMatrix::from_row_slice(2, 2, &[dq1_dq, dq1_dk, dk1_dq, dk1_dk]);

        assert_relative_eq!(j_fd, j_exact, epsilon = 1e-8);
        let _ = (kh, q1);
    }

    #[test]
    fn non_finite_forward_reports_the_point() {
        let map = PhaseMap::from_fn(1, "recip", |x: &PhasePoint| {
            PhasePoint::scalar(1.0 / x.q[0], x.k[0])
        });
        let err = jacobian_at(&map, &PhasePoint::scalar(0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn check_canonical_rejects_nonpositive_tol() {
        let map = PhaseMap::identity(1);
        assert!(check_canonical(&map, &sample_points(1, 1, 6), -1.0).is_err());
    }

    #[test]
    fn composition_of_canonical_maps_stays_canonical() {
        let rot = PhaseMap::linear(
            "rotate",
            DMatrix::from_row_slice(2, 2, &[0.6, 0.8, -0.8, 0.6]),
        );
        let scale = PhaseMap::linear("scale", DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0 / 3.0]));
        let shear = PhaseMap::linear("shear", DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.0, 1.0]));
        let pts = sample_points(50, 1, 7);
        let composite = rot.compose(&scale).compose(&shear);
        let parts: f64 = [&rot, &scale, &shear]
            .iter()
            .map(|m| {
                check_canonical(m, &pts, 1e-9)
                    .unwrap()
                    .max_symplectic_residual
            })
            .sum();
        let whole = check_canonical(&composite, &pts, 1e-9).unwrap();
        assert!(whole.pass);
        assert!(whole.max_symplectic_residual <= parts + 1e-9);
    }

    #[test]
    fn compose_chains_jacobians_for_nonlinear_maps() {
        let twist = PhaseMap::from_fn(1, "twist", |x: &PhasePoint| {
            PhasePoint::scalar(x.q[0], x.k[0] + x.q[0] * x.q[0])
        })
        .with_jacobian(|x: &PhasePoint| {
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0 * x.q[0], 1.0])
        });
        let composite = twist.compose(&twist);
        assert!(composite.has_analytic_jacobian());
        let report = check_canonical(&composite, &sample_points(20, 1, 8), 1e-12).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn chart_labels_follow_coordinate_order() {
        let chart = Chart::standard(2);
        assert_eq!(chart.labels(), &["q1", "q2", "k1", "k2"]);
        assert_eq!(chart.dof(), 2);
    }
}
