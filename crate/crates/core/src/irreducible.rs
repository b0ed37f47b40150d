//! Internal transforms of irreducible systems.
//!
//! An irreducible system's internal degree of freedom is a pair of random
//! variables `(U, V)` with equal spreads and, in the reference
//! configuration, no correlation. The transformations that change the state
//! as a whole are
//!
//! ```text
//! Û = aU + bV
//! V̂ = −bU + aV
//! ```
//!
//! and compose exactly like the complex numbers `c = a + ib`: the norm
//! `|c|` scales the spread (strength of the internal process) and the
//! phase `arg c` is `arccos` of the Pearson coefficient between `U` and
//! `Û`. That last identification is what [`monte_carlo_pearson`] verifies
//! numerically; it depends only on second moments, so uniform and Gaussian
//! internal noise give the same answer.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{self, Stream};

/// Spread and correlation of the internal pair `(U, V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InternalState {
    sigma: f64,
    corr_uv: f64,
}

impl InternalState {
    pub fn new(sigma: f64, corr_uv: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        if !corr_uv.is_finite() || corr_uv.abs() >= 1.0 {
            return Err(Error::Domain(format!(
                "corr_uv must lie in (-1, 1), got {corr_uv}"
            )));
        }
        Ok(InternalState { sigma, corr_uv })
    }

    /// The reference configuration: equal spreads, no correlation.
    pub fn uncorrelated(sigma: f64) -> Result<Self> {
        Self::new(sigma, 0.0)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn corr_uv(&self) -> f64 {
        self.corr_uv
    }
}

/// An internal transform, stored as the complex number that identifies it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InternalTransform {
    c: Complex64,
}

impl InternalTransform {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidTransform("coefficients must be finite".into()));
        }
        if a == 0.0 && b == 0.0 {
            return Err(Error::InvalidTransform(
                "a and b must not both be zero".into(),
            ));
        }
        Ok(InternalTransform {
            c: Complex64::new(a, b),
        })
    }

    pub fn a(&self) -> f64 {
        self.c.re
    }

    pub fn b(&self) -> f64 {
        self.c.im
    }

    pub fn complex(&self) -> Complex64 {
        self.c
    }

    /// `|c|`, the strength of the internal process.
    pub fn norm(&self) -> f64 {
        self.c.norm()
    }

    /// `arg c`, in `(−π, π]`.
    pub fn phase(&self) -> f64 {
        self.c.arg()
    }
}

/// Second moments of the transformed pair, with the correlation the
/// transform predicts between the original `U` and the new `Û`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AppliedTransform {
    pub sigma: f64,
    pub predicted_corr: f64,
}

/// Apply a transform to an uncorrelated equal-spread state.
///
/// For uncorrelated `(U, V)` with common spread `σ`:
/// `Var(Û) = Var(V̂) = (a² + b²)σ²`, so the new spread is `|c|σ`; `Û` and
/// `V̂` stay uncorrelated, so the family is closed; and
/// `corr(U, Û) = a/|c| = cos(arg c)`.
pub fn apply(t: &InternalTransform, s: &InternalState) -> Result<AppliedTransform> {
    if s.corr_uv() != 0.0 {
        return Err(Error::UnsupportedConfiguration(format!(
            "internal transforms are defined on the uncorrelated reference state; got corr {}",
            s.corr_uv()
        )));
    }
    Ok(AppliedTransform {
        sigma: t.norm() * s.sigma(),
        predicted_corr: t.a() / t.norm(),
    })
}

/// Composite transform, `c = c₁ · c₂`: applying it equals applying `t2`
/// then `t1`.
pub fn compose(t1: &InternalTransform, t2: &InternalTransform) -> InternalTransform {
    InternalTransform {
        c: t1.complex() * t2.complex(),
    }
}

/// The invariant integral proxy `∫ρ du dv ∝ σ_U σ_V = σ²`. A transform
/// scales it by `|c|²`; pure rotations (`|c| = 1`) leave it fixed.
pub fn invariant_integral(s: &InternalState) -> f64 {
    s.sigma() * s.sigma()
}

/// Distribution of the internal noise pair used for Monte Carlo checks.
/// The laws under test depend only on second moments; uniform is the
/// default reading of a fully unknown internal value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InternalNoise {
    Uniform,
    Gaussian,
}

/// A sampled Pearson coefficient against its prediction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PearsonCheck {
    pub pearson: f64,
    pub predicted: f64,
    pub error: f64,
}

/// Estimate `corr(U, Û)` by simulation: draw `samples` uncorrelated
/// unit-variance pairs, transform them, and correlate. Deterministic for a
/// fixed seed and independent of thread count.
pub fn monte_carlo_pearson(
    t: &InternalTransform,
    noise: InternalNoise,
    samples: usize,
    seed: u64,
) -> Result<PearsonCheck> {
    if samples < 2 {
        return Err(Error::Domain("need at least 2 samples".into()));
    }
    let (a, b) = (t.a(), t.b());
    let chunks = samples.div_ceil(exec::CHUNK);
    // Per-chunk raw sums [Σu, Σû, Σu², Σû², Σuû].
    let partials = exec::map_indices(chunks, |chunk| {
        let count = exec::CHUNK.min(samples - chunk * exec::CHUNK);
        let mut rng = rng::substream(seed, Stream::MonteCarlo, chunk as u64);
        let mut s = [0.0f64; 5];
        // Uniform on ±√3 has unit variance.
        let half_width = 3.0f64.sqrt();
        for _ in 0..count {
            let (u, v) = match noise {
                InternalNoise::Uniform => (
                    rng.random_range(-half_width..half_width),
                    rng.random_range(-half_width..half_width),
                ),
                InternalNoise::Gaussian => {
                    (rng.sample(StandardNormal), rng.sample(StandardNormal))
                }
            };
            let hat = a * u + b * v;
            s[0] += u;
            s[1] += hat;
            s[2] += u * u;
            s[3] += hat * hat;
            s[4] += u * hat;
        }
        s
    });
    let mut total = [0.0f64; 5];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let n = samples as f64;
    let (mu, mh) = (total[0] / n, total[1] / n);
    let var_u = total[2] / n - mu * mu;
    let var_h = total[3] / n - mh * mh;
    let cov = total[4] / n - mu * mh;
    let pearson = cov / (var_u * var_h).sqrt();
    let predicted = t.a() / t.norm();
    Ok(PearsonCheck {
        pearson,
        predicted,
        error: (pearson - predicted).abs(),
    })
}
