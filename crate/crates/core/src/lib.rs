//! Phase-space simulation and information-entropy diagnostics.
//!
//! The crate models the state of a continuous system as a normalized density
//! over a 2n-dimensional phase space of position-like coordinates `q` and
//! conjugate coordinates `k`, and provides the machinery to test the
//! structural facts that make such densities physically meaningful:
//!
//! - [`phase_space`]: points, differentiable maps, and the symplectic
//!   (canonical) condition `JᵀΩJ = Ω` on map Jacobians.
//! - [`distributions`]: analytic Gaussians, Gaussian mixtures, particle
//!   ensembles, and grid densities, with moments, sampling, and pushforward
//!   under phase-space maps.
//! - [`entropy`]: differential entropy `−∫ ρ ln ρ`, computed exactly for
//!   analytic forms and estimated by k-nearest-neighbor or grid plug-in
//!   methods otherwise.
//! - [`dynamics`]: Hamiltonian flows, exact for quadratic energies and via
//!   symplectic integrators otherwise, with trajectory diagnostics.
//! - [`uncertainty`]: the spread-entropy bound `σ_q σ_k ≥ e^{I₀}/(2πe)`
//!   saturated by uncorrelated Gaussian packets.
//! - [`irreducible`]: the complex-number algebra of internal-variable
//!   transforms of systems whose parts are inaccessible.
//! - [`scenarios`]: named systems, maps, and initial states plus the JSON
//!   scenario schema consumed by the CLI.
//!
//! All randomness flows from a single `u64` seed through named substreams
//! (see [`rng`]), and all data-parallel reductions use fixed-shape chunking
//! (see [`exec`]), so results are bitwise reproducible regardless of thread
//! count. Build with `--no-default-features` for a fully sequential core.

pub mod distributions;
pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod exec;
pub mod irreducible;
pub mod numfmt;
pub mod phase_space;
pub mod rng;
pub mod scenarios;
pub mod uncertainty;

pub use error::{Error, Result};
