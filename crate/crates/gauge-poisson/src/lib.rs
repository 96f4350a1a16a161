//! Gauge Poisson brackets on fibered phase spaces `T*Q x N`.
//!
//! The crate builds the bracket structure induced by a gauge 1-form
//! `A = A_i(q,y) dq^i` on the product of a cotangent bundle and a Poisson
//! fiber, integrates the resulting Hamiltonian dynamics (Wong's equations
//! in the Lie-Poisson case), reconstructs invariant gauge forms by
//! averaging momentum maps over compact group actions, and verifies the
//! structural invariants numerically.
//!
//! Entry points, roughly bottom-up:
//!
//! - [`numerics`]: quadrature, finite differences, rank, matrix exponential
//!   action, RK4.
//! - [`lie_poisson`]: structure constants, the fiber Lie-Poisson tensor,
//!   coadjoint operators and flows, Casimir testing.
//! - [`gauge`]: gauge forms, field strength, horizontal lifts, and the
//!   assembled bracket matrix.
//! - [`dynamics`]: Hamiltonian vector fields, Wong's equations, trajectory
//!   integration and conservation monitoring.
//! - [`averaging`]: fiberwise compact-group actions and the averaging
//!   constructors for invariant gauge forms, plus invariance and
//!   first-integral checks.
//! - [`bundle`]: local-chart connection pairs on Lie-Poisson bundles, the
//!   compatibility checks and the averaged-connection construction.
//! - [`expr`]: the small expression language used by scenario configs.
//! - [`scenario`] and [`cli`]: config-driven orchestration behind the
//!   `gauge-poisson` binary.

pub mod averaging;
pub mod bundle;
pub mod cli;
pub mod dynamics;
pub mod expr;
pub mod field;
pub mod gauge;
pub mod lie_poisson;
pub mod numerics;
pub mod phase;
pub mod report;
pub mod rng;
pub mod scenario;

pub use field::{DiffScheme, Field};
pub use phase::{Phase, PhaseFunction};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("evaluation failure: non-finite value at {at}")]
    NonFinite { at: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("integration failure at t = {t}: {reason}")]
    Integration { t: f64, reason: String },
    #[error("trajectory left the domain at t = {t} (last valid state kept)")]
    DomainExit { t: f64 },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
