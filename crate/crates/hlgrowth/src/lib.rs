//! Simulator and statistical verification toolkit for the regularized
//! Hastings–Levitov random growth model HL(α, σ).
//!
//! Clusters grow by composing conformal slit maps of the exterior unit disk:
//! particle `k` is a radial slit of logarithmic capacity `c_k` attached at a
//! uniformly random angle `θ_k`, and the capacity of each new particle is set
//! by the derivative of the current cluster map at a regularization point
//! (`|Φ′_n(e^{σ+iθ})|^{−α}`, or one of two deterministic limits of that rule).
//!
//! The crate is organized around the pipeline
//!
//! * [`conformal`] — the single-slit building block `f_c`, its derivative and
//!   boundary correspondence `γ_c`, and evaluation of iterated compositions;
//! * [`growth`] — cluster construction under the Sigma / Infinity / Starred
//!   regularization modes, with bit-reproducible seeded sampling;
//! * [`flow`] — the induced harmonic-measure boundary flow, tracer
//!   coalescence, and branch/gap statistics;
//! * [`limits`] — closed-form limit objects used as test oracles (disk limit
//!   map, the `16/(3π)` diffusivity normalization, the Brownian time change,
//!   and a Kingman-coalescent sampler);
//! * [`analysis`] — seeded statistical experiments comparing simulation
//!   against the oracles, emitting machine-checkable reports;
//! * [`record`] / [`render`] — run persistence with bit-exact replay, and
//!   deterministic SVG figures.
//!
//! All randomness flows through explicitly seeded ChaCha8 generators; growing
//! the same parameters from the same seed reproduces the event list
//! bit-for-bit, which the replay tooling checks.

pub mod analysis;
pub mod conformal;
pub mod error;
pub mod flow;
pub mod growth;
pub mod limits;
pub mod record;
pub mod render;
pub mod rng;

pub use error::Error;

/// Crate version string recorded in run records and experiment reports.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
