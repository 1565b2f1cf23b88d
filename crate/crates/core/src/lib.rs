//! One-bit scheduling advice for single-server and power-of-d queueing systems.
//!
//! The crate has three layers:
//!
//! * [`analytic`]: closed-form and quadrature-backed mean sojourn times for
//!   threshold policies with exact or predicted advice, plus optimal
//!   threshold search.
//! * [`sim`] and [`cluster`]: discrete-event simulators for a single M/G/1
//!   queue and for `n` queues with power-of-`d` dispatch.
//! * [`meanfield`]: the large-`n` ODE limit of the labeled power-of-`d`
//!   system, integrated to its fixed point.
//!
//! Numerical code is generic over [`Scalar`] (`f32`/`f64`); the simulators
//! run on `f64`. The aliases below name the `f64` instantiations.

pub mod analytic;
pub mod bessel;
pub mod cluster;
pub mod dist;
mod error;
pub mod experiments;
pub mod meanfield;
pub mod quad;
pub mod reference;
mod rng;
mod scalar;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub(crate) use error::domain;
pub use rng::SimRng;
pub use scalar::Scalar;

/// `f64` service distribution.
pub type ServiceDistribution = dist::ServiceDistribution<f64>;
/// `f64` threshold policy configuration.
pub type PolicyConfig = analytic::PolicyConfig<f64>;
/// `f64` per-class sojourn summary.
pub type SojournBreakdown = analytic::SojournBreakdown<f64>;
/// `f64` mean-field parameters.
pub type MfParams = meanfield::MfParams<f64>;
/// `f64` mean-field occupancy state.
pub type MfState = meanfield::MfState<f64>;

pub use dist::{Label, PredictionModel};
