//! Function estimation of an unknown phase response with single-photon and
//! two-photon N00N probes.
//!
//! The pipeline runs from the measurement model (outcome probabilities,
//! Fisher information, Cramér–Rao bounds) through simulated acquisition and
//! grid-based Bayesian estimation of fiducial points, to interpolation of
//! those points and the δ² error of the reconstructed function. The
//! [`campaign`] module sweeps the number of fiducial points for each probe
//! and resource budget.
//!
//! ```
//! use qfe::measurement::{effective_phase_fisher, PhasePoint, ProbeModel};
//!
//! let f = effective_phase_fisher(&ProbeModel::noon2(), PhasePoint::new(std::f64::consts::PI / 8.0, 1.0).unwrap()).unwrap();
//! assert!((f - 4.0).abs() < 1e-9);
//! ```

pub mod bayes;
pub mod campaign;
pub mod config;
pub mod error;
pub mod interp;
pub mod io;
pub mod measurement;
pub mod sim;

pub use error::{Error, Result};
pub use interp::{InterpolationMethod, SampledFunction};
pub use measurement::{PhasePoint, ProbeKind, ProbeModel, ResourceConvention};
