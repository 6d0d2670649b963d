//! Joint movable-antenna positioning, uplink beamforming and MEC offloading
//! under a multi-antenna jammer.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: field-response vectors, uplink/jammer channels, SINR.
//! - [`scenario`]: problem instances, Monte-Carlo generation, delay model and
//!   feasibility checks.
//! - [`al`]: the split problem (all auxiliaries), its couplings, the
//!   augmented-Lagrangian objective and the dual/penalty step.
//! - [`blocks`]: closed-form sub-block minimisers used by the inner sweep.
//! - [`solver`]: the outer penalty-dual loop and solution extraction.
//! - [`experiments`]: convergence traces and parameter sweeps as CSV/JSON.
//!
//! [`oracle`] and [`invariants`] hold independent reference computations and
//! the randomized invariant suite used by the tests and the `majam` binary.

pub mod al;
pub mod blocks;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod invariants;
pub mod linalg;
pub mod oracle;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Planar antenna coordinate in meters.
pub type Position = nalgebra::Vector2<f64>;
