//! Forward stochastic reachability for parameter-varying and Markov-switched
//! affine obstacle dynamics, probabilistic occupancy functions, and polytopic
//! approximations of the resulting keep-out sets.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] holds convex-set primitives (boxes, balls, polytopes,
//!   ellipsoids), their support functions, hulls and volumes.
//! * [`dynamics`] defines the obstacle models, the concatenated transition
//!   matrices and the enumeration of discrete mode sequences.
//! * [`fsr`] propagates Gaussian disturbances to the state at a time of
//!   interest and integrates the resulting densities over shapes.
//! * [`occupancy`] evaluates the probability that a point is covered by the
//!   moving obstacle.
//! * [`occupyset`] builds inner/outer polytopes of the keep-out set.
//! * [`oracle`] is the Monte-Carlo ground truth used for validation.

pub mod dynamics;
pub mod error;
pub mod fsr;
pub mod geometry;
pub mod numeric;
pub mod occupancy;
pub mod occupyset;
pub mod oracle;

pub use error::{Error, Result};

/// Library version embedded into result records.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
