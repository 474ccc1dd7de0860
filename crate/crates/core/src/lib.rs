//! Numerics for coalescing Brownian motions on the line.
//!
//! * [`kernels`]: Brownian transition kernels, Vandermonde products, the
//!   Karlin–McGregor determinant and its product bounds (log domain).
//! * [`hciz`]: Haar-unitary sampling and Monte Carlo for the unitary group
//!   integral that links the determinant to the Vandermonde bounds.
//! * [`simulator`]: ensembles of coalescing particles with Brownian-bridge
//!   corrected meeting detection.
//! * [`estimators`]: occupancy, n-point density and factorial-moment
//!   estimates plus the product-bound audit.
//! * [`analysis`]: decay-exponent fits and Vandermonde-profile checks.

// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod hciz;
pub mod kernels;
pub mod logsigned;
pub mod par;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use kernels::{OrderedPoints, TimeValue};
pub use logsigned::{LogSigned, Sign};
