//! Simulation and verification of nested infinite occupancy schemes.
//!
//! Balls are thrown into a hierarchy of boxes. The probabilities of the
//! children of every box are an independent copy of a random fragmentation
//! law (stick-breaking, Poisson–Kingman, or the jumps of a multiplicative
//! subordinator). The crate simulates the occupied-box counts level by
//! level, normalizes them with the centering/scaling of the functional
//! limit theorem, and compares replicated statistics with the Gaussian
//! limit processes.

// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::too_many_arguments)]

pub mod error;
pub mod exec;
pub mod fraglaw;
pub mod io;
pub mod limits;
pub mod occupancy;
pub mod quad;
pub mod rng;
pub mod special;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Executor;
pub use fraglaw::{limit_spec_for, FragmentationLaw, LawKind, LawParams, LevyParams, StickParams};
pub use limits::{cov_limit, normalize_curves, BaseProcess, CurveMatrix, LimitSpec};
pub use occupancy::{simulate, CountMode, OccupancyConfig, OccupancyResult};
