//! Concentration-of-measure laboratory for multidimensional diffusions.
//!
//! The crate simulates path-dependent SDEs and rank-based interacting
//! Brownian particles, extracts boundary local times through Skorokhod maps,
//! certifies Lipschitz continuity of polyhedral reflection maps, and checks
//! transportation-cost and tail inequalities empirically with exact optimal
//! transport and Monte Carlo.
//!
//! Module map:
//!
//! * [`path`]: time grids, paths, ensembles and the four path-space metrics.
//! * [`sde`]: Euler–Maruyama, the rank-based particle model, synchronous coupling.
//! * [`skorokhod`]: one-dimensional and polyhedral Skorokhod maps, local times.
//! * [`geometry`]: reflection matrices, spectral radius, Lipschitz certificates.
//! * [`transport`]: exact empirical Wasserstein distances, entropy, Orlicz norms,
//!   transportation-cost constants.
//! * [`concentration`]: tail reports, concentration bounds, Lipschitz calculus and
//!   the maximal-local-time tail experiment.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod concentration;
pub mod error;
pub mod geometry;
pub mod io;
pub mod path;
pub mod rng;
pub mod sde;
pub mod skorokhod;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use path::{make_grid, Ensemble, MultiPath, Path, PathMetric, TimeGrid};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
