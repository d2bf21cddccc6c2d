//! Exact and simulated tools for coordination of correlated sources over
//! interactive two-node links: pmf algebra, soft-covering codebooks, a
//! protocol simulator, and rate-region evaluators.

pub mod dist;
pub mod error;
pub mod protocol;
pub mod regions;
pub mod rng;
pub mod softcover;

pub use error::{Error, Result};

/// Version string embedded in every output row.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
