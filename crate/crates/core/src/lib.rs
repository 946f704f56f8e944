//! Collision measures of independent simple random walks and the
//! directed-polymer machinery used to identify their scaling limit.
//!
//! The crate is organised bottom-up:
//!
//! * [`walks`] samples and enumerates simple symmetric walks on ℤ.
//! * [`collisions`] builds the collision measures `Π_N` / `Π′_N` and
//!   integrates them against test functions.
//! * [`environment`] provides the counter-based Rademacher field `ω` and
//!   lattice amplitudes `A_N`.
//! * [`kernels`] holds random-walk and heat kernels, their chain products
//!   and the closed-form simplex norms.
//! * [`ustat`] evaluates the weighted U-statistics `S^N_n(g)` exactly.
//! * [`polymer`] computes partition functions, their chaos expansion and
//!   the collision weights `X_{N,n}`.
//! * [`chaos`] simulates the Wiener-chaos limit `𝒵_a` on a white-noise grid.
//! * [`harness`] contains the Monte-Carlo estimators, the two-sample KS
//!   test and the end-to-end experiments.

pub mod chaos;
pub mod collisions;
pub mod environment;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod polymer;
pub mod stream;
pub mod ustat;
pub mod walks;

pub use error::{Error, Result};

/// Crate version recorded in every output manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
