// SPDX-License-Identifier: Apache-2.0
//! Exact diagonalization of tunable scar models on periodic spin-j chains.
//!
//! The crate builds the deformed Hamiltonian family H(θ, a), splits the
//! Hilbert space into pattern-count, frozen-pattern, momentum and
//! connectivity sectors, and provides the level-statistics, quench,
//! entanglement, scar-tower and PXP-mapping diagnostics used to study it.

pub mod chain;
pub mod error;
pub mod model;
pub mod operator;
pub mod pxp;
pub mod quench;
pub mod scars;
pub mod sectors;
pub mod spectral;
pub mod state;

pub use chain::{BasisState, Geometry, LocalSpin, SpinChainConfig, C64};
pub use error::{Result, ScarError};
pub use operator::{BasisTag, CodeSet, SparseOperator};
pub use state::StateVector;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
