//! Revival dynamics, spectral diagnostics and entanglement bounds for local lattice Hamiltonians.

// NaN must fail validation, so `!(x > 0.0)` is preferred over `x <= 0.0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod config;
pub mod entanglement;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod revival;
pub mod spectral;
pub mod synthetic;

pub use check::{BoundCheck, Verdict};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use model::{Hamiltonian, Lattice, LocalTerm, ProductState, StateVector};
pub use spectral::{EigenDecomposition, EnergyDistribution, SurvivalSeries};
