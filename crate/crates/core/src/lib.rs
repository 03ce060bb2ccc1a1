pub mod bsde;
pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod functional;
pub mod hamiltonian;
pub mod kolmogorov;
pub mod report;
pub mod rng;
pub mod semigroup;
pub mod spectral_ou;

pub use error::{Error, Result};
