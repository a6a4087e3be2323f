//! Mean values of multiplicative functions: linear sieves, Dirichlet
//! characters, Halász-type distance functionals, exact Hecke eigenvalues, and
//! the experiments built from them.

pub mod characters;
pub mod constructions;
pub mod error;
pub mod experiments;
pub mod halasz;
pub mod heckeforms;
pub mod multcore;
pub mod numeric;
pub mod primes;

pub use error::{Error, Result};
