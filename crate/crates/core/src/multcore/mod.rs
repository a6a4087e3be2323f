//! Multiplicative functions: specification, sieving, convolution, partial
//! sums and the mean-value inequalities evaluated on them.

mod bounds;
mod spec;
mod sums;
mod table;

pub use bounds::{lemma19_evaluate, lemma20_ratio, lemma21_ratio, Lemma19Report, Lemma21Report};
pub use spec::{catalog, Completion, HeckeWeight, MultSpec, PrimeRule};
pub use sums::{harmonic_sum, log_weighted_sum, mean_sum, partial_summation_residual};
pub use table::{convolution_identity, dirichlet_convolve, sieve_values, SieveTable};
