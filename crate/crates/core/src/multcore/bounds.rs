//! Evaluators for the unconditional mean-value inequalities for nonnegative
//! multiplicative functions, and ratio monitors for the two-sided bounds.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::numeric::{KahanSum, Scalar};
use crate::primes::{prime_power_sup, PrimeSet};

use super::sums::harmonic_sum;
use super::table::SieveTable;

#[derive(Clone, Debug, Serialize)]
pub struct Lemma19Report {
    pub x: f64,
    /// `Σ_{2 ≤ n ≤ x} g(n)`
    pub lhs: f64,
    /// `(x/log x + 10x/log²x) · Δ · Σ_{n ≤ x} g(n)/n`
    pub rhs: f64,
    /// `sup_{1 ≤ y ≤ x} y⁻¹ Σ_{q ≤ y} g(q) log q`
    pub delta: f64,
    pub harmonic: f64,
    pub holds: bool,
}

fn check_range<T: Scalar>(t: &SieveTable<T>, ps: &PrimeSet, x: f64) -> Result<()> {
    if x.floor() > t.limit() as f64 {
        return domain(format!("x = {x} exceeds table limit {}", t.limit()));
    }
    if x.floor() > ps.limit() as f64 {
        return domain(format!("x = {x} exceeds prime limit {}", ps.limit()));
    }
    Ok(())
}

fn nonnegative<T: Scalar<Approx = f64>>(t: &SieveTable<T>, x: f64) -> Result<()> {
    for (n, v) in t.iter().take(x.floor() as usize) {
        if v.approx() < 0.0 {
            return domain(format!("table '{}' is negative at n = {n}", t.spec_id()));
        }
    }
    Ok(())
}

pub fn lemma19_evaluate<T: Scalar<Approx = f64>>(
    t: &SieveTable<T>,
    ps: &PrimeSet,
    x: f64,
) -> Result<Lemma19Report> {
    if !(x >= 2.0) {
        return domain(format!("the inequality is stated for x ≥ 2, got {x}"));
    }
    check_range(t, ps, x)?;
    nonnegative(t, x)?;
    let top = x.floor() as usize;
    let lhs = t.values()[1..top]
        .iter()
        .map(|v| v.approx())
        .collect::<KahanSum<f64>>()
        .value();
    let delta = prime_power_sup(ps, x, |pp| t.get(pp.q).approx());
    let harmonic = harmonic_sum(t, x)?;
    let lx = x.ln();
    let rhs = (x / lx + 10.0 * x / (lx * lx)) * delta * harmonic;
    Ok(Lemma19Report {
        x,
        lhs,
        rhs,
        delta,
        harmonic,
        holds: lhs <= rhs,
    })
}

/// `(Σ_{n ≤ x} g(n)/n) / Π_{p ≤ x} (1 + g(p)/p)`, bounded above and below for
/// nonnegative `g` with bounded prime values and convergent higher prime-power series.
pub fn lemma20_ratio<T: Scalar<Approx = f64>>(t: &SieveTable<T>, ps: &PrimeSet, x: f64) -> Result<f64> {
    check_range(t, ps, x)?;
    nonnegative(t, x)?;
    let log_product = ps
        .primes_up_to(x)
        .iter()
        .map(|&p| (t.get(p).approx() / p as f64).ln_1p())
        .collect::<KahanSum<f64>>()
        .value();
    Ok(harmonic_sum(t, x)? / log_product.exp())
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma21Report {
    pub x: f64,
    /// `M(x) / (x · exp(−Σ_{p ≤ x} (1 − g(p))/p))`
    pub ratio: f64,
    /// `x⁻¹ Σ_{p ≤ x} g(p) log p`, the empirical constant of the hypothesis.
    pub empirical_c: f64,
    pub exponent: f64,
}

pub fn lemma21_ratio<T: Scalar<Approx = f64>>(
    t: &SieveTable<T>,
    ps: &PrimeSet,
    x: f64,
) -> Result<Lemma21Report> {
    if !(x >= 1.0) {
        return domain(format!("x must be at least 1, got {x}"));
    }
    check_range(t, ps, x)?;
    nonnegative(t, x)?;
    let primes = ps.primes_up_to(x);
    let exponent = -primes
        .iter()
        .map(|&p| (1.0 - t.get(p).approx()) / p as f64)
        .collect::<KahanSum<f64>>()
        .value();
    let empirical_c = primes
        .iter()
        .map(|&p| t.get(p).approx() * (p as f64).ln())
        .collect::<KahanSum<f64>>()
        .value()
        / x;
    let m = t.values()[..x.floor() as usize]
        .iter()
        .map(|v| v.approx())
        .collect::<KahanSum<f64>>()
        .value();
    Ok(Lemma21Report {
        x,
        ratio: m / (x * exponent.exp()),
        empirical_c,
        exponent,
    })
}
