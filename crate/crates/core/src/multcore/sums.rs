use crate::error::{domain, Result};
use crate::numeric::{Approx, DoubleDouble, KahanSum, Scalar};

use super::table::SieveTable;

fn upper_index<T: Scalar>(t: &SieveTable<T>, x: f64, what: &str) -> Result<u64> {
    if !(x >= 0.0) {
        return domain(format!("{what}: x must be nonnegative, got {x}"));
    }
    if x.floor() > t.limit() as f64 {
        return domain(format!("{what}: x = {x} exceeds table limit {}", t.limit()));
    }
    Ok(x.floor() as u64)
}

/// `M(x) = Σ_{n ≤ x} g(n)`, exact in the table's mode.
pub fn mean_sum<T: Scalar>(t: &SieveTable<T>, x: f64) -> Result<T> {
    let top = upper_index(t, x, "mean_sum")?;
    let mut acc = T::zero();
    for v in &t.values()[..top as usize] {
        acc = acc.add_ref(v);
    }
    Ok(acc)
}

/// `N(x) = Σ_{n ≤ x} g(n) log n` in double precision.
pub fn log_weighted_sum<T: Scalar>(t: &SieveTable<T>, x: f64) -> Result<T::Approx> {
    let top = upper_index(t, x, "log_weighted_sum")?;
    let mut acc = KahanSum::new();
    for (n, v) in t.iter().take(top as usize).skip(1) {
        acc.add(v.approx() * (n as f64).ln());
    }
    Ok(acc.value())
}

/// `Σ_{n ≤ x} g(n)/n`.
pub fn harmonic_sum<T: Scalar>(t: &SieveTable<T>, x: f64) -> Result<T::Approx> {
    let top = upper_index(t, x, "harmonic_sum")?;
    let mut acc = KahanSum::new();
    for (n, v) in t.iter().take(top as usize) {
        acc.add(v.approx() / n as f64);
    }
    Ok(acc.value())
}

/// Residual of the partial-summation identity
/// `M(u) − g(1) = N(u)/log u + ∫₂^u N(w) / (w log²w) dw`.
///
/// `N` is a step function, so the integral is summed piecewise from the
/// antiderivative `−1/log w`. Every logarithm is evaluated once in double
/// precision and then reused, and all accumulation is in double-double, so
/// the residual reflects the identity rather than cancellation error.
pub fn partial_summation_residual<T: Scalar>(t: &SieveTable<T>, u: f64) -> Result<T::Approx> {
    if !(u >= 2.0) {
        return domain(format!("partial summation needs u ≥ 2, got {u}"));
    }
    let top = upper_index(t, u, "partial_summation_residual")?;
    let log_u = u.ln();

    let (g1_re, g1_im) = t.get(1).approx().parts();
    let mut m = [DoubleDouble::from_f64(g1_re), DoubleDouble::from_f64(g1_im)];
    let mut nsum = [DoubleDouble::ZERO; 2];
    let mut integral = [DoubleDouble::ZERO; 2];

    for n in 2..=top {
        let (re, im) = t.get(n).approx().parts();
        let log_n = (n as f64).ln();
        let log_end = if n < top { ((n + 1) as f64).ln() } else { log_u };
        let piece = DoubleDouble::from_f64(log_n)
            .recip()
            .sub(DoubleDouble::from_f64(log_end).recip());
        for (c, v) in [re, im].into_iter().enumerate() {
            m[c] = m[c].add_f64(v);
            nsum[c] = nsum[c].add(DoubleDouble::from_f64(v).mul_f64(log_n));
            integral[c] = integral[c].add(nsum[c].mul(piece));
        }
    }
    let inv_log_u = DoubleDouble::from_f64(log_u).recip();
    let mut out = [0.0; 2];
    for c in 0..2 {
        let g1 = DoubleDouble::from_f64(if c == 0 { g1_re } else { g1_im });
        out[c] = m[c]
            .sub(g1)
            .sub(nsum[c].mul(inv_log_u))
            .sub(integral[c])
            .to_f64();
    }
    Ok(T::Approx::from_parts(out[0], out[1]))
}
