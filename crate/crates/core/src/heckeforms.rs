//! Hecke eigenvalue tables: exact Ramanujan τ, extension from prime values by
//! the Hecke recurrence, normalization, sign and nonvanishing indicators, and
//! ingestion of external coefficient files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{domain, io_err, Error, Result};
use crate::multcore::{sieve_values, Completion, HeckeWeight, MultSpec, PrimeRule, SieveTable};
use crate::numeric::{parse_rational, rational_to_f64, KahanSum, Scalar};
use crate::primes::{sieve_primes, PrimeSet};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoeffSource {
    Eta24,
    HeckeExtend,
    ExternalFile { path: PathBuf, sha256: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum CoeffData {
    Integer(SieveTable<BigInt>),
    Rational(SieveTable<BigRational>),
}

/// Exact coefficients `a_1..a_limit` of a Hecke eigenform, `a_1 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTable {
    pub weight: HeckeWeight,
    pub source: CoeffSource,
    pub data: CoeffData,
}

impl CoeffTable {
    pub fn limit(&self) -> u64 {
        match &self.data {
            CoeffData::Integer(t) => t.limit(),
            CoeffData::Rational(t) => t.limit(),
        }
    }

    pub fn integers(&self) -> Option<&SieveTable<BigInt>> {
        match &self.data {
            CoeffData::Integer(t) => Some(t),
            CoeffData::Rational(_) => None,
        }
    }

    /// `sign(a_n) ∈ {−1, 0, 1}`.
    pub fn sign_at(&self, n: u64) -> i64 {
        match &self.data {
            CoeffData::Integer(t) => sign_of(t.get(n)),
            CoeffData::Rational(t) => sign_of(t.get(n).numer()),
        }
    }

    pub fn value_f64(&self, n: u64) -> f64 {
        match &self.data {
            CoeffData::Integer(t) => t.get(n).to_f64().unwrap_or(f64::NAN),
            CoeffData::Rational(t) => rational_to_f64(t.get(n)),
        }
    }

    /// All `n ≤ limit` with `a_n = 0`.
    pub fn vanishing_indices(&self) -> Vec<u64> {
        (1..=self.limit()).filter(|&n| self.sign_at(n) == 0).collect()
    }
}

fn sign_of(v: &BigInt) -> i64 {
    if v.is_zero() {
        0
    } else if v.is_negative() {
        -1
    } else {
        1
    }
}

fn pentagonal_terms(limit: usize) -> Vec<(usize, i64)> {
    let mut out = Vec::new();
    for k in 1usize.. {
        let sign = if k % 2 == 1 { -1 } else { 1 };
        let a = k * (3 * k - 1) / 2;
        if a > limit {
            break;
        }
        out.push((a, sign));
        let b = k * (3 * k + 1) / 2;
        if b <= limit {
            out.push((b, sign));
        }
    }
    out
}

/// Coefficients `f_0..f_{len−1}` of `F = E^24`, `E = Π(1 − x^j)`, from
/// `F′E = 24 E′F`, i.e. `n f_n = Σ_{k ≥ 1} e_k (25k − n) f_{n−k}` over the
/// pentagonal exponents `k`. Returns `None` once a coefficient leaves the
/// 128-bit fast path.
///
/// Each `f` is split as `hi·2⁶⁴ + lo`. With `|f| < 2¹²⁰`, `|25k − n| < 2³⁵` and
/// fewer than `2¹⁷` pentagonal terms, neither partial accumulator can overflow.
fn eta24_series_i128(len: usize) -> Option<Vec<i128>> {
    const BOUND: i128 = 1 << 120;
    if len >= 1 << 30 {
        return None;
    }
    let pent = pentagonal_terms(len);
    let mut f: Vec<i128> = Vec::with_capacity(len);
    if len > 0 {
        f.push(1);
    }
    for n in 1..len {
        let mut acc_hi: i128 = 0;
        let mut acc_lo: i128 = 0;
        for &(k, sign) in &pent {
            if k > n {
                break;
            }
            let m = (25 * k as i64 - n as i64) * sign;
            let v = f[n - k];
            acc_hi += ((v >> 64) as i64 as i128) * m as i128;
            acc_lo += ((v as u64) as i128) * m as i128;
        }
        // f_n = (acc_hi·2⁶⁴ + acc_lo) / n, exactly
        let nn = n as i128;
        let q1 = acc_hi.div_euclid(nn);
        let r1 = acc_hi.rem_euclid(nn);
        let low = (r1 << 64) + acc_lo;
        if low % nn != 0 {
            return None;
        }
        let v = q1.checked_mul(1i128 << 64)?.checked_add(low / nn)?;
        if v.abs() >= BOUND {
            return None;
        }
        f.push(v);
    }
    Some(f)
}

fn eta24_series_big(len: usize) -> Vec<BigInt> {
    let pent = pentagonal_terms(len);
    let mut f: Vec<BigInt> = Vec::with_capacity(len);
    if len > 0 {
        f.push(BigInt::from(1));
    }
    for n in 1..len {
        let mut acc = BigInt::from(0);
        for &(k, sign) in &pent {
            if k > n {
                break;
            }
            acc += &f[n - k] * ((25 * k as i64 - n as i64) * sign);
        }
        let (q, r) = (&acc / n, &acc % n);
        assert!(r.is_zero(), "inexact division in eta-product recurrence at n = {n}");
        f.push(q);
    }
    f
}

/// Ramanujan τ(1..=limit): coefficients of `x Π_{j ≥ 1} (1 − x^j)^{24}`.
pub fn eta24_expand(limit: u64) -> Result<CoeffTable> {
    if limit < 1 {
        return domain("eta24_expand needs limit ≥ 1");
    }
    let len = usize::try_from(limit)
        .map_err(|_| Error::Overflow(format!("limit {limit} exceeds the address space")))?;
    let values: Vec<BigInt> = match eta24_series_i128(len) {
        Some(f) => f.into_par_iter().map(BigInt::from).collect(),
        None => eta24_series_big(len),
    };
    Ok(CoeffTable {
        weight: HeckeWeight::Integral(12),
        source: CoeffSource::Eta24,
        data: CoeffData::Integer(SieveTable::from_values("tau", values)?),
    })
}

/// Extends prime values to `1..=limit` by the Hecke recurrence and multiplicativity.
pub fn hecke_extend(
    prime_values: &BTreeMap<u64, BigInt>,
    weight: HeckeWeight,
    ps: &PrimeSet,
    limit: u64,
) -> Result<CoeffTable> {
    if let Some(&p) = ps.primes_up_to(limit as f64).iter().find(|p| !prime_values.contains_key(p)) {
        return Err(Error::Spec(format!("no Hecke eigenvalue supplied at prime {p}")));
    }
    let spec = MultSpec::new(
        "hecke",
        PrimeRule::Table(prime_values.clone()),
        Completion::Hecke(weight),
    );
    Ok(CoeffTable {
        weight,
        source: CoeffSource::HeckeExtend,
        data: CoeffData::Integer(sieve_values(&spec, ps, limit)?),
    })
}

/// Prime values `p ↦ a_p` read off a table, for feeding back into [`hecke_extend`].
pub fn prime_values(t: &SieveTable<BigInt>, ps: &PrimeSet) -> BTreeMap<u64, BigInt> {
    ps.primes_up_to(t.limit() as f64)
        .iter()
        .map(|&p| (p, t.get(p).clone()))
        .collect()
}

/// `â_n = a_n / n^{(k−1)/2}` in double precision.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedCoeffs {
    values: Vec<f64>,
}

impl NormalizedCoeffs {
    pub fn from_values(values: Vec<f64>) -> Self {
        NormalizedCoeffs { values }
    }

    pub fn limit(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn get(&self, n: u64) -> f64 {
        self.values[n as usize - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_table(&self, spec_id: impl Into<String>) -> SieveTable<f64> {
        SieveTable::from_values(spec_id, self.values.clone()).expect("nonempty coefficients")
    }
}

/// Each exact value is rounded to the nearest double, then divided by
/// `n^{(k−1)/2}`; a normalized source passes through unchanged.
pub fn normalize(t: &CoeffTable) -> NormalizedCoeffs {
    let half = match t.weight {
        HeckeWeight::Integral(k) => (k as f64 - 1.0) / 2.0,
        HeckeWeight::Normalized => 0.0,
    };
    let values = (1..=t.limit())
        .into_par_iter()
        .map(|n| {
            let a = t.value_f64(n);
            if half == 0.0 {
                a
            } else {
                a / (n as f64).powf(half)
            }
        })
        .collect();
    NormalizedCoeffs { values }
}

fn spf_for(limit: u64) -> Result<Option<PrimeSet>> {
    if limit < 2 {
        Ok(None)
    } else {
        sieve_primes(limit).map(Some)
    }
}

/// Splits `n` as `p^e · m` with `p` its smallest prime factor.
fn split_prime_power(ps: &PrimeSet, n: u64) -> (u64, u64) {
    let p = ps.spf(n);
    let mut q = 1;
    let mut m = n;
    while m % p == 0 {
        m /= p;
        q *= p;
    }
    (q, m)
}

/// Multiplicative function built from `f(p^k)` on prime powers, compared
/// entrywise with `direct(n)`.
fn multiplicative_from_prime_powers(
    t: &CoeffTable,
    spec_id: &str,
    at_prime_power: impl Fn(u64) -> i64,
    direct: impl Fn(u64) -> i64,
) -> Result<SieveTable<i64>> {
    let limit = t.limit();
    let mut v = vec![0i64; limit as usize];
    v[0] = 1;
    if let Some(ps) = spf_for(limit)? {
        for n in 2..=limit {
            let (q, m) = split_prime_power(&ps, n);
            v[n as usize - 1] = if m == 1 {
                at_prime_power(q)
            } else {
                v[q as usize - 1] * v[m as usize - 1]
            };
        }
    }
    for n in 1..=limit {
        if v[n as usize - 1] != direct(n) {
            return Err(Error::Spec(format!(
                "{spec_id} built from prime powers disagrees with the table at n = {n}"
            )));
        }
    }
    SieveTable::from_values(spec_id, v)
}

/// The multiplicative function with `g(p^k) = sign(a_{p^k})`, checked against
/// `sign(a_n)` at every `n`.
pub fn sign_function(t: &CoeffTable) -> Result<SieveTable<i64>> {
    multiplicative_from_prime_powers(t, "sign", |q| t.sign_at(q), |n| t.sign_at(n))
}

/// `1` where `a_n ≠ 0`, else `0`.
pub fn nonvanish_indicator(t: &CoeffTable) -> Result<SieveTable<i64>> {
    multiplicative_from_prime_powers(
        t,
        "nonvanishing",
        |q| (t.sign_at(q) != 0) as i64,
        |n| (t.sign_at(n) != 0) as i64,
    )
}

fn check_multiplicative<T: Scalar>(ps: &PrimeSet, t: &SieveTable<T>) -> Result<()> {
    for n in 2..=t.limit() {
        let (q, m) = split_prime_power(ps, n);
        if m > 1 && *t.get(n) != t.get(q).mul_ref(t.get(m)) {
            return Err(Error::NotMultiplicative { m: q, n: m });
        }
    }
    Ok(())
}

fn check_recurrence<T: Scalar>(ps: &PrimeSet, t: &SieveTable<T>, weight: HeckeWeight) -> Result<()> {
    for &p in ps.primes_up_to(t.limit() as f64) {
        let m = T::from_bigint(&weight.recurrence_factor(p));
        let ap = t.get(p);
        let (mut prev, mut cur, mut q, mut j) = (T::one(), ap.clone(), p, 1u32);
        while let Some(next) = q.checked_mul(p).filter(|&q2| q2 <= t.limit()) {
            let expected = ap.mul_ref(&cur).sub_ref(&m.mul_ref(&prev));
            j += 1;
            if *t.get(next) != expected {
                return Err(Error::RecurrenceViolation { prime: p, exponent: j });
            }
            prev = cur;
            cur = expected;
            q = next;
        }
    }
    Ok(())
}

/// Reads a `n,a_n` coefficient file (exact integers, or `p/q` rationals) and
/// verifies `a_1 = 1`, multiplicativity at every `n` and the declared Hecke
/// recurrence at every prime power.
pub fn load_coeff_table(path: &Path, weight: HeckeWeight) -> Result<CoeffTable> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let sha256 = format!("{:x}", Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "n,a_n" => {}
        Some((_, h)) => return Err(parse_err(1, format!("expected header 'n,a_n', found '{h}'"))),
        None => return Err(parse_err(1, "empty file".into())),
    }
    let mut values: Vec<BigRational> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (n, a) = line
            .split_once(',')
            .ok_or_else(|| parse_err(lineno, format!("expected 'n,a_n', found '{line}'")))?;
        let n: u64 = n
            .trim()
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad index '{n}': {e}")))?;
        if n != values.len() as u64 + 1 {
            return Err(parse_err(
                lineno,
                format!("expected n = {}, found {n} (rows must be consecutive)", values.len() + 1),
            ));
        }
        let a = parse_rational(a.trim()).map_err(|e| parse_err(lineno, e))?;
        values.push(a);
    }
    if values.is_empty() {
        return Err(parse_err(2, "no coefficients".into()));
    }
    if values[0] != BigRational::from_integer(BigInt::from(1)) {
        return Err(Error::NotNormalized(values[0].to_string()));
    }
    let source = CoeffSource::ExternalFile {
        path: path.to_path_buf(),
        sha256,
    };
    let data = if values.iter().all(|v| v.is_integer()) {
        let ints = values.into_iter().map(|v| v.to_integer()).collect();
        CoeffData::Integer(SieveTable::from_values("external", ints)?)
    } else {
        CoeffData::Rational(SieveTable::from_values("external", values)?)
    };
    let limit = match &data {
        CoeffData::Integer(t) => t.limit(),
        CoeffData::Rational(t) => t.limit(),
    };
    if let Some(ps) = spf_for(limit)? {
        match &data {
            CoeffData::Integer(t) => {
                check_multiplicative(&ps, t)?;
                check_recurrence(&ps, t, weight)?;
            }
            CoeffData::Rational(t) => {
                check_multiplicative(&ps, t)?;
                check_recurrence(&ps, t, weight)?;
            }
        }
    }
    Ok(CoeffTable { weight, source, data })
}

/// Writes a table in the format read by [`load_coeff_table`].
pub fn write_coeff_table(t: &CoeffTable, path: &Path) -> Result<()> {
    let mut out = String::from("n,a_n\n");
    for n in 1..=t.limit() {
        let v = match &t.data {
            CoeffData::Integer(d) => d.get(n).to_string(),
            CoeffData::Rational(d) => d.get(n).to_string(),
        };
        out.push_str(&format!("{n},{v}\n"));
    }
    fs::write(path, out).map_err(io_err(path))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentWeight {
    LogP,
    InvP,
    One,
}

/// `Σ_{p ≤ x} |â_p|^power · w(p)`, summed in fixed blocks and reduced in order.
pub fn moment_sum(
    nc: &NormalizedCoeffs,
    ps: &PrimeSet,
    x: f64,
    power: u32,
    weighting: MomentWeight,
) -> Result<f64> {
    if !matches!(power, 1 | 2 | 4) {
        return domain(format!("moment power must be 1, 2 or 4, got {power}"));
    }
    if x.floor() > nc.limit() as f64 {
        return domain(format!("x = {x} exceeds coefficient limit {}", nc.limit()));
    }
    if x.floor() > ps.limit() as f64 {
        return domain(format!("x = {x} exceeds prime limit {}", ps.limit()));
    }
    let term = |p: u64| {
        let a = nc.get(p).abs();
        let m = match power {
            1 => a,
            2 => a * a,
            _ => (a * a) * (a * a),
        };
        m * match weighting {
            MomentWeight::LogP => (p as f64).ln(),
            MomentWeight::InvP => 1.0 / p as f64,
            MomentWeight::One => 1.0,
        }
    };
    let blocks: Vec<f64> = ps
        .primes_up_to(x)
        .par_chunks(4096)
        .map(|c| c.iter().map(|&p| term(p)).collect::<KahanSum<f64>>().value())
        .collect();
    Ok(blocks.into_iter().collect::<KahanSum<f64>>().value())
}
