use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Scalar;

/// Weight of a Hecke eigenform: integral `k`, or already normalized so that the
/// Euler factor is `1 − a_p p^{−s} + p^{−2s}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeckeWeight {
    Integral(u32),
    Normalized,
}

impl HeckeWeight {
    /// The factor `p^{k−1}` (or 1) multiplying `a(p^{j−1})` in the recurrence.
    pub fn recurrence_factor(self, p: u64) -> BigInt {
        match self {
            HeckeWeight::Integral(k) => num_traits::pow(BigInt::from(p), k.saturating_sub(1) as usize),
            HeckeWeight::Normalized => BigInt::from(1),
        }
    }
}

impl fmt::Display for HeckeWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeckeWeight::Integral(k) => write!(f, "{k}"),
            HeckeWeight::Normalized => f.write_str("normalized"),
        }
    }
}

/// How values at primes are supplied.
#[derive(Clone)]
pub enum PrimeRule<T> {
    Constant(T),
    Table(BTreeMap<u64, T>),
    Function(Arc<dyn Fn(u64) -> T + Send + Sync>),
}

impl<T: fmt::Debug> fmt::Debug for PrimeRule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimeRule::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            PrimeRule::Table(t) => f.debug_tuple("Table").field(&t.len()).finish(),
            PrimeRule::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// How values at higher prime powers follow from the prime values.
#[derive(Clone, Debug)]
pub enum Completion<T> {
    ZeroBeyondFirstPower,
    CompletelyMultiplicative,
    /// `g(p^k) = g(p)^k / k!`.
    Exponential,
    /// `a(p^{j+1}) = a(p) a(p^j) − m a(p^{j−1})` with `m = p^{k−1}` or 1.
    Hecke(HeckeWeight),
    /// Values at prime powers looked up directly; primes missing from the map
    /// fall back to the prime rule.
    ExplicitTable(BTreeMap<u64, T>),
}

/// Rule defining a multiplicative function through its values on prime powers.
#[derive(Clone, Debug)]
pub struct MultSpec<T> {
    pub id: String,
    pub prime_rule: PrimeRule<T>,
    pub completion: Completion<T>,
}

impl<T: Scalar> MultSpec<T> {
    pub fn new(id: impl Into<String>, prime_rule: PrimeRule<T>, completion: Completion<T>) -> Self {
        MultSpec {
            id: id.into(),
            prime_rule,
            completion,
        }
    }

    pub fn constant(id: impl Into<String>, value: T, completion: Completion<T>) -> Self {
        Self::new(id, PrimeRule::Constant(value), completion)
    }

    pub fn from_fn(
        id: impl Into<String>,
        f: impl Fn(u64) -> T + Send + Sync + 'static,
        completion: Completion<T>,
    ) -> Self {
        Self::new(id, PrimeRule::Function(Arc::new(f)), completion)
    }

    pub fn prime_value(&self, p: u64) -> Result<T> {
        match &self.prime_rule {
            PrimeRule::Constant(v) => Ok(v.clone()),
            PrimeRule::Table(t) => t
                .get(&p)
                .cloned()
                .ok_or_else(|| Error::Spec(format!("spec '{}' has no value at prime {p}", self.id))),
            PrimeRule::Function(f) => Ok(f(p)),
        }
    }

    /// `[g(1), g(p), g(p²), …, g(p^kmax)]`.
    pub fn prime_power_values(&self, p: u64, kmax: u32) -> Result<Vec<T>> {
        let mut vals = Vec::with_capacity(kmax as usize + 1);
        vals.push(T::one());
        if kmax == 0 {
            return Ok(vals);
        }
        let gp = match &self.completion {
            Completion::ExplicitTable(t) => match t.get(&p) {
                Some(v) => v.clone(),
                None => self.prime_value(p)?,
            },
            _ => self.prime_value(p)?,
        };
        vals.push(gp.clone());
        let hecke_m = match &self.completion {
            Completion::Hecke(w) => Some(T::from_bigint(&w.recurrence_factor(p))),
            _ => None,
        };
        let mut q = p;
        for k in 2..=kmax {
            q = q.checked_mul(p).ok_or_else(|| {
                Error::Overflow(format!("prime power {p}^{k} exceeds 64 bits"))
            })?;
            let k_us = k as usize;
            let v = match &self.completion {
                Completion::ZeroBeyondFirstPower => T::zero(),
                Completion::CompletelyMultiplicative => vals[k_us - 1].mul_ref(&gp),
                Completion::Exponential => vals[k_us - 1].mul_ref(&gp).div_int(k as u64).ok_or_else(|| {
                    Error::Spec(format!(
                        "spec '{}': exponential completion needs division by {k}, not exact in {} mode",
                        self.id,
                        T::MODE
                    ))
                })?,
                Completion::Hecke(_) => {
                    let m = hecke_m.as_ref().expect("hecke factor");
                    vals[k_us - 1].mul_ref(&gp).sub_ref(&vals[k_us - 2].mul_ref(m))
                }
                Completion::ExplicitTable(t) => t.get(&q).cloned().ok_or_else(|| {
                    Error::Spec(format!(
                        "spec '{}' has no value at prime power {p}^{k} = {q}",
                        self.id
                    ))
                })?,
            };
            vals.push(v);
        }
        Ok(vals)
    }

    /// Value at an arbitrary `n` by trial-division factorization. Independent of
    /// the sieve, used to cross-check it.
    pub fn value_by_factorization(&self, mut n: u64) -> Result<T> {
        let mut acc = T::one();
        let mut d = 2u64;
        while d * d <= n {
            if n % d == 0 {
                let mut e = 0;
                while n % d == 0 {
                    n /= d;
                    e += 1;
                }
                let vals = self.prime_power_values(d, e)?;
                acc = acc.mul_ref(&vals[e as usize]);
            }
            d += 1;
        }
        if n > 1 {
            acc = acc.mul_ref(&self.prime_power_values(n, 1)?[1]);
        }
        Ok(acc)
    }
}

/// A handful of standard functions used throughout tests and the CLI.
pub mod catalog {
    use super::*;

    pub fn one<T: Scalar>() -> MultSpec<T> {
        MultSpec::constant("one", T::one(), Completion::CompletelyMultiplicative)
    }

    pub fn mobius<T: Scalar>() -> MultSpec<T> {
        MultSpec::constant("mobius", T::from_i64(-1), Completion::ZeroBeyondFirstPower)
    }

    /// Divisor function `d(n)`: normalized Hecke recurrence with `a_p = 2`.
    pub fn divisor<T: Scalar>() -> MultSpec<T> {
        MultSpec::constant("divisor", T::from_i64(2), Completion::Hecke(HeckeWeight::Normalized))
    }

    /// `g(p) = 1` iff `p ≡ 1 (mod 4)`, completely multiplicative: the synthetic CM model.
    pub fn cm_indicator<T: Scalar>() -> MultSpec<T> {
        MultSpec::from_fn(
            "cm4",
            |p| if p % 4 == 1 { T::one() } else { T::zero() },
            Completion::CompletelyMultiplicative,
        )
    }

    /// `g(p) = 0`, so that `g(n) = 0` for every `n ≥ 2`.
    pub fn zero<T: Scalar>() -> MultSpec<T> {
        MultSpec::constant("zero", T::zero(), Completion::CompletelyMultiplicative)
    }
}
