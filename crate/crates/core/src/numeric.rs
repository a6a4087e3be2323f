//! Value types shared by every table in the crate.
//!
//! Tables are generic over [`Scalar`]: exact small integers (`i64`, used for
//! sign and indicator tables), arbitrary-size integers, rationals, doubles and
//! complex doubles. Every scalar has a floating [`Approx`] image (`f64` or
//! `Complex64`) in which the analytic sums are accumulated.

use std::fmt::{self, Debug};
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Storage mode of a table, fixed when its spec is created.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMode {
    Integer,
    Rational,
    Float,
    Complex,
}

impl fmt::Display for ValueMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueMode::Integer => "integer",
            ValueMode::Rational => "rational",
            ValueMode::Float => "float",
            ValueMode::Complex => "complex",
        };
        f.write_str(s)
    }
}

/// Floating image of a scalar: `f64` for real values, `Complex64` otherwise.
pub trait Approx:
    Copy
    + Debug
    + Send
    + Sync
    + Zero
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn parts(self) -> (f64, f64);
    fn from_parts(re: f64, im: f64) -> Self;
    fn modulus(self) -> f64;
}

impl Approx for f64 {
    fn parts(self) -> (f64, f64) {
        (self, 0.0)
    }
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Approx for Complex64 {
    fn parts(self) -> (f64, f64) {
        (self.re, self.im)
    }
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Arithmetic needed to sieve, convolve and sum multiplicative functions.
///
/// Exact implementations never wrap: `i64` panics on overflow rather than
/// returning a wrong value.
pub trait Scalar: Clone + Debug + PartialEq + Send + Sync + 'static {
    type Approx: Approx;
    const MODE: ValueMode;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_bigint(v: &BigInt) -> Self;
    fn add_ref(&self, other: &Self) -> Self;
    fn sub_ref(&self, other: &Self) -> Self;
    fn mul_ref(&self, other: &Self) -> Self;
    fn neg_ref(&self) -> Self;
    /// Exact division by a positive integer, `None` if the result is not representable.
    fn div_int(&self, d: u64) -> Option<Self>;
    fn approx(&self) -> Self::Approx;
    fn is_zero_value(&self) -> bool;
    fn to_text(&self) -> String;
    fn parse_text(s: &str) -> Result<Self, String>;
}

impl Scalar for i64 {
    type Approx = f64;
    const MODE: ValueMode = ValueMode::Integer;

    fn zero() -> Self {
        0
    }
    fn one() -> Self {
        1
    }
    fn from_i64(v: i64) -> Self {
        v
    }
    fn from_bigint(v: &BigInt) -> Self {
        v.to_i64().expect("integer does not fit in i64 table")
    }
    fn add_ref(&self, other: &Self) -> Self {
        self.checked_add(*other).expect("i64 table overflow")
    }
    fn sub_ref(&self, other: &Self) -> Self {
        self.checked_sub(*other).expect("i64 table overflow")
    }
    fn mul_ref(&self, other: &Self) -> Self {
        self.checked_mul(*other).expect("i64 table overflow")
    }
    fn neg_ref(&self) -> Self {
        self.checked_neg().expect("i64 table overflow")
    }
    fn div_int(&self, d: u64) -> Option<Self> {
        let d = i64::try_from(d).ok()?;
        (self % d == 0).then(|| self / d)
    }
    fn approx(&self) -> f64 {
        *self as f64
    }
    fn is_zero_value(&self) -> bool {
        *self == 0
    }
    fn to_text(&self) -> String {
        self.to_string()
    }
    fn parse_text(s: &str) -> Result<Self, String> {
        s.trim().parse().map_err(|e| format!("{e}"))
    }
}

impl Scalar for BigInt {
    type Approx = f64;
    const MODE: ValueMode = ValueMode::Integer;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }
    fn from_bigint(v: &BigInt) -> Self {
        v.clone()
    }
    fn add_ref(&self, other: &Self) -> Self {
        self + other
    }
    fn sub_ref(&self, other: &Self) -> Self {
        self - other
    }
    fn mul_ref(&self, other: &Self) -> Self {
        self * other
    }
    fn neg_ref(&self) -> Self {
        -self
    }
    fn div_int(&self, d: u64) -> Option<Self> {
        let d = BigInt::from(d);
        let (q, r) = num_integer::Integer::div_rem(self, &d);
        r.is_zero().then_some(q)
    }
    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn is_zero_value(&self) -> bool {
        self.is_zero()
    }
    fn to_text(&self) -> String {
        self.to_string()
    }
    fn parse_text(s: &str) -> Result<Self, String> {
        s.trim().parse().map_err(|e| format!("{e}"))
    }
}

impl Scalar for BigRational {
    type Approx = f64;
    const MODE: ValueMode = ValueMode::Rational;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_bigint(v: &BigInt) -> Self {
        BigRational::from_integer(v.clone())
    }
    fn add_ref(&self, other: &Self) -> Self {
        self + other
    }
    fn sub_ref(&self, other: &Self) -> Self {
        self - other
    }
    fn mul_ref(&self, other: &Self) -> Self {
        self * other
    }
    fn neg_ref(&self) -> Self {
        -self
    }
    fn div_int(&self, d: u64) -> Option<Self> {
        (d != 0).then(|| self / BigRational::from_integer(BigInt::from(d)))
    }
    fn approx(&self) -> f64 {
        rational_to_f64(self)
    }
    fn is_zero_value(&self) -> bool {
        self.is_zero()
    }
    fn to_text(&self) -> String {
        if self.is_integer() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
    fn parse_text(s: &str) -> Result<Self, String> {
        parse_rational(s)
    }
}

impl Scalar for f64 {
    type Approx = f64;
    const MODE: ValueMode = ValueMode::Float;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_bigint(v: &BigInt) -> Self {
        v.to_f64().unwrap_or(f64::NAN)
    }
    fn add_ref(&self, other: &Self) -> Self {
        self + other
    }
    fn sub_ref(&self, other: &Self) -> Self {
        self - other
    }
    fn mul_ref(&self, other: &Self) -> Self {
        self * other
    }
    fn neg_ref(&self) -> Self {
        -self
    }
    fn div_int(&self, d: u64) -> Option<Self> {
        (d != 0).then(|| self / d as f64)
    }
    fn approx(&self) -> f64 {
        *self
    }
    fn is_zero_value(&self) -> bool {
        *self == 0.0
    }
    fn to_text(&self) -> String {
        format!("{self:?}")
    }
    fn parse_text(s: &str) -> Result<Self, String> {
        s.trim().parse().map_err(|e| format!("{e}"))
    }
}

impl Scalar for Complex64 {
    type Approx = Complex64;
    const MODE: ValueMode = ValueMode::Complex;

    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_i64(v: i64) -> Self {
        Complex64::new(v as f64, 0.0)
    }
    fn from_bigint(v: &BigInt) -> Self {
        Complex64::new(v.to_f64().unwrap_or(f64::NAN), 0.0)
    }
    fn add_ref(&self, other: &Self) -> Self {
        self + other
    }
    fn sub_ref(&self, other: &Self) -> Self {
        self - other
    }
    fn mul_ref(&self, other: &Self) -> Self {
        self * other
    }
    fn neg_ref(&self) -> Self {
        -self
    }
    fn div_int(&self, d: u64) -> Option<Self> {
        (d != 0).then(|| self / d as f64)
    }
    fn approx(&self) -> Complex64 {
        *self
    }
    fn is_zero_value(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn to_text(&self) -> String {
        format!("{:?}{:+?}i", self.re, self.im)
    }
    fn parse_text(s: &str) -> Result<Self, String> {
        s.trim().parse().map_err(|e| format!("{e:?}"))
    }
}

/// Nearest double to a big rational, without overflowing on huge numerators.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() {
            return n / d;
        }
    }
    let shift = r.numer().bits() as i64 - r.denom().bits() as i64;
    let scaled = if shift > 0 {
        r / BigRational::from_integer(<BigInt as One>::one() << shift as usize)
    } else {
        r * BigRational::from_integer(<BigInt as One>::one() << (-shift) as usize)
    };
    let m = scaled.numer().to_f64().unwrap_or(f64::NAN) / scaled.denom().to_f64().unwrap_or(f64::NAN);
    m * 2f64.powi(shift as i32)
}

/// Parses `p/q`, an integer, or a finite decimal such as `-0.125` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|e| format!("bad numerator: {e}"))?;
        let d: BigInt = d.trim().parse().map_err(|e| format!("bad denominator: {e}"))?;
        if d.is_zero() {
            return Err("zero denominator".into());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("bad decimal '{s}'"));
        }
        let negative = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        let digits = format!("{}{}", if int_digits.is_empty() { "0" } else { int_digits }, frac);
        let mut n: BigInt = digits.parse().map_err(|e| format!("bad decimal: {e}"))?;
        if negative {
            n = -n;
        }
        let d = num_traits::pow(BigInt::from(10u32), frac.len());
        return Ok(BigRational::new(n, d));
    }
    let n: BigInt = s.parse().map_err(|e| format!("bad integer: {e}"))?;
    Ok(BigRational::from_integer(n))
}

/// Kahan-compensated running sum.
#[derive(Clone, Copy, Debug)]
pub struct KahanSum<A> {
    sum: A,
    comp: A,
}

impl<A: Approx> Default for KahanSum<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A: Approx> KahanSum<A> {
    pub fn new() -> Self {
        KahanSum {
            sum: A::zero(),
            comp: A::zero(),
        }
    }

    pub fn add(&mut self, x: A) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> A {
        self.sum
    }
}

impl<A: Approx> FromIterator<A> for KahanSum<A> {
    fn from_iter<I: IntoIterator<Item = A>>(iter: I) -> Self {
        let mut k = KahanSum::new();
        for x in iter {
            k.add(x);
        }
        k
    }
}

pub fn kahan_sum<A: Approx>(iter: impl IntoIterator<Item = A>) -> A {
    iter.into_iter().collect::<KahanSum<A>>().value()
}

/// Unevaluated sum `hi + lo` of two doubles with |lo| ≤ ulp(hi)/2.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, o: DoubleDouble) -> DoubleDouble {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }

    pub fn add_f64(self, x: f64) -> DoubleDouble {
        self.add(DoubleDouble::from_f64(x))
    }

    pub fn neg(self) -> DoubleDouble {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: DoubleDouble) -> DoubleDouble {
        self.add(o.neg())
    }

    pub fn mul(self, o: DoubleDouble) -> DoubleDouble {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }

    pub fn mul_f64(self, x: f64) -> DoubleDouble {
        self.mul(DoubleDouble::from_f64(x))
    }

    /// Reciprocal to double-double accuracy (one Newton step from the double reciprocal).
    pub fn recip(self) -> DoubleDouble {
        let y = DoubleDouble::from_f64(1.0 / self.hi);
        let one = DoubleDouble::from_f64(1.0);
        let r = one.sub(self.mul(y));
        y.add(y.mul(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_on_small_increments() {
        let n = 10_000_000;
        let naive: f64 = (0..n).map(|_| 0.1).sum();
        let k = kahan_sum((0..n).map(|_| 0.1));
        assert!((k - 1_000_000.0).abs() < (naive - 1_000_000.0).abs());
        assert!((k - 1_000_000.0).abs() < 1e-6);
    }

    #[test]
    fn double_double_recip_is_accurate() {
        let x = DoubleDouble::from_f64(3.0);
        let r = x.recip();
        let back = r.mul(x);
        assert!((back.hi - 1.0).abs() < 1e-30 || back.hi == 1.0);
        assert!(back.lo.abs() < 1e-30);
    }

    #[test]
    fn parses_rationals_and_decimals() {
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        assert_eq!(parse_rational("1/2").unwrap(), half);
        assert_eq!(parse_rational("0.5").unwrap(), half);
        assert_eq!(parse_rational("-1.25").unwrap(), BigRational::new(BigInt::from(-5), BigInt::from(4)));
        assert_eq!(parse_rational("-7").unwrap(), BigRational::from_integer(BigInt::from(-7)));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("1.").is_err());
    }

    #[test]
    fn huge_rational_converts() {
        let big = num_traits::pow(BigInt::from(10), 400);
        let r = BigRational::new(big.clone() * 3, big);
        assert!((rational_to_f64(&r) - 3.0).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "overflow")]
    fn i64_tables_never_wrap() {
        let _ = i64::MAX.mul_ref(&2);
    }

    #[test]
    fn scalar_text_round_trips() {
        let z = Complex64::new(0.25, -3.5);
        assert_eq!(Complex64::parse_text(&z.to_text()).unwrap(), z);
        let x = 0.1f64;
        assert_eq!(f64::parse_text(&x.to_text()).unwrap(), x);
        let r = BigRational::new(BigInt::from(-3), BigInt::from(7));
        assert_eq!(BigRational::parse_text(&r.to_text()).unwrap(), r);
        assert_eq!(BigInt::parse_text("-5").unwrap(), BigInt::from(-5));
    }
}
