//! Dirichlet characters modulo `D`.
//!
//! `(Z/DZ)*` is decomposed by CRT into cyclic factors: one per odd prime
//! power (generated by a primitive root), `⟨−1⟩` for `4 | D`, and `⟨−1⟩ × ⟨5⟩`
//! for `8 | D`. A character is the vector of exponents it assigns to the
//! factor generators. Values are kept as exact exponents of `ζ_E`, `E` the
//! group exponent, and only become complex numbers when summed.
//!
//! Canonical enumeration order: lexicographic in the exponent vector, factors
//! listed by increasing prime, with the `−1` factor of `2^k` before the `5`
//! factor. Index 0 is always the principal character.

use std::sync::Arc;

use num_complex::Complex64;
use num_integer::Integer;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::multcore::SieveTable;
use crate::numeric::{Approx, KahanSum, Scalar};
use crate::primes::PrimeSet;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CyclicFactor {
    /// The prime power of `D` this factor lives in.
    pub prime_power: u64,
    /// Generator as a residue mod `D` (≡ 1 modulo the other prime-power parts).
    pub generator: u64,
    pub order: u64,
}

/// `(Z/DZ)*` with a discrete-logarithm table over its cyclic factors.
#[derive(Debug)]
pub struct UnitGroup {
    modulus: u64,
    factors: Vec<CyclicFactor>,
    exponent: u64,
    /// `logs[n * r + i]` is the log of `n` to base generator `i`; `u32::MAX` for non-units.
    logs: Vec<u32>,
    totient: u64,
}

const NOT_UNIT: u32 = u32::MAX;

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = (r as u128 * b as u128 % m as u128) as u64;
        }
        b = (b as u128 * b as u128 % m as u128) as u64;
        e >>= 1;
    }
    r
}

fn factor_small(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            let mut e = 0;
            while n % d == 0 {
                n /= d;
                e += 1;
            }
            out.push((d, e));
        }
        d += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

fn primitive_root_prime_power(p: u64, k: u32) -> u64 {
    let phi_p = p - 1;
    let qs: Vec<u64> = factor_small(phi_p).into_iter().map(|(q, _)| q).collect();
    let g = (2..p)
        .find(|&g| qs.iter().all(|&q| pow_mod(g, phi_p / q, p) != 1))
        .unwrap_or(1);
    if k == 1 {
        return g;
    }
    let p2 = p * p;
    if pow_mod(g, phi_p, p2) == 1 {
        g + p
    } else {
        g
    }
}

/// `x ≡ r (mod m)` and `x ≡ 1 (mod D/m)`.
fn crt_lift(r: u64, m: u64, modulus: u64) -> u64 {
    let rest = modulus / m;
    if rest == 1 {
        return r % m;
    }
    // x = 1 + rest * t, need 1 + rest t ≡ r (mod m)
    let inv = mod_inverse(rest % m, m).expect("coprime CRT parts");
    let t = ((r + m - 1 % m) % m) as u128 * inv as u128 % m as u128;
    ((1 + rest as u128 * t) % modulus as u128) as u64
}

fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    let e = (a as i128).extended_gcd(&(m as i128));
    (e.gcd == 1).then(|| e.x.rem_euclid(m as i128) as u64)
}

impl UnitGroup {
    pub fn new(modulus: u64) -> Result<Arc<UnitGroup>> {
        if modulus == 0 {
            return domain("character modulus must be positive");
        }
        if modulus > 50_000_000 {
            return domain(format!("modulus {modulus} too large for a full log table"));
        }
        let mut factors = Vec::new();
        for (p, k) in factor_small(modulus) {
            let pk = num_traits::pow(p, k as usize);
            if p == 2 {
                if k >= 2 {
                    factors.push(CyclicFactor {
                        prime_power: pk,
                        generator: crt_lift(pk - 1, pk, modulus),
                        order: 2,
                    });
                }
                if k >= 3 {
                    factors.push(CyclicFactor {
                        prime_power: pk,
                        generator: crt_lift(5, pk, modulus),
                        order: pk / 4,
                    });
                }
            } else {
                let g = primitive_root_prime_power(p, k);
                factors.push(CyclicFactor {
                    prime_power: pk,
                    generator: crt_lift(g, pk, modulus),
                    order: pk / p * (p - 1),
                });
            }
        }
        let r = factors.len();
        let totient: u64 = factors.iter().map(|f| f.order).product();
        let exponent = factors.iter().fold(1u64, |acc, f| acc.lcm(&f.order));
        let mut logs = vec![NOT_UNIT; (modulus as usize) * r.max(1)];
        if r == 0 {
            // trivial group: only 1 (and 0 when D = 1) is a unit
            logs = vec![0; modulus as usize];
        } else {
            let mut digits = vec![0u64; r];
            let mut powers: Vec<u64> = vec![1 % modulus; r];
            loop {
                let elem = powers.iter().fold(1 % modulus, |acc, &x| {
                    (acc as u128 * x as u128 % modulus as u128) as u64
                });
                for i in 0..r {
                    logs[elem as usize * r + i] = digits[i] as u32;
                }
                // increment mixed-radix counter
                let mut i = r;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    digits[i] += 1;
                    if digits[i] < factors[i].order {
                        powers[i] = (powers[i] as u128 * factors[i].generator as u128 % modulus as u128) as u64;
                        break;
                    }
                    digits[i] = 0;
                    powers[i] = 1 % modulus;
                    if i == 0 {
                        i = usize::MAX;
                        break;
                    }
                }
                if i == usize::MAX {
                    break;
                }
            }
        }
        Ok(Arc::new(UnitGroup {
            modulus,
            factors,
            exponent,
            logs,
            totient,
        }))
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn factors(&self) -> &[CyclicFactor] {
        &self.factors
    }

    /// Euler's `φ(D)`.
    pub fn totient(&self) -> u64 {
        self.totient
    }

    /// Least common multiple of the factor orders.
    pub fn exponent(&self) -> u64 {
        self.exponent
    }

    pub fn is_unit(&self, n: u64) -> bool {
        let r = self.factors.len();
        let idx = (n % self.modulus) as usize;
        if r == 0 {
            return self.modulus == 1 || idx == 1 % self.modulus as usize;
        }
        self.logs[idx * r] != NOT_UNIT
    }

    fn logs_of(&self, n: u64) -> Option<&[u32]> {
        let r = self.factors.len();
        let idx = (n % self.modulus) as usize;
        if r == 0 {
            return self.is_unit(n).then_some(&[][..]);
        }
        let s = &self.logs[idx * r..idx * r + r];
        (s[0] != NOT_UNIT).then_some(s)
    }
}

/// A root of unity `exp(2πi · num/den)` with `gcd(num, den) = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RootOfUnity {
    pub num: u64,
    pub den: u64,
}

impl RootOfUnity {
    fn new(num: u64, den: u64) -> Self {
        let num = num % den;
        let g = num.gcd(&den);
        RootOfUnity {
            num: num / g,
            den: den / g,
        }
    }

    pub fn to_complex(self) -> Complex64 {
        match (self.num, self.den) {
            (0, _) => Complex64::new(1.0, 0.0),
            (1, 2) => Complex64::new(-1.0, 0.0),
            (1, 4) => Complex64::new(0.0, 1.0),
            (3, 4) => Complex64::new(0.0, -1.0),
            (n, d) => Complex64::from_polar(1.0, std::f64::consts::TAU * n as f64 / d as f64),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DirichletCharacter {
    group: Arc<UnitGroup>,
    /// Exponent assigned to each factor generator, in `0..order_i`.
    exponents: Vec<u64>,
    order: u64,
}

impl PartialEq for DirichletCharacter {
    fn eq(&self, other: &Self) -> bool {
        self.group.modulus == other.group.modulus && self.exponents == other.exponents
    }
}

impl DirichletCharacter {
    fn from_exponents(group: Arc<UnitGroup>, exponents: Vec<u64>) -> Self {
        let order = group
            .factors
            .iter()
            .zip(&exponents)
            .fold(1u64, |acc, (f, &a)| acc.lcm(&(f.order / f.order.gcd(&a))));
        DirichletCharacter {
            group,
            exponents,
            order,
        }
    }

    pub fn principal(group: Arc<UnitGroup>) -> Self {
        let r = group.factors.len();
        Self::from_exponents(group, vec![0; r])
    }

    pub fn modulus(&self) -> u64 {
        self.group.modulus
    }

    pub fn group(&self) -> &Arc<UnitGroup> {
        &self.group
    }

    pub fn exponents(&self) -> &[u64] {
        &self.exponents
    }

    /// Position in the canonical enumeration.
    pub fn index(&self) -> u64 {
        self.group
            .factors
            .iter()
            .zip(&self.exponents)
            .fold(0u64, |acc, (f, &a)| acc * f.order + a)
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn is_principal(&self) -> bool {
        self.order == 1
    }

    pub fn is_quadratic(&self) -> bool {
        self.order == 2
    }

    pub fn is_real(&self) -> bool {
        self.order <= 2
    }

    /// `χ(n)` as `ζ_E^k`, `E` the group exponent; `None` when `gcd(n, D) > 1`.
    pub fn exponent_at(&self, n: u64) -> Option<u64> {
        let logs = self.group.logs_of(n)?;
        let e = self.group.exponent;
        let mut k = 0u64;
        for ((f, &a), &l) in self.group.factors.iter().zip(&self.exponents).zip(logs) {
            k = (k + (a * (e / f.order)) % e * l as u64) % e;
        }
        Some(k)
    }

    pub fn root_at(&self, n: u64) -> Option<RootOfUnity> {
        self.exponent_at(n).map(|k| RootOfUnity::new(k, self.group.exponent))
    }

    pub fn value(&self, n: u64) -> Complex64 {
        self.root_at(n).map_or(Complex64::new(0.0, 0.0), RootOfUnity::to_complex)
    }

    /// `χ(n) ∈ {−1, 0, 1}` for a real character, `None` for a complex one.
    pub fn value_real(&self, n: u64) -> Option<i64> {
        if !self.is_real() {
            return None;
        }
        Some(match self.exponent_at(n) {
            None => 0,
            Some(0) => 1,
            Some(_) => -1,
        })
    }

    pub fn conj(&self) -> Self {
        let exps = self
            .group
            .factors
            .iter()
            .zip(&self.exponents)
            .map(|(f, &a)| (f.order - a) % f.order)
            .collect();
        Self::from_exponents(self.group.clone(), exps)
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.modulus(), other.modulus(), "characters to different moduli");
        let exps = self
            .group
            .factors
            .iter()
            .zip(self.exponents.iter().zip(&other.exponents))
            .map(|(f, (&a, &b))| (a + b) % f.order)
            .collect();
        Self::from_exponents(self.group.clone(), exps)
    }

    pub fn pow(&self, r: u64) -> Self {
        let exps = self
            .group
            .factors
            .iter()
            .zip(&self.exponents)
            .map(|(f, &a)| (a as u128 * r as u128 % f.order as u128) as u64)
            .collect();
        Self::from_exponents(self.group.clone(), exps)
    }

    /// True unless `χ` is induced from a character to a proper divisor of `D`.
    pub fn is_primitive(&self) -> bool {
        let d = self.modulus();
        for (p, _) in factor_small(d) {
            let m = d / p;
            // χ factors through D/p iff it is trivial on units ≡ 1 (mod D/p)
            let trivial = (0..p)
                .map(|j| 1 + j * m)
                .filter(|&n| self.group.is_unit(n))
                .all(|n| self.exponent_at(n) == Some(0));
            if trivial {
                return false;
            }
        }
        true
    }
}

/// All `φ(D)` characters modulo `D` in canonical order.
pub fn enumerate_characters(modulus: u64) -> Result<Vec<DirichletCharacter>> {
    let group = UnitGroup::new(modulus)?;
    let orders: Vec<u64> = group.factors.iter().map(|f| f.order).collect();
    let mut out = Vec::with_capacity(group.totient as usize);
    let mut digits = vec![0u64; orders.len()];
    loop {
        out.push(DirichletCharacter::from_exponents(group.clone(), digits.clone()));
        let mut i = orders.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < orders[i] {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// The character with the given canonical index.
pub fn character_by_index(modulus: u64, index: u64) -> Result<DirichletCharacter> {
    let group = UnitGroup::new(modulus)?;
    if index >= group.totient {
        return domain(format!("character index {index} out of range for modulus {modulus}"));
    }
    let mut rest = index;
    let mut exps = vec![0u64; group.factors.len()];
    for (i, f) in group.factors.iter().enumerate().rev() {
        exps[i] = rest % f.order;
        rest /= f.order;
    }
    Ok(DirichletCharacter::from_exponents(group, exps))
}

/// The nonprincipal characters of order 2 modulo `D`, in canonical order.
pub fn quadratic_characters(modulus: u64) -> Result<Vec<DirichletCharacter>> {
    let group = UnitGroup::new(modulus)?;
    let even: Vec<usize> = (0..group.factors.len())
        .filter(|&i| group.factors[i].order % 2 == 0)
        .collect();
    let mut out = Vec::new();
    for mask in 1u64..(1u64 << even.len()) {
        let mut exps = vec![0u64; group.factors.len()];
        for (bit, &i) in even.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                exps[i] = group.factors[i].order / 2;
            }
        }
        out.push(DirichletCharacter::from_exponents(group.clone(), exps));
    }
    out.sort_by_key(|c| c.index());
    Ok(out)
}

/// Integer coefficients of the cyclotomic polynomial `Φ_n`, lowest degree first.
pub fn cyclotomic_polynomial(n: u64) -> Vec<i64> {
    // x^n − 1 divided by Φ_d for every proper divisor d
    let mut poly = vec![0i64; n as usize + 1];
    poly[0] = -1;
    poly[n as usize] = 1;
    for d in 1..n {
        if n % d == 0 {
            poly = divide_monic(&poly, &cyclotomic_polynomial(d));
        }
    }
    poly
}

fn divide_monic(num: &[i64], den: &[i64]) -> Vec<i64> {
    let mut rem = num.to_vec();
    let dd = den.len() - 1;
    let mut quot = vec![0i64; num.len() - dd];
    for i in (0..quot.len()).rev() {
        let c = rem[i + dd];
        quot[i] = c;
        for (j, &b) in den.iter().enumerate() {
            rem[i + j] -= c * b;
        }
    }
    debug_assert!(rem.iter().all(|&r| r == 0), "inexact cyclotomic division");
    quot
}

/// Reduces `Σ_j counts[j] ζ_E^j` to its canonical representative modulo `Φ_E`
/// (exact). Trailing zeros are trimmed, so a rational integer `c` comes back
/// as `[c]` (or `[]` for zero).
pub fn cyclotomic_reduce(counts: &[i64], exponent: u64) -> Vec<i64> {
    let phi = cyclotomic_polynomial(exponent);
    let deg = phi.len() - 1;
    let mut rem = counts.to_vec();
    for i in (deg..rem.len()).rev() {
        let c = rem[i];
        if c != 0 {
            for (j, &b) in phi.iter().enumerate() {
                rem[i - deg + j] -= c * b;
            }
        }
    }
    rem.truncate(deg.max(1));
    while rem.last() == Some(&0) {
        rem.pop();
    }
    rem
}

/// `Σ_{a mod D} χ₁(a) conj(χ₂(a))`, exactly, as a reduced cyclotomic integer.
pub fn inner_product_exact(a: &DirichletCharacter, b: &DirichletCharacter) -> Vec<i64> {
    let e = a.group.exponent;
    let prod = a.mul(&b.conj());
    let mut counts = vec![0i64; e as usize];
    for n in 0..a.modulus() {
        if let Some(k) = prod.exponent_at(n) {
            counts[k as usize] += 1;
        }
    }
    cyclotomic_reduce(&counts, e)
}

/// The table `n ↦ g(n) χ(n)` as complex values.
pub fn twist<T: Scalar>(t: &SieveTable<T>, chi: &DirichletCharacter) -> SieveTable<Complex64> {
    t.map(format!("{}·chi[{}:{}]", t.spec_id(), chi.modulus(), chi.index()), |n, v| {
        let (re, im) = v.approx().parts();
        Complex64::new(re, im) * chi.value(n)
    })
}

/// Exact twist by a real character, staying in the table's own mode.
pub fn twist_real<T: Scalar>(t: &SieveTable<T>, chi: &DirichletCharacter) -> Result<SieveTable<T>> {
    if !chi.is_real() {
        return domain(format!("character of order {} is not real", chi.order()));
    }
    Ok(t.map(format!("{}·chi[{}:{}]", t.spec_id(), chi.modulus(), chi.index()), |n, v| {
        match chi.value_real(n) {
            Some(1) => v.clone(),
            Some(-1) => v.neg_ref(),
            _ => T::zero(),
        }
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct QuadraticEvidence {
    pub character_index: u64,
    /// Geometric checkpoints `y`.
    pub checkpoints: Vec<f64>,
    /// `Σ_{p ≤ y, χ(p) = −1} g(p)/p` at each checkpoint.
    pub partial_sums: Vec<f64>,
    pub increments: Vec<f64>,
    pub flagged: bool,
}

/// Outcome of scanning the quadratic characters for a convergent tail.
#[derive(Clone, Debug, Serialize)]
pub struct ExceptionalScan {
    pub modulus: u64,
    pub threshold: f64,
    pub window_count: u32,
    /// Always "evidence": convergence cannot be decided from finite data.
    pub verdict_kind: &'static str,
    pub candidates: Vec<QuadraticEvidence>,
    /// Canonical index of the flagged character, if any.
    pub flagged_index: Option<u64>,
    pub note: Option<String>,
}

impl ExceptionalScan {
    pub fn flagged(&self) -> Option<DirichletCharacter> {
        self.flagged_index
            .map(|i| character_by_index(self.modulus, i).expect("index from scan"))
    }
}

pub const DEFAULT_EXCEPTIONAL_THRESHOLD: f64 = 0.05;

/// For each quadratic `χ` mod `D`, tracks `Σ_{p ≤ y, χ(p) = −1} g(p)/p` across the
/// last `window_count` decades below `x` and flags `χ` when every decade adds
/// less than `threshold`.
pub fn detect_exceptional_quadratic(
    ps: &PrimeSet,
    g_on_primes: impl Fn(u64) -> f64,
    modulus: u64,
    x: f64,
    window_count: u32,
    threshold: f64,
) -> Result<ExceptionalScan> {
    if !(x >= 100.0) {
        return domain(format!("exceptional-character scan needs x ≥ 100, got {x}"));
    }
    if window_count < 3 {
        return domain(format!("need at least 3 windows, got {window_count}"));
    }
    if x.floor() > ps.limit() as f64 {
        return domain(format!("x = {x} exceeds prime limit {}", ps.limit()));
    }
    let mut scan = ExceptionalScan {
        modulus,
        threshold,
        window_count,
        verdict_kind: "evidence",
        candidates: Vec::new(),
        flagged_index: None,
        note: None,
    };
    if modulus <= 2 {
        scan.note = Some(format!("no quadratic character exists modulo {modulus}"));
        return Ok(scan);
    }
    let chars = quadratic_characters(modulus)?;
    if chars.is_empty() {
        scan.note = Some(format!("no quadratic character exists modulo {modulus}"));
        return Ok(scan);
    }
    let checkpoints: Vec<f64> = (0..=window_count)
        .map(|j| x / 10f64.powi((window_count - j) as i32))
        .collect();
    let primes = ps.primes_up_to(x);
    let mut best: Option<(f64, u64)> = None;
    for chi in chars {
        let mut partial = Vec::with_capacity(checkpoints.len());
        let mut acc = KahanSum::new();
        let mut it = primes.iter().peekable();
        for &y in &checkpoints {
            while let Some(&&p) = it.peek() {
                if p as f64 > y {
                    break;
                }
                if chi.value_real(p) == Some(-1) {
                    acc.add(g_on_primes(p) / p as f64);
                }
                it.next();
            }
            partial.push(acc.value());
        }
        let increments: Vec<f64> = partial.windows(2).map(|w| w[1] - w[0]).collect();
        let flagged = increments.iter().all(|&d| d < threshold);
        if flagged {
            let worst = increments.iter().cloned().fold(0.0, f64::max);
            if best.is_none_or(|(w, _)| worst < w) {
                best = Some((worst, chi.index()));
            }
        }
        scan.candidates.push(QuadraticEvidence {
            character_index: chi.index(),
            checkpoints: checkpoints.clone(),
            partial_sums: partial,
            increments,
            flagged,
        });
    }
    scan.flagged_index = best.map(|(_, i)| i);
    Ok(scan)
}
