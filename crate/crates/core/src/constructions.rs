//! A multiplicative function with `Σ_{p ≤ x} |g(p)| log p ~ cx` whose distance
//! `Σ (|g(p)| − g(p))/p` grows like `2 (log log log x)^{1/2}`: on each interval
//! `(b_n, b_{n+1}]` the first `y_n` primes get `−1`, the next ones up to a
//! proportion `c` get `+1`, the rest `0`.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::halasz::{minimize_lambda, write_prime_values_csv, PrimeValues};
use crate::multcore::{Completion, MultSpec, PrimeRule};
use crate::numeric::KahanSum;
use crate::primes::{sieve_primes, PrimeSet};

/// `b_1 = 3/2`, `b_{n+1} = b_n (1 + 1/log b_n)`; stored 0-based, `b[0] = b_1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BnSequence {
    pub b: Vec<f64>,
}

impl BnSequence {
    pub fn count(&self) -> usize {
        self.b.len()
    }

    /// `b_n`, 1-based.
    pub fn get(&self, n: usize) -> f64 {
        self.b[n - 1]
    }
}

fn next_b(b: f64) -> f64 {
    b + b / b.ln()
}

pub fn generate_bn(count: usize) -> Result<BnSequence> {
    if count < 1 {
        return domain("generate_bn needs count ≥ 1");
    }
    let mut b = Vec::with_capacity(count);
    b.push(1.5);
    while b.len() < count {
        b.push(next_b(*b.last().unwrap()));
    }
    Ok(BnSequence { b })
}

/// Terms up to and including the first one above `bound`.
pub fn generate_bn_until(bound: f64) -> BnSequence {
    let mut b = vec![1.5];
    while *b.last().unwrap() <= bound {
        b.push(next_b(*b.last().unwrap()));
    }
    BnSequence { b }
}

/// `exp(e²)`, below which `log log log y` is not defined.
pub fn beta_threshold() -> f64 {
    (std::f64::consts::E * std::f64::consts::E).exp()
}

/// `β(y) = (log log log y)^{1/2}` for `y ≥ exp(e²)`.
pub fn beta_fn(y: f64) -> Result<f64> {
    if !(y >= beta_threshold()) {
        return domain(format!("β(y) needs y ≥ exp(e²) ≈ 1618.18, got {y}"));
    }
    Ok(y.ln().ln().ln().sqrt())
}

fn y_value(lo: f64, hi: f64) -> Result<i64> {
    Ok((lo * (beta_fn(hi)? - beta_fn(lo)?)).floor() as i64)
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalAssignment {
    /// 1-based index: the interval is `(b_n, b_{n+1}]`.
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    /// `None` below `exp(e²)`, where `g ≡ 0`.
    pub y: Option<i64>,
    pub prime_count: usize,
    /// `⌊c (π(b_{n+1}) − π(b_n))⌋`
    pub cap: usize,
    pub minus_count: usize,
    pub plus_count: usize,
    /// `y_n` exceeded the cap; `−1` was assigned up to `min(y_n, prime_count)`.
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct ExampleThreeFunction {
    pub c: f64,
    pub x_max: f64,
    pub intervals: Vec<IntervalAssignment>,
    /// `g(p)` for every prime up to the end of the last interval.
    pub values: Vec<(u64, i64)>,
}

impl ExampleThreeFunction {
    pub fn value(&self, p: u64) -> Option<i64> {
        self.values
            .binary_search_by_key(&p, |&(q, _)| q)
            .ok()
            .map(|i| self.values[i].1)
    }

    pub fn prime_values(&self) -> PrimeValues {
        self.values
            .iter()
            .map(|&(p, v)| (p, Complex64::new(v as f64, 0.0)))
            .collect()
    }

    pub fn spec(&self) -> MultSpec<i64> {
        let table: BTreeMap<u64, i64> = self.values.iter().copied().collect();
        MultSpec::new(
            format!("example3(c={})", self.c),
            PrimeRule::Table(table),
            Completion::ZeroBeyondFirstPower,
        )
    }

    /// Largest `x` covered by the assignments.
    pub fn covered(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.hi.floor())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_prime_values_csv(&self.prime_values(), path)
    }

    pub fn truncation_events(&self) -> Vec<usize> {
        self.intervals.iter().filter(|iv| iv.truncated).map(|iv| iv.n).collect()
    }
}

/// Builds `g` on every interval `(b_n, b_{n+1}]` with `b_n < x_max`; the last
/// interval may extend past `x_max`.
pub fn build_example3(c: f64, x_max: f64) -> Result<ExampleThreeFunction> {
    if !(c > 0.0 && c < 1.0) {
        return domain(format!("c must lie in (0, 1), got {c}"));
    }
    let seq = generate_bn_until(x_max);
    if seq.b.iter().all(|&b| b < beta_threshold()) {
        return domain(format!("x_max = {x_max} is below the first b_n above exp(e²)"));
    }
    let end = seq.b.last().unwrap().floor() as u64;
    let ps = sieve_primes(end.max(2))?;
    let intervals: Vec<(IntervalAssignment, Vec<(u64, i64)>)> = (0..seq.count() - 1)
        .into_par_iter()
        .map(|i| assign_interval(&ps, c, i + 1, seq.b[i], seq.b[i + 1]))
        .collect::<Result<_>>()?;
    let mut values = Vec::new();
    let mut out = Vec::with_capacity(intervals.len());
    // primes ≤ b_1 = 3/2: none
    for (iv, vals) in intervals {
        values.extend(vals);
        out.push(iv);
    }
    Ok(ExampleThreeFunction {
        c,
        x_max,
        intervals: out,
        values,
    })
}

fn assign_interval(ps: &PrimeSet, c: f64, n: usize, lo: f64, hi: f64) -> Result<(IntervalAssignment, Vec<(u64, i64)>)> {
    let primes = ps.primes_between(lo, hi);
    let count = primes.len();
    let cap = (c * count as f64).floor() as usize;
    let y = if lo >= beta_threshold() { Some(y_value(lo, hi)?) } else { None };
    let (minus, plus, truncated) = match y {
        None => (0, 0, false),
        Some(y) => {
            let y = y.max(0) as usize;
            let minus = y.min(count);
            (minus, cap.saturating_sub(minus), y > cap)
        }
    };
    let vals = primes
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let v = if j < minus {
                -1
            } else if j < minus + plus {
                1
            } else {
                0
            };
            (p, v)
        })
        .collect();
    Ok((
        IntervalAssignment {
            n,
            lo,
            hi,
            y: y.map(|v| v.max(0)),
            prime_count: count,
            cap,
            minus_count: minus,
            plus_count: plus,
            truncated,
        },
        vals,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketRecord {
    pub n: usize,
    pub b_n: f64,
    pub y: i64,
    /// `b_n (2 log b_n)^{−4}`
    pub lower: f64,
    /// `b_n (log b_n)^{−2}`
    pub upper: f64,
    pub upper_holds: bool,
    pub holds: bool,
}

/// Evaluates `b_n (2 log b_n)^{−4} ≤ y_n ≤ b_n (log b_n)^{−2}` (`n` 1-based).
pub fn verify_bracketing(seq: &BnSequence, n: usize) -> Result<BracketRecord> {
    if n < 1 || n >= seq.count() {
        return domain(format!("index {n} needs b_{{n+1}}, sequence has {} terms", seq.count()));
    }
    let b = seq.get(n);
    let y = y_value(b, seq.get(n + 1))?;
    let l = b.ln();
    let lower = b / (2.0 * l).powi(4);
    let upper = b / (l * l);
    let yf = y as f64;
    Ok(BracketRecord {
        n,
        b_n: b,
        y,
        lower,
        upper,
        upper_holds: yf <= upper,
        holds: lower <= yf && yf <= upper,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketScan {
    pub records: Vec<BracketRecord>,
    /// Smallest index from which the bracket holds through the end of the scan.
    pub first_holding_index: Option<usize>,
    pub failures: Vec<usize>,
}

/// Every `n` with `lo ≤ b_n ≤ hi` (and `b_n ≥ exp(e²)`).
pub fn bracketing_scan(lo: f64, hi: f64) -> Result<BracketScan> {
    let seq = generate_bn_until(hi);
    let from = lo.max(beta_threshold());
    let records: Vec<BracketRecord> = (1..seq.count())
        .filter(|&n| seq.get(n) >= from && seq.get(n) <= hi)
        .map(|n| verify_bracketing(&seq, n))
        .collect::<Result<_>>()?;
    let failures: Vec<usize> = records.iter().filter(|r| !r.holds).map(|r| r.n).collect();
    let first_holding_index = match failures.last() {
        None => records.first().map(|r| r.n),
        Some(&last) => records.iter().map(|r| r.n).find(|&n| n > last),
    };
    Ok(BracketScan {
        records,
        first_holding_index,
        failures,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaGrowth {
    pub x: f64,
    pub c: f64,
    /// `Σ_{p ≤ x} (|g(p)| − g(p))/p`
    pub distance: f64,
    /// `2 β(x)`, absent below `exp(e²)`.
    pub two_beta: Option<f64>,
    pub distance_ratio: Option<f64>,
    pub lambda: f64,
    pub t_star: f64,
    pub lambda_ratio: Option<f64>,
    /// `Σ_{p ≤ x} |g(p)| log p / x`
    pub chebyshev_ratio: f64,
}

pub fn lambda_growth_diagnostic(f: &ExampleThreeFunction, x: f64, t_max: f64) -> Result<LambdaGrowth> {
    if x > f.covered() {
        return domain(format!("x = {x} exceeds the construction's range {}", f.covered()));
    }
    let in_range = f.values.iter().filter(|&&(p, _)| p as f64 <= x);
    let distance = in_range
        .clone()
        .map(|&(p, v)| (v.abs() - v) as f64 / p as f64)
        .collect::<KahanSum<f64>>()
        .value();
    let chebyshev_ratio = in_range
        .map(|&(p, v)| v.abs() as f64 * (p as f64).ln())
        .collect::<KahanSum<f64>>()
        .value()
        / x;
    let two_beta = beta_fn(x).ok().map(|b| 2.0 * b);
    let gp = f.prime_values();
    let lr = minimize_lambda(&gp, 1.5, x.max(1.5), t_max, crate::halasz::default_grid_step(x.max(3.0)), 40)?;
    Ok(LambdaGrowth {
        x,
        c: f.c,
        distance,
        two_beta,
        distance_ratio: two_beta.map(|b| distance / b),
        lambda: lr.lambda,
        t_star: lr.t_star,
        lambda_ratio: two_beta.map(|b| lr.lambda / b),
        chebyshev_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multcore::sieve_values;

    #[test]
    fn bn_examples() {
        let s = generate_bn(1000).unwrap();
        let b2 = 1.5 * (1.0 + 1.0 / 1.5f64.ln());
        assert!((s.get(2) - b2).abs() < 1e-14 * b2);
        assert!((s.get(2) - 5.199455).abs() < 1e-6);
        assert!((s.get(3) - 8.353404).abs() < 1e-6);
        let b3 = b2 * (1.0 + 1.0 / b2.ln());
        assert!((s.get(3) - b3).abs() < 1e-14 * b3);
        assert!(s.b.windows(2).all(|w| w[1] > w[0]));
        assert!(generate_bn(0).is_err());
        let u = generate_bn_until(1e6);
        assert!(*u.b.last().unwrap() > 1e6 && u.b[u.count() - 2] <= 1e6);
    }

    #[test]
    fn beta_examples() {
        assert!((beta_fn(beta_threshold()).unwrap() - 2f64.ln().sqrt()).abs() < 1e-12);
        assert!((beta_fn(beta_threshold()).unwrap() - 0.83255).abs() < 1e-5);
        let y = std::f64::consts::E.exp().exp();
        assert!((beta_fn(y).unwrap() - 1.0).abs() < 1e-12);
        assert!(beta_fn(1618.0).is_err());
    }

    #[test]
    fn construction_invariants() {
        let f = build_example3(0.5, 1e6).unwrap();
        assert!(build_example3(1.0, 1e6).is_err());
        assert!(build_example3(0.0, 1e6).is_err());
        assert!(build_example3(0.5, 1000.0).is_err());
        let ps = sieve_primes(f.covered() as u64).unwrap();
        // every prime appears exactly once, in its own interval
        assert_eq!(f.values.len(), ps.primes().len());
        assert!(f.values.iter().zip(ps.primes()).all(|(&(p, _), &q)| p == q));
        let mut idx = 0;
        for iv in &f.intervals {
            let inside = ps.primes_between(iv.lo, iv.hi);
            assert_eq!(inside.len(), iv.prime_count);
            let vals: Vec<i64> = f.values[idx..idx + inside.len()].iter().map(|&(_, v)| v).collect();
            idx += inside.len();
            match iv.y {
                None => assert!(vals.iter().all(|&v| v == 0)),
                Some(y) => {
                    let minus = vals.iter().filter(|&&v| v == -1).count();
                    assert_eq!(minus, (y as usize).min(iv.prime_count));
                    let nonzero = vals.iter().filter(|&&v| v != 0).count();
                    if !iv.truncated {
                        assert_eq!(nonzero, iv.cap);
                    }
                    // −1 block comes first, then +1, then zeros
                    let mut sorted = vals.clone();
                    sorted.sort_by_key(|&v| match v { -1 => 0, 1 => 1, _ => 2 });
                    assert_eq!(sorted, vals);
                }
            }
        }
        let spec = f.spec();
        let t = sieve_values(&spec, &ps, 10_000).unwrap();
        for &(p, v) in f.values.iter().take_while(|&&(p, _)| p <= 10_000) {
            assert_eq!(*t.get(p), v);
        }
        assert_eq!(*t.get(4), 0);
    }

    #[test]
    fn minus_block_tracks_beta_increment() {
        let f = build_example3(0.5, 1e7).unwrap();
        for iv in f.intervals.iter().filter(|iv| iv.lo > 1e5 && iv.hi <= 1e7) {
            let s: f64 = f
                .values
                .iter()
                .filter(|&&(p, v)| v == -1 && p as f64 > iv.lo && p as f64 <= iv.hi)
                .map(|&(p, _)| 1.0 / p as f64)
                .sum();
            let d = beta_fn(iv.hi).unwrap() - beta_fn(iv.lo).unwrap();
            assert!((s / d - 1.0).abs() < 0.2, "n = {}: {s} vs {d}", iv.n);
        }
    }

    #[test]
    fn bracketing() {
        let scan = bracketing_scan(1e4, 1e8).unwrap();
        assert!(scan.failures.is_empty());
        assert!(scan.records.iter().all(|r| r.upper_holds));
        assert_eq!(scan.first_holding_index, Some(46));
        assert_eq!(scan.records[0].n, 46);
        let seq = generate_bn(10).unwrap();
        assert!(verify_bracketing(&seq, 10).is_err());
        assert!(verify_bracketing(&seq, 2).is_err());
        // near the threshold the bracket is only asymptotic
        let head = bracketing_scan(0.0, 1e4).unwrap();
        assert_eq!(head.first_holding_index, Some(31));
    }

    #[test]
    fn growth_diagnostic() {
        let f = build_example3(0.5, 1e6).unwrap();
        let d = lambda_growth_diagnostic(&f, 1e6, 2.0).unwrap();
        assert!((0.25..=0.75).contains(&d.chebyshev_ratio), "{d:?}");
        assert!(d.distance > 0.0 && d.lambda <= d.distance + 1e-12);
        // the head below exp(e²) is zero, so only β(x) − β(exp(e²)) of the growth is visible
        assert!((d.distance_ratio.unwrap() - 0.1435).abs() < 0.01, "{d:?}");
        let head = beta_fn(1e6).unwrap() - beta_fn(beta_threshold()).unwrap();
        assert!((d.distance / (2.0 * head) - 1.0).abs() < 0.2);
        assert!(f.truncation_events().is_empty());
        let low = lambda_growth_diagnostic(&f, 1000.0, 2.0).unwrap();
        assert_eq!(low.distance, 0.0);
        assert!(low.two_beta.is_none());
        assert!(lambda_growth_diagnostic(&f, 1e8, 2.0).is_err());
    }
}
