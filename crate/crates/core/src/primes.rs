//! Prime generation, smallest-prime-factor tables and weighted prime sums.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{domain, io_err, Error, Result};
use crate::numeric::KahanSum;

const SPF_MAGIC: &[u8; 4] = b"SPF1";

/// Controls when the sieve switches from a linear sieve to fixed-size segments.
#[derive(Clone, Copy, Debug)]
pub struct SieveConfig {
    /// Limits above this are sieved segment by segment.
    pub segment_threshold: u64,
    pub segment_len: usize,
}

impl Default for SieveConfig {
    fn default() -> Self {
        SieveConfig {
            segment_threshold: 10_000_000,
            segment_len: 1 << 20,
        }
    }
}

/// Primes up to `limit` together with the smallest prime factor of every `n ≤ limit`.
#[derive(Clone, Debug)]
pub struct PrimeSet {
    limit: u64,
    primes: Vec<u64>,
    /// `spf[n]` for `0 ≤ n ≤ limit`; `spf[0] = 0`, `spf[1] = 1`.
    spf: Vec<u32>,
}

pub fn sieve_primes(limit: u64) -> Result<PrimeSet> {
    sieve_primes_with(limit, SieveConfig::default())
}

pub fn sieve_primes_with(limit: u64, config: SieveConfig) -> Result<PrimeSet> {
    if limit < 2 {
        return domain(format!("sieve limit must be at least 2, got {limit}"));
    }
    if limit > u32::MAX as u64 {
        return domain(format!("sieve limit {limit} exceeds the 32-bit factor table"));
    }
    let spf = if limit > config.segment_threshold {
        segmented_spf(limit as usize, config.segment_len.max(1024))
    } else {
        linear_spf(limit as usize)
    };
    Ok(PrimeSet::from_spf(limit, spf))
}

fn linear_spf(n: usize) -> Vec<u32> {
    let mut spf = vec![0u32; n + 1];
    let mut primes: Vec<u32> = Vec::new();
    if n >= 1 {
        spf[1] = 1;
    }
    for i in 2..=n {
        if spf[i] == 0 {
            spf[i] = i as u32;
            primes.push(i as u32);
        }
        let si = spf[i];
        for &p in &primes {
            if p > si || (p as usize) * i > n {
                break;
            }
            spf[p as usize * i] = p;
        }
    }
    spf
}

fn segmented_spf(n: usize, segment_len: usize) -> Vec<u32> {
    let root = (n as f64).sqrt() as usize + 1;
    let base_spf = linear_spf(root);
    let base: Vec<usize> = (2..=root).filter(|&i| base_spf[i] as usize == i).collect();

    let mut spf = vec![0u32; n + 1];
    spf[1] = 1;
    spf.par_chunks_mut(segment_len)
        .enumerate()
        .for_each(|(idx, seg)| {
            let lo = idx * segment_len;
            let hi = lo + seg.len();
            for &p in &base {
                if p * p >= hi {
                    break;
                }
                let mut m = (lo.div_ceil(p) * p).max(p * p);
                while m < hi {
                    let slot = &mut seg[m - lo];
                    if *slot == 0 {
                        *slot = p as u32;
                    }
                    m += p;
                }
            }
            for (off, slot) in seg.iter_mut().enumerate() {
                let v = lo + off;
                if v >= 2 && *slot == 0 {
                    *slot = v as u32;
                }
            }
        });
    spf
}

impl PrimeSet {
    fn from_spf(limit: u64, spf: Vec<u32>) -> PrimeSet {
        let primes = (2..=limit as usize)
            .filter(|&n| spf[n] as usize == n)
            .map(|n| n as u64)
            .collect();
        PrimeSet { limit, primes, spf }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    /// Primes `p ≤ x`.
    pub fn primes_up_to(&self, x: f64) -> &[u64] {
        let end = self.primes.partition_point(|&p| (p as f64) <= x);
        &self.primes[..end]
    }

    /// Primes in the half-open interval `(u, v]`.
    pub fn primes_between(&self, u: f64, v: f64) -> &[u64] {
        let start = self.primes.partition_point(|&p| (p as f64) <= u);
        let end = self.primes.partition_point(|&p| (p as f64) <= v);
        &self.primes[start..end.max(start)]
    }

    pub fn prime_count(&self, x: f64) -> usize {
        self.primes_up_to(x).len()
    }

    pub fn spf(&self, n: u64) -> u64 {
        self.spf[n as usize] as u64
    }

    pub fn spf_table(&self) -> &[u32] {
        &self.spf
    }

    pub fn is_prime(&self, n: u64) -> bool {
        n >= 2 && n <= self.limit && self.spf[n as usize] as u64 == n
    }

    /// Prime factorization of `n ≤ limit` as `(p, e)` pairs in increasing `p`.
    pub fn factorize(&self, mut n: u64) -> Vec<(u64, u32)> {
        assert!(n <= self.limit, "{n} exceeds sieve limit {}", self.limit);
        let mut out = Vec::new();
        while n > 1 {
            let p = self.spf(n);
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        out
    }

    /// Every prime power `q = p^k ≤ x`, in increasing order of `q`.
    pub fn prime_powers(&self, x: f64) -> Vec<PrimePower> {
        let top = x.floor().min(self.limit as f64) as u64;
        let mut out = Vec::new();
        for q in 2..=top {
            let p = self.spf(q);
            let mut m = q;
            let mut k = 0;
            while m % p == 0 {
                m /= p;
                k += 1;
            }
            if m == 1 {
                out.push(PrimePower { q, p, k });
            }
        }
        out
    }

    /// Writes the smallest-prime-factor table: magic `SPF1`, four zero bytes,
    /// the limit as a little-endian `u64`, then `spf[0..=limit]` as little-endian `u32`.
    pub fn write_spf_cache(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        let mut header = [0u8; 16];
        header[..4].copy_from_slice(SPF_MAGIC);
        header[8..].copy_from_slice(&self.limit.to_le_bytes());
        w.write_all(&header).map_err(io_err(path))?;
        for v in &self.spf {
            w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))
    }

    pub fn read_spf_cache(path: &Path) -> Result<PrimeSet> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut r = BufReader::new(file);
        let mut header = [0u8; 16];
        r.read_exact(&mut header).map_err(io_err(path))?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message,
        };
        if &header[..4] != SPF_MAGIC {
            return Err(bad("missing SPF1 magic".into()));
        }
        let limit = u64::from_le_bytes(header[8..].try_into().unwrap());
        if !(2..=u32::MAX as u64).contains(&limit) {
            return Err(bad(format!("implausible limit {limit}")));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(io_err(path))?;
        if bytes.len() != 4 * (limit as usize + 1) {
            return Err(bad(format!(
                "expected {} table bytes, found {}",
                4 * (limit + 1),
                bytes.len()
            )));
        }
        let spf: Vec<u32> = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        for n in 2..=limit as usize {
            let p = spf[n] as usize;
            if p < 2 || n % p != 0 || spf[p] as usize != p {
                return Err(bad(format!("corrupt entry spf[{n}] = {p}")));
            }
        }
        Ok(PrimeSet::from_spf(limit, spf))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrimePower {
    pub q: u64,
    pub p: u64,
    pub k: u32,
}

/// `Σ_{p ≤ x} weight(p) · log p`; primes with zero weight are skipped.
pub fn chebyshev_sum(ps: &PrimeSet, x: f64, weight: impl Fn(u64) -> f64) -> f64 {
    let mut acc = KahanSum::new();
    for &p in ps.primes_up_to(x) {
        let w = weight(p);
        if w != 0.0 {
            acc.add(w * (p as f64).ln());
        }
    }
    acc.value()
}

/// `Σ_{q ≤ x} weight(q) · log p` over prime powers `q = p^k`.
pub fn chebyshev_prime_power_sum(
    ps: &PrimeSet,
    x: f64,
    weight: impl Fn(PrimePower) -> f64,
) -> f64 {
    ps.prime_powers(x)
        .into_iter()
        .map(|pp| weight(pp) * (pp.p as f64).ln())
        .collect::<KahanSum<f64>>()
        .value()
}

/// `sup_{1 ≤ y ≤ x} y⁻¹ Σ_{q ≤ y} g(q) log q` over prime powers.
///
/// The numerator only changes at prime powers and `y⁻¹` decreases between
/// them, so the supremum is attained at `y = 1` (value 0) or at a prime power.
pub fn prime_power_sup(ps: &PrimeSet, x: f64, g: impl Fn(PrimePower) -> f64) -> f64 {
    let mut acc = KahanSum::new();
    let mut best = 0.0f64;
    for pp in ps.prime_powers(x) {
        acc.add(g(pp) * (pp.q as f64).ln());
        best = best.max(acc.value() / pp.q as f64);
    }
    best
}

/// `Σ_{u < p ≤ v} weight(p) / p`.
pub fn prime_reciprocal_sum(
    ps: &PrimeSet,
    u: f64,
    v: f64,
    weight: impl Fn(u64) -> f64,
) -> Result<f64> {
    if u < 0.0 || u > v {
        return domain(format!("need 0 ≤ u ≤ v, got u = {u}, v = {v}"));
    }
    Ok(ps
        .primes_between(u, v)
        .iter()
        .map(|&p| weight(p) / p as f64)
        .collect::<KahanSum<f64>>()
        .value())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division_primes(n: u64) -> Vec<u64> {
        (2..=n)
            .filter(|&m| (2..).take_while(|d| d * d <= m).all(|d| m % d != 0))
            .collect()
    }

    #[test]
    fn small_limits() {
        assert_eq!(sieve_primes(10).unwrap().primes(), &[2, 3, 5, 7]);
        assert_eq!(sieve_primes(2).unwrap().primes(), &[2]);
        assert!(matches!(sieve_primes(1), Err(Error::Domain(_))));
        assert!(sieve_primes(0).is_err());
    }

    #[test]
    fn matches_trial_division_up_to_ten_thousand() {
        let oracle = trial_division_primes(10_000);
        for n in [2u64, 3, 4, 97, 100, 1000, 7919, 10_000] {
            let ps = sieve_primes(n).unwrap();
            let expected: Vec<u64> = oracle.iter().copied().filter(|&p| p <= n).collect();
            assert_eq!(ps.primes(), &expected[..], "limit {n}");
        }
    }

    #[test]
    fn segmented_agrees_with_linear() {
        let config = SieveConfig {
            segment_threshold: 0,
            segment_len: 1024,
        };
        let seg = sieve_primes_with(200_003, config).unwrap();
        let lin = sieve_primes(200_003).unwrap();
        assert_eq!(seg.primes(), lin.primes());
        assert_eq!(seg.spf_table(), lin.spf_table());
    }

    #[test]
    fn spf_is_a_prime_divisor() {
        let ps = sieve_primes(20_000).unwrap();
        for n in 2..=20_000u64 {
            let p = ps.spf(n);
            assert_eq!(n % p, 0);
            assert!(ps.is_prime(p));
            assert!((2..p).all(|d| n % d != 0));
        }
    }

    #[test]
    fn prime_count_at_one_million() {
        let ps = sieve_primes(1_000_000).unwrap();
        assert_eq!(ps.primes().len(), 78_498);
        // independent oracle: odd-only Eratosthenes
        let n = 1_000_000usize;
        let mut composite = vec![false; n / 2 + 1];
        let mut count = 1;
        let mut i = 3;
        while i <= n {
            if !composite[i / 2] {
                count += 1;
                let mut j = i * i;
                while j <= n {
                    composite[j / 2] = true;
                    j += 2 * i;
                }
            }
            i += 2;
        }
        assert_eq!(count, 78_498);
    }

    #[test]
    fn chebyshev_examples() {
        let ps = sieve_primes(1000).unwrap();
        assert!((chebyshev_sum(&ps, 10.0, |_| 1.0) - 210f64.ln()).abs() < 1e-12);
        assert_eq!(chebyshev_sum(&ps, 1.0, |_| 1.0), 0.0);
        let oracle: f64 = trial_division_primes(100).iter().map(|&p| (p as f64).ln()).sum();
        let v = chebyshev_sum(&ps, 100.0, |_| 1.0) / 100.0;
        assert!((v - oracle / 100.0).abs() < 1e-12);
        assert!((v - 0.837284).abs() < 1e-6);
    }

    #[test]
    fn chebyshev_is_monotone_for_nonnegative_weights() {
        let ps = sieve_primes(5000).unwrap();
        let w = |p: u64| ((p * 7919) % 13) as f64 / 13.0;
        let mut prev = 0.0;
        for x in (1..=5000).step_by(37) {
            let v = chebyshev_sum(&ps, x as f64, w);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn prime_power_sup_matches_scan_over_all_y() {
        let ps = sieve_primes(2000).unwrap();
        let g = |pp: PrimePower| if pp.k == 1 { 1.0 } else { 0.5 };
        let fast = prime_power_sup(&ps, 2000.0, g);
        // oracle: evaluate the ratio at every integer y and just below each integer
        let pps = ps.prime_powers(2000.0);
        let mut best = 0.0f64;
        for y in 1..=2000u64 {
            let s: f64 = pps
                .iter()
                .filter(|pp| pp.q <= y)
                .map(|pp| g(*pp) * (pp.q as f64).ln())
                .sum();
            best = best.max(s / y as f64);
        }
        assert!((fast - best).abs() < 1e-12);
    }

    #[test]
    fn reciprocal_sums() {
        let ps = sieve_primes(1_000_000).unwrap();
        let v = prime_reciprocal_sum(&ps, 1.0, 10.0, |_| 1.0).unwrap();
        assert!((v - (0.5 + 1.0 / 3.0 + 0.2 + 1.0 / 7.0)).abs() < 1e-12);
        assert!((v - 1.17619).abs() < 1e-5);
        assert_eq!(prime_reciprocal_sum(&ps, 10.0, 10.0, |_| 1.0).unwrap(), 0.0);
        let oracle: f64 = trial_division_primes(100)
            .iter()
            .filter(|&&p| p > 10)
            .map(|&p| 1.0 / p as f64)
            .sum();
        let v = prime_reciprocal_sum(&ps, 10.0, 100.0, |_| 1.0).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.626627).abs() < 1e-6);
        assert!(prime_reciprocal_sum(&ps, 11.0, 10.0, |_| 1.0).is_err());
    }

    #[test]
    fn mertens_band() {
        const MERTENS: f64 = 0.26149;
        let ps = sieve_primes(1_000_000).unwrap();
        for x in [1e4, 1e5, 1e6] {
            let s = prime_reciprocal_sum(&ps, 1.0, x, |_| 1.0).unwrap();
            assert!((s - (x.ln().ln() + MERTENS)).abs() <= 0.05, "x = {x}");
        }
    }

    #[test]
    fn spf_cache_round_trip_and_corruption() {
        let ps = sieve_primes(10_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spf.bin");
        ps.write_spf_cache(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SPF1");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 10_000);
        assert_eq!(bytes.len(), 16 + 4 * 10_001);
        let back = PrimeSet::read_spf_cache(&path).unwrap();
        assert_eq!(back.primes(), ps.primes());

        let mut corrupt = bytes.clone();
        corrupt[16 + 4 * 12] = 5;
        std::fs::write(&path, &corrupt).unwrap();
        assert!(PrimeSet::read_spf_cache(&path).is_err());
    }
}
