use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{domain, io_err, Error, Result};
use crate::numeric::{Scalar, ValueMode};
use crate::primes::PrimeSet;

use super::spec::MultSpec;

/// Dense values `v[1..=limit]` of a multiplicative function.
#[derive(Clone, Debug, PartialEq)]
pub struct SieveTable<T> {
    limit: u64,
    /// Index 0 is unused and holds zero.
    values: Vec<T>,
    spec_id: String,
}

impl<T: Scalar> SieveTable<T> {
    /// Builds a table from `v[1..=limit]`.
    pub fn from_values(spec_id: impl Into<String>, values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return domain("a table needs at least the value at 1");
        }
        let mut v = Vec::with_capacity(values.len() + 1);
        v.push(T::zero());
        v.extend(values);
        Ok(SieveTable {
            limit: (v.len() - 1) as u64,
            values: v,
            spec_id: spec_id.into(),
        })
    }

    pub(crate) fn from_raw(spec_id: impl Into<String>, values: Vec<T>) -> Self {
        debug_assert!(values.len() >= 2);
        SieveTable {
            limit: (values.len() - 1) as u64,
            values,
            spec_id: spec_id.into(),
        }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn spec_id(&self) -> &str {
        &self.spec_id
    }

    pub fn mode(&self) -> ValueMode {
        T::MODE
    }

    pub fn get(&self, n: u64) -> &T {
        assert!(n >= 1 && n <= self.limit, "index {n} outside 1..={}", self.limit);
        &self.values[n as usize]
    }

    /// `v[1..=limit]`.
    pub fn values(&self) -> &[T] {
        &self.values[1..]
    }

    /// `(n, v[n])` for `1 ≤ n ≤ limit`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &T)> + '_ {
        self.values.iter().enumerate().skip(1).map(|(n, v)| (n as u64, v))
    }

    pub fn map<U: Scalar>(&self, spec_id: impl Into<String>, f: impl Fn(u64, &T) -> U) -> SieveTable<U> {
        let mut values = Vec::with_capacity(self.values.len());
        values.push(U::zero());
        values.extend(self.iter().map(|(n, v)| f(n, v)));
        SieveTable::from_raw(spec_id, values)
    }

    /// Restriction to `1..=limit`.
    pub fn truncate(&self, limit: u64) -> Result<SieveTable<T>> {
        if limit == 0 || limit > self.limit {
            return domain(format!("cannot truncate table of limit {} to {limit}", self.limit));
        }
        Ok(SieveTable::from_raw(
            self.spec_id.clone(),
            self.values[..=limit as usize].to_vec(),
        ))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# spec_id={} mode={}", self.spec_id, T::MODE).map_err(io_err(path))?;
        writeln!(w, "n,value").map_err(io_err(path))?;
        for (n, v) in self.iter() {
            writeln!(w, "{n},{}", v.to_text()).map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))
    }

    pub fn read_csv(path: &Path) -> Result<SieveTable<T>> {
        let file = File::open(path).map_err(io_err(path))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty file".into()))?
            .map_err(io_err(path))?;
        let meta = header
            .strip_prefix("# ")
            .ok_or_else(|| parse_err(1, "expected '# spec_id=… mode=…' header".into()))?;
        let mut spec_id = None;
        let mut mode = None;
        for field in meta.split_whitespace() {
            match field.split_once('=') {
                Some(("spec_id", v)) => spec_id = Some(v.to_string()),
                Some(("mode", v)) => mode = Some(v.to_string()),
                _ => return Err(parse_err(1, format!("unknown header field '{field}'"))),
            }
        }
        let spec_id = spec_id.ok_or_else(|| parse_err(1, "header lacks spec_id".into()))?;
        let mode = mode.ok_or_else(|| parse_err(1, "header lacks mode".into()))?;
        if mode != T::MODE.to_string() {
            return Err(parse_err(1, format!("table mode '{mode}' but {} requested", T::MODE)));
        }
        match lines.next() {
            Some(Ok(l)) if l.trim() == "n,value" => {}
            _ => return Err(parse_err(2, "expected column header 'n,value'".into())),
        }
        let mut values = vec![T::zero()];
        for (i, line) in lines.enumerate() {
            let lineno = i + 3;
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let (n, v) = line
                .split_once(',')
                .ok_or_else(|| parse_err(lineno, "expected 'n,value'".into()))?;
            let n: u64 = n.trim().parse().map_err(|e| parse_err(lineno, format!("bad index: {e}")))?;
            if n != values.len() as u64 {
                return Err(parse_err(lineno, format!("expected n = {}, found {n}", values.len())));
            }
            values.push(T::parse_text(v).map_err(|e| parse_err(lineno, e))?);
        }
        if values.len() < 2 {
            return Err(parse_err(3, "no rows".into()));
        }
        Ok(SieveTable::from_raw(spec_id, values))
    }
}

/// Values of `spec` on `1..=limit` by smallest-prime-factor decomposition.
///
/// Prime-power values come from the spec; every other `n = p^e m` with
/// `p ∤ m` is filled as `v[p^e]·v[m]`, one multiplication per entry.
pub fn sieve_values<T: Scalar>(spec: &MultSpec<T>, ps: &PrimeSet, limit: u64) -> Result<SieveTable<T>> {
    if limit == 0 {
        return domain("sieve limit must be at least 1");
    }
    if limit > ps.limit() && limit >= 2 {
        return domain(format!("prime set covers {} but table needs {limit}", ps.limit()));
    }
    let n = limit as usize;
    let mut values = vec![T::zero(); n + 1];
    values[1] = T::one();
    for &p in ps.primes_up_to(limit as f64) {
        let mut kmax = 0u32;
        let mut q = 1u64;
        while q <= limit / p {
            q *= p;
            kmax += 1;
        }
        let vals = spec.prime_power_values(p, kmax)?;
        let mut q = 1u64;
        for v in vals.into_iter().skip(1) {
            q *= p;
            values[q as usize] = v;
        }
    }
    // prime-power part of each n, built incrementally
    let mut pe = vec![0u32; n + 1];
    for m in 2..=n {
        let p = ps.spf(m as u64) as usize;
        let rest = m / p;
        pe[m] = if rest > 1 && ps.spf(rest as u64) as usize == p {
            pe[rest] * p as u32
        } else {
            p as u32
        };
        let q = pe[m] as usize;
        if q != m {
            values[m] = values[q].mul_ref(&values[m / q]);
        }
    }
    Ok(SieveTable::from_raw(spec.id.clone(), values))
}

/// `(f * g)(n) = Σ_{d | n} f(d) g(n/d)`.
pub fn dirichlet_convolve<T: Scalar>(f: &SieveTable<T>, g: &SieveTable<T>) -> Result<SieveTable<T>> {
    if f.limit != g.limit {
        return domain(format!("convolving tables of limits {} and {}", f.limit, g.limit));
    }
    let n = f.limit as usize;
    let mut h = vec![T::zero(); n + 1];
    for d in 1..=n {
        let fd = &f.values[d];
        if fd.is_zero_value() {
            continue;
        }
        for m in 1..=n / d {
            let gm = &g.values[m];
            if !gm.is_zero_value() {
                h[d * m] = h[d * m].add_ref(&fd.mul_ref(gm));
            }
        }
    }
    Ok(SieveTable::from_raw(format!("({})*({})", f.spec_id, g.spec_id), h))
}

/// The unit `ε = [1, 0, 0, …]` of Dirichlet convolution.
pub fn convolution_identity<T: Scalar>(limit: u64) -> SieveTable<T> {
    let mut v = vec![T::zero(); limit as usize + 1];
    v[1] = T::one();
    SieveTable::from_raw("identity", v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multcore::spec::{catalog, Completion, HeckeWeight, PrimeRule};
    use crate::primes::sieve_primes;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use std::collections::BTreeMap;

    #[test]
    fn constant_one() {
        let ps = sieve_primes(100).unwrap();
        let t = sieve_values(&catalog::one::<i64>(), &ps, 100).unwrap();
        assert!(t.values().iter().all(|&v| v == 1));
    }

    #[test]
    fn mobius_to_ten() {
        let ps = sieve_primes(10).unwrap();
        let t = sieve_values(&catalog::mobius::<i64>(), &ps, 10).unwrap();
        assert_eq!(t.values(), &[1, -1, -1, 0, -1, 1, -1, 0, 0, 1]);
    }

    #[test]
    fn tau_twelve_from_prime_values() {
        let mut primes = BTreeMap::new();
        primes.insert(2, BigInt::from(-24));
        primes.insert(3, BigInt::from(252));
        primes.insert(5, BigInt::from(4830));
        primes.insert(7, BigInt::from(-16744));
        primes.insert(11, BigInt::from(534612));
        let spec = MultSpec::new("tau", PrimeRule::Table(primes), Completion::Hecke(HeckeWeight::Integral(12)));
        let ps = sieve_primes(12).unwrap();
        let t = sieve_values(&spec, &ps, 12).unwrap();
        assert_eq!(t.get(12), &BigInt::from(-370944));
        assert_eq!(t.get(4), &BigInt::from(-1472));
    }

    #[test]
    fn missing_prime_is_a_spec_error() {
        let mut primes = BTreeMap::new();
        primes.insert(2, 1i64);
        let spec = MultSpec::new("partial", PrimeRule::Table(primes), Completion::ZeroBeyondFirstPower);
        let ps = sieve_primes(10).unwrap();
        let err = sieve_values(&spec, &ps, 10).unwrap_err();
        assert!(err.to_string().contains("prime 3"), "{err}");
    }

    #[test]
    fn sieve_matches_factorization_for_every_completion() {
        let ps = sieve_primes(10_000).unwrap();
        let rule = |p: u64| BigRational::new(BigInt::from((p % 7) as i64 - 3), BigInt::from(2));
        let mut explicit = BTreeMap::new();
        for &p in ps.primes() {
            let mut q = p;
            let mut k = 1i64;
            loop {
                explicit.insert(q, BigRational::new(BigInt::from(k * (p % 5) as i64 - 1), BigInt::from(k)));
                if q > 10_000 / p {
                    break;
                }
                q *= p;
                k += 1;
            }
        }
        let completions = vec![
            Completion::ZeroBeyondFirstPower,
            Completion::CompletelyMultiplicative,
            Completion::Exponential,
            Completion::Hecke(HeckeWeight::Integral(4)),
            Completion::Hecke(HeckeWeight::Normalized),
            Completion::ExplicitTable(explicit),
        ];
        for c in completions {
            let spec = MultSpec::from_fn("s", rule, c);
            let t = sieve_values(&spec, &ps, 10_000).unwrap();
            for n in 1..=10_000u64 {
                assert_eq!(t.get(n), &spec.value_by_factorization(n).unwrap(), "n = {n}");
            }
        }
    }

    #[test]
    fn divisor_count_by_convolution() {
        let ps = sieve_primes(1000).unwrap();
        let one = sieve_values(&catalog::one::<i64>(), &ps, 1000).unwrap();
        let d = dirichlet_convolve(&one, &one).unwrap();
        assert_eq!(d.get(6), &4);
        let divisor = sieve_values(&catalog::divisor::<i64>(), &ps, 1000).unwrap();
        assert_eq!(d.values(), divisor.values());
    }

    #[test]
    fn mobius_inverts_one() {
        let ps = sieve_primes(2000).unwrap();
        let one = sieve_values(&catalog::one::<BigInt>(), &ps, 2000).unwrap();
        let mu = sieve_values(&catalog::mobius::<BigInt>(), &ps, 2000).unwrap();
        let eps = convolution_identity::<BigInt>(2000);
        assert_eq!(dirichlet_convolve(&mu, &one).unwrap().values(), eps.values());
        assert_eq!(dirichlet_convolve(&one, &eps).unwrap().values(), one.values());
    }

    #[test]
    fn convolution_limit_mismatch() {
        let ps = sieve_primes(20).unwrap();
        let a = sieve_values(&catalog::one::<i64>(), &ps, 10).unwrap();
        let b = sieve_values(&catalog::one::<i64>(), &ps, 20).unwrap();
        assert!(matches!(dirichlet_convolve(&a, &b), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_round_trip_exact_integers() {
        let ps = sieve_primes(500).unwrap();
        let t = sieve_values(&catalog::divisor::<BigInt>(), &ps, 500).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        t.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# spec_id=divisor mode=integer\nn,value\n1,1\n2,2\n"));
        let back = SieveTable::<BigInt>::read_csv(&path).unwrap();
        assert_eq!(back, t);
        assert!(SieveTable::<f64>::read_csv(&path).is_err());
    }

    #[test]
    fn csv_rejects_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "# spec_id=x mode=integer\nn,value\n1,1\n3,4\n").unwrap();
        match SieveTable::<i64>::read_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
