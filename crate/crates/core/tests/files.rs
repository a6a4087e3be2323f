use num_complex::Complex64;

use meanvalue_core::halasz::{prime_values_from_fn, read_prime_values_csv, write_prime_values_csv};
use meanvalue_core::heckeforms::{eta24_expand, load_coeff_table, write_coeff_table, CoeffSource};
use meanvalue_core::multcore::{catalog, sieve_values, HeckeWeight, SieveTable};
use meanvalue_core::primes::{sieve_primes, PrimeSet};
use meanvalue_core::Error;

#[test]
fn tau_table_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tau.csv");
    let t = eta24_expand(2000).unwrap();
    write_coeff_table(&t, &path).unwrap();
    let back = load_coeff_table(&path, HeckeWeight::Integral(12)).unwrap();
    assert_eq!(back.integers().unwrap().values(), t.integers().unwrap().values());
    match &back.source {
        CoeffSource::ExternalFile { sha256, .. } => assert_eq!(sha256.len(), 64),
        other => panic!("unexpected source {other:?}"),
    }
}

#[test]
fn corrupted_tau_is_rejected_with_the_offending_pair() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tau.csv");
    write_coeff_table(&eta24_expand(100).unwrap(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    // τ(6) = −6048
    let corrupted = text.replace("\n6,-6048\n", "\n6,-6047\n");
    assert_ne!(text, corrupted);
    std::fs::write(&path, corrupted).unwrap();
    let err = load_coeff_table(&path, HeckeWeight::Integral(12)).unwrap_err();
    assert!(matches!(err, Error::NotMultiplicative { m: 2, n: 3 }), "{err}");
    // the wrong weight breaks the recurrence at 4 = 2²
    write_coeff_table(&eta24_expand(100).unwrap(), &path).unwrap();
    let err = load_coeff_table(&path, HeckeWeight::Integral(10)).unwrap_err();
    assert!(matches!(err, Error::RecurrenceViolation { prime: 2, exponent: 2 }), "{err}");
}

#[test]
fn sieve_table_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mu.csv");
    let ps = sieve_primes(500).unwrap();
    let mu = sieve_values(&catalog::mobius::<i64>(), &ps, 500).unwrap();
    mu.write_csv(&path).unwrap();
    let back = SieveTable::<i64>::read_csv(&path).unwrap();
    assert_eq!(back.values(), mu.values());
}

#[test]
fn prime_values_and_spf_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ps = sieve_primes(1000).unwrap();
    let gp = prime_values_from_fn(&ps, 1000.0, |p| Complex64::from_polar(1.0, (p as f64).ln()));
    let path = dir.path().join("gp.csv");
    write_prime_values_csv(&gp, &path).unwrap();
    assert_eq!(read_prime_values_csv(&path).unwrap(), gp);

    let cache = dir.path().join("spf.bin");
    ps.write_spf_cache(&cache).unwrap();
    let back = PrimeSet::read_spf_cache(&cache).unwrap();
    assert_eq!(back.primes(), ps.primes());
    assert_eq!(back.spf_table(), ps.spf_table());
}
