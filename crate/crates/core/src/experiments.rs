//! Experiments over coefficient tables: sign equidistribution, densities in
//! residue classes, the Lemma 10 chain of prime sums, Wirsing's asymptotic,
//! and the modulus sweep. Each report carries named checks; a failed check is
//! an assertion failure for the caller to act on.

use num_complex::Complex64;
use num_integer::Integer;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::characters::{
    detect_exceptional_quadratic, DirichletCharacter, ExceptionalScan, DEFAULT_EXCEPTIONAL_THRESHOLD,
};
use crate::error::{domain, Result};
use crate::heckeforms::{moment_sum, CoeffTable, MomentWeight, NormalizedCoeffs};
use crate::multcore::SieveTable;
use crate::numeric::{KahanSum, Scalar};
use crate::primes::PrimeSet;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Checkpoints used when none are given.
pub fn default_checkpoints() -> Vec<f64> {
    vec![1e4, 1e5, 1e6]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn validate_checkpoints(cps: &[f64], limit: u64) -> Result<()> {
    if cps.is_empty() {
        return domain("at least one checkpoint is required");
    }
    if cps.windows(2).any(|w| w[1] <= w[0]) {
        return domain(format!("checkpoints must increase strictly, got {cps:?}"));
    }
    if cps[0] < 2.0 {
        return domain(format!("checkpoints must be at least 2, got {}", cps[0]));
    }
    let last = *cps.last().unwrap();
    if last.floor() > limit as f64 {
        return domain(format!("checkpoint {last} exceeds table limit {limit}"));
    }
    Ok(())
}

/// Index `i` such that checkpoint `i` is the first with `n ≤ ⌊x_i⌋`.
fn checkpoint_tops(cps: &[f64]) -> Vec<u64> {
    cps.iter().map(|x| x.floor() as u64).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SignReport {
    pub x_checkpoints: Vec<f64>,
    /// `S(x)`: number of `n ≤ x` with `a_n ≠ 0`.
    pub s: Vec<u64>,
    pub negative: Vec<u64>,
    pub frac_neg: Vec<f64>,
    pub frac_pos: Vec<f64>,
    pub deviation: Vec<f64>,
    /// `γ = 1/24000` of the rate `(log x)^{−γ}`; recorded, not tested.
    pub gamma_const: f64,
    pub slack: f64,
    /// Indices `n` with `a_n = 0`.
    pub vanishing: Vec<u64>,
    pub checks: Vec<Check>,
}

pub const SIGN_TREND_SLACK: f64 = 0.01;

pub fn run_sign_equidistribution(coeffs: &CoeffTable, checkpoints: &[f64]) -> Result<SignReport> {
    validate_checkpoints(checkpoints, coeffs.limit())?;
    let tops = checkpoint_tops(checkpoints);
    let (mut s, mut neg) = (0u64, 0u64);
    let mut report = SignReport {
        x_checkpoints: checkpoints.to_vec(),
        s: Vec::new(),
        negative: Vec::new(),
        frac_neg: Vec::new(),
        frac_pos: Vec::new(),
        deviation: Vec::new(),
        gamma_const: 1.0 / 24000.0,
        slack: SIGN_TREND_SLACK,
        vanishing: Vec::new(),
        checks: Vec::new(),
    };
    let mut n = 1u64;
    for &top in &tops {
        while n <= top {
            match coeffs.sign_at(n) {
                0 => report.vanishing.push(n),
                -1 => {
                    s += 1;
                    neg += 1;
                }
                _ => s += 1,
            }
            n += 1;
        }
        let fneg = if s == 0 { 0.0 } else { neg as f64 / s as f64 };
        let fpos = if s == 0 { 0.0 } else { (s - neg) as f64 / s as f64 };
        report.s.push(s);
        report.negative.push(neg);
        report.frac_neg.push(fneg);
        report.frac_pos.push(fpos);
        report.deviation.push((fneg - 0.5).abs());
    }
    let trend = report.deviation.windows(2).all(|w| w[1] <= w[0] + SIGN_TREND_SLACK);
    report.checks.push(Check::new(
        "deviation_nonincreasing",
        trend,
        format!("deviations {:?}, slack {}", report.deviation, SIGN_TREND_SLACK),
    ));
    let last = *report.frac_neg.last().unwrap();
    let generic = last > 0.0 && last < 1.0;
    report.checks.push(Check::new(
        "generic_sign_pattern",
        generic,
        format!("negative fraction {last} at x = {}", checkpoints.last().unwrap()),
    ));
    report.checks.push(Check::new(
        "negative_fraction_band",
        (0.45..=0.55).contains(&last),
        format!("{last} against [0.45, 0.55]"),
    ));
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassRow {
    pub a: u64,
    /// `Σ_{n ≤ x, n ≡ a} w(n)` per checkpoint.
    pub sums: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    /// Number of `n ≤ x_max` in the class with `w(n) ≠ 0`.
    pub terms: u64,
    pub small_sample: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityReport {
    #[serde(rename = "D")]
    pub modulus: u64,
    pub weight: String,
    pub x_checkpoints: Vec<f64>,
    /// `S_D(x) = Σ_{n ≤ x, (n, D) = 1} w(n)`
    pub s_d: Vec<f64>,
    pub classes: Vec<ClassRow>,
    /// `|Σ_a γ̂(a) − 1|` per checkpoint.
    pub partition_error: Vec<f64>,
    /// `S_D(x) (log x)^{1/2} / x`
    pub scaling: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exceptional: Option<ExceptionalScan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<Prediction>,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    /// 1, 2 or 3, the case of the classification.
    pub case: u8,
    /// `Π_{p ≤ cutoff} ψ_p`
    pub psi_product: f64,
    pub psi_cutoff: u64,
}

pub const SMALL_SAMPLE: u64 = 100;
pub const PSI_CUTOFF: u64 = 10_000;

/// Class sums of `w` over the reduced residues mod `D` at each checkpoint.
fn progression_sums(
    w: impl Fn(u64) -> f64,
    modulus: u64,
    checkpoints: &[f64],
    weight: &str,
) -> DensityReport {
    let tops = checkpoint_tops(checkpoints);
    let residues: Vec<u64> = (0..modulus).filter(|&a| a.gcd(&modulus) == 1).collect();
    let mut slot = vec![usize::MAX; modulus as usize];
    for (i, &a) in residues.iter().enumerate() {
        slot[a as usize] = i;
    }
    let mut acc: Vec<KahanSum<f64>> = vec![KahanSum::new(); residues.len()];
    let mut terms = vec![0u64; residues.len()];
    let mut total = KahanSum::new();
    let mut sums: Vec<Vec<f64>> = vec![Vec::new(); residues.len()];
    let mut s_d = Vec::new();
    let mut n = 1u64;
    for &top in &tops {
        while n <= top {
            let i = slot[(n % modulus) as usize];
            if i != usize::MAX {
                let v = w(n);
                if v != 0.0 {
                    acc[i].add(v);
                    total.add(v);
                    terms[i] += 1;
                }
            }
            n += 1;
        }
        for (i, a) in acc.iter().enumerate() {
            sums[i].push(a.value());
        }
        s_d.push(total.value());
    }
    let classes: Vec<ClassRow> = residues
        .iter()
        .enumerate()
        .map(|(i, &a)| ClassRow {
            a,
            gamma_hat: sums[i]
                .iter()
                .zip(&s_d)
                .map(|(&v, &s)| if s == 0.0 { 0.0 } else { v / s })
                .collect(),
            sums: std::mem::take(&mut sums[i]),
            terms: terms[i],
            small_sample: terms[i] < SMALL_SAMPLE,
            predicted: None,
        })
        .collect();
    let partition_error = (0..checkpoints.len())
        .map(|j| {
            let g: f64 = classes.iter().map(|c| c.gamma_hat[j]).collect::<KahanSum<f64>>().value();
            if s_d[j] == 0.0 {
                0.0
            } else {
                (g - 1.0).abs()
            }
        })
        .collect();
    let scaling = checkpoints
        .iter()
        .zip(&s_d)
        .map(|(&x, &s)| s * x.ln().sqrt() / x)
        .collect();
    DensityReport {
        modulus,
        weight: weight.to_string(),
        x_checkpoints: checkpoints.to_vec(),
        s_d,
        classes,
        partition_error,
        scaling,
        exceptional: None,
        prediction: None,
        checks: Vec::new(),
    }
}

fn partition_check(r: &DensityReport) -> Check {
    let worst = r.partition_error.iter().cloned().fold(0.0, f64::max);
    Check::new("partition_identity", worst <= 1e-12, format!("max |Σγ̂ − 1| = {worst:e}"))
}

fn prediction_check(r: &DensityReport, tol: f64) -> Check {
    let j = r.x_checkpoints.len() - 1;
    let worst = r
        .classes
        .iter()
        .filter_map(|c| c.predicted.map(|p| (c.gamma_hat[j] - p).abs()))
        .fold(0.0, f64::max);
    Check::new(
        "gamma_hat_near_prediction",
        worst <= tol,
        format!("max |γ̂(a) − γ(a)| = {worst} against tolerance {tol}"),
    )
}

fn psi_p<T: Scalar<Approx = f64>>(t: &SieveTable<T>, chi: &DirichletCharacter, p: u64) -> f64 {
    let (mut twisted, mut plain) = (1.0, 1.0);
    let mut q = p;
    let mut k = 1;
    while q <= t.limit() {
        let g = t.get(q).approx() / q as f64;
        plain += g;
        twisted += g * chi.value_real(p).unwrap_or(0).pow(k) as f64;
        k += 1;
        match q.checked_mul(p) {
            Some(next) => q = next,
            None => break,
        }
    }
    twisted / plain
}

/// Densities of a nonnegative multiplicative table over reduced residues mod
/// `D`, with the exceptional-character scan and the predicted limits.
pub fn run_progression_density<T: Scalar<Approx = f64>>(
    g: &SieveTable<T>,
    ps: &PrimeSet,
    modulus: u64,
    checkpoints: &[f64],
) -> Result<DensityReport> {
    if modulus < 1 {
        return domain("modulus must be positive");
    }
    validate_checkpoints(checkpoints, g.limit())?;
    let mut r = progression_sums(|n| g.get(n).approx(), modulus, checkpoints, g.spec_id());
    let x_max = *checkpoints.last().unwrap();
    let phi = r.classes.len() as f64;
    let mut prediction = Prediction {
        case: 1,
        psi_product: 0.0,
        psi_cutoff: PSI_CUTOFF,
    };
    if x_max >= 100.0 {
        let scan = detect_exceptional_quadratic(
            ps,
            |p| if p <= g.limit() { g.get(p).approx() } else { 0.0 },
            modulus,
            x_max,
            3,
            DEFAULT_EXCEPTIONAL_THRESHOLD,
        )?;
        if let Some(chi) = scan.flagged() {
            let cutoff = PSI_CUTOFF.min(g.limit());
            let psi_product: f64 = ps
                .primes_up_to(cutoff as f64)
                .iter()
                .filter(|&&p| modulus % p != 0)
                .map(|&p| psi_p(g, &chi, p))
                .product();
            let case3 = ps
                .primes_up_to(cutoff as f64)
                .iter()
                .filter(|&&p| modulus % p != 0)
                .all(|&p| (g.get(p).approx() == 1.0) == (chi.value_real(p) == Some(1)));
            prediction = Prediction {
                case: if case3 { 3 } else { 2 },
                psi_product,
                psi_cutoff: cutoff,
            };
            for c in &mut r.classes {
                let chi_a = chi.value_real(c.a).unwrap_or(0) as f64;
                c.predicted = Some(if case3 {
                    (1.0 + chi_a) / phi
                } else {
                    (1.0 + chi_a * psi_product) / phi
                });
            }
        }
        r.exceptional = Some(scan);
    }
    if prediction.case == 1 {
        for c in &mut r.classes {
            c.predicted = Some(1.0 / phi);
        }
    }
    r.prediction = Some(prediction);
    r.checks.push(partition_check(&r));
    let nonneg = g.values().iter().take(x_max as usize).all(|v| v.approx() >= 0.0);
    r.checks.push(Check::new("nonnegative_weights", nonneg, ""));
    r.checks.push(prediction_check(&r, 0.1));
    Ok(r)
}

/// `Σ_{n ≤ x, n ≡ a} |â_n|` over reduced residues, normalized by the coprime total.
pub fn run_abs_mean_progressions(nc: &NormalizedCoeffs, modulus: u64, checkpoints: &[f64]) -> Result<DensityReport> {
    if modulus < 1 {
        return domain("modulus must be positive");
    }
    validate_checkpoints(checkpoints, nc.limit())?;
    let mut r = progression_sums(|n| nc.get(n).abs(), modulus, checkpoints, "|a_n|");
    let phi = r.classes.len() as f64;
    for c in &mut r.classes {
        c.predicted = Some(1.0 / phi);
    }
    r.checks.push(partition_check(&r));
    r.checks.push(prediction_check(&r, 0.1));
    Ok(r)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub x_checkpoints: Vec<f64>,
    pub s: Vec<f64>,
    /// `S(x) (log x)^{1/2} / x`
    pub scaled: Vec<f64>,
    /// Consecutive ratios `scaled[i+1] / scaled[i]`.
    pub ratios: Vec<f64>,
    pub degenerate: bool,
    pub checks: Vec<Check>,
}

/// `S(x) (log x)^{1/2}/x` per checkpoint; drift measured from `drift_from` on.
pub fn run_scaling_check<T: Scalar<Approx = f64>>(
    g: &SieveTable<T>,
    checkpoints: &[f64],
    drift_from: f64,
) -> Result<ScalingReport> {
    validate_checkpoints(checkpoints, g.limit())?;
    let r = progression_sums(|n| g.get(n).approx(), 1, checkpoints, g.spec_id());
    let scaled = r.scaling.clone();
    let ratios: Vec<f64> = scaled.windows(2).map(|w| w[1] / w[0]).collect();
    let degenerate = r.s_d.last().is_none_or(|&s| s <= 1.0);
    let drift: Vec<f64> = ratios
        .iter()
        .enumerate()
        .filter(|&(i, _)| checkpoints[i] >= drift_from)
        .map(|(_, &q)| (q - 1.0).abs())
        .collect();
    let worst = drift.iter().cloned().fold(0.0, f64::max);
    let checks = vec![
        Check::new("nondegenerate", !degenerate, format!("S(x_max) = {}", r.s_d.last().unwrap())),
        Check::new(
            "scaled_ratio_drift",
            !degenerate && worst <= 0.1,
            format!("max |ratio − 1| = {worst} from x = {drift_from}"),
        ),
    ];
    Ok(ScalingReport {
        x_checkpoints: checkpoints.to_vec(),
        s: r.s_d,
        scaled,
        ratios,
        degenerate,
        checks,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma10Row {
    pub x: f64,
    /// `L = log log x`
    pub l: f64,
    /// `Σ_{|â_p| ≤ √6} â_p² / p`
    pub sum_sq: f64,
    /// `Σ_{|â_p| ≤ √6} |â_p| / p`
    pub sum_abs: f64,
    /// `Σ_{â_p < 0} 1/p`
    pub sum_neg: f64,
    pub diff_sq: f64,
    pub diff_abs: f64,
    pub diff_neg: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma10Report {
    pub rows: Vec<Lemma10Row>,
    /// `max − min` of each difference across checkpoints.
    pub spreads: [f64; 3],
    pub band_width: f64,
    /// `Σ â_p²/p` fails to track `L` (e.g. `â ≡ 0`).
    pub hypothesis_failure: bool,
    pub checks: Vec<Check>,
}

pub const LEMMA10_BAND: f64 = 3.0;

pub fn run_lemma10_chain(nc: &NormalizedCoeffs, ps: &PrimeSet, checkpoints: &[f64]) -> Result<Lemma10Report> {
    validate_checkpoints(checkpoints, nc.limit().min(ps.limit()))?;
    if checkpoints[0] < 16.0 {
        return domain("Lemma 10 checkpoints need log log x > 0; use x ≥ 16");
    }
    let root6 = 6f64.sqrt();
    let tops = checkpoint_tops(checkpoints);
    let (mut sq, mut ab, mut ng) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
    let mut rows = Vec::new();
    let mut it = ps.primes().iter().peekable();
    for (&x, &top) in checkpoints.iter().zip(&tops) {
        while let Some(&&p) = it.peek() {
            if p > top {
                break;
            }
            let a = nc.get(p);
            let inv = 1.0 / p as f64;
            if a.abs() <= root6 {
                sq.add(a * a * inv);
                ab.add(a.abs() * inv);
            }
            if a < 0.0 {
                ng.add(inv);
            }
            it.next();
        }
        let l = x.ln().ln();
        let (s1, s2, s3) = (sq.value(), ab.value(), ng.value());
        rows.push(Lemma10Row {
            x,
            l,
            sum_sq: s1,
            sum_abs: s2,
            sum_neg: s3,
            diff_sq: s1 - (1.0 - 2.0 / 6.0) * l,
            diff_abs: s2 - (2.0 / 3.0) * l / root6,
            diff_neg: s3 - l / 216.0,
        });
    }
    let spread = |f: fn(&Lemma10Row) -> f64| {
        let vals: Vec<f64> = rows.iter().map(f).collect();
        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let spreads = [spread(|r| r.diff_sq), spread(|r| r.diff_abs), spread(|r| r.diff_neg)];
    let last = rows.last().unwrap();
    let hypothesis_failure = last.sum_sq < 0.5 * (2.0 / 3.0) * last.l;
    let mut checks = vec![Check::new(
        "bounded_drift",
        spreads.iter().all(|&s| s <= LEMMA10_BAND),
        format!("spreads {spreads:?} against width {LEMMA10_BAND}"),
    )];
    let lower = rows.iter().all(|r| r.sum_neg >= r.l / 216.0 - LEMMA10_BAND);
    checks.push(Check::new(
        "negative_prime_lower_bound",
        lower,
        "Σ_{â_p<0} 1/p ≥ 6⁻³ log log x − 3 at every checkpoint",
    ));
    checks.push(Check::new(
        "second_moment_tracks_L",
        !hypothesis_failure,
        format!("Σ â_p²/p = {} at L = {}", last.sum_sq, last.l),
    ));
    Ok(Lemma10Report {
        rows,
        spreads,
        band_width: LEMMA10_BAND,
        hypothesis_failure,
        checks,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub x: f64,
    /// `Σ_{p ≤ x} â_p² log p / x`
    pub second: f64,
    /// `Σ_{p ≤ x} â_p⁴ log p / (2x)`
    pub fourth: f64,
    /// `Σ_{p ≤ x} â_p²/p − log log x`
    pub reciprocal_drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    pub checks: Vec<Check>,
}

pub fn run_moment_check(nc: &NormalizedCoeffs, ps: &PrimeSet, checkpoints: &[f64]) -> Result<MomentReport> {
    validate_checkpoints(checkpoints, nc.limit().min(ps.limit()))?;
    let mut rows = Vec::new();
    for &x in checkpoints {
        rows.push(MomentRow {
            x,
            second: moment_sum(nc, ps, x, 2, MomentWeight::LogP)? / x,
            fourth: moment_sum(nc, ps, x, 4, MomentWeight::LogP)? / (2.0 * x),
            reciprocal_drift: moment_sum(nc, ps, x, 2, MomentWeight::InvP)? - x.ln().ln(),
        });
    }
    let last = rows.last().unwrap();
    let drifts: Vec<f64> = rows.iter().map(|r| r.reciprocal_drift).collect();
    let spread = drifts.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - drifts.iter().cloned().fold(f64::INFINITY, f64::min);
    let checks = vec![
        Check::new(
            "second_moment",
            (0.85..=1.15).contains(&last.second),
            format!("{} against [0.85, 1.15]", last.second),
        ),
        Check::new(
            "fourth_moment",
            (0.85..=1.15).contains(&last.fourth),
            format!("{} against [0.85, 1.15]", last.fourth),
        ),
        Check::new("reciprocal_drift", spread <= 2.0, format!("spread {spread} against 2")),
    ];
    Ok(MomentReport { rows, checks })
}

#[derive(Clone, Debug, Serialize)]
pub struct WirsingRow {
    pub x: f64,
    pub sum: f64,
    pub predicted: f64,
    pub ratio: f64,
    /// `Σ_{p ≤ x} λ(p) log p / p  ÷  log x`
    pub empirical_tau: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WirsingReport {
    pub tau_w: f64,
    pub constant: f64,
    pub rows: Vec<WirsingRow>,
    pub checks: Vec<Check>,
}

/// `log Π_{p ≤ x} (1 + Σ_k w(p^k)/p^k)` with prime powers truncated at the table limit.
fn log_euler_product(ps: &PrimeSet, x: f64, limit: u64, w: impl Fn(u64) -> f64) -> f64 {
    ps.primes_up_to(x)
        .iter()
        .map(|&p| {
            let mut s = 0.0;
            let mut q = p;
            while q <= limit {
                s += w(q) / q as f64;
                match q.checked_mul(p) {
                    Some(next) => q = next,
                    None => break,
                }
            }
            s.ln_1p()
        })
        .collect::<KahanSum<f64>>()
        .value()
}

/// Ratio of `Σ_{n ≤ x} λ(n)` to `e^{−κτ}/Γ(τ) · x/log x · Π_{p ≤ x}(1 + λ(p)/p + λ(p²)/p² + …)`.
///
/// `tolerance` bounds `|ratio − 1|` at the last checkpoint; `stable_from`
/// starts the window where consecutive ratios may differ by at most 20%.
pub fn run_wirsing_check<T: Scalar<Approx = f64>>(
    t: &SieveTable<T>,
    ps: &PrimeSet,
    tau_w: f64,
    checkpoints: &[f64],
    tolerance: Option<f64>,
    stable_from: f64,
) -> Result<WirsingReport> {
    if !(tau_w > 0.0) {
        return domain(format!("τ must be positive, got {tau_w}"));
    }
    validate_checkpoints(checkpoints, t.limit().min(ps.limit()))?;
    let constant = (-EULER_GAMMA * tau_w).exp() / gamma(tau_w);
    let tops = checkpoint_tops(checkpoints);
    let mut rows = Vec::new();
    let mut acc = KahanSum::new();
    let mut n = 1u64;
    for (&x, &top) in checkpoints.iter().zip(&tops) {
        while n <= top {
            acc.add(t.get(n).approx());
            n += 1;
        }
        let lx = x.ln();
        let log_prod = log_euler_product(ps, x, top, |q| t.get(q).approx());
        let predicted = constant * x / lx * log_prod.exp();
        let empirical_tau = ps
            .primes_up_to(x)
            .iter()
            .map(|&p| t.get(p).approx() * (p as f64).ln() / p as f64)
            .collect::<KahanSum<f64>>()
            .value()
            / lx;
        if !(empirical_tau > 0.0) {
            return domain(format!("empirical τ at x = {x} is {empirical_tau}, not positive"));
        }
        rows.push(WirsingRow {
            x,
            sum: acc.value(),
            predicted,
            ratio: acc.value() / predicted,
            empirical_tau,
        });
    }
    let mut checks = Vec::new();
    if let Some(tol) = tolerance {
        let last = rows.last().unwrap().ratio;
        checks.push(Check::new(
            "ratio_near_one",
            (last - 1.0).abs() <= tol,
            format!("ratio {last} against 1 ± {tol}"),
        ));
    }
    let tail: Vec<f64> = rows.iter().filter(|r| r.x >= stable_from).map(|r| r.ratio).collect();
    let drift = tail.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::new(
        "ratio_stable",
        drift <= 0.2,
        format!("max relative change {drift} from x = {stable_from}"),
    ));
    Ok(WirsingReport {
        tau_w,
        constant,
        rows,
        checks,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TwistedRatioRow {
    pub x: f64,
    /// `Σ g(n)χ(n) / Σ g(n)`
    pub ratio: Complex64,
    /// `Π_{p ≤ x} (1 + Σ g(p^k)χ(p^k)/p^k) / (1 + Σ g(p^k)/p^k)`
    pub euler_ratio: Complex64,
}

/// The twisted mean against the ratio of truncated Euler products.
pub fn run_twisted_ratio<T: Scalar<Approx = f64>>(
    t: &SieveTable<T>,
    chi: &DirichletCharacter,
    ps: &PrimeSet,
    checkpoints: &[f64],
) -> Result<Vec<TwistedRatioRow>> {
    validate_checkpoints(checkpoints, t.limit().min(ps.limit()))?;
    let tops = checkpoint_tops(checkpoints);
    let mut rows = Vec::new();
    let (mut plain, mut twisted) = (KahanSum::new(), KahanSum::<Complex64>::new());
    let mut n = 1u64;
    for (&x, &top) in checkpoints.iter().zip(&tops) {
        while n <= top {
            let v = t.get(n).approx();
            plain.add(v);
            twisted.add(chi.value(n) * v);
            n += 1;
        }
        let mut log_ratio = Complex64::new(0.0, 0.0);
        for &p in ps.primes_up_to(x) {
            let (mut a, mut b) = (Complex64::new(1.0, 0.0), 1.0);
            let mut q = p;
            while q <= top {
                let v = t.get(q).approx() / q as f64;
                a += chi.value(q) * v;
                b += v;
                match q.checked_mul(p) {
                    Some(next) => q = next,
                    None => break,
                }
            }
            log_ratio += (a / b).ln();
        }
        let s = plain.value();
        rows.push(TwistedRatioRow {
            x,
            ratio: if s == 0.0 { Complex64::new(0.0, 0.0) } else { twisted.value() / s },
            euler_ratio: log_ratio.exp(),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct DSweepRow {
    #[serde(rename = "D")]
    pub modulus: u64,
    /// `max_a |γ̂(a) φ(D) − 1|`
    pub max_error: f64,
    /// `(log D / log x)^{1/49}`
    pub envelope: f64,
    pub small_sample_classes: Vec<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DSweepReport {
    pub x: f64,
    pub rows: Vec<DSweepRow>,
    pub checks: Vec<Check>,
}

impl DSweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("D,max_error,envelope,small_classes\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.modulus,
                r.max_error,
                r.envelope,
                r.small_sample_classes.len()
            ));
        }
        out
    }
}

pub fn run_d_sweep<T: Scalar<Approx = f64>>(g: &SieveTable<T>, moduli: &[u64], x: f64) -> Result<DSweepReport> {
    validate_checkpoints(&[x], g.limit())?;
    let mut rows = Vec::new();
    for &d in moduli {
        if d < 1 {
            return domain("moduli must be positive");
        }
        let r = progression_sums(|n| g.get(n).approx(), d, &[x], g.spec_id());
        let phi = r.classes.len() as f64;
        let max_error = r
            .classes
            .iter()
            .map(|c| (c.gamma_hat[0] * phi - 1.0).abs())
            .fold(0.0, f64::max);
        rows.push(DSweepRow {
            modulus: d,
            max_error,
            envelope: ((d as f64).ln() / x.ln()).powf(1.0 / 49.0),
            small_sample_classes: r.classes.iter().filter(|c| c.small_sample).map(|c| c.a).collect(),
        });
    }
    let finite = rows.iter().all(|r| r.max_error.is_finite());
    Ok(DSweepReport {
        x,
        rows,
        checks: vec![Check::new("errors_finite", finite, "")],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characters::enumerate_characters;
    use crate::heckeforms::{eta24_expand, normalize};
    use crate::multcore::{catalog, sieve_values};
    use crate::primes::sieve_primes;

    #[test]
    fn sign_report_on_small_tau() {
        let t = eta24_expand(10_000).unwrap();
        let r = run_sign_equidistribution(&t, &[1e2, 1e3, 1e4]).unwrap();
        for i in 0..3 {
            assert!((r.frac_neg[i] + r.frac_pos[i] - 1.0).abs() < 1e-15);
        }
        // direct count oracle
        let ints = t.integers().unwrap();
        let neg = ints.values().iter().filter(|v| v.sign() == num_bigint::Sign::Minus).count();
        assert_eq!(r.negative[2], neg as u64);
        assert!(r.vanishing.is_empty());
        assert!(run_sign_equidistribution(&t, &[1e3, 1e2]).is_err());
        assert!(run_sign_equidistribution(&t, &[1e5]).is_err());
    }

    #[test]
    fn degenerate_sign_pattern() {
        use crate::heckeforms::{CoeffData, CoeffSource};
        use crate::multcore::HeckeWeight;
        use num_bigint::BigInt;
        let ones = SieveTable::from_values("one", vec![BigInt::from(1); 100]).unwrap();
        let t = CoeffTable {
            weight: HeckeWeight::Normalized,
            source: CoeffSource::HeckeExtend,
            data: CoeffData::Integer(ones),
        };
        let r = run_sign_equidistribution(&t, &[10.0, 100.0]).unwrap();
        assert_eq!(r.frac_neg, vec![0.0, 0.0]);
        let generic = r.checks.iter().find(|c| c.name == "generic_sign_pattern").unwrap();
        assert!(!generic.passed);
    }

    #[test]
    fn sign_flipped_model() {
        // g(p^k) = (−1)^k |τ(p^k)|, so sign g(n) = (−1)^{Ω(n)} wherever τ(n) ≠ 0
        use crate::heckeforms::{CoeffData, CoeffSource};
        use num_bigint::{BigInt, Sign};
        use num_traits::Signed;
        let tau = eta24_expand(5000).unwrap();
        let ints = tau.integers().unwrap();
        let ps = sieve_primes(5000).unwrap();
        let values: Vec<BigInt> = (1..=5000u64)
            .map(|n| {
                ps.factorize(n).iter().fold(BigInt::from(1), |acc, &(p, k)| {
                    let v = ints.get(p.pow(k)).abs();
                    if k % 2 == 1 {
                        -acc * v
                    } else {
                        acc * v
                    }
                })
            })
            .collect();
        let flipped = CoeffTable {
            weight: tau.weight,
            source: CoeffSource::HeckeExtend,
            data: CoeffData::Integer(SieveTable::from_values("flipped", values).unwrap()),
        };
        let r = run_sign_equidistribution(&flipped, &[1000.0, 5000.0]).unwrap();
        let odd_omega = (1..=5000u64)
            .filter(|&n| ps.factorize(n).iter().map(|&(_, k)| k).sum::<u32>() % 2 == 1)
            .count() as u64;
        assert_eq!(r.negative[1], odd_omega);
        assert_eq!(r.s[1], 5000);
        let flipped_ints = flipped.integers().unwrap();
        assert!(flipped_ints.values().iter().all(|v| v.sign() != Sign::NoSign));
        assert!((r.frac_neg[1] + r.frac_pos[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn progression_density_cases() {
        let ps = sieve_primes(100_000).unwrap();
        let one = sieve_values(&catalog::one::<i64>(), &ps, 100_000).unwrap();
        let r = run_progression_density(&one, &ps, 1, &[1e3, 1e5]).unwrap();
        assert_eq!(r.classes.len(), 1);
        assert_eq!(r.classes[0].gamma_hat, vec![1.0, 1.0]);
        assert!(all_passed(&r.checks), "{:?}", r.checks);

        let r = run_progression_density(&one, &ps, 5, &[1e3, 1e5]).unwrap();
        assert_eq!(r.prediction.as_ref().unwrap().case, 1);
        assert!(all_passed(&r.checks), "{:?}", r.checks);
        // exact partition: the class sums reassemble S_D
        let total: f64 = r.classes.iter().map(|c| c.sums[1]).sum();
        assert_eq!(total, r.s_d[1]);
        assert_eq!(r.s_d[1], 80_000.0);

        let cm = sieve_values(&catalog::cm_indicator::<i64>(), &ps, 100_000).unwrap();
        let r = run_progression_density(&cm, &ps, 4, &[1e4, 1e5]).unwrap();
        let p = r.prediction.as_ref().unwrap();
        assert_eq!(p.case, 3);
        assert_eq!(r.classes[0].gamma_hat[1], 1.0);
        assert_eq!(r.classes[1].gamma_hat[1], 0.0);
        assert_eq!(r.classes[0].predicted, Some(1.0));
        assert!(all_passed(&r.checks), "{:?}", r.checks);
    }

    #[test]
    fn case_two_prediction() {
        // g(p) = 1 for p ≡ 1 (mod 4), g(p) = 1 also at the single inert prime 3
        let ps = sieve_primes(100_000).unwrap();
        let spec = crate::multcore::MultSpec::from_fn(
            "cm4+3",
            |p| if p % 4 == 1 || p == 3 { 1i64 } else { 0 },
            crate::multcore::Completion::CompletelyMultiplicative,
        );
        let g = sieve_values(&spec, &ps, 100_000).unwrap();
        let r = run_progression_density(&g, &ps, 4, &[1e4, 1e5]).unwrap();
        let pred = r.prediction.as_ref().unwrap();
        // ψ_3 = (1 − 1/3 + 1/9 − …)/(1 + 1/3 + 1/9 + …) = 1/2, series cut at 3^10 ≤ 10^5
        assert!((pred.psi_product - 0.5).abs() < 1e-5, "{pred:?}");
        assert!((r.classes[0].predicted.unwrap() - 0.75).abs() < 1e-5);
        assert!((r.classes[0].gamma_hat[1] - 0.75).abs() < 0.05, "{:?}", r.classes);
    }

    #[test]
    fn abs_progressions() {
        let nc = crate::heckeforms::NormalizedCoeffs::from_values(vec![1.0; 1000]);
        let r = run_abs_mean_progressions(&nc, 2, &[1000.0]).unwrap();
        assert_eq!(r.classes.len(), 1);
        assert_eq!(r.classes[0].gamma_hat[0], 1.0);
        let r = run_abs_mean_progressions(&nc, 7, &[1000.0]).unwrap();
        for c in &r.classes {
            assert!((c.gamma_hat[0] - 1.0 / 6.0).abs() <= 7.0 / 1000.0);
        }
    }

    #[test]
    fn scaling() {
        let ps = sieve_primes(10_000).unwrap();
        let one = sieve_values(&catalog::one::<i64>(), &ps, 10_000).unwrap();
        let r = run_scaling_check(&one, &[100.0, 10_000.0], 1e5).unwrap();
        assert!((r.scaled[1] - 1e4f64.ln().sqrt()).abs() < 1e-12);
        let zero = sieve_values(&catalog::zero::<i64>(), &ps, 10_000).unwrap();
        let r = run_scaling_check(&zero, &[100.0, 10_000.0], 1e5).unwrap();
        assert!(r.degenerate && !all_passed(&r.checks));
    }

    #[test]
    fn lemma10_degenerate_and_alternating() {
        let ps = sieve_primes(100_000).unwrap();
        let zero = NormalizedCoeffs::from_values(vec![0.0; 100_000]);
        let r = run_lemma10_chain(&zero, &ps, &[1e3, 1e4, 1e5]).unwrap();
        assert!(r.hypothesis_failure);
        assert!(r.rows.iter().all(|row| row.sum_sq == 0.0 && row.sum_neg == 0.0));
        assert!((r.rows[2].diff_sq + (2.0 / 3.0) * r.rows[2].l).abs() < 1e-15);

        let mut v = vec![0.0; 100_000];
        for (i, &p) in ps.primes().iter().enumerate() {
            v[p as usize - 1] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let alt = NormalizedCoeffs::from_values(v);
        let r = run_lemma10_chain(&alt, &ps, &[1e3, 1e4, 1e5]).unwrap();
        let half: f64 = ps.primes().iter().skip(1).step_by(2).map(|&p| 1.0 / p as f64).sum();
        assert!((r.rows[2].sum_neg - half).abs() < 1e-12);
        assert!(r.rows[2].sum_neg > r.rows[2].l / 216.0);
    }

    #[test]
    fn lemma10_on_tau_small() {
        let t = eta24_expand(10_000).unwrap();
        let nc = normalize(&t);
        let ps = sieve_primes(10_000).unwrap();
        let r = run_lemma10_chain(&nc, &ps, &[1e2, 1e3, 1e4]).unwrap();
        assert!(all_passed(&r.checks), "{:?}", r);
    }

    #[test]
    fn wirsing_for_one_and_divisor() {
        let ps = sieve_primes(100_000).unwrap();
        let one = sieve_values(&catalog::one::<i64>(), &ps, 100_000).unwrap();
        let r = run_wirsing_check(&one, &ps, 1.0, &[1e4, 1e5], Some(0.1), 1e4).unwrap();
        assert!(all_passed(&r.checks), "{r:?}");
        assert!((r.constant - (-EULER_GAMMA).exp()).abs() < 1e-12);
        let d = sieve_values(&catalog::divisor::<i64>(), &ps, 100_000).unwrap();
        let r = run_wirsing_check(&d, &ps, 2.0, &[1e4, 1e5], Some(0.15), 1e4).unwrap();
        assert!(all_passed(&r.checks), "{r:?}");
        assert!((r.rows[1].empirical_tau - 2.0).abs() < 0.3);
        assert!(run_wirsing_check(&d, &ps, 0.0, &[1e4], None, 1e4).is_err());
        let zero = sieve_values(&catalog::zero::<i64>(), &ps, 100_000).unwrap();
        assert!(run_wirsing_check(&zero, &ps, 1.0, &[1e4], None, 1e4).is_err());
        // Γ(1/2) = √π
        assert!((gamma(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn twisted_ratio_for_one() {
        let ps = sieve_primes(100_000).unwrap();
        let one = sieve_values(&catalog::one::<i64>(), &ps, 100_000).unwrap();
        let chi = enumerate_characters(4).unwrap().remove(1);
        let rows = run_twisted_ratio(&one, &chi, &ps, &[1e3, 1e5]).unwrap();
        assert!(rows[1].ratio.norm() < 1e-4);
        assert!(rows[1].euler_ratio.norm() < rows[0].euler_ratio.norm());
    }

    #[test]
    fn d_sweep() {
        let ps = sieve_primes(10_000).unwrap();
        let one = sieve_values(&catalog::one::<i64>(), &ps, 10_000).unwrap();
        let r = run_d_sweep(&one, &[1, 2, 3, 5000], 1e4).unwrap();
        assert_eq!(r.rows[0].max_error, 0.0);
        assert_eq!(r.rows[0].envelope, 0.0);
        assert!(r.rows[3].small_sample_classes.len() > 1000);
        assert!(all_passed(&r.checks));
        assert!(r.to_csv().starts_with("D,max_error,envelope,small_classes\n1,0,0,0\n"));
    }
}
