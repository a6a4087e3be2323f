use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use meanvalue_core::characters::character_by_index;
use meanvalue_core::constructions::{bracketing_scan, build_example3, lambda_growth_diagnostic};
use meanvalue_core::experiments::{
    self, all_passed, default_checkpoints, run_abs_mean_progressions, run_d_sweep, run_lemma10_chain,
    run_moment_check, run_progression_density, run_scaling_check, run_sign_equidistribution,
    run_twisted_ratio, run_wirsing_check, Check,
};
use meanvalue_core::halasz::{
    default_grid_step, minimize_lambda, prime_values_from_table, rho_profile, theorem2_evaluate, Theorem2Params,
};
use meanvalue_core::heckeforms::{
    eta24_expand, load_coeff_table, nonvanish_indicator, normalize, write_coeff_table, CoeffTable,
};
use meanvalue_core::multcore::{
    catalog, harmonic_sum, mean_sum, sieve_values, Completion, HeckeWeight, MultSpec, PrimeRule, SieveTable,
};
use meanvalue_core::primes::{sieve_primes, PrimeSet};
use meanvalue_core::Error;

const REFINE: u32 = 40;

#[derive(Parser, Debug)]
#[command(name = "meanvalue", version, about = "Mean-value experiments for multiplicative functions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Generate τ(n) exactly and optionally write it as CSV.
    TauGen,
    /// Sieve a named multiplicative function and report its sums.
    Sieve,
    /// Minimize the distance ρ(x, t) over |t| ≤ T.
    LambdaMin,
    /// Evaluate the Theorem 2 bound against the actual mean value.
    Theorem2,
    /// Sign equidistribution of Hecke coefficients.
    SignEq,
    /// Densities of a nonnegative function in reduced residue classes.
    Density,
    /// Densities of |â_n| in reduced residue classes.
    AbsDensity,
    /// The Lemma 10 chain of prime sums and the Sato–Tate moments.
    Lemma10,
    /// Wirsing's asymptotic for nonnegative functions.
    Wirsing,
    /// The Example 3 construction and its diagnostics.
    Example3,
    /// Maximal density error over moduli 1..=D.
    DSweep,
}

#[derive(clap::Args, Debug)]
struct Opts {
    /// Table size, or x for single-point experiments.
    #[arg(long, global = true)]
    limit: Option<u64>,
    /// Comma-separated, strictly increasing checkpoints.
    #[arg(long, global = true, value_delimiter = ',')]
    checkpoints: Option<Vec<f64>>,
    #[arg(long, global = true)]
    modulus: Option<u64>,
    #[arg(long = "T", global = true)]
    t_max: Option<f64>,
    #[arg(long = "Y", global = true)]
    y: Option<f64>,
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    #[arg(long, global = true, default_value_t = 0.5)]
    c: f64,
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Coefficient CSV (`n,a_n`) used in place of τ.
    #[arg(long, global = true)]
    coeff_file: Option<PathBuf>,
    /// Weight of the coefficient file: an integer k or `normalized`.
    #[arg(long, global = true, default_value = "12")]
    weight: String,
    /// Function: one, mobius, divisor, cm4, zero, random, tau, tau-indicator.
    #[arg(long, global = true)]
    spec: Option<String>,
    /// τ_w for the Wirsing check; defaults by spec.
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// JSON report path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Auxiliary CSV path.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Run = Result<(Value, Vec<Check>), Failure>;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn checkpoints(o: &Opts) -> Vec<f64> {
    o.checkpoints.clone().unwrap_or_else(default_checkpoints)
}

fn max_x(cps: &[f64]) -> u64 {
    cps.iter().cloned().fold(0.0, f64::max).floor() as u64
}

fn weight(o: &Opts) -> Result<HeckeWeight, Failure> {
    if o.weight == "normalized" {
        return Ok(HeckeWeight::Normalized);
    }
    o.weight
        .parse()
        .map(HeckeWeight::Integral)
        .map_err(|_| Failure::Usage(format!("--weight must be an integer or 'normalized', got '{}'", o.weight)))
}

fn coefficients(o: &Opts, limit: u64) -> Result<CoeffTable, Failure> {
    match &o.coeff_file {
        Some(path) => {
            let t = load_coeff_table(path, weight(o)?)?;
            if t.limit() < limit {
                return Err(Failure::Core(Error::Domain(format!(
                    "coefficient file covers n ≤ {}, need {limit}",
                    t.limit()
                ))));
            }
            Ok(t)
        }
        None => Ok(eta24_expand(limit)?),
    }
}

/// Named function as a real table on `[1, limit]`.
fn named_table(name: &str, o: &Opts, ps: &PrimeSet, limit: u64) -> Result<SieveTable<f64>, Failure> {
    let as_f64 = |t: SieveTable<i64>| t.map(t.spec_id().to_string(), |_, &v| v as f64);
    Ok(match name {
        "one" => as_f64(sieve_values(&catalog::one(), ps, limit)?),
        "mobius" => as_f64(sieve_values(&catalog::mobius(), ps, limit)?),
        "divisor" => as_f64(sieve_values(&catalog::divisor(), ps, limit)?),
        "cm4" => as_f64(sieve_values(&catalog::cm_indicator(), ps, limit)?),
        "zero" => as_f64(sieve_values(&catalog::zero(), ps, limit)?),
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
            let values = ps.primes_up_to(limit as f64).iter().map(|&p| (p, rng.gen_range(0.0..=2.0))).collect();
            let spec = MultSpec::new(
                format!("random-{}", o.seed),
                PrimeRule::Table(values),
                Completion::ZeroBeyondFirstPower,
            );
            sieve_values(&spec, ps, limit)?
        }
        "tau" => normalize(&coefficients(o, limit)?).to_table("tau"),
        "tau-indicator" => as_f64(nonvanish_indicator(&coefficients(o, limit)?)?),
        other => return Err(Failure::Usage(format!("unknown --spec '{other}'"))),
    })
}

fn spec_name<'a>(o: &'a Opts, default: &'a str) -> &'a str {
    o.spec.as_deref().unwrap_or(default)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, text.as_bytes()).map_err(|e| Failure::Core(Error::Domain(format!("{}: {e}", path.display()))))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn tau_gen(o: &Opts) -> Run {
    let limit = o.limit.unwrap_or(10_000);
    let t = coefficients(o, limit)?;
    if let Some(path) = &o.csv {
        write_coeff_table(&t, path)?;
    }
    let vanishing = t.vanishing_indices();
    let head: Vec<String> = (1..=limit.min(10))
        .map(|n| t.integers().map(|v| v.get(n).to_string()).unwrap_or_default())
        .collect();
    let checks = vec![Check::new(
        "no_vanishing_coefficients",
        vanishing.is_empty(),
        format!("{} zeros up to {limit}", vanishing.len()),
    )];
    Ok((json!({ "limit": limit, "head": head, "vanishing": vanishing }), checks))
}

fn sieve(o: &Opts) -> Run {
    let limit = o.limit.unwrap_or(10_000);
    let ps = sieve_primes(limit.max(2))?;
    let name = spec_name(o, "one");
    let t = named_table(name, o, &ps, limit)?;
    if let Some(path) = &o.csv {
        t.write_csv(path)?;
    }
    let x = limit as f64;
    let report = json!({
        "spec": name,
        "limit": limit,
        "mean_sum": mean_sum(&t, x)?,
        "harmonic_sum": harmonic_sum(&t, x)?,
    });
    Ok((report, Vec::new()))
}

fn lambda_min(o: &Opts) -> Run {
    let x = o.limit.unwrap_or(10_000);
    let ps = sieve_primes(x.max(2))?;
    let t = named_table(spec_name(o, "one"), o, &ps, x)?;
    let gp = prime_values_from_table(&t, &ps);
    let xf = x as f64;
    let y = o.y.unwrap_or(1.5);
    let t_max = o.t_max.unwrap_or(10.0);
    let step = o.grid_step.unwrap_or_else(|| default_grid_step(xf));
    let r = minimize_lambda(&gp, y, xf, t_max, step, REFINE)?;
    if let Some(path) = &o.csv {
        let mut out = String::from("t,rho\n");
        for (t, v) in rho_profile(&gp, y, xf, t_max, step)? {
            out.push_str(&format!("{t},{v}\n"));
        }
        write_text(path, &out)?;
    }
    let checks = vec![Check::new("lambda_nonnegative", r.lambda >= 0.0, format!("λ = {}", r.lambda))];
    Ok((to_value(&r), checks))
}

fn theorem2(o: &Opts) -> Run {
    let x = o.limit.unwrap_or(10_000);
    let ps = sieve_primes(x.max(2))?;
    let t = named_table(spec_name(o, "one"), o, &ps, x)?;
    let gp = prime_values_from_table(&t, &ps);
    let xf = x as f64;
    let params = Theorem2Params {
        y: o.y.unwrap_or(1.5),
        x: xf,
        t_max: o.t_max.unwrap_or(10.0),
        c: o.c,
        beta: o.beta.unwrap_or(1.0),
        grid_step: o.grid_step.unwrap_or_else(|| default_grid_step(xf)),
        refine: REFINE,
    };
    let r = theorem2_evaluate(&t, &gp, &ps, params)?;
    let checks = vec![Check::new("ratio_finite", r.ratio.is_finite(), format!("ratio {}", r.ratio))];
    Ok((json!({ "params": params, "report": r }), checks))
}

fn sign_eq(o: &Opts) -> Run {
    let cps = checkpoints(o);
    let t = coefficients(o, max_x(&cps))?;
    let mut r = run_sign_equidistribution(&t, &cps)?;
    r.checks.push(Check::new(
        "no_vanishing_coefficients",
        r.vanishing.is_empty(),
        format!("{} zeros", r.vanishing.len()),
    ));
    let checks = r.checks.clone();
    Ok((to_value(&r), checks))
}

fn density(o: &Opts) -> Run {
    let cps = checkpoints(o);
    let limit = max_x(&cps);
    let ps = sieve_primes(limit.max(PSI_LIMIT))?;
    let name = spec_name(o, "tau-indicator");
    let g = named_table(name, o, &ps, limit)?;
    let d = o.modulus.unwrap_or(1);
    let r = run_progression_density(&g, &ps, d, &cps)?;
    let scaling = run_scaling_check(&g, &cps, 1e5)?;
    let mut checks = r.checks.clone();
    // the (log x)^{-1/2} shape is claimed only where an exceptional character is present
    if r.prediction.as_ref().is_some_and(|p| p.case > 1) {
        checks.extend(scaling.checks.iter().cloned());
    }
    Ok((json!({ "spec": name, "density": r, "scaling": scaling }), checks))
}

const PSI_LIMIT: u64 = experiments::PSI_CUTOFF;

fn abs_density(o: &Opts) -> Run {
    let cps = checkpoints(o);
    let nc = normalize(&coefficients(o, max_x(&cps))?);
    let r = run_abs_mean_progressions(&nc, o.modulus.unwrap_or(1), &cps)?;
    let checks = r.checks.clone();
    Ok((to_value(&r), checks))
}

fn lemma10(o: &Opts) -> Run {
    let cps = checkpoints(o);
    let limit = max_x(&cps);
    let ps = sieve_primes(limit.max(2))?;
    let nc = normalize(&coefficients(o, limit)?);
    let chain = run_lemma10_chain(&nc, &ps, &cps)?;
    let moments = run_moment_check(&nc, &ps, &cps)?;
    let mut checks = chain.checks.clone();
    checks.extend(moments.checks.iter().cloned());
    Ok((json!({ "chain": chain, "moments": moments }), checks))
}

fn wirsing(o: &Opts) -> Run {
    let cps = checkpoints(o);
    let limit = max_x(&cps);
    let ps = sieve_primes(limit.max(2))?;
    let name = spec_name(o, "one");
    let (tau_default, tol) = match name {
        "one" => (Some(1.0), Some(0.1)),
        "divisor" => (Some(2.0), Some(0.15)),
        "cm4" => (Some(0.5), None),
        _ => (None, None),
    };
    let tau_w = o
        .tau
        .or(tau_default)
        .ok_or_else(|| Failure::Usage(format!("--tau is required for spec '{name}'")))?;
    let t = named_table(name, o, &ps, limit)?;
    let r = run_wirsing_check(&t, &ps, tau_w, &cps, tol, 1e5)?;
    let twisted = if name == "cm4" {
        let chi = character_by_index(4, 1)?;
        Some(run_twisted_ratio(&t, &chi, &ps, &cps)?)
    } else {
        None
    };
    let checks = r.checks.clone();
    Ok((json!({ "spec": name, "wirsing": r, "twisted": twisted }), checks))
}

fn example3(o: &Opts) -> Run {
    let x = o.limit.unwrap_or(1_000_000) as f64;
    let f = build_example3(o.c, x)?;
    if let Some(path) = &o.csv {
        f.write_csv(path)?;
    }
    let scan = bracketing_scan(1e4, 1e8)?;
    let growth = lambda_growth_diagnostic(&f, x, o.t_max.unwrap_or(10.0))?;
    let band = 0.5 * o.c..=1.5 * o.c;
    let checks = vec![
        Check::new(
            "bracketing",
            scan.failures.is_empty(),
            format!("failures at {:?}, first holding index {:?}", scan.failures, scan.first_holding_index),
        ),
        Check::new(
            "chebyshev_ratio",
            band.contains(&growth.chebyshev_ratio),
            format!("{} against [{}, {}]", growth.chebyshev_ratio, band.start(), band.end()),
        ),
    ];
    let report = json!({
        "c": o.c,
        "x": x,
        "intervals": f.intervals.len(),
        "truncation_events": f.truncation_events(),
        "bracketing": {
            "first_holding_index": scan.first_holding_index,
            "failures": scan.failures,
            "records": scan.records.len(),
        },
        "growth": growth,
    });
    Ok((report, checks))
}

fn d_sweep(o: &Opts) -> Run {
    let x = o.limit.unwrap_or(1_000_000);
    let ps = sieve_primes(x.max(2))?;
    let g = named_table(spec_name(o, "tau-indicator"), o, &ps, x)?;
    let moduli: Vec<u64> = (1..=o.modulus.unwrap_or(50)).collect();
    let r = run_d_sweep(&g, &moduli, x as f64)?;
    if let Some(path) = &o.csv {
        write_text(path, &r.to_csv())?;
    }
    let checks = r.checks.clone();
    Ok((to_value(&r), checks))
}

/// Command line with `--out` and its value removed.
fn recorded_command(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let o = &cli.opts;
    if let Some(w) = o.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let run = match cli.cmd {
        Cmd::TauGen => tau_gen(o),
        Cmd::Sieve => sieve(o),
        Cmd::LambdaMin => lambda_min(o),
        Cmd::Theorem2 => theorem2(o),
        Cmd::SignEq => sign_eq(o),
        Cmd::Density => density(o),
        Cmd::AbsDensity => abs_density(o),
        Cmd::Lemma10 => lemma10(o),
        Cmd::Wirsing => wirsing(o),
        Cmd::Example3 => example3(o),
        Cmd::DSweep => d_sweep(o),
    };
    let (report, checks) = match run {
        Ok(r) => r,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            return ExitCode::from(1);
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let passed = all_passed(&checks);
    let doc = json!({
        "command": recorded_command(&args[1..]),
        "seed": o.seed,
        "passed": passed,
        "checks": checks,
        "report": report,
    });
    let text = serde_json::to_string_pretty(&doc).expect("reports serialize") + "\n";
    match &o.out {
        Some(path) => {
            if let Err(e) = write_atomic(path, text.as_bytes()) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    for c in checks.iter().filter(|c| !c.passed) {
        eprintln!("assertion failed: {} ({})", c.name, c.detail);
    }
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
