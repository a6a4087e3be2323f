//! The distance functional `ρ(w, t) = Σ_{p ≤ w} (|g(p)| − Re g(p) p^{−it}) / p`,
//! its minimization over `|t| ≤ T`, the resulting mean-value bound, and
//! truncated Euler products.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, io_err, Error, Result};
use crate::multcore::{mean_sum, SieveTable};
use crate::numeric::{Approx, KahanSum, Scalar};
use crate::primes::PrimeSet;

/// Values `g(p)` on consecutive primes, ascending in `p`.
pub type PrimeValues = Vec<(u64, Complex64)>;

pub fn prime_values_from_fn(ps: &PrimeSet, x: f64, f: impl Fn(u64) -> Complex64) -> PrimeValues {
    ps.primes_up_to(x).iter().map(|&p| (p, f(p))).collect()
}

pub fn prime_values_from_table<T: Scalar>(t: &SieveTable<T>, ps: &PrimeSet) -> PrimeValues {
    prime_values_from_fn(ps, t.limit() as f64, |p| {
        let (re, im) = t.get(p).approx().parts();
        Complex64::new(re, im)
    })
}

/// Writes `p,value` rows.
pub fn write_prime_values_csv(gp: &[(u64, Complex64)], path: &Path) -> Result<()> {
    let mut out = String::from("p,value\n");
    for &(p, g) in gp {
        if g.im == 0.0 {
            out.push_str(&format!("{p},{}\n", g.re));
        } else {
            out.push_str(&format!("{p},{}\n", g.to_text()));
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_prime_values_csv(path: &Path) -> Result<PrimeValues> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some("p,value") {
        return Err(err(1, "expected header 'p,value'".into()));
    }
    let mut out: PrimeValues = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (p, v) = line
            .split_once(',')
            .ok_or_else(|| err(i + 1, format!("expected 'p,value', found '{line}'")))?;
        let p: u64 = p.trim().parse().map_err(|e| err(i + 1, format!("bad prime '{p}': {e}")))?;
        let v = Complex64::parse_text(v).map_err(|e| err(i + 1, e))?;
        if out.last().is_some_and(|&(q, _)| q >= p) {
            return Err(err(i + 1, format!("primes must increase, found {p}")));
        }
        out.push((p, v));
    }
    Ok(out)
}

/// Precomputed summands of `ρ` over a fixed prime range.
#[derive(Clone, Debug)]
pub struct RhoSummands {
    log_p: Vec<f64>,
    /// `g(p)/p`
    scaled: Vec<Complex64>,
    abs_part: f64,
    curvature: f64,
}

impl RhoSummands {
    /// Summands for `lower < p ≤ upper`.
    pub fn new(gp: &[(u64, Complex64)], lower: f64, upper: f64) -> Self {
        let mut log_p = Vec::new();
        let mut scaled = Vec::new();
        let mut abs_part = KahanSum::new();
        let mut curvature = KahanSum::new();
        for &(p, g) in gp {
            let pf = p as f64;
            if pf <= lower {
                continue;
            }
            if pf > upper {
                break;
            }
            let l = pf.ln();
            log_p.push(l);
            scaled.push(g / pf);
            abs_part.add(g.norm() / pf);
            curvature.add(g.norm() * l * l / pf);
        }
        RhoSummands {
            log_p,
            scaled,
            abs_part: abs_part.value(),
            curvature: curvature.value(),
        }
    }

    pub fn len(&self) -> usize {
        self.log_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_p.is_empty()
    }

    /// `Σ |g(p)|/p` over the range.
    pub fn abs_part(&self) -> f64 {
        self.abs_part
    }

    /// `ρ` at `t`; each summand is clamped at zero against rounding.
    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = KahanSum::new();
        for (&l, &g) in self.log_p.iter().zip(&self.scaled) {
            let theta = t * l;
            let re = g.re * theta.cos() + g.im * theta.sin();
            acc.add((g.norm() - re).max(0.0));
        }
        acc.value()
    }
}

/// `Σ_{lower < p ≤ w} (|g(p)| − Re g(p) p^{−it}) / p`.
pub fn rho(gp: &[(u64, Complex64)], w: f64, t: f64, lower: f64) -> Result<f64> {
    if !(lower >= 0.0 && w >= lower) {
        return domain(format!("rho needs w ≥ lower ≥ 0, got w = {w}, lower = {lower}"));
    }
    Ok(RhoSummands::new(gp, lower, w).eval(t))
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaReport {
    pub lambda: f64,
    pub t_star: f64,
    #[serde(rename = "T")]
    pub t_max: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub x: f64,
    pub grid_step: f64,
    pub grid_points: usize,
    pub refinement_iterations: u32,
    pub cells_refined: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_profile: Option<Vec<(f64, f64)>>,
}

/// `min(0.05, 1/log x)`.
pub fn default_grid_step(x: f64) -> f64 {
    0.05f64.min(1.0 / x.ln())
}

/// `{i·step : |i| ≤ ⌊T/step⌋}` together with `±T`.
pub fn t_grid(t_max: f64, step: f64) -> Vec<f64> {
    let k = (t_max / step).floor() as i64;
    let mut grid: Vec<f64> = (-k..=k).map(|i| i as f64 * step).collect();
    if grid.first().is_some_and(|&t| t > -t_max) {
        grid.insert(0, -t_max);
        grid.push(t_max);
    }
    grid
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    // (value, t); ties within 1e-12 go to the smaller |t|, then to t ≥ 0
    if (a.0 - b.0).abs() <= 1e-12 {
        a.1.abs() < b.1.abs() || (a.1.abs() == b.1.abs() && a.1 > b.1)
    } else {
        a.0 < b.0
    }
}

/// `ρ` over `(Y, x]` on a grid `t ∈ [−T, T]`.
pub fn rho_profile(gp: &[(u64, Complex64)], y: f64, x: f64, t_max: f64, step: f64) -> Result<Vec<(f64, f64)>> {
    check_lambda_args(y, x, t_max, step)?;
    let rs = RhoSummands::new(gp, y, x);
    Ok(t_grid(t_max, step).into_par_iter().map(|t| (t, rs.eval(t))).collect())
}

fn check_lambda_args(y: f64, x: f64, t_max: f64, step: f64) -> Result<()> {
    if !(t_max > 0.0) {
        return domain(format!("T must be positive, got {t_max}"));
    }
    if !(step > 0.0) {
        return domain(format!("grid step must be positive, got {step}"));
    }
    if !(1.5 <= y && y <= x) {
        return domain(format!("need 3/2 ≤ Y ≤ x, got Y = {y}, x = {x}"));
    }
    Ok(())
}

/// `min_{|t| ≤ T} Σ_{Y < p ≤ x} (|g(p)| − Re g(p) p^{−it}) / p`, by a grid scan
/// followed by trisection in the cells around each promising grid minimum.
///
/// A grid local minimum is refined when its value is within
/// `½ K step²` of the best, `K = Σ |g(p)| log²p / p` bounding `|ρ''|`. The
/// result is never above any grid value but is not certified global.
pub fn minimize_lambda(
    gp: &[(u64, Complex64)],
    y: f64,
    x: f64,
    t_max: f64,
    grid_step: f64,
    refine: u32,
) -> Result<LambdaReport> {
    check_lambda_args(y, x, t_max, grid_step)?;
    let rs = RhoSummands::new(gp, y, x);
    let grid = t_grid(t_max, grid_step);
    let values: Vec<f64> = grid.par_iter().map(|&t| rs.eval(t)).collect();

    let mut best = (values[0], grid[0]);
    for (&t, &v) in grid.iter().zip(&values) {
        if better((v, t), best) {
            best = (v, t);
        }
    }
    let margin = 0.5 * rs.curvature * grid_step * grid_step;
    let n = grid.len();
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] <= values[i - 1];
            let right = i + 1 == n || values[i] <= values[i + 1];
            left && right && values[i] <= best.0 + margin
        })
        .collect();

    let refined: Vec<(f64, f64)> = candidates
        .par_iter()
        .map(|&i| {
            let (mut a, mut b) = (grid[i.saturating_sub(1)], grid[(i + 1).min(n - 1)]);
            for _ in 0..refine {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if rs.eval(m1) <= rs.eval(m2) {
                    b = m2;
                } else {
                    a = m1;
                }
            }
            let t = 0.5 * (a + b);
            (rs.eval(t), t)
        })
        .collect();
    for r in refined {
        if better(r, best) {
            best = r;
        }
    }
    Ok(LambdaReport {
        lambda: best.0,
        t_star: best.1,
        t_max,
        y,
        x,
        grid_step,
        grid_points: n,
        refinement_iterations: refine,
        cells_refined: candidates.len(),
        rho_profile: None,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Theorem2Params {
    #[serde(rename = "Y")]
    pub y: f64,
    pub x: f64,
    #[serde(rename = "T")]
    pub t_max: f64,
    pub c: f64,
    pub beta: f64,
    pub grid_step: f64,
    pub refine: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem2Report {
    /// `|Σ_{n ≤ x} g(n)|`
    pub m_actual: f64,
    /// `Π_{p ≤ x} (1 + |g(p)|/p)`
    pub p_x: f64,
    pub c: f64,
    pub beta: f64,
    /// Worst shortfall `max(0, −min_w Σ_{w < p ≤ x} (|g(p)| − c)/p)` over `w` in `[Y, x]`.
    pub c1: f64,
    pub max_abs_g_prime: f64,
    pub beta_bound_holds: bool,
    /// `γ = 1 + cβ/(c + β)`
    pub gamma: f64,
    /// `Σ_{q = p^k ≤ x, k ≥ 2} |g(q)| q⁻¹ (log q)^γ`
    pub prime_power_series: f64,
    pub lambda_report: LambdaReport,
    pub rhs: f64,
    pub ratio: f64,
}

const HYPOTHESIS_GRID: usize = 64;

pub fn theorem2_evaluate<T: Scalar>(
    t: &SieveTable<T>,
    gp: &[(u64, Complex64)],
    ps: &PrimeSet,
    params: Theorem2Params,
) -> Result<Theorem2Report> {
    let Theorem2Params {
        y,
        x,
        t_max,
        c,
        beta,
        grid_step,
        refine,
    } = params;
    if !(c > 0.0 && beta > 0.0) {
        return domain(format!("c and β must be positive, got c = {c}, β = {beta}"));
    }
    if x.floor() > ps.limit() as f64 {
        return domain(format!("x = {x} exceeds prime limit {}", ps.limit()));
    }
    let lambda_report = minimize_lambda(gp, y, x, t_max, grid_step, refine)?;
    let m_actual = mean_sum(t, x)?.approx().modulus();

    let in_range: Vec<(u64, Complex64)> = gp.iter().copied().filter(|&(p, _)| p as f64 <= x).collect();
    let log_px = in_range
        .iter()
        .map(|&(p, g)| (g.norm() / p as f64).ln_1p())
        .collect::<KahanSum<f64>>()
        .value();
    let p_x = log_px.exp();
    let max_abs_g_prime = in_range.iter().map(|&(_, g)| g.norm()).fold(0.0, f64::max);

    let mut worst = f64::INFINITY;
    for j in 0..HYPOTHESIS_GRID {
        let w = y * (x / y).powf(j as f64 / (HYPOTHESIS_GRID - 1) as f64);
        let s = in_range
            .iter()
            .filter(|&&(p, _)| p as f64 > w)
            .map(|&(p, g)| (g.norm() - c) / p as f64)
            .collect::<KahanSum<f64>>()
            .value();
        worst = worst.min(s);
    }
    let c1 = (-worst).max(0.0);

    let gamma = 1.0 + c * beta / (c + beta);
    let prime_power_series = ps
        .prime_powers(x)
        .into_iter()
        .filter(|pp| pp.k >= 2)
        .map(|pp| {
            let q = pp.q as f64;
            t.get(pp.q).approx().modulus() / q * q.ln().powf(gamma)
        })
        .collect::<KahanSum<f64>>()
        .value();

    let lx = x.ln();
    let rhs = x / lx * p_x * ((-lambda_report.lambda * c / (c + beta)).exp() + t_max.powf(-0.5));
    Ok(Theorem2Report {
        m_actual,
        p_x,
        c,
        beta,
        c1,
        max_abs_g_prime,
        beta_bound_holds: max_abs_g_prime <= beta,
        gamma,
        prime_power_series,
        lambda_report,
        rhs,
        ratio: m_actual / rhs,
    })
}

/// `exp(Σ_{p ≤ cutoff} g(p) p^{−s})`: the Euler product of the exponentially
/// multiplicative function with the given prime values.
pub fn euler_product_eval(gp: &[(u64, Complex64)], s: Complex64, cutoff: f64) -> Result<Complex64> {
    if !(s.re > 1.0) {
        return domain(format!("Euler product needs Re(s) > 1, got {s}"));
    }
    if cutoff > 1.0 && s.re < 1.0 + 1.0 / cutoff.ln() {
        return domain(format!(
            "Re(s) = {} is left of 1 + 1/log(cutoff) = {}",
            s.re,
            1.0 + 1.0 / cutoff.ln()
        ));
    }
    let exponent = gp
        .iter()
        .take_while(|&&(p, _)| p as f64 <= cutoff)
        .map(|&(p, g)| g * (-s * (p as f64).ln()).exp())
        .collect::<KahanSum<Complex64>>()
        .value();
    Ok(exponent.exp())
}

/// `Π_{p ≤ x} (1 + |g(p)|/p) · e^{−λ} · ((σ − 1) log x)^β` for
/// `1 + 1/log x ≤ σ ≤ 2`: the shape bounding `|G(s)|` on `Re s = σ`.
pub fn lemma6_envelope(gp: &[(u64, Complex64)], x: f64, sigma: f64, lambda: f64, beta: f64) -> Result<f64> {
    let lx = x.ln();
    if !(x > 1.0 && sigma >= 1.0 + 1.0 / lx && sigma <= 2.0) {
        return domain(format!("need 1 + 1/log x ≤ σ ≤ 2, got σ = {sigma}, x = {x}"));
    }
    let log_prod = gp
        .iter()
        .take_while(|&&(p, _)| p as f64 <= x)
        .map(|&(p, g)| (g.norm() / p as f64).ln_1p())
        .collect::<KahanSum<f64>>()
        .value();
    Ok((log_prod - lambda).exp() * ((sigma - 1.0) * lx).powf(beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multcore::{catalog, sieve_values};
    use crate::primes::sieve_primes;
    use rand::{Rng, SeedableRng};

    fn constant(ps: &PrimeSet, x: f64, v: f64) -> PrimeValues {
        prime_values_from_fn(ps, x, |_| Complex64::new(v, 0.0))
    }

    #[test]
    fn rho_examples() {
        let ps = sieve_primes(100_000).unwrap();
        let one = constant(&ps, 1e5, 1.0);
        assert_eq!(rho(&one, 1e4, 0.0, 0.0).unwrap(), 0.0);
        let minus = constant(&ps, 1e5, -1.0);
        let v = rho(&minus, 10.0, 0.0, 0.0).unwrap();
        assert!((v - 2.0 * (0.5 + 1.0 / 3.0 + 0.2 + 1.0 / 7.0)).abs() < 1e-12);
        assert!((v - 2.35238).abs() < 1e-5);
        let oracle: f64 = ps
            .primes_up_to(1e3)
            .iter()
            .map(|&p| (1.0 - (0.5 * (p as f64).ln()).cos()) / p as f64)
            .sum();
        let v = rho(&one, 1e3, 0.5, 0.0).unwrap();
        assert!(v > 0.0 && (v - oracle).abs() < 1e-10);
        assert!(rho(&one, 5.0, 0.0, 10.0).is_err());
    }

    #[test]
    fn rho_symmetries() {
        let ps = sieve_primes(5000).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let gp: PrimeValues = ps
            .primes()
            .iter()
            .map(|&p| (p, Complex64::from_polar(rng.gen_range(0.0..2.0), rng.gen_range(0.0..6.3))))
            .collect();
        let conj: PrimeValues = gp.iter().map(|&(p, g)| (p, g.conj())).collect();
        let real: PrimeValues = gp.iter().map(|&(p, g)| (p, Complex64::new(g.re, 0.0))).collect();
        for _ in 0..200 {
            let w = rng.gen_range(2.0..5000.0);
            let t = rng.gen_range(-20.0..20.0);
            let a = rho(&gp, w, -t, 0.0).unwrap();
            let b = rho(&conj, w, t, 0.0).unwrap();
            assert!((a - b).abs() < 1e-12);
            assert_eq!(rho(&real, w, t, 0.0).unwrap(), rho(&real, w, -t, 0.0).unwrap());
            let w2 = w + rng.gen_range(0.0..1000.0);
            assert!(rho(&gp, w2, t, 0.0).unwrap() >= rho(&gp, w, t, 0.0).unwrap());
        }
    }

    #[test]
    fn lambda_examples() {
        let ps = sieve_primes(100_000).unwrap();
        let one = constant(&ps, 1e5, 1.0);
        let r = minimize_lambda(&one, 1.5, 1e4, 3.0, 0.1, 40).unwrap();
        assert_eq!((r.lambda, r.t_star), (0.0, 0.0));

        let twist = prime_values_from_fn(&ps, 1e4, |p| Complex64::from_polar(1.0, (p as f64).ln()));
        let r = minimize_lambda(&twist, 1.5, 1e4, 3.0, 0.05, 40).unwrap();
        assert!((r.t_star - 1.0).abs() < 1e-4, "{r:?}");
        assert!(r.lambda < 1e-6);

        assert!(minimize_lambda(&one, 1.5, 1e4, 0.0, 0.1, 40).is_err());
        assert!(minimize_lambda(&one, 1.5, 1e4, 1.0, 0.0, 40).is_err());
        assert!(minimize_lambda(&one, 1.0, 1e4, 1.0, 0.1, 40).is_err());
        assert!(minimize_lambda(&one, 1e5, 1e4, 1.0, 0.1, 40).is_err());
    }

    #[test]
    fn lambda_against_fine_grid() {
        let ps = sieve_primes(10_000).unwrap();
        let minus = constant(&ps, 1e4, -1.0);
        let (t_max, x) = (5.0, 1e4);
        let r = minimize_lambda(&minus, 1.5, x, t_max, default_grid_step(x), 40).unwrap();
        let rs = RhoSummands::new(&minus, 1.5, x);
        let oracle = (0..=100_000)
            .map(|i| -t_max + i as f64 * 1e-4)
            .map(|t| rs.eval(t))
            .fold(f64::INFINITY, f64::min);
        assert!((r.lambda - oracle).abs() < 1e-3, "{} vs {oracle}", r.lambda);
        // λ never exceeds a grid value
        let profile = rho_profile(&minus, 1.5, x, t_max, default_grid_step(x)).unwrap();
        assert!(profile.iter().all(|&(_, v)| r.lambda <= v));
        assert_eq!(profile.len(), r.grid_points);
    }

    #[test]
    fn theorem2_reports() {
        let ps = sieve_primes(100_000).unwrap();
        let params = Theorem2Params {
            y: 1.5,
            x: 1e5,
            t_max: 4.0,
            c: 1.0,
            beta: 1.0,
            grid_step: default_grid_step(1e5),
            refine: 40,
        };
        let one = sieve_values(&catalog::one::<i64>(), &ps, 100_000).unwrap();
        let gp = prime_values_from_table(&one, &ps);
        let r = theorem2_evaluate(&one, &gp, &ps, params).unwrap();
        assert_eq!(r.lambda_report.lambda, 0.0);
        assert_eq!(r.m_actual, 1e5);
        assert!(r.p_x >= 1.0 && r.rhs > 0.0);
        let factor = r.rhs / (1e5 / 1e5f64.ln() * r.p_x);
        assert!((factor - 1.5).abs() < 1e-12);
        assert!((0.1..=10.0).contains(&r.ratio), "{}", r.ratio);
        assert!(r.beta_bound_holds);
        assert_eq!(r.gamma, 1.5);

        let mu = sieve_values(&catalog::mobius::<i64>(), &ps, 100_000).unwrap();
        let gp = prime_values_from_table(&mu, &ps);
        let r = theorem2_evaluate(&mu, &gp, &ps, params).unwrap();
        let mertens: i64 = mu.values().iter().sum();
        assert_eq!(r.m_actual, mertens.abs() as f64);
        assert!(r.ratio < 0.01);
        assert_eq!(r.prime_power_series, 0.0);
    }

    #[test]
    fn euler_products() {
        let ps = sieve_primes(1_000_000).unwrap();
        let zero = constant(&ps, 1e6, 0.0);
        assert_eq!(euler_product_eval(&zero, Complex64::new(2.0, 0.0), 1e6).unwrap(), Complex64::new(1.0, 0.0));
        let one = constant(&ps, 1e6, 1.0);
        let v = euler_product_eval(&one, Complex64::new(2.0, 0.0), 1e6).unwrap();
        let oracle: f64 = ps.primes().iter().map(|&p| 1.0 / (p as f64 * p as f64)).sum();
        assert!((v.re - oracle.exp()).abs() < 1e-12, "{v} vs {}", oracle.exp());
        assert!((v.re - 1.571841).abs() < 1e-6 && v.im == 0.0);
        let s = Complex64::new(1.3, 4.0);
        let a = euler_product_eval(&one, s, 1e6).unwrap();
        let b = euler_product_eval(&one, s.conj(), 1e6).unwrap();
        assert!((a - b.conj()).norm() < 1e-12);
        assert!(euler_product_eval(&one, Complex64::new(1.0, 0.0), 1e6).is_err());
        assert!(euler_product_eval(&one, Complex64::new(1.05, 0.0), 1e6).is_err());
    }

    #[test]
    fn envelope_domain_and_shape() {
        let ps = sieve_primes(10_000).unwrap();
        let one = constant(&ps, 1e4, 1.0);
        let x = 1e4f64;
        let lo = 1.0 + 1.0 / x.ln();
        let a = lemma6_envelope(&one, x, lo, 0.0, 1.0).unwrap();
        let b = lemma6_envelope(&one, x, 2.0, 0.0, 1.0).unwrap();
        assert!(b > a);
        assert!((lemma6_envelope(&one, x, 2.0, 1.0, 1.0).unwrap() - b / 1f64.exp()).abs() < 1e-9 * b);
        assert!(lemma6_envelope(&one, x, 1.01, 0.0, 1.0).is_err());
        assert!(lemma6_envelope(&one, x, 2.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn prime_value_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let gp: PrimeValues = vec![(2, Complex64::new(-1.0, 0.0)), (3, Complex64::new(0.5, -0.25)), (5, Complex64::new(0.0, 0.0))];
        write_prime_values_csv(&gp, &path).unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("p,value\n2,-1\n"));
        assert_eq!(read_prime_values_csv(&path).unwrap(), gp);
        fs::write(&path, "p,value\n3,1\n2,1\n").unwrap();
        assert!(matches!(read_prime_values_csv(&path), Err(Error::Parse { line: 3, .. })));
    }
}
