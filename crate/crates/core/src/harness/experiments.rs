//! End-to-end experiments. Each one is a pure function of its
//! configuration and a master seed and returns an [`ExperimentReport`].

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::report::{ExperimentReport, RawTable};
use super::stats::{
    covariance, ks_two_sample, ks_two_sample_jittered, quantile, replicates, MonteCarloSummary, Z99,
};
use crate::chaos::{estimate_z_moments, second_moment_series, GridSpec};
use crate::collisions::{detect_collisions, total_mass_identity_check, TestFunction};
use crate::environment::{disorder_from_function, ContinuumAmplitude, EnvironmentField};
use crate::error::{Error, Result};
use crate::kernels::{local_clt_l2_error, mc_rho_norm_sq, rho_chain_norm_sq};
use crate::polymer::{collision_weights, duality_pair, partition_dp, DualityPair};
use crate::stream::{derive_seed, replica_stream};
use crate::ustat::{ustat_moment_suite, Averaging, FnIntegrand, UStatPlan};
use crate::walks::{first_return_time, return_time_pmf, sample_walk, WalkEnsemble};

fn check_ladder(ladder: &[usize]) -> Result<()> {
    if ladder.is_empty() || ladder[0] == 0 || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "ladder must be nonempty, positive and strictly increasing, got {ladder:?}"
        )));
    }
    Ok(())
}

fn check_count(name: &str, value: usize, min: usize) -> Result<()> {
    if value < min {
        return Err(Error::InvalidArgument(format!("{name} must be at least {min}, got {value}")));
    }
    Ok(())
}

fn config_echo<T: Serialize>(cfg: &T, seed: u64) -> Value {
    json!({ "seed": seed, "parameters": cfg })
}

fn summary(xs: &[f64]) -> Result<MonteCarloSummary> {
    MonteCarloSummary::from_samples(xs)
}

/// `|a − b| ≤ k · combined stderr`, also true when both are exact and equal.
fn plateau(prev: &MonteCarloSummary, last: &MonteCarloSummary, k: f64) -> bool {
    prev.agrees_within(last, k)
}

// ---------------------------------------------------------------- duality

/// Walk-side estimates at one horizon.
#[derive(Clone, Debug, Serialize)]
pub struct WalkSide {
    pub horizon: usize,
    /// `E[exp(N^{−1/2} Π_N(f))]`.
    pub exp_pi: MonteCarloSummary,
    /// `E[∏ (1 + X_{N,n})]`.
    pub prod_x: MonteCarloSummary,
    /// Paired difference of the two.
    pub gap: MonteCarloSummary,
    #[serde(skip)]
    pub samples: Vec<DualityPair>,
}

pub fn walk_side(horizon: usize, k: usize, f: &TestFunction, count: usize, seed: u64) -> Result<WalkSide> {
    let pairs: Vec<Result<DualityPair>> = replicates(count, seed, |_, rng| {
        duality_pair(&WalkEnsemble::sample(k, horizon, rng)?, f)
    });
    let samples: Vec<DualityPair> = pairs.into_iter().collect::<Result<_>>()?;
    let a: Vec<f64> = samples.iter().map(|p| p.exp_pi).collect();
    let b: Vec<f64> = samples.iter().map(|p| p.prod_x).collect();
    let d: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a - b).collect();
    Ok(WalkSide { horizon, exp_pi: summary(&a)?, prod_x: summary(&b)?, gap: summary(&d)?, samples })
}

/// `E_ω[𝔷_N(N^{−1/4} A_N)^k]` over `count` environments, with `A = √f`.
/// Returns the summary and the per-replicate values of `𝔷_N`.
pub fn environment_side(
    horizon: usize,
    k: usize,
    f: &TestFunction,
    count: usize,
    seed: u64,
) -> Result<(MonteCarloSummary, Vec<f64>)> {
    let a = disorder_from_function(&ContinuumAmplitude::sqrt_of(f)?, horizon)
        .scaled((horizon as f64).powf(-0.25));
    let z: Vec<f64> = replicates(count, seed, |_, rng| {
        partition_dp(horizon, &a, &EnvironmentField::new(rng.next_u64())).value
    });
    let zk: Vec<f64> = z.iter().map(|v| v.powi(k as i32)).collect();
    Ok((summary(&zk)?, z))
}

/// Chaos-side target `E[(𝒵_{√(2f)})^k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosTarget {
    pub time_cells: usize,
    pub space_step: f64,
    pub half_width: f64,
    pub max_order: usize,
    pub replicates: usize,
    /// Allowed relative slack on top of three combined standard errors.
    pub rel_tol: f64,
}

impl Default for ChaosTarget {
    fn default() -> Self {
        Self { time_cells: 32, space_step: 0.25, half_width: 6.0, max_order: 6, replicates: 200, rel_tol: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualityConfig {
    pub ladder: Vec<usize>,
    pub k: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub walk_replicates: usize,
    /// Zero skips the environment side and the exact-bridge verdict.
    pub env_replicates: usize,
    /// Required end-to-end shrink factor of `|(a) − (b)|`.
    pub gap_factor: f64,
    pub chaos: Option<ChaosTarget>,
}

impl Default for DualityConfig {
    fn default() -> Self {
        Self {
            ladder: vec![64, 256, 1024, 4096],
            k: 2,
            alpha: 1.0,
            sigma: 1.0,
            walk_replicates: 10_000,
            env_replicates: 10_000,
            gap_factor: 2.0,
            chaos: None,
        }
    }
}

/// Walk-side and environment-side moments along a ladder of horizons.
pub fn duality_experiment(cfg: &DualityConfig, seed: u64) -> Result<ExperimentReport> {
    check_ladder(&cfg.ladder)?;
    check_count("k", cfg.k, 2)?;
    check_count("walk_replicates", cfg.walk_replicates, 2)?;
    let f = TestFunction::gaussian_bump(cfg.alpha, cfg.sigma);
    if !f.is_nonneg() {
        return Err(Error::InvalidArgument(format!("alpha must be nonnegative, got {}", cfg.alpha)));
    }
    let mut report = ExperimentReport::new("duality", config_echo(cfg, seed));
    let mut raw_walk = RawTable::new("duality_walks", &["N", "replicate", "scaled_pi", "t_sum", "exp_pi", "prod_x"]);
    let mut raw_env = RawTable::new("duality_environment", &["N", "replicate", "z"]);
    let mut rows = Vec::new();
    let mut bridge = Vec::new();
    let mut gaps = Vec::new();
    for &n in &cfg.ladder {
        let walks = walk_side(n, cfg.k, &f, cfg.walk_replicates, derive_seed(seed, &format!("duality/walks/{n}")))?;
        for (r, p) in walks.samples.iter().enumerate() {
            raw_walk.rows.push(vec![n as f64, r as f64, p.scaled_pi, p.t_sum, p.exp_pi, p.prod_x]);
        }
        let env = if cfg.env_replicates > 0 {
            let (s, z) = environment_side(n, cfg.k, &f, cfg.env_replicates, derive_seed(seed, &format!("duality/env/{n}")))?;
            raw_env.rows.extend(z.iter().enumerate().map(|(r, v)| vec![n as f64, r as f64, *v]));
            bridge.push((n, walks.prod_x.ci_overlaps(&s)));
            Some(s)
        } else {
            None
        };
        gaps.push(walks.gap.mean.abs());
        rows.push(json!({
            "N": n,
            "exp_pi": walks.exp_pi,
            "prod_x": walks.prod_x,
            "environment": env,
            "gap": walks.gap,
        }));
    }

    let mut results = json!({ "rows": rows });
    if !bridge.is_empty() {
        let failed: Vec<usize> = bridge.iter().filter(|b| !b.1).map(|b| b.0).collect();
        report.verdict(
            "exact-bridge",
            failed.is_empty(),
            format!("99% CI overlap of walk and environment moments; failing N: {failed:?}"),
        );
    }
    let (first, last) = (gaps[0], gaps[gaps.len() - 1]);
    report.verdict(
        "asymptotic-gap",
        last * cfg.gap_factor <= first,
        format!("|gap| {first:.4e} at N={} -> {last:.4e} at N={}; required factor {}", cfg.ladder[0], cfg.ladder[cfg.ladder.len() - 1], cfg.gap_factor),
    );

    if let Some(ch) = &cfg.chaos {
        let amp = ContinuumAmplitude::sqrt_of(&f)?.scaled(2f64.sqrt());
        let grid = GridSpec::new(ch.time_cells, ch.space_step, ch.half_width)?;
        let z = estimate_z_moments(&amp, grid, ch.max_order, cfg.k, ch.replicates, derive_seed(seed, "duality/chaos"))?;
        let target = &z.moments[cfg.k - 1];
        let walk_last = rows.last().and_then(|r| r.get("exp_pi")).cloned().unwrap_or(Value::Null);
        let a_last: MonteCarloSummary = serde_json::from_value(walk_last)?;
        let slack = 3.0 * a_last.combined_stderr(target) + ch.rel_tol * target.mean.abs();
        let diff = (a_last.mean - target.mean).abs();
        report.verdict(
            "chaos-target",
            diff <= slack,
            format!("|(a) - E[Z^k]| = {diff:.4e}, allowed {slack:.4e}"),
        );
        results["chaos_target"] = json!({
            "moment": target,
            "refinement_ratio": z.refinement_ratio,
            "truncation_bound": z.truncation_bound,
        });
    }
    report.results = results;
    report.raw = vec![raw_walk, raw_env];
    Ok(report)
}

// ------------------------------------------------------ exponential moment

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpMomentConfig {
    pub beta: f64,
    pub ladder: Vec<usize>,
    pub replicates: usize,
}

impl Default for ExpMomentConfig {
    fn default() -> Self {
        Self { beta: 1.0, ladder: (6..=14).map(|p| 1usize << p).collect(), replicates: 100_000 }
    }
}

/// `#{1 ≤ n ≤ N : S_n = 0}` for a fresh walk, without storing the path.
pub fn sample_local_time<R: RngCore + ?Sized>(horizon: usize, rng: &mut R) -> u32 {
    let (mut s, mut count, mut remaining) = (0i64, 0u32, horizon);
    while remaining > 0 {
        let take = remaining.min(64);
        let mut bits = rng.next_u64();
        for _ in 0..take {
            s += ((bits & 1) as i64) * 2 - 1;
            count += u32::from(s == 0);
            bits >>= 1;
        }
        remaining -= take;
    }
    count
}

/// `E[exp(β N^{−1/2} L_N)]` with `L_N` the local time at zero.
pub fn exponential_moment_probe(cfg: &ExpMomentConfig, seed: u64) -> Result<ExperimentReport> {
    check_ladder(&cfg.ladder)?;
    check_count("replicates", cfg.replicates, 2)?;
    if !(cfg.beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {}", cfg.beta)));
    }
    let mut report = ExperimentReport::new("expmoment", config_echo(cfg, seed));
    let mut raw = RawTable::new("expmoment", &["N", "replicate", "local_time"]);
    let mut estimates = Vec::new();
    for &n in &cfg.ladder {
        let lt: Vec<u32> = replicates(cfg.replicates, derive_seed(seed, &format!("expmoment/{n}")), |_, rng| {
            sample_local_time(n, rng)
        });
        let scale = cfg.beta / (n as f64).sqrt();
        let xs: Vec<f64> = lt.iter().map(|&l| (scale * f64::from(l)).exp()).collect();
        raw.rows.extend(lt.iter().enumerate().map(|(r, &l)| vec![n as f64, r as f64, f64::from(l)]));
        estimates.push(summary(&xs)?);
    }
    let m = estimates.len();
    let passed = m < 2 || plateau(&estimates[m - 2], &estimates[m - 1], 3.0);
    report.verdict(
        "plateau",
        passed,
        format!(
            "last two estimates {:.5} ± {:.5} and {:.5} ± {:.5}",
            estimates[m.saturating_sub(2)].mean,
            estimates[m.saturating_sub(2)].stderr,
            estimates[m - 1].mean,
            estimates[m - 1].stderr
        ),
    );
    let rows: Vec<Value> = cfg.ladder.iter().zip(&estimates).map(|(n, e)| json!({ "N": n, "estimate": e })).collect();
    report.results = json!({ "rows": rows });
    report.raw = vec![raw];
    Ok(report)
}

// --------------------------------------------------------------- tightness

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TightnessConfig {
    pub k: usize,
    pub ladder: Vec<usize>,
    pub m_ladder: Vec<f64>,
    pub replicates: usize,
    /// Probability bound required at the largest `m`.
    pub threshold: f64,
}

impl Default for TightnessConfig {
    fn default() -> Self {
        Self {
            k: 2,
            ladder: vec![64, 256, 1024, 4096],
            m_ladder: vec![1.0, 2.0, 4.0, 8.0],
            replicates: 100_000,
            threshold: 0.01,
        }
    }
}

/// Tail probabilities of `‖Π_N‖/√N` and `max |S|/√N`.
pub fn tightness_probe(cfg: &TightnessConfig, seed: u64) -> Result<ExperimentReport> {
    check_ladder(&cfg.ladder)?;
    check_count("k", cfg.k, 2)?;
    check_count("replicates", cfg.replicates, 2)?;
    if cfg.m_ladder.is_empty() || cfg.m_ladder.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("m_ladder must be nonempty and strictly increasing".into()));
    }
    let mut report = ExperimentReport::new("tightness", config_echo(cfg, seed));
    let nm = cfg.m_ladder.len();
    let mut sup_mass = vec![0.0f64; nm];
    let mut sup_max = vec![0.0f64; nm];
    let mut rows = Vec::new();
    for &n in &cfg.ladder {
        let sq = (n as f64).sqrt();
        let draws: Vec<Result<(f64, f64)>> =
            replicates(cfg.replicates, derive_seed(seed, &format!("tightness/{n}")), |_, rng| {
                let e = WalkEnsemble::sample(cfg.k, n, rng)?;
                let mass = detect_collisions(&e).with_multiplicity.mass() as f64 / sq;
                let top = e.walks().iter().map(|w| w.max_abs()).max().unwrap_or(0);
                Ok((mass, f64::from(top) / sq))
            });
        let draws: Vec<(f64, f64)> = draws.into_iter().collect::<Result<_>>()?;
        let r = draws.len() as f64;
        let tail = |pick: fn(&(f64, f64)) -> f64, m: f64| draws.iter().filter(|d| pick(d) > m).count() as f64 / r;
        let p_mass: Vec<f64> = cfg.m_ladder.iter().map(|&m| tail(|d| d.0, m)).collect();
        let p_max: Vec<f64> = cfg.m_ladder.iter().map(|&m| tail(|d| d.1, m)).collect();
        for j in 0..nm {
            sup_mass[j] = sup_mass[j].max(p_mass[j]);
            sup_max[j] = sup_max[j].max(p_max[j]);
        }
        rows.push(json!({ "N": n, "p_mass": p_mass, "p_max": p_max }));
    }
    for (rule, sup) in [("mass-tail", &sup_mass), ("range-tail", &sup_max)] {
        let monotone = sup.windows(2).all(|w| w[1] <= w[0]);
        let small = sup[nm - 1] < cfg.threshold;
        report.verdict(
            rule,
            monotone && small,
            format!("sup over N of the tail per m: {sup:?}; threshold {}", cfg.threshold),
        );
    }
    report.results = json!({ "rows": rows, "m_ladder": cfg.m_ladder, "sup_mass": sup_mass, "sup_max": sup_max });
    Ok(report)
}

// ------------------------------------------------------------- product-sum

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// `X ≡ 0`.
    Zero,
    /// `X_{N,n} = 1/N`.
    Harmonic,
    /// Collision weights at amplitude `N^{−1/4} √f`.
    Polymer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProductSumConfig {
    pub generator: Generator,
    pub ladder: Vec<usize>,
    pub replicates: usize,
    pub k: usize,
    pub alpha: f64,
    pub sigma: f64,
    /// Relative slack on the pathwise bounds, for rounding only.
    pub slack: f64,
}

impl Default for ProductSumConfig {
    fn default() -> Self {
        Self {
            generator: Generator::Polymer,
            ladder: vec![64, 256, 1024, 4096],
            replicates: 100_000,
            k: 3,
            alpha: 1.0,
            sigma: 1.0,
            slack: 1e-12,
        }
    }
}

/// `(Σ X, ∏(1 + X), Σ X², max X)` of one array.
fn product_sum(xs: &[f64]) -> Result<(f64, f64, f64)> {
    if let Some(&x) = xs.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::NegativeWeight(x));
    }
    let s = crate::harness::stats::compensated_sum(xs.iter().copied());
    let lp = crate::harness::stats::compensated_sum(xs.iter().map(|x| x.ln_1p()));
    let q = crate::harness::stats::compensated_sum(xs.iter().map(|x| x * x));
    Ok((s, lp, q))
}

/// Pathwise `exp(S − Q/2) ≤ ∏(1 + X) ≤ exp(S)` and concentration of the
/// ratio `∏(1 + X)/e^S` at one along the ladder.
pub fn product_sum_property_check(cfg: &ProductSumConfig, seed: u64) -> Result<ExperimentReport> {
    check_ladder(&cfg.ladder)?;
    check_count("replicates", cfg.replicates, 2)?;
    let mut report = ExperimentReport::new("product-sum", config_echo(cfg, seed));
    let f = TestFunction::gaussian_bump(cfg.alpha, cfg.sigma);
    let amp = ContinuumAmplitude::sqrt_of(&f)?;
    let mut raw = RawTable::new("product_sum", &["N", "replicate", "sum", "log_product", "sum_sq"]);
    let mut rows = Vec::new();
    let mut violations = 0usize;
    let mut total = 0usize;
    let mut q99 = Vec::new();
    for &n in &cfg.ladder {
        let theta = disorder_from_function(&amp, n).scaled((n as f64).powf(-0.25));
        let draws: Vec<Result<(f64, f64, f64)>> = match cfg.generator {
            Generator::Zero | Generator::Harmonic => {
                let x = if cfg.generator == Generator::Zero { 0.0 } else { 1.0 / n as f64 };
                let row = product_sum(&vec![x; n])?;
                (0..cfg.replicates).map(|_| Ok(row)).collect()
            }
            Generator::Polymer => replicates(cfg.replicates, derive_seed(seed, &format!("product-sum/{n}")), |_, rng| {
                let e = WalkEnsemble::sample(cfg.k, n, rng)?;
                product_sum(&collision_weights(&e, &theta).per_step)
            }),
        };
        let draws: Vec<(f64, f64, f64)> = draws.into_iter().collect::<Result<_>>()?;
        let mut dev = Vec::with_capacity(draws.len());
        for (r, &(s, lp, q)) in draws.iter().enumerate() {
            let upper = lp <= s + cfg.slack * s.abs().max(1.0);
            let lower = lp >= s - 0.5 * q - cfg.slack * s.abs().max(1.0);
            violations += usize::from(!(upper && lower));
            total += 1;
            dev.push((lp - s).exp_m1().abs());
            raw.rows.push(vec![n as f64, r as f64, s, lp, q]);
        }
        let q = quantile(&dev, 0.99);
        q99.push(q);
        let sums: Vec<f64> = draws.iter().map(|d| d.0).collect();
        rows.push(json!({ "N": n, "sum": summary(&sums)?, "ratio_deviation_q99": q }));
    }
    report.verdict(
        "pathwise-sandwich",
        violations == 0,
        format!("{violations} of {total} replicates outside exp(S - Q/2) <= P <= exp(S)"),
    );
    let shrinking = q99.windows(2).all(|w| if w[0] > 0.0 { w[1] < w[0] } else { w[1] == 0.0 });
    report.verdict(
        "ratio-concentration",
        shrinking,
        format!("99th percentile of |P/e^S - 1| along the ladder: {q99:?}"),
    );
    report.results = json!({ "rows": rows });
    report.raw = vec![raw];
    Ok(report)
}

// ------------------------------------------------------------- convergence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub k: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub ladder: Vec<usize>,
    pub replicates: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { k: 3, alpha: 1.0, sigma: 1.0, ladder: vec![64, 256, 1024], replicates: 10_000 }
    }
}

/// Samples of `N^{−1/2}Π_N(f)`, `N^{−1/2}Π′_N(f)` and `N^{−1/2}‖Π_N − Π′_N‖`.
pub fn convergence_study(cfg: &ConvergenceConfig, seed: u64) -> Result<ExperimentReport> {
    check_ladder(&cfg.ladder)?;
    check_count("k", cfg.k, 2)?;
    check_count("replicates", cfg.replicates, 2)?;
    let f = TestFunction::gaussian_bump(cfg.alpha, cfg.sigma);
    let mut report = ExperimentReport::new("convergence", config_echo(cfg, seed));
    let mut raw = RawTable::new("convergence", &["N", "replicate", "pi_f", "pi_prime_f", "excess_mass"]);
    let mut levels: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut gaps = Vec::new();
    for &n in &cfg.ladder {
        let sq = (n as f64).sqrt();
        let draws: Vec<Result<(f64, f64, f64)>> =
            replicates(cfg.replicates, derive_seed(seed, &format!("convergence/{n}")), |_, rng| {
                let c = detect_collisions(&WalkEnsemble::sample(cfg.k, n, rng)?);
                Ok((c.with_multiplicity.integrate(&f) / sq, c.distinct.integrate(&f) / sq, c.excess_mass() as f64 / sq))
            });
        let draws: Vec<(f64, f64, f64)> = draws.into_iter().collect::<Result<_>>()?;
        raw.rows.extend(draws.iter().enumerate().map(|(r, d)| vec![n as f64, r as f64, d.0, d.1, d.2]));
        let gap: Vec<f64> = draws.iter().map(|d| d.2).collect();
        gaps.push(summary(&gap)?);
        levels.push((draws.iter().map(|d| d.0).collect(), draws.iter().map(|d| d.1).collect()));
    }

    let mut consecutive = Vec::new();
    for w in levels.windows(2) {
        consecutive.push(ks_two_sample(&w[0].0, &w[1].0)?.statistic);
    }
    let (pi, pi_prime) = &levels[levels.len() - 1];
    let merge = if pi == pi_prime { 0.0 } else { ks_two_sample(pi, pi_prime)?.statistic };

    if consecutive.len() >= 2 {
        report.verdict(
            "ladder-ks-decreasing",
            consecutive.windows(2).all(|w| w[1] < w[0]),
            format!("KS distances between consecutive levels: {consecutive:?}"),
        );
    }
    if let Some(&reference) = consecutive.first() {
        report.verdict(
            "pi-merging",
            merge == 0.0 || merge < reference,
            format!("KS(Pi, Pi') at N={} is {merge:.4}; first consecutive-level distance {reference:.4}", cfg.ladder[cfg.ladder.len() - 1]),
        );
    }
    let means: Vec<f64> = gaps.iter().map(|g| g.mean).collect();
    report.verdict(
        "excess-mass-decay",
        means.windows(2).all(|w| if w[0] > 0.0 { w[1] < w[0] } else { w[1] == 0.0 }),
        format!("mean N^(-1/2) |Pi - Pi'| along the ladder: {means:?}"),
    );
    let rows: Vec<Value> = cfg
        .ladder
        .iter()
        .zip(&levels)
        .zip(&gaps)
        .map(|((n, (a, b)), g)| Ok(json!({ "N": n, "pi_f": summary(a)?, "pi_prime_f": summary(b)?, "excess_mass": g })))
        .collect::<Result<_>>()?;
    report.results = json!({ "rows": rows, "consecutive_ks": consecutive, "merge_ks": merge });
    report.raw = vec![raw];
    Ok(report)
}

// ---------------------------------------------------------- walk laws

/// Two-sample test between `‖Π_N‖` for two walks and `#{n ≤ N : S_{2n} = 0}`.
pub fn local_time_law_check(horizon: usize, count: usize, seed: u64) -> Result<ExperimentReport> {
    check_count("replicates", count, 2)?;
    let mut report = ExperimentReport::new("local-time-law", json!({ "seed": seed, "N": horizon, "replicates": count }));
    let masses: Vec<Result<f64>> = replicates(count, derive_seed(seed, "local-time/pairs"), |_, rng| {
        let (mass, zeros) = total_mass_identity_check(&WalkEnsemble::sample(2, horizon, rng)?)?;
        debug_assert_eq!(mass, zeros);
        Ok(mass as f64)
    });
    let xs: Vec<f64> = masses.into_iter().collect::<Result<_>>()?;
    let ys: Vec<f64> = replicates(count, derive_seed(seed, "local-time/single"), |_, rng| {
        let w = sample_walk(2 * horizon, rng);
        (1..=horizon).filter(|&n| w.at(2 * n) == 0).count() as f64
    });
    let ks = ks_two_sample_jittered(&xs, &ys, &mut replica_stream(derive_seed(seed, "local-time/jitter"), 0))?;
    report.verdict("local-time-law", ks.p_value > 0.01, format!("jittered KS D = {:.4}, p = {:.4}", ks.statistic, ks.p_value));
    report.results = json!({ "ks": ks, "pairs": summary(&xs)?, "single": summary(&ys)? });
    Ok(report)
}

/// Empirical first-return frequencies against `P(T_1 = 2k)`, `k ≤ kmax`.
pub fn return_time_check(walks: usize, kmax: usize, seed: u64) -> Result<ExperimentReport> {
    check_count("walks", walks, 2)?;
    check_count("kmax", kmax, 1)?;
    let mut report = ExperimentReport::new("return-time", json!({ "seed": seed, "walks": walks, "kmax": kmax }));
    let hits: Vec<Option<usize>> =
        replicates(walks, derive_seed(seed, "return-time"), |_, rng| first_return_time(&sample_walk(2 * kmax, rng)));
    let mut counts = vec![0usize; kmax];
    for t in hits.into_iter().flatten() {
        counts[t / 2 - 1] += 1;
    }
    let pmf = return_time_pmf(kmax);
    let w = walks as f64;
    let mut rows = Vec::new();
    let mut outside = Vec::new();
    for (i, (&c, &p)) in counts.iter().zip(&pmf).enumerate() {
        let band = Z99 * (w * p * (1.0 - p)).sqrt();
        let dev = (c as f64 - w * p).abs();
        if dev > band {
            outside.push(i + 1);
        }
        rows.push(json!({ "k": i + 1, "count": c, "expected": w * p, "band": band }));
    }
    report.verdict("return-time-pmf", outside.is_empty(), format!("k outside the 99% band: {outside:?}"));
    report.results = json!({ "rows": rows });
    Ok(report)
}

// ---------------------------------------------------------- moment plateau

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub ladder: Vec<usize>,
    pub k: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub replicates: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { ladder: (6..=14).map(|p| 1usize << p).collect(), k: 2, alpha: 1.0, sigma: 1.0, replicates: 500 }
    }
}

/// Single-environment values `𝔷_N(N^{−1/4} A_N)` plus the `k`-th moment
/// ladder over environments.
pub fn moment_plateau(cfg: &PartitionConfig, seed: u64) -> Result<ExperimentReport> {
    check_ladder(&cfg.ladder)?;
    check_count("k", cfg.k, 1)?;
    check_count("replicates", cfg.replicates, 2)?;
    let f = TestFunction::gaussian_bump(cfg.alpha, cfg.sigma);
    let amp = ContinuumAmplitude::sqrt_of(&f)?;
    let field = EnvironmentField::new(derive_seed(seed, "partition/field"));
    let mut report = ExperimentReport::new("partition", config_echo(cfg, seed));
    let mut raw = RawTable::new("partition", &["N", "replicate", "z"]);
    let mut rows = Vec::new();
    let mut moments = Vec::new();
    for &n in &cfg.ladder {
        let a = disorder_from_function(&amp, n).scaled((n as f64).powf(-0.25));
        let value = partition_dp(n, &a, &field).value;
        if n == 1 {
            let closed = 1.0 + 0.5 * (a.at(1, 1) * field.omega_f64(1, 1) + a.at(1, -1) * field.omega_f64(1, -1));
            report.verdict(
                "one-step-closed-form",
                (value - closed).abs() <= 1e-15,
                format!("dp {value:?}, closed form {closed:?}"),
            );
        }
        let (m, z) = environment_side(n, cfg.k, &f, cfg.replicates, derive_seed(seed, &format!("partition/env/{n}")))?;
        raw.rows.extend(z.iter().enumerate().map(|(r, v)| vec![n as f64, r as f64, *v]));
        rows.push(json!({ "N": n, "value": value, "moment": m }));
        moments.push(m);
    }
    let l = moments.len();
    if l >= 2 {
        let (p, q) = (&moments[l - 2], &moments[l - 1]);
        report.verdict(
            "moment-plateau",
            plateau(p, q, 3.0),
            format!("E[z^k]: {:.5} ± {:.5} then {:.5} ± {:.5}", p.mean, p.stderr, q.mean, q.stderr),
        );
    }
    report.results = json!({ "field_seed": field.seed(), "rows": rows });
    report.raw = vec![raw];
    Ok(report)
}

// ------------------------------------------------------------- collisions

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionsConfig {
    pub k: usize,
    pub horizon: usize,
    pub replicates: usize,
}

impl Default for CollisionsConfig {
    fn default() -> Self {
        Self { k: 2, horizon: 256, replicates: 10_000 }
    }
}

/// One collision measure for export plus pathwise mass checks.
pub fn collisions_experiment(cfg: &CollisionsConfig, seed: u64) -> Result<ExperimentReport> {
    check_count("k", cfg.k, 2)?;
    check_count("replicates", cfg.replicates, 2)?;
    let mut report = ExperimentReport::new("collisions", config_echo(cfg, seed));
    let pairs = (cfg.k * (cfg.k - 1) / 2) as u64;
    let draws: Vec<Result<(u64, u64, bool)>> =
        replicates(cfg.replicates, derive_seed(seed, "collisions"), |_, rng| {
            let e = WalkEnsemble::sample(cfg.k, cfg.horizon, rng)?;
            let c = detect_collisions(&e);
            let identity = if cfg.k == 2 {
                let (m, z) = total_mass_identity_check(&e)?;
                m == z
            } else {
                true
            };
            Ok((c.with_multiplicity.mass(), c.distinct.mass(), identity))
        });
    let draws: Vec<(u64, u64, bool)> = draws.into_iter().collect::<Result<_>>()?;
    let bounds = draws.iter().filter(|(p, q, _)| !(q <= p && *p <= pairs * q)).count();
    report.verdict(
        "multiplicity-bounds",
        bounds == 0,
        format!("{bounds} replicates violate |Pi'| <= |Pi| <= C(k,2)|Pi'|"),
    );
    if cfg.k == 2 {
        let broken = draws.iter().filter(|d| !d.2).count();
        report.verdict("pathwise-mass-identity", broken == 0, format!("{broken} replicates differ"));
    }
    let sample = detect_collisions(&WalkEnsemble::sample(cfg.k, cfg.horizon, &mut replica_stream(derive_seed(seed, "collisions/sample"), 0))?);
    let mut raw = RawTable::new("collision_measure", &["n", "z", "weight"]);
    raw.rows.extend(
        sample.with_multiplicity.atoms().iter().map(|a| vec![f64::from(a.n), f64::from(a.z), f64::from(a.weight)]),
    );
    let masses: Vec<f64> = draws.iter().map(|d| d.0 as f64 / (cfg.horizon as f64).sqrt()).collect();
    report.results = json!({
        "scaled_mass": summary(&masses)?,
        "sample_mass": sample.with_multiplicity.mass(),
        "sample_atoms": sample.with_multiplicity.atoms().len(),
    });
    report.raw = vec![raw];
    Ok(report)
}

// ----------------------------------------------------------------- kernels

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelsConfig {
    pub max_order: usize,
    pub norm_samples: usize,
    pub norm_rel_tol: f64,
    pub clt_ladder: Vec<usize>,
    pub clt_samples: usize,
}

impl Default for KernelsConfig {
    fn default() -> Self {
        Self {
            max_order: 4,
            norm_samples: 1_000_000,
            norm_rel_tol: 0.01,
            clt_ladder: vec![16, 64, 256, 1024, 4096],
            clt_samples: 4_000_000,
        }
    }
}

/// Importance-sampled chain norms and the first-order local-CLT ladder.
pub fn kernels_check(cfg: &KernelsConfig, seed: u64) -> Result<ExperimentReport> {
    check_ladder(&cfg.clt_ladder)?;
    let mut report = ExperimentReport::new("kernels", config_echo(cfg, seed));
    let mut norms = Vec::new();
    let mut worst = 0.0f64;
    for n in 1..=cfg.max_order {
        let e = mc_rho_norm_sq(n, cfg.norm_samples, derive_seed(seed, &format!("kernels/norm/{n}")));
        let exact = rho_chain_norm_sq(n);
        let rel = (e.value - exact).abs() / exact;
        worst = worst.max(rel);
        norms.push(json!({ "n": n, "closed_form": exact, "estimate": e.value, "stderr": e.stderr, "relative_error": rel }));
    }
    report.verdict("chain-norms", worst <= cfg.norm_rel_tol, format!("worst relative error {worst:.3e}, tolerance {}", cfg.norm_rel_tol));

    let mut clt = Vec::new();
    for &n in &cfg.clt_ladder {
        clt.push(local_clt_l2_error(1, n, cfg.clt_samples, derive_seed(seed, &format!("kernels/clt/{n}")))?);
    }
    let decreasing = clt.windows(2).all(|w| w[0].value - w[1].value > 2.0 * w[0].stderr.hypot(w[1].stderr));
    report.verdict(
        "local-clt-ladder",
        decreasing,
        format!("errors {:?}", clt.iter().map(|e| (e.value, e.stderr)).collect::<Vec<_>>()),
    );
    let clt_rows: Vec<Value> = cfg.clt_ladder.iter().zip(&clt).map(|(n, e)| json!({ "N": n, "error": e })).collect();
    report.results = json!({ "norms": norms, "local_clt": clt_rows });
    Ok(report)
}

// ------------------------------------------------------------------- ustat

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UStatConfig {
    pub horizon: usize,
    pub replicates: usize,
    pub amplitude: f64,
    pub nodes: usize,
}

impl Default for UStatConfig {
    fn default() -> Self {
        Self { horizon: 8, replicates: 20_000, amplitude: 1.0, nodes: 3 }
    }
}

/// Centring, exact variance and cross-order orthogonality of first- and
/// second-order U-statistics.
pub fn ustat_check(cfg: &UStatConfig, seed: u64) -> Result<ExperimentReport> {
    check_count("horizon", cfg.horizon, 1)?;
    check_count("replicates", cfg.replicates, 2)?;
    let mut report = ExperimentReport::new("ustat", config_echo(cfg, seed));
    let g1 = FnIntegrand::new(1, 3.0, |t, x| (1.0 + t[0]) * (-x[0] * x[0]).exp());
    let g2 = FnIntegrand::new(2, 3.0, |t, x| (-(x[0] * x[0] + x[1] * x[1])).exp() * (1.0 + t[0] * t[1])).symmetric();
    let averaging = Averaging::Quadrature { nodes: cfg.nodes };
    let p1 = UStatPlan::compile(&g1, cfg.horizon, averaging)?;
    let p2 = UStatPlan::compile(&g2, cfg.horizon, averaging)?;
    let a = crate::environment::DisorderFunction::constant(cfg.amplitude);
    let suite = ustat_moment_suite(&[&p1, &p2], &a, cfg.replicates, derive_seed(seed, "ustat"))?;
    let centred = suite.plans.iter().all(|p| p.mean.mean.abs() <= 3.0 * p.mean.stderr + 1e-12);
    report.verdict("centred", centred, "each statistic has mean within 3 stderr of 0");
    let variance = suite
        .plans
        .iter()
        .all(|p| (p.sample_variance - p.exact_variance).abs() <= 3.0 * p.variance_stderr + 1e-12);
    report.verdict("exact-variance", variance, "sample variance within 3 stderr of the exact variance");
    let orth = suite.cross.iter().all(|c| c.covariance.abs() <= 3.0 * c.stderr + 1e-12);
    report.verdict("orthogonality", orth, "cross-order covariance within 3 stderr of 0");
    report.results = serde_json::to_value(&suite)?;
    Ok(report)
}

// ------------------------------------------------------------------- chaos

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosConfig {
    pub gamma: f64,
    pub time_cells: usize,
    pub space_step: f64,
    pub half_width: f64,
    pub max_order: usize,
    pub replicates: usize,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5 * 2f64.sqrt(),
            time_cells: 64,
            space_step: 0.125,
            half_width: 6.0,
            max_order: 6,
            replicates: 1000,
        }
    }
}

/// Second moment of `𝒵_γ` at constant amplitude against the series.
pub fn chaos_check(cfg: &ChaosConfig, seed: u64) -> Result<ExperimentReport> {
    check_count("replicates", cfg.replicates, 2)?;
    let mut report = ExperimentReport::new("chaos", config_echo(cfg, seed));
    let grid = GridSpec::new(cfg.time_cells, cfg.space_step, cfg.half_width)?;
    let amp = ContinuumAmplitude::constant(cfg.gamma);
    let z = estimate_z_moments(&amp, grid, cfg.max_order, 2, cfg.replicates, derive_seed(seed, "chaos"))?;
    let target = second_moment_series(cfg.gamma, 1e-15);
    let est = &z.moments[1];
    let diff = (est.mean - target).abs();
    report.verdict(
        "second-moment",
        diff <= 3.0 * est.stderr,
        format!("E[Z^2] = {:.5} ± {:.5}, series {target:.5}", est.mean, est.stderr),
    );
    let first = &z.moments[0];
    report.verdict(
        "unit-mean",
        (first.mean - 1.0).abs() <= 3.0 * first.stderr + 1e-12,
        format!("E[Z] = {:.5} ± {:.5}", first.mean, first.stderr),
    );
    let orders = z.fine_terms.first().map_or(0, Vec::len);
    let mut cross = Vec::new();
    for i in 1..orders {
        for j in i + 1..orders {
            let xi: Vec<f64> = z.fine_terms.iter().map(|t| t[i]).collect();
            let xj: Vec<f64> = z.fine_terms.iter().map(|t| t[j]).collect();
            let (c, se) = covariance(&xi, &xj);
            cross.push(json!({ "orders": [i, j], "covariance": c, "stderr": se }));
        }
    }
    report.results = json!({ "target": target, "moments": z, "order_covariances": cross });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_test_function_gives_unit_estimates() {
        let cfg = DualityConfig {
            ladder: vec![8, 32],
            k: 3,
            alpha: 0.0,
            walk_replicates: 50,
            env_replicates: 50,
            ..Default::default()
        };
        let r = duality_experiment(&cfg, 7).unwrap();
        assert!(r.all_passed(), "{}", r.to_text());
        for row in r.results["rows"].as_array().unwrap() {
            for key in ["exp_pi", "prod_x", "environment"] {
                assert_eq!(row[key]["mean"].as_f64(), Some(1.0));
                assert_eq!(row[key]["stderr"].as_f64(), Some(0.0));
            }
        }
    }

    #[test]
    fn zero_beta_moments_are_one() {
        let cfg = ExpMomentConfig { beta: 0.0, ladder: vec![16, 64], replicates: 20 };
        let r = exponential_moment_probe(&cfg, 1).unwrap();
        assert!(r.all_passed());
        for row in r.results["rows"].as_array().unwrap() {
            assert_eq!(row["estimate"]["mean"].as_f64(), Some(1.0));
        }
    }

    #[test]
    fn exponential_moment_monotone_in_beta() {
        let est = |beta| {
            let r = exponential_moment_probe(&ExpMomentConfig { beta, ladder: vec![128], replicates: 200 }, 5).unwrap();
            r.results["rows"][0]["estimate"]["mean"].as_f64().unwrap()
        };
        assert!(est(0.5) <= est(1.0) && est(1.0) <= est(2.0));
    }

    #[test]
    fn local_time_counter_matches_path() {
        let mut a = replica_stream(3, 0);
        let mut b = replica_stream(3, 0);
        let w = sample_walk(300, &mut a);
        assert_eq!(sample_local_time(300, &mut b) as usize, crate::walks::local_time_zero(&w, 300));
    }

    #[test]
    fn product_sum_generators() {
        let zero = ProductSumConfig { generator: Generator::Zero, ladder: vec![4, 16], replicates: 3, ..Default::default() };
        let r = product_sum_property_check(&zero, 0).unwrap();
        assert!(r.all_passed(), "{}", r.to_text());
        let harmonic = ProductSumConfig { generator: Generator::Harmonic, ladder: vec![4, 16, 64], replicates: 2, ..Default::default() };
        let r = product_sum_property_check(&harmonic, 0).unwrap();
        assert!(r.all_passed(), "{}", r.to_text());
        let q = r.results["rows"][2]["ratio_deviation_q99"].as_f64().unwrap();
        assert!((q - (1.0 - (1.0 + 1.0 / 64f64).powi(64) / std::f64::consts::E)).abs() < 1e-12);
    }

    #[test]
    fn negative_weights_rejected() {
        assert!(matches!(product_sum(&[0.1, -0.2]), Err(Error::NegativeWeight(_))));
    }

    #[test]
    fn two_walks_have_no_excess_mass() {
        let cfg = ConvergenceConfig { k: 2, ladder: vec![16, 64], replicates: 200, ..Default::default() };
        let r = convergence_study(&cfg, 2).unwrap();
        assert_eq!(r.results["merge_ks"].as_f64(), Some(0.0));
        assert!(r.results["rows"][1]["excess_mass"]["mean"].as_f64() == Some(0.0));
    }

    #[test]
    fn tightness_beyond_deterministic_bound_is_zero() {
        // With N = 4 and k = 2 the mass is at most 4, so ‖Π‖/√N ≤ 2 and max|S|/√N ≤ 2.
        let cfg = TightnessConfig { k: 2, ladder: vec![4], m_ladder: vec![0.5, 2.0], replicates: 200, threshold: 0.01 };
        let r = tightness_probe(&cfg, 1).unwrap();
        assert_eq!(r.results["sup_mass"][1].as_f64(), Some(0.0));
        assert_eq!(r.results["sup_max"][1].as_f64(), Some(0.0));
        assert!(r.all_passed());
    }

    #[test]
    fn partition_one_step() {
        let cfg = PartitionConfig { ladder: vec![1, 2], replicates: 10, ..Default::default() };
        let r = moment_plateau(&cfg, 9).unwrap();
        assert!(r.verdicts.iter().any(|v| v.rule == "one-step-closed-form" && v.passed));
    }

    #[test]
    fn experiments_are_reproducible() {
        let cfg = ConvergenceConfig { ladder: vec![16, 32], replicates: 100, ..Default::default() };
        let a = serde_json::to_string(&convergence_study(&cfg, 11).unwrap()).unwrap();
        let b = serde_json::to_string(&convergence_study(&cfg, 11).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_ladder_rejected() {
        let cfg = ExpMomentConfig { ladder: vec![64, 16], ..Default::default() };
        assert!(matches!(exponential_moment_probe(&cfg, 0), Err(Error::InvalidArgument(_))));
    }
}
