//! Monte-Carlo summaries, deterministic reductions and the two-sample
//! Kolmogorov–Smirnov test.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{replica_stream, Stream};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

/// Pairwise (tree) summation; the result depends only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Runs `sampler` once per replicate on its own stream and returns the
/// outputs in replicate order.
pub fn replicates<T, F>(count: usize, master: u64, sampler: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut Stream) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|r| sampler(r, &mut replica_stream(master, r as u64)))
        .collect()
}

/// Summary of a set of i.i.d. replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub ci99: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<HigherMoments>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HigherMoments {
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl MonteCarloSummary {
    /// Summarises `samples`, rejecting non-finite values.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two replicates, got {}",
                samples.len()
            )));
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index, value });
        }
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        let stderr = (var / n as f64).sqrt();
        Ok(Self { n, mean, stderr, ci99: (mean - Z99 * stderr, mean + Z99 * stderr), extra: None })
    }

    /// Adds variance, skewness and excess kurtosis.
    pub fn with_higher_moments(mut self, samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let m = self.mean;
        let c = |p: i32| pairwise_sum(&samples.iter().map(|x| (x - m).powi(p)).collect::<Vec<_>>()) / n;
        let (m2, m3, m4) = (c(2), c(3), c(4));
        let (skewness, excess_kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        self.extra = Some(HigherMoments { variance: m2 * n / (n - 1.0), skewness, excess_kurtosis });
        self
    }

    /// Exact value known without sampling error.
    pub fn exact(value: f64, n: usize) -> Self {
        Self { n, mean: value, stderr: 0.0, ci99: (value, value), extra: None }
    }

    pub fn ci_overlaps(&self, other: &Self) -> bool {
        self.ci99.0 <= other.ci99.1 && other.ci99.0 <= self.ci99.1
    }

    /// `√(se₁² + se₂²)`.
    pub fn combined_stderr(&self, other: &Self) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    /// `|mean₁ − mean₂| ≤ k · combined stderr`.
    pub fn agrees_within(&self, other: &Self, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * self.combined_stderr(other)
    }
}

/// Draws `count` replicates of `sampler` and summarises them.
pub fn mc_estimate<F>(count: usize, master: u64, sampler: F) -> Result<MonteCarloSummary>
where
    F: Fn(&mut Stream) -> f64 + Sync,
{
    MonteCarloSummary::from_samples(&replicates(count, master, |_, rng| sampler(rng)))
}

/// Sample covariance with its standard error, from paired samples.
pub fn covariance(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = pairwise_sum(xs) / n;
    let my = pairwise_sum(ys) / n;
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let s = MonteCarloSummary::from_samples(&prods).expect("finite paired samples");
    (s.mean * n / (n - 1.0), s.stderr)
}

/// Empirical quantile with linear interpolation.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Two-sample Kolmogorov–Smirnov result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Set when ties were present; the asymptotic p-value is then conservative.
    pub discrete: bool,
}

/// Classical two-sample KS statistic with the asymptotic p-value.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsResult> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidArgument("KS test needs two nonempty samples".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let discrete = a.windows(2).any(|w| w[0] == w[1]) || b.windows(2).any(|w| w[0] == w[1]);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let v = a[i].min(b[j]);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    Ok(KsResult { statistic: d, p_value: kolmogorov_q(lambda), discrete })
}

/// KS test after adding independent `U(0, 1)` noise to each value, which
/// breaks the ties of integer-valued samples.
pub fn ks_two_sample_jittered<R: Rng + ?Sized>(
    xs: &[f64],
    ys: &[f64],
    rng: &mut R,
) -> Result<KsResult> {
    let jx: Vec<f64> = xs.iter().map(|x| x + rng.random::<f64>()).collect();
    let jy: Vec<f64> = ys.iter().map(|y| y + rng.random::<f64>()).collect();
    let mut r = ks_two_sample(&jx, &jy)?;
    r.discrete = false;
    Ok(r)
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{j−1} e^{−2 j² λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
