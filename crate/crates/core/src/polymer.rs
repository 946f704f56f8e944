//! Partition functions `𝔷_N(A)`, their chaos decomposition and the
//! collision weights `X_{N,n}`.

use serde::{Deserialize, Serialize};

use crate::collisions::{for_each_occupied_site, TestFunction};
use crate::environment::{ContinuumAmplitude, DisorderFunction, EnvironmentField};
use crate::error::{Error, Result};
use crate::harness::stats::compensated_sum;
use crate::kernels::rw_transition;
use crate::ustat::{Averaging, DiscreteKernel, UStatPlan};
use crate::walks::WalkEnsemble;

/// Largest horizon handled by the exact chaos engine.
pub const EXACT_CHAOS_CAP: usize = 14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub value: f64,
    pub horizon: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub term_breakdown: Option<Vec<f64>>,
}

/// Per-cell amplitude lookup, tabulated once when `A` ignores time.
enum AmplitudeRows<'a> {
    Profile { values: Vec<f64>, offset: i64 },
    General(&'a DisorderFunction),
}

impl<'a> AmplitudeRows<'a> {
    fn new(a: &'a DisorderFunction, horizon: usize) -> Self {
        if a.is_time_homogeneous() {
            let offset = horizon as i64;
            let values = (-offset..=offset).map(|z| a.at(1, z)).collect();
            Self::Profile { values, offset }
        } else {
            Self::General(a)
        }
    }

    /// `out[j] = A(n, 2j − n)` over the parity band at time `n`.
    fn fill_band(&self, n: usize, out: &mut [f64]) {
        match self {
            Self::Profile { values, offset } => {
                let start = (offset - n as i64) as usize;
                for (j, o) in out.iter_mut().enumerate() {
                    *o = values[start + 2 * j];
                }
            }
            Self::General(a) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = a.at(n, 2 * j as i64 - n as i64);
                }
            }
        }
    }

    #[inline]
    fn at(&self, n: usize, z: i64) -> f64 {
        match self {
            Self::Profile { values, offset } => values[(z + offset) as usize],
            Self::General(a) => a.at(n, z),
        }
    }
}

/// `𝔷_N(A) = E[∏_{n ≤ N} (1 + A(n, S_n) ω(n, S_n)) | ω]` by the forward
/// recursion over the parity band `z = 2j − n`, `0 ≤ j ≤ n`.
pub fn partition_dp(horizon: usize, a: &DisorderFunction, field: &EnvironmentField) -> PartitionResult {
    if a.sup_bound() == 0.0 {
        return PartitionResult { value: 1.0, horizon, term_breakdown: None };
    }
    let rows = AmplitudeRows::new(a, horizon);
    let mut w = vec![0.0f64; horizon + 1];
    let mut amp = vec![0.0f64; horizon + 1];
    w[0] = 1.0;
    for n in 1..=horizon {
        rows.fill_band(n, &mut amp[..=n]);
        let row = field.row(n);
        // Ascending sweep; `prev` holds the not yet updated w[j − 1].
        let mut prev = 0.0;
        for (block, (wc, ac)) in w[..=n].chunks_mut(64).zip(amp[..=n].chunks(64)).enumerate() {
            let bits = row.band_word(block as i64);
            for (b, (wj, &aj)) in wc.iter_mut().zip(ac).enumerate() {
                let cur = *wj;
                let signed = f64::from_bits(aj.to_bits() ^ (((bits >> b) & 1) << 63));
                *wj = 0.5 * (prev + cur) * (1.0 + signed);
                prev = cur;
            }
        }
    }
    PartitionResult {
        value: compensated_sum(w[..=horizon].iter().copied()),
        horizon,
        term_breakdown: None,
    }
}

/// `𝔷_N(N^{−1/4} A_N)` with `A_N(n, z) = a(n/N, z/√N)`.
pub fn scaled_partition(horizon: usize, a: &ContinuumAmplitude, field: &EnvironmentField) -> f64 {
    let d = crate::environment::disorder_from_function(a, horizon)
        .scaled((horizon as f64).powf(-0.25));
    partition_dp(horizon, &d, field).value
}

/// Order-resolved contributions to `𝔷_N(βA)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosTerms {
    /// `term_0 = 1, term_1, …`.
    pub terms: Vec<f64>,
    /// Root-mean-square bound on the omitted orders; zero for the exact engine.
    pub truncation_rms: f64,
}

impl ChaosTerms {
    pub fn total(&self) -> f64 {
        compensated_sum(self.terms.iter().copied())
    }

    /// `term_order`, or an error if the expansion stopped earlier.
    pub fn term(&self, order: usize) -> Result<f64> {
        self.terms.get(order).copied().ok_or(Error::TruncationOrder {
            requested: order,
            max_order: self.terms.len() - 1,
        })
    }
}

/// `term_n = 2^{n/2} β^n S^N_n(p^N_n)` for every `n ≤ N`, via exact
/// U-statistic enumeration.
pub fn chaos_terms_exact(
    horizon: usize,
    beta: f64,
    a: &DisorderFunction,
    field: &EnvironmentField,
) -> Result<ChaosTerms> {
    if horizon > EXACT_CHAOS_CAP {
        return Err(Error::ExactExpansionTooLarge { horizon, cap: EXACT_CHAOS_CAP });
    }
    let mut terms = vec![1.0];
    for n in 1..=horizon {
        let plan = UStatPlan::compile(&DiscreteKernel { order: n, horizon }, horizon, Averaging::CellConstant)?;
        let s = plan.evaluate(a, field);
        terms.push(2f64.powf(n as f64 / 2.0) * beta.powi(n as i32) * s);
    }
    Ok(ChaosTerms { terms, truncation_rms: 0.0 })
}

/// Order-resolved forward recursion truncated at order `max_order`:
/// `w^{(m)}_n(z) = Σ_± ½ [w^{(m)}_{n−1}(z ∓ 1) + βA(n, z)ω(n, z) w^{(m−1)}_{n−1}(z ∓ 1)]`.
pub fn chaos_terms_recursive(
    horizon: usize,
    beta: f64,
    a: &DisorderFunction,
    field: &EnvironmentField,
    max_order: usize,
) -> ChaosTerms {
    let rows = AmplitudeRows::new(a, horizon);
    let orders = max_order.min(horizon) + 1;
    let width = horizon + 2;
    let mut w = vec![0.0f64; orders * width];
    w[0] = 1.0;
    let mut weight = vec![0.0f64; width];
    for n in 1..=horizon {
        let row = field.row(n);
        for j in 0..=n {
            let z = 2 * j as i64 - n as i64;
            weight[j] = beta * rows.at(n, z) * row.omega(z);
        }
        for m in (0..orders).rev() {
            for j in (0..=n).rev() {
                let carried = |row: usize| {
                    let base = row * width;
                    0.5 * (if j > 0 { w[base + j - 1] } else { 0.0 } + w[base + j])
                };
                let mut v = carried(m);
                if m > 0 {
                    v += weight[j] * carried(m - 1);
                }
                w[m * width + j] = v;
            }
        }
    }
    let terms = (0..orders)
        .map(|m| compensated_sum(w[m * width..m * width + horizon + 1].iter().copied()))
        .collect();
    ChaosTerms { terms, truncation_rms: truncation_rms(horizon, beta * a.sup_bound(), max_order) }
}

/// `√(Σ_{m > M} (βc)^{2m} G_m)` with `G_m = Σ_{𝐢 ∈ D^N_m} ∏ p(2(i_j − i_{j−1}), 0)`,
/// which bounds `E[(Σ_{m>M} term_m)²]^{1/2}` by orthogonality of orders.
pub fn truncation_rms(horizon: usize, beta_c: f64, max_order: usize) -> f64 {
    if max_order >= horizon || beta_c == 0.0 {
        return 0.0;
    }
    let x = beta_c * beta_c;
    let q: Vec<f64> = (0..=horizon).map(|g| rw_transition(2 * g, 0)).collect();
    // f[t] = Σ over chains of the current order ending at time t.
    let mut f: Vec<f64> = (0..=horizon).map(|t| if t == 0 { 0.0 } else { q[t] }).collect();
    let mut tail = Vec::new();
    for m in 1..=horizon {
        if m > 1 {
            let mut prefix_next = vec![0.0; horizon + 1];
            for t in m..=horizon {
                prefix_next[t] = (m - 1..t).map(|s| f[s] * q[t - s]).sum();
            }
            f = prefix_next;
        }
        if m > max_order {
            let term = x.powi(m as i32) * f.iter().sum::<f64>();
            tail.push(term);
            let acc: f64 = tail.iter().sum();
            if term <= 1e-17 * acc || term == 0.0 {
                break;
            }
        }
    }
    compensated_sum(tail.iter().copied()).sqrt()
}

/// `X_{N,1..N}` and `T_N = Σ X_{N,n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionWeights {
    pub per_step: Vec<f64>,
    pub sum: f64,
}

impl CollisionWeights {
    /// `∏ (1 + X_{N,n})`, accumulated in log space.
    pub fn product(&self) -> f64 {
        compensated_sum(self.per_step.iter().map(|x| x.ln_1p())).exp()
    }

    /// `Σ ln(1 + X_{N,n})`.
    pub fn log_product(&self) -> f64 {
        compensated_sum(self.per_step.iter().map(|x| x.ln_1p()))
    }

    /// `Σ X²_{N,n}`.
    pub fn sum_sq(&self) -> f64 {
        compensated_sum(self.per_step.iter().map(|x| x * x))
    }

    pub fn max(&self) -> f64 {
        self.per_step.iter().copied().fold(0.0, f64::max)
    }
}

/// `((1+θ)^m + (1−θ)^m)/2 − 1 = Σ_{l even ≥ 2} C(m, l) θ^l`.
#[inline]
pub fn site_excess(theta: f64, m: u32) -> f64 {
    let t2 = theta * theta;
    let (mut acc, mut binom, mut pow) = (0.0, 1.0, 1.0);
    let mut l = 0u32;
    while l + 2 <= m {
        binom *= f64::from(m - l) * f64::from(m - l - 1) / (f64::from(l + 1) * f64::from(l + 2));
        pow *= t2;
        acc += binom * pow;
        l += 2;
    }
    acc
}

/// Site-factorized `1 + X_{N,n} = ∏_z ((1+θ(n,z))^{m_z} + (1−θ(n,z))^{m_z}) / 2`
/// where `θ` is the supplied amplitude and `m_z` counts walks at `z`.
pub fn collision_weights(ensemble: &WalkEnsemble, theta: &DisorderFunction) -> CollisionWeights {
    let horizon = ensemble.horizon();
    let mut log_factor = vec![0.0f64; horizon];
    for_each_occupied_site(ensemble, |n, z, m| {
        let x = site_excess(theta.at(n, i64::from(z)), m);
        log_factor[n - 1] += x.ln_1p();
    });
    let per_step: Vec<f64> = log_factor.iter().map(|l| l.exp_m1()).collect();
    let sum = compensated_sum(per_step.iter().copied());
    CollisionWeights { per_step, sum }
}

/// Both sides of the walk-side duality for one ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityPair {
    /// `N^{−1/2} Π_N(f)`.
    pub scaled_pi: f64,
    /// `T_N = Σ X_{N,n}`.
    pub t_sum: f64,
    /// `exp(N^{−1/2} Π_N(f))`.
    pub exp_pi: f64,
    /// `∏ (1 + X_{N,n})`.
    pub prod_x: f64,
    /// `Σ X²_{N,n}`.
    pub sum_sq: f64,
}

/// Evaluates `exp(N^{−1/2}Π_N(f))` and `∏(1 + X_{N,n})` with
/// `θ(n, z) = N^{−1/4} √f(n/N, z/√N)`.
pub fn duality_pair(ensemble: &WalkEnsemble, f: &TestFunction) -> Result<DualityPair> {
    let horizon = ensemble.horizon();
    let nf = horizon as f64;
    let sq = nf.sqrt();
    let quarter = nf.powf(-0.25);
    let mut pi = Vec::new();
    let mut log_factor = vec![0.0f64; horizon];
    let mut negative = None;
    for_each_occupied_site(ensemble, |n, z, m| {
        let (t, x) = (n as f64 / nf, f64::from(z) / sq);
        let v = f.eval(t, x);
        if v < 0.0 {
            negative.get_or_insert(Error::NegativeTestFunction { t, x, value: v });
            return;
        }
        pi.push(f64::from(m * (m - 1) / 2) * v);
        log_factor[n - 1] += site_excess(quarter * v.sqrt(), m).ln_1p();
    });
    if let Some(e) = negative {
        return Err(e);
    }
    let scaled_pi = compensated_sum(pi) / sq;
    let per_step: Vec<f64> = log_factor.iter().filter(|l| **l != 0.0).map(|l| l.exp_m1()).collect();
    let weights = CollisionWeights { sum: compensated_sum(per_step.iter().copied()), per_step };
    Ok(DualityPair {
        scaled_pi,
        t_sum: weights.sum,
        exp_pi: scaled_pi.exp(),
        prod_x: weights.product(),
        sum_sq: weights.sum_sq(),
    })
}
