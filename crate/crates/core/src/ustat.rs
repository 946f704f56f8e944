//! Weighted U-statistics
//! `S^N_n(g) = 2^{n/2} Σ_{𝐢 ∈ E^N_n} Σ_{𝐳 ↔ 𝐢} ḡ_N(𝐢/N, 𝐳/√N) A(𝐢, 𝐳) ω(𝐢, 𝐳)`.
//!
//! A [`UStatPlan`] enumerates the contributing `(𝐢, 𝐳)` once and stores the
//! weights `2^{n/2} ḡ_N`; evaluating it against many environments is then a
//! single pass over the table.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::environment::{DisorderFunction, EnvironmentField};
use crate::error::{Error, Result};
use crate::harness::stats::{covariance, pairwise_sum, replicates, MonteCarloSummary};
use crate::kernels::{block_average_cells, chain_density_discrete, LatticeChain};
use crate::stream::mix64;

/// Default cap on visited lattice nodes while compiling a plan.
pub const DEFAULT_CELL_LIMIT: f64 = 1e8;

/// An integrand `g` on `[0, 1]^n × ℝ^n`.
pub trait Integrand: Send + Sync {
    fn order(&self) -> usize;

    fn eval(&self, t: &[f64], x: &[f64]) -> f64;

    /// `g(𝐭, 𝐱) = 0` whenever some `|x_j|` exceeds this radius.
    fn support_radius(&self) -> f64;

    /// `g` is invariant under permutations of its `(t_j, x_j)` arguments.
    fn symmetric(&self) -> bool {
        false
    }

    /// `g` vanishes unless `t_1 < … < t_n`.
    fn time_ordered(&self) -> bool {
        false
    }

    /// Lets enumeration skip every completion of a cell prefix on which
    /// `ḡ_N` is known to vanish.
    fn prefix_vanishes(&self, _cells: &[(usize, i64)], _horizon: usize) -> bool {
        false
    }
}

/// How `ḡ_N` is obtained on a rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Averaging {
    /// Tensor-product Gauss–Legendre with this many nodes per coordinate.
    Quadrature { nodes: usize },
    /// `g` at the rectangle centre; exact for integrands constant on cells.
    CellConstant,
}

type Eval = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// Closure-backed integrand.
#[derive(Clone)]
pub struct FnIntegrand {
    order: usize,
    radius: f64,
    symmetric: bool,
    time_ordered: bool,
    f: Arc<Eval>,
}

impl FnIntegrand {
    pub fn new<F>(order: usize, radius: f64, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { order, radius, symmetric: false, time_ordered: false, f: Arc::new(f) }
    }

    pub fn symmetric(mut self) -> Self {
        self.symmetric = true;
        self
    }

    pub fn time_ordered(mut self) -> Self {
        self.time_ordered = true;
        self
    }

    /// `α f + β g` with the union of supports.
    pub fn combine(alpha: f64, f: &FnIntegrand, beta: f64, g: &FnIntegrand) -> Self {
        assert_eq!(f.order, g.order, "orders differ");
        let (ff, gg) = (Arc::clone(&f.f), Arc::clone(&g.f));
        Self {
            order: f.order,
            radius: f.radius.max(g.radius),
            symmetric: f.symmetric && g.symmetric,
            time_ordered: f.time_ordered && g.time_ordered,
            f: Arc::new(move |t, x| alpha * ff(t, x) + beta * gg(t, x)),
        }
    }
}

impl Integrand for FnIntegrand {
    fn order(&self) -> usize {
        self.order
    }
    fn eval(&self, t: &[f64], x: &[f64]) -> f64 {
        (self.f)(t, x)
    }
    fn support_radius(&self) -> f64 {
        self.radius
    }
    fn symmetric(&self) -> bool {
        self.symmetric
    }
    fn time_ordered(&self) -> bool {
        self.time_ordered
    }
}

/// The discrete kernel `p^N_n`, constant on the rectangles of `ℛ^N_n`.
#[derive(Clone, Copy, Debug)]
pub struct DiscreteKernel {
    pub order: usize,
    pub horizon: usize,
}

impl Integrand for DiscreteKernel {
    fn order(&self) -> usize {
        self.order
    }
    fn eval(&self, t: &[f64], x: &[f64]) -> f64 {
        let pt = crate::kernels::SimplexPoint::new(t.to_vec(), x.to_vec());
        crate::kernels::discrete_kernel_pnn(&pt, self.horizon).unwrap_or(0.0)
    }
    fn support_radius(&self) -> f64 {
        (self.horizon as f64 + 1.0) / (self.horizon as f64).sqrt()
    }
    fn time_ordered(&self) -> bool {
        true
    }
    fn prefix_vanishes(&self, cells: &[(usize, i64)], _horizon: usize) -> bool {
        let chain = LatticeChain {
            times: cells.iter().map(|c| c.0).collect(),
            sites: cells.iter().map(|c| c.1).collect(),
        };
        chain_density_discrete(&chain) == 0.0
    }
}

/// Compiled `(𝐢, 𝐳) ↦ 2^{n/2} · multiplicity · ḡ_N` table.
#[derive(Clone, Debug)]
pub struct UStatPlan {
    order: usize,
    horizon: usize,
    times: Vec<u32>,
    sites: Vec<i32>,
    weights: Vec<f64>,
}

impl UStatPlan {
    pub fn compile(g: &dyn Integrand, horizon: usize, averaging: Averaging) -> Result<Self> {
        Self::compile_with_limit(g, horizon, averaging, DEFAULT_CELL_LIMIT)
    }

    /// Enumerates tuples and sites; fails once more than `limit` lattice
    /// nodes have been visited.
    pub fn compile_with_limit(
        g: &dyn Integrand,
        horizon: usize,
        averaging: Averaging,
        limit: f64,
    ) -> Result<Self> {
        let n = g.order();
        if n == 0 || horizon == 0 {
            return Err(Error::InvalidArgument("U-statistic needs n >= 1 and N >= 1".into()));
        }
        let sq = (horizon as f64).sqrt();
        let zmax = (g.support_radius() * sq).ceil() as i64 + 1;
        let ordered = g.symmetric() || g.time_ordered();
        let multiplicity = if g.symmetric() && !g.time_ordered() {
            (1..=n).map(|k| k as f64).product()
        } else {
            1.0
        };
        let prefactor = 2f64.powf(n as f64 / 2.0) * multiplicity;

        let mut plan = Self { order: n, horizon, times: vec![], sites: vec![], weights: vec![] };
        let mut cells: Vec<(usize, i64)> = Vec::with_capacity(n);
        let mut visited = 0f64;
        let mut ctx = Enumeration { g, horizon, averaging, zmax, ordered, prefactor, limit };
        ctx.descend(&mut cells, &mut visited, &mut plan)?;
        Ok(plan)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of nonzero table entries.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `S^N_n(g)` for the amplitude `a` and environment `field`.
    pub fn evaluate(&self, a: &DisorderFunction, field: &EnvironmentField) -> f64 {
        let n = self.order;
        let terms: Vec<f64> = self
            .weights
            .iter()
            .enumerate()
            .map(|(e, &w)| {
                let mut prod = w;
                for j in e * n..(e + 1) * n {
                    let (i, z) = (self.times[j] as usize, i64::from(self.sites[j]));
                    prod *= a.at(i, z) * field.omega_f64(i, z);
                }
                prod
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// `E_ω[S^N_n(g)²]`: weights of tuples sharing a cell set are merged
    /// before squaring, since they multiply the same `ω` monomial.
    pub fn exact_variance(&self, a: &DisorderFunction) -> f64 {
        let n = self.order;
        let mut merged: BTreeMap<Vec<(u32, i32)>, f64> = BTreeMap::new();
        for (e, &w) in self.weights.iter().enumerate() {
            let mut key: Vec<(u32, i32)> =
                (e * n..(e + 1) * n).map(|j| (self.times[j], self.sites[j])).collect();
            key.sort_unstable();
            let amp: f64 = key.iter().map(|&(i, z)| a.at(i as usize, i64::from(z))).product();
            *merged.entry(key).or_insert(0.0) += w * amp;
        }
        let sq: Vec<f64> = merged.values().map(|v| v * v).collect();
        pairwise_sum(&sq)
    }
}

struct Enumeration<'a> {
    g: &'a dyn Integrand,
    horizon: usize,
    averaging: Averaging,
    zmax: i64,
    ordered: bool,
    prefactor: f64,
    limit: f64,
}

impl Enumeration<'_> {
    fn descend(
        &mut self,
        cells: &mut Vec<(usize, i64)>,
        visited: &mut f64,
        plan: &mut UStatPlan,
    ) -> Result<()> {
        let n = self.g.order();
        if cells.len() == n {
            let gbar = self.average(cells)?;
            if gbar != 0.0 {
                for &(i, z) in cells.iter() {
                    plan.times.push(i as u32);
                    plan.sites.push(z as i32);
                }
                plan.weights.push(self.prefactor * gbar);
            }
            return Ok(());
        }
        let start = if self.ordered { cells.last().map_or(1, |c| c.0 + 1) } else { 1 };
        // Remaining coordinates must still fit when times increase.
        let end = if self.ordered {
            (self.horizon + 2 + cells.len()).saturating_sub(n)
        } else {
            self.horizon + 1
        };
        for i in start..end.max(start) {
            if !self.ordered && cells.iter().any(|c| c.0 == i) {
                continue;
            }
            let mut z = -self.zmax;
            if (z - i as i64).rem_euclid(2) != 0 {
                z += 1;
            }
            while z <= self.zmax {
                *visited += 1.0;
                if *visited > self.limit {
                    return Err(Error::ComplexityGuard { cells: *visited, limit: self.limit });
                }
                cells.push((i, z));
                if !self.g.prefix_vanishes(cells, self.horizon) {
                    self.descend(cells, visited, plan)?;
                }
                cells.pop();
                z += 2;
            }
        }
        Ok(())
    }

    fn average(&self, cells: &[(usize, i64)]) -> Result<f64> {
        match self.averaging {
            Averaging::Quadrature { nodes } => {
                block_average_cells(|t, x| self.g.eval(t, x), cells, self.horizon, nodes)
            }
            Averaging::CellConstant => {
                let nf = self.horizon as f64;
                let sq = nf.sqrt();
                let t: Vec<f64> = cells.iter().map(|c| (c.0 as f64 - 0.5) / nf).collect();
                let x: Vec<f64> = cells.iter().map(|c| c.1 as f64 / sq).collect();
                let v = self.g.eval(&t, &x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::QuadratureFailure)
                }
            }
        }
    }
}

/// Inputs of a single U-statistic evaluation.
pub struct UStatSpec<'a> {
    pub integrand: &'a dyn Integrand,
    pub horizon: usize,
    pub amplitude: &'a DisorderFunction,
    pub field: EnvironmentField,
    pub averaging: Averaging,
}

/// `S^N_n(g)` for one environment.
pub fn u_statistic(spec: &UStatSpec<'_>) -> Result<f64> {
    let plan = UStatPlan::compile(spec.integrand, spec.horizon, spec.averaging)?;
    Ok(plan.evaluate(spec.amplitude, &spec.field))
}

/// Moments of one plan over environment replicates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanMoments {
    pub order: usize,
    pub mean: MonteCarloSummary,
    pub sample_variance: f64,
    pub variance_stderr: f64,
    pub exact_variance: f64,
}

/// Covariance between two plans over the same environments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossMoment {
    pub first: usize,
    pub second: usize,
    pub covariance: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentSuite {
    pub replicates: usize,
    pub plans: Vec<PlanMoments>,
    pub cross: Vec<CrossMoment>,
}

/// Evaluates every plan on `replicates` environments whose seeds derive
/// from `master`.
pub fn ustat_moment_suite(
    plans: &[&UStatPlan],
    amplitude: &DisorderFunction,
    replicates_count: usize,
    master: u64,
) -> Result<MomentSuite> {
    let samples: Vec<Vec<f64>> = replicates(replicates_count, master, |r, _| {
        let field = EnvironmentField::new(mix64(master ^ mix64(r as u64 + 1)));
        plans.iter().map(|p| p.evaluate(amplitude, &field)).collect()
    });
    let column = |k: usize| samples.iter().map(|row| row[k]).collect::<Vec<f64>>();
    let mut out = Vec::with_capacity(plans.len());
    for (k, plan) in plans.iter().enumerate() {
        let xs = column(k);
        let mean = MonteCarloSummary::from_samples(&xs)?;
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean.mean).powi(2)).collect();
        let var_summary = MonteCarloSummary::from_samples(&sq)?;
        let r = xs.len() as f64;
        out.push(PlanMoments {
            order: plan.order(),
            mean,
            sample_variance: var_summary.mean * r / (r - 1.0),
            variance_stderr: var_summary.stderr,
            exact_variance: plan.exact_variance(amplitude),
        });
    }
    let mut cross = Vec::new();
    for a in 0..plans.len() {
        for b in a + 1..plans.len() {
            let (c, se) = covariance(&column(a), &column(b));
            cross.push(CrossMoment { first: a, second: b, covariance: c, stderr: se });
        }
    }
    Ok(MomentSuite { replicates: replicates_count, plans: out, cross })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cell_lattice() {
        let g = FnIntegrand::new(1, 2.0, |_, x| if x[0].abs() <= 2.0 { 1.0 } else { 0.0 });
        let field = EnvironmentField::new(99);
        let a = DisorderFunction::constant(1.0);
        let spec = UStatSpec {
            integrand: &g,
            horizon: 1,
            amplitude: &a,
            field,
            averaging: Averaging::Quadrature { nodes: 4 },
        };
        let expected = 2f64.sqrt() * (field.omega_f64(1, 1) + field.omega_f64(1, -1));
        assert!((u_statistic(&spec).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_integrand() {
        let g = FnIntegrand::new(2, 1.0, |_, _| 0.0);
        let plan = UStatPlan::compile(&g, 5, Averaging::CellConstant).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.evaluate(&DisorderFunction::constant(1.0), &EnvironmentField::new(1)), 0.0);
    }

    #[test]
    fn complexity_guard_trips() {
        let g = FnIntegrand::new(3, 10.0, |_, _| 1.0);
        let err = UStatPlan::compile_with_limit(&g, 50, Averaging::CellConstant, 1e5).unwrap_err();
        assert!(matches!(err, Error::ComplexityGuard { .. }));
    }

    #[test]
    fn symmetric_reduction_matches_full_enumeration() {
        let f = |t: &[f64], x: &[f64]| (-(x[0] * x[0] + x[1] * x[1])).exp() * (1.0 + t[0] * t[1]);
        let sym = FnIntegrand::new(2, 2.0, f).symmetric();
        let full = FnIntegrand::new(2, 2.0, f);
        let a = DisorderFunction::constant(0.8);
        let field = EnvironmentField::new(5);
        let p1 = UStatPlan::compile(&sym, 4, Averaging::Quadrature { nodes: 3 }).unwrap();
        let p2 = UStatPlan::compile(&full, 4, Averaging::Quadrature { nodes: 3 }).unwrap();
        let (v1, v2) = (p1.evaluate(&a, &field), p2.evaluate(&a, &field));
        assert!((v1 - v2).abs() < 1e-12 * v2.abs().max(1.0));
        assert!((p1.exact_variance(&a) - p2.exact_variance(&a)).abs() < 1e-10);
    }
}
