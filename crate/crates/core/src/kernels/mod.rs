//! Random-walk and heat kernels, their chain products, the discrete
//! kernels `p^N_n`, block averages and simplex norms.

pub mod quadrature;

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::environment::cell_of;
use crate::error::{Error, Result};
use crate::harness::stats::pairwise_sum;
use crate::stream::replica_stream;

/// `p(i, x) = P(S_i = x)`.
pub fn rw_transition(i: usize, x: i64) -> f64 {
    let ii = i as i64;
    if x.abs() > ii || (ii + x).rem_euclid(2) != 0 {
        return 0.0;
    }
    if i == 0 {
        return 1.0;
    }
    let k = ((ii + x) / 2) as u64;
    (ln_binomial(i as u64, k) - i as f64 * LN_2).exp()
}

/// `ϱ(t, x) = e^{−x²/2t} / √(2πt)`.
pub fn heat_kernel(t: f64, x: f64) -> Result<f64> {
    if t <= 0.0 || t.is_nan() {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(heat(t, x))
}

#[inline]
pub(crate) fn heat(t: f64, x: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Integer times `i_1 < … < i_n` and sites `z_1, …, z_n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LatticeChain {
    pub times: Vec<usize>,
    pub sites: Vec<i64>,
}

impl LatticeChain {
    pub fn new(times: Vec<usize>, sites: Vec<i64>) -> Self {
        Self { times, sites }
    }

    pub fn order(&self) -> usize {
        self.times.len()
    }
}

/// `p_n(𝐢, 𝐳) = ∏ p(i_j − i_{j−1}, z_j − z_{j−1})`, zero off the simplex.
pub fn chain_density_discrete(chain: &LatticeChain) -> f64 {
    if chain.times.len() != chain.sites.len() {
        return 0.0;
    }
    let (mut t0, mut z0, mut prod) = (0usize, 0i64, 1.0);
    for (&t, &z) in chain.times.iter().zip(&chain.sites) {
        if t <= t0 {
            return 0.0;
        }
        prod *= rw_transition(t - t0, z - z0);
        if prod == 0.0 {
            return 0.0;
        }
        t0 = t;
        z0 = z;
    }
    prod
}

/// Real times and positions with implicit `(t_0, x_0) = (0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexPoint {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(times: Vec<f64>, positions: Vec<f64>) -> Self {
        Self { times, positions }
    }

    pub fn order(&self) -> usize {
        self.times.len()
    }

    pub fn is_ordered(&self) -> bool {
        let mut prev = 0.0;
        self.times.iter().all(|&t| {
            let ok = t > prev;
            prev = t;
            ok
        })
    }
}

/// `ϱ_n(𝐭, 𝐱) = ∏ ϱ(t_j − t_{j−1}, x_j − x_{j−1})`, zero off the simplex.
pub fn chain_density_gaussian(pt: &SimplexPoint) -> f64 {
    if !pt.is_ordered() || pt.times.len() != pt.positions.len() {
        return 0.0;
    }
    let (mut t0, mut x0, mut prod) = (0.0, 0.0, 1.0);
    for (&t, &x) in pt.times.iter().zip(&pt.positions) {
        prod *= heat(t - t0, x - x0);
        t0 = t;
        x0 = x;
    }
    prod
}

/// Lattice cells `[t_j, x_j]_N` of a point, mapped coordinatewise.
pub fn cells_of(pt: &SimplexPoint, horizon: usize) -> Result<Vec<(usize, i64)>> {
    pt.times.iter().zip(&pt.positions).map(|(&t, &x)| cell_of(t, x, horizon)).collect()
}

/// `p^N_n(𝐭, 𝐱) = 2^{−n} p_n([𝐭, 𝐱]_N) 1{⌈N𝐭⌉ ∈ D^N_n}`.
pub fn discrete_kernel_pnn(pt: &SimplexPoint, horizon: usize) -> Result<f64> {
    let n = pt.order();
    if n > horizon {
        return Ok(0.0);
    }
    let cells = cells_of(pt, horizon)?;
    let chain = LatticeChain {
        times: cells.iter().map(|c| c.0).collect(),
        sites: cells.iter().map(|c| c.1).collect(),
    };
    Ok(0.5f64.powi(n as i32) * chain_density_discrete(&chain))
}

/// The rectangle `R` of a lattice tuple: per coordinate, the time interval
/// `((i−1)/N, i/N]` and space interval `((z−1)/√N, (z+1)/√N]`.
pub fn rectangle_bounds(cells: &[(usize, i64)], horizon: usize) -> Vec<((f64, f64), (f64, f64))> {
    let nf = horizon as f64;
    let sq = nf.sqrt();
    cells
        .iter()
        .map(|&(i, z)| {
            (((i - 1) as f64 / nf, i as f64 / nf), ((z - 1) as f64 / sq, (z + 1) as f64 / sq))
        })
        .collect()
}

/// `(1/|R|) ∫_R g` over the rectangle of `cells`, by a tensor-product
/// Gauss–Legendre rule with `nodes` points per coordinate.
pub fn block_average_cells<G>(g: G, cells: &[(usize, i64)], horizon: usize, nodes: usize) -> Result<f64>
where
    G: Fn(&[f64], &[f64]) -> f64,
{
    let n = cells.len();
    let bounds = rectangle_bounds(cells, horizon);
    let (gx, gw) = quadrature::gauss_legendre(nodes.max(1));
    let m = gx.len();
    let dims = 2 * n;
    let mut idx = vec![0usize; dims];
    let mut ts = vec![0.0; n];
    let mut xs = vec![0.0; n];
    let mut acc = Vec::with_capacity(m.pow(dims as u32));
    loop {
        let mut w = 1.0;
        for j in 0..n {
            let ((ta, tb), (xa, xb)) = bounds[j];
            ts[j] = 0.5 * (ta + tb) + 0.5 * (tb - ta) * gx[idx[2 * j]];
            xs[j] = 0.5 * (xa + xb) + 0.5 * (xb - xa) * gx[idx[2 * j + 1]];
            w *= 0.25 * gw[idx[2 * j]] * gw[idx[2 * j + 1]];
        }
        let v = g(&ts, &xs);
        if !v.is_finite() {
            return Err(Error::QuadratureFailure);
        }
        acc.push(w * v);
        let mut d = 0;
        while d < dims {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == dims {
            break;
        }
    }
    Ok(pairwise_sum(&acc))
}

/// `ḡ_N(pt)`: the average of `g` over the rectangle containing `pt`.
pub fn block_average<G>(g: G, pt: &SimplexPoint, horizon: usize, nodes: usize) -> Result<f64>
where
    G: Fn(&[f64], &[f64]) -> f64,
{
    block_average_cells(g, &cells_of(pt, horizon)?, horizon, nodes)
}

/// `‖ϱ_n‖²₂ = 1 / (2^n Γ(n/2 + 1))`.
pub fn rho_chain_norm_sq(n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    (-(n as f64) * LN_2 - ln_gamma(n as f64 / 2.0 + 1.0)).exp()
}

/// `‖N^{n/2} p^N_n‖²₂`, computed exactly as
/// `2^{−n} N^{−n/2} Σ_{𝐢 ∈ D^N_n} ∏ p(2(i_j − i_{j−1}), 0)`.
pub fn discrete_kernel_norm_sq(n: usize, horizon: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if n > horizon {
        return 0.0;
    }
    let q: Vec<f64> = (0..=horizon).map(|g| rw_transition(2 * g, 0)).collect();
    let mut f: Vec<f64> = (0..=horizon).map(|t| if t == 0 { 0.0 } else { q[t] }).collect();
    for _ in 1..n {
        let mut next = vec![0.0; horizon + 1];
        for t in 1..=horizon {
            next[t] = (1..t).map(|s| f[s] * q[t - s]).sum();
        }
        f = next;
    }
    let total: f64 = f.iter().sum();
    total * 0.5f64.powi(n as i32) * (horizon as f64).powf(-(n as f64) / 2.0)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Dirichlet shape of the time gaps in the importance proposal.
const GAP_SHAPE: f64 = 0.75;
const SAMPLES_PER_STREAM: usize = 4096;

/// One draw from the simplex proposal: gaps from Dirichlet(α, …, α, 1)
/// and Gaussian increments with variance `spread · gap`.
struct Proposal {
    gamma_gap: Gamma<f64>,
    gamma_slack: Gamma<f64>,
    ln_dirichlet_norm: f64,
    spread: f64,
    n: usize,
}

impl Proposal {
    fn new(n: usize, spread: f64) -> Self {
        let ln_dirichlet_norm =
            ln_gamma(n as f64 * GAP_SHAPE + 1.0) - n as f64 * ln_gamma(GAP_SHAPE);
        Self {
            gamma_gap: Gamma::new(GAP_SHAPE, 1.0).expect("valid shape"),
            gamma_slack: Gamma::new(1.0, 1.0).expect("valid shape"),
            ln_dirichlet_norm,
            spread,
            n,
        }
    }

    /// Fills `pt` and returns the proposal density at it.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, pt: &mut SimplexPoint) -> f64 {
        let n = self.n;
        let mut gaps = [0.0f64; 8];
        let mut total = self.gamma_slack.sample(rng);
        for g in gaps.iter_mut().take(n) {
            *g = self.gamma_gap.sample(rng);
            total += *g;
        }
        let mut ln_q = self.ln_dirichlet_norm;
        let (mut t, mut x) = (0.0, 0.0);
        for j in 0..n {
            let gap = gaps[j] / total;
            let var = self.spread * gap;
            let z: f64 = StandardNormal.sample(rng);
            let dx = z * var.sqrt();
            ln_q += (GAP_SHAPE - 1.0) * gap.ln() - 0.5 * z * z - 0.5 * (2.0 * PI * var).ln();
            t += gap;
            x += dx;
            pt.times[j] = t;
            pt.positions[j] = x;
        }
        ln_q.exp()
    }
}

fn importance_sample<F>(n: usize, samples: usize, seed: u64, spread: f64, integrand: F) -> Estimate
where
    F: Fn(&SimplexPoint) -> f64 + Sync,
{
    assert!(n <= 8, "importance sampler supports n <= 8");
    let proposal = Proposal::new(n, spread);
    let chunks = samples.div_ceil(SAMPLES_PER_STREAM);
    let values: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = replica_stream(seed, c as u64);
            let mut pt = SimplexPoint::new(vec![0.0; n], vec![0.0; n]);
            let len = SAMPLES_PER_STREAM.min(samples - c * SAMPLES_PER_STREAM);
            let proposal = &proposal;
            let integrand = &integrand;
            (0..len)
                .map(move |_| {
                    let q = proposal.draw(&mut rng, &mut pt);
                    if q > 0.0 && q.is_finite() {
                        integrand(&pt) / q
                    } else {
                        0.0
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let len = values.len() as f64;
    let mean = pairwise_sum(&values) / len;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (len - 1.0);
    Estimate { value: mean, stderr: (var / len).sqrt() }
}

/// Importance-sampled `‖ϱ_n‖²₂` over `Δ_n × ℝ^n`.
///
/// Increments are proposed from `ϱ(gap/2, ·)`, the law appearing in the
/// squared-kernel identity `ϱ(t, x)² = ϱ(t/2, x) / (2√(πt))`, and times
/// from a Dirichlet law on the simplex.
pub fn mc_rho_norm_sq(n: usize, samples: usize, seed: u64) -> Estimate {
    if n == 0 {
        return Estimate { value: 1.0, stderr: 0.0 };
    }
    importance_sample(n, samples, seed, 0.5, |pt| {
        let r = chain_density_gaussian(pt);
        r * r
    })
}

/// `‖ϱ_n − N^{n/2} p^N_n‖₂` estimated by importance sampling, with a
/// delta-method standard error.
pub fn local_clt_l2_error(n: usize, horizon: usize, samples: usize, seed: u64) -> Result<Estimate> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("local CLT error supports n in 1..=3, got {n}")));
    }
    if samples < 10_000 {
        return Err(Error::InvalidArgument(format!("sampler budget {samples} below 10^4")));
    }
    let scale = (horizon as f64).powf(n as f64 / 2.0);
    let sq = importance_sample(n, samples, seed, 1.5, |pt| {
        let d = chain_density_gaussian(pt)
            - scale * discrete_kernel_pnn(pt, horizon).expect("proposal times lie in (0, 1]");
        d * d
    });
    let value = sq.value.max(0.0).sqrt();
    let stderr = if value > 0.0 { sq.stderr / (2.0 * value) } else { sq.stderr.sqrt() };
    Ok(Estimate { value, stderr })
}

/// One row of the exported norm table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub n: usize,
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub stderr: f64,
}

pub fn norm_table(max_order: usize, samples: usize, seed: u64) -> Vec<NormRow> {
    (0..=max_order)
        .map(|n| {
            let e = mc_rho_norm_sq(n, samples, seed.wrapping_add(n as u64));
            NormRow { n, closed_form: rho_chain_norm_sq(n), mc_estimate: e.value, stderr: e.stderr }
        })
        .collect()
}

pub fn write_norm_table<W: Write>(rows: &[NormRow], mut out: W, manifest: &[String]) -> Result<()> {
    for line in manifest {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_values() {
        assert_eq!(rw_transition(1, 1), 0.5);
        assert!((rw_transition(2, 0) - 0.5).abs() < 1e-15);
        assert_eq!(rw_transition(3, 0), 0.0);
        assert_eq!(rw_transition(3, 5), 0.0);
    }

    #[test]
    fn transitions_sum_to_one() {
        for i in 1..=30usize {
            let s: f64 = (-(i as i64)..=i as i64).map(|x| rw_transition(i, x)).sum();
            assert!((s - 1.0).abs() < 1e-13, "i={i}");
        }
    }

    #[test]
    fn heat_kernel_values() {
        assert!((heat_kernel(1.0, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(heat_kernel(0.3, 1.2).unwrap(), heat_kernel(0.3, -1.2).unwrap());
        assert!(heat_kernel(0.0, 1.0).is_err());
        let mass = quadrature::integrate(|x| heat(0.5, x), -10.0, 10.0, 20, 40);
        assert!((mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn discrete_chain_examples() {
        assert_eq!(chain_density_discrete(&LatticeChain::new(vec![1], vec![1])), 0.5);
        assert_eq!(chain_density_discrete(&LatticeChain::new(vec![1, 2], vec![1, 0])), 0.25);
        assert_eq!(chain_density_discrete(&LatticeChain::new(vec![2, 1], vec![0, 1])), 0.0);
        let total: f64 = (-2..=2)
            .flat_map(|a| (-4..=4).map(move |b| (a, b)))
            .map(|(a, b)| chain_density_discrete(&LatticeChain::new(vec![2, 4], vec![a, b])))
            .sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_chain_examples() {
        let one = SimplexPoint::new(vec![1.0], vec![0.0]);
        assert!((chain_density_gaussian(&one) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert_eq!(chain_density_gaussian(&SimplexPoint::new(vec![0.5, 0.2], vec![0.0, 0.0])), 0.0);
        let two = SimplexPoint::new(vec![0.3, 0.8], vec![0.4, -0.1]);
        let replay = heat(0.3, 0.4) * heat(0.5, -0.5);
        assert!((chain_density_gaussian(&two) - replay).abs() < 1e-15);
    }

    #[test]
    fn discrete_kernel_examples() {
        let pt = SimplexPoint::new(vec![1.0], vec![0.5]);
        assert_eq!(discrete_kernel_pnn(&pt, 1).unwrap(), 0.25);
        let two = SimplexPoint::new(vec![0.5, 1.0], vec![0.0, 0.0]);
        assert_eq!(discrete_kernel_pnn(&two, 1).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_norms() {
        assert_eq!(rho_chain_norm_sq(0), 1.0);
        assert!((rho_chain_norm_sq(1) - 1.0 / PI.sqrt()).abs() < 1e-14);
        assert!((rho_chain_norm_sq(2) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn block_average_polynomials() {
        let cells = [(1usize, 1i64)];
        assert!((block_average_cells(|_, _| 3.5, &cells, 16, 3).unwrap() - 3.5).abs() < 1e-14);
        let lin = block_average_cells(|_, x| x[0], &[(2, 0)], 16, 3).unwrap();
        assert!(lin.abs() < 1e-15);
        // x² over (0, 2/√N]: mean is (2/√N)² / 3.
        let n = 16usize;
        let sq = block_average_cells(|_, x| x[0] * x[0], &cells, n, 3).unwrap();
        let exact = (2.0 / (n as f64).sqrt()).powi(2) / 3.0;
        assert!((sq - exact).abs() < 1e-15);
    }

    #[test]
    fn block_average_rejects_non_finite() {
        let r = block_average_cells(|_, _| f64::INFINITY, &[(1, 1)], 4, 2);
        assert!(matches!(r, Err(Error::QuadratureFailure)));
    }

    #[test]
    fn discrete_norm_matches_brute_force() {
        // Sum of squares of N^{n/2} p^N_n over cells times cell volume.
        let (n, horizon) = (2usize, 6usize);
        let nf = horizon as f64;
        let mut total = 0.0;
        for i1 in 1..=horizon {
            for i2 in i1 + 1..=horizon {
                for z1 in -6i64..=6 {
                    for z2 in -6i64..=6 {
                        let p = chain_density_discrete(&LatticeChain::new(vec![i1, i2], vec![z1, z2]));
                        total += (nf * 0.25 * p).powi(2);
                    }
                }
            }
        }
        let volume = 4.0 * nf.powf(-3.0);
        assert!((total * volume - discrete_kernel_norm_sq(n, horizon)).abs() < 1e-14);
    }

    #[test]
    fn degenerate_kernel_norms() {
        assert_eq!(discrete_kernel_norm_sq(3, 2), 0.0);
        let e = local_clt_l2_error(3, 2, 20_000, 5).unwrap();
        let target = rho_chain_norm_sq(3).sqrt();
        assert!((e.value - target).abs() < 4.0 * e.stderr + 1e-3, "{e:?} vs {target}");
    }
}
