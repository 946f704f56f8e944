//! Grid simulation of the chaos series
//! `𝒵_a = 1 + Σ_n ∫_{Δ_n} a^{⊗n} ϱ_n dW^{⊗n}`.
//!
//! White noise lives on a `T × X` lattice of cells covering
//! `[0, 1] × [−L, L]`. Order `n` is built from order `n − 1` by
//! `V_n = a ξ ⊙ (K ⊛ V_{n−1})`, where `K(d, j) = ϱ(dΔt, jΔx)` for `d ≥ 1`
//! keeps cell chains strictly time-ordered. The convolution runs through a
//! zero-padded 2-D FFT.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::environment::ContinuumAmplitude;
use crate::error::{Error, Result};
use crate::harness::stats::{pairwise_sum, replicates, MonteCarloSummary};
use crate::kernels::{heat, rho_chain_norm_sq};
use crate::stream::replica_stream;

/// Geometry of a white-noise lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of time cells; `Δt = 1 / time_cells`.
    pub time_cells: usize,
    /// Spatial mesh `Δx`.
    pub space_step: f64,
    /// Spatial cut-off `L`.
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(time_cells: usize, space_step: f64, half_width: f64) -> Result<Self> {
        let g = Self { time_cells, space_step, half_width };
        g.space_cells()?;
        Ok(g)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.time_cells as f64
    }

    pub fn space_cells(&self) -> Result<usize> {
        if self.time_cells == 0 || !(self.space_step > 0.0) || !(self.half_width > 0.0) {
            return Err(Error::Resolution(format!("degenerate grid {self:?}")));
        }
        let x = 2.0 * self.half_width / self.space_step;
        let r = x.round();
        if (x - r).abs() > 1e-9 * x.max(1.0) || r < 1.0 {
            return Err(Error::Resolution(format!(
                "2L / dx = {x} is not a positive integer"
            )));
        }
        Ok(r as usize)
    }

    /// Halves both meshes.
    pub fn refined(&self) -> Self {
        Self { time_cells: 2 * self.time_cells, space_step: self.space_step / 2.0, half_width: self.half_width }
    }

    /// Checks that chains of `max_order` cells fit and that `Δx ≤ √Δt`.
    pub fn validate(&self, max_order: usize) -> Result<()> {
        self.space_cells()?;
        if max_order > 0 && self.dt() >= 1.0 / max_order as f64 {
            return Err(Error::Resolution(format!(
                "dt = {} must be below 1/M = {}",
                self.dt(),
                1.0 / max_order as f64
            )));
        }
        if self.space_step > self.dt().sqrt() * (1.0 + 1e-12) {
            return Err(Error::Resolution(format!(
                "dx = {} exceeds sqrt(dt) = {}",
                self.space_step,
                self.dt().sqrt()
            )));
        }
        Ok(())
    }

    fn time_centre(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dt()
    }

    fn space_centre(&self, j: usize) -> f64 {
        -self.half_width + (j as f64 + 0.5) * self.space_step
    }
}

/// A grid together with the seed of its Gaussian cell masses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhiteNoiseGrid {
    pub spec: GridSpec,
    pub seed: u64,
}

/// One realisation of the cell masses `ξ_c ~ N(0, ΔtΔx)`, row-major in time.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl NoiseField {
    pub fn sample<R: rand::Rng + ?Sized>(spec: GridSpec, rng: &mut R) -> Result<Self> {
        let cells = spec.time_cells * spec.space_cells()?;
        let sd = (spec.dt() * spec.space_step).sqrt();
        let values = (0..cells)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect();
        Ok(Self { spec, values })
    }

    /// The same noise on the grid with doubled meshes (2 × 2 block sums).
    pub fn coarsened(&self) -> Result<Self> {
        let t = self.spec.time_cells;
        let x = self.spec.space_cells()?;
        if t % 2 != 0 || x % 2 != 0 {
            return Err(Error::Resolution("grid cannot be coarsened by two".into()));
        }
        let spec = GridSpec { time_cells: t / 2, space_step: 2.0 * self.spec.space_step, half_width: self.spec.half_width };
        let (tc, xc) = (t / 2, x / 2);
        let mut values = vec![0.0; tc * xc];
        for i in 0..tc {
            for j in 0..xc {
                let v = |a: usize, b: usize| self.values[(2 * i + a) * x + 2 * j + b];
                values[i * xc + j] = (v(0, 0) + v(0, 1)) + (v(1, 0) + v(1, 1));
            }
        }
        Ok(Self { spec, values })
    }
}

/// Truncated chaos series for one noise realisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosApproximation {
    pub truncation_order: usize,
    /// `term_0 = 1, term_1, …, term_M`.
    pub per_order: Vec<f64>,
    pub value: f64,
    /// `Σ_{n > M} γ^{2n} ‖ϱ_n‖²₂` with `γ = sup |a|`.
    pub truncation_bound: f64,
}

/// Zero-padded 2-D FFT over a `(2T) × (2X)` buffer. Spectra are kept in
/// transposed (space-major) layout.
struct Fft2 {
    pt: usize,
    px: usize,
    rows: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(t: usize, x: usize) -> Self {
        let (pt, px) = (2 * t, 2 * x);
        let mut planner = FftPlanner::new();
        Self {
            pt,
            px,
            rows: t,
            row_fwd: planner.plan_fft_forward(px),
            row_inv: planner.plan_fft_inverse(px),
            col_fwd: planner.plan_fft_forward(pt),
            col_inv: planner.plan_fft_inverse(pt),
        }
    }

    /// `buf` holds data in its first `rows` time rows; returns the spectrum.
    fn forward(&self, buf: &mut [Complex<f64>], work: &mut Vec<Complex<f64>>) {
        self.row_fwd.process(&mut buf[..self.rows * self.px]);
        transpose(buf, work, self.pt, self.px);
        self.col_fwd.process(work);
        buf.copy_from_slice(work);
    }

    /// Inverse of [`forward`](Self::forward), normalised.
    fn inverse(&self, spec: &mut [Complex<f64>], work: &mut Vec<Complex<f64>>) {
        self.col_inv.process(spec);
        transpose(spec, work, self.px, self.pt);
        self.row_inv.process(work);
        let norm = 1.0 / (self.pt * self.px) as f64;
        for (s, w) in spec.iter_mut().zip(work.iter()) {
            *s = w * norm;
        }
    }
}

fn transpose(src: &[Complex<f64>], dst: &mut Vec<Complex<f64>>, rows: usize, cols: usize) {
    dst.resize(rows * cols, Complex::default());
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Precomputed kernels and amplitudes for one grid.
pub struct ChaosEngine {
    spec: GridSpec,
    t: usize,
    x: usize,
    max_order: usize,
    fft: Fft2,
    kernel_hat: Vec<Complex<f64>>,
    kernel_sq_hat: Vec<Complex<f64>>,
    amplitude: Vec<f64>,
    first: Vec<f64>,
    truncation_bound: f64,
}

impl ChaosEngine {
    pub fn new(a: &ContinuumAmplitude, spec: GridSpec, max_order: usize) -> Result<Self> {
        spec.validate(max_order)?;
        let (t, x) = (spec.time_cells, spec.space_cells()?);
        let fft = Fft2::new(t, x);
        let (pt, px) = (fft.pt, fft.px);
        let mut k = vec![Complex::default(); pt * px];
        let mut k2 = vec![Complex::default(); pt * px];
        for d in 1..t {
            let s = d as f64 * spec.dt();
            for j in -(x as i64 - 1)..=(x as i64 - 1) {
                let v = heat(s, j as f64 * spec.space_step);
                let idx = d * px + j.rem_euclid(px as i64) as usize;
                k[idx] = Complex::new(v, 0.0);
                k2[idx] = Complex::new(v * v, 0.0);
            }
        }
        let mut work = Vec::new();
        let full = Fft2 { rows: pt, ..Fft2::new(t, x) };
        full.forward(&mut k, &mut work);
        full.forward(&mut k2, &mut work);

        let mut amplitude = vec![0.0; t * x];
        let mut first = vec![0.0; t * x];
        for i in 0..t {
            for j in 0..x {
                let (tc, xc) = (spec.time_centre(i), spec.space_centre(j));
                let av = a.eval(tc, xc);
                amplitude[i * x + j] = av;
                first[i * x + j] = av * heat(tc, xc);
            }
        }
        let gamma = a.sup_bound();
        let truncation_bound = second_moment_tail(gamma, max_order);
        Ok(Self { spec, t, x, max_order, fft, kernel_hat: k, kernel_sq_hat: k2, amplitude, first, truncation_bound })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    /// `K ⊛ v` restricted to the `T × X` grid.
    fn convolve(&self, v: &[f64], kernel: &[Complex<f64>], buf: &mut Vec<Complex<f64>>, work: &mut Vec<Complex<f64>>) -> Vec<f64> {
        let (pt, px) = (self.fft.pt, self.fft.px);
        buf.clear();
        buf.resize(pt * px, Complex::default());
        for i in 0..self.t {
            for j in 0..self.x {
                buf[i * px + j] = Complex::new(v[i * self.x + j], 0.0);
            }
        }
        self.fft.forward(buf, work);
        for (b, k) in buf.iter_mut().zip(kernel) {
            *b *= k;
        }
        self.fft.inverse(buf, work);
        let mut out = vec![0.0; self.t * self.x];
        for i in 0..self.t {
            for j in 0..self.x {
                out[i * self.x + j] = buf[i * px + j].re;
            }
        }
        out
    }

    /// Runs the order recursion on one noise realisation.
    pub fn run(&self, noise: &NoiseField) -> Result<ChaosApproximation> {
        if noise.spec != self.spec {
            return Err(Error::InvalidArgument("noise grid does not match engine grid".into()));
        }
        let mut per_order = vec![1.0];
        if self.max_order >= 1 {
            let (mut buf, mut work) = (Vec::new(), Vec::new());
            let mut v: Vec<f64> = self.first.iter().zip(&noise.values).map(|(f, xi)| f * xi).collect();
            per_order.push(pairwise_sum(&v));
            for _ in 2..=self.max_order {
                let conv = self.convolve(&v, &self.kernel_hat, &mut buf, &mut work);
                for (c, out) in v.iter_mut().enumerate() {
                    *out = self.amplitude[c] * noise.values[c] * conv[c];
                }
                per_order.push(pairwise_sum(&v));
            }
        }
        let value = pairwise_sum(&per_order);
        Ok(ChaosApproximation { truncation_order: self.max_order, per_order, value, truncation_bound: self.truncation_bound })
    }

    /// Exact second moments `E[term_n²]`, `n = 0..=M`, of the discrete
    /// scheme: the same recursion with `K²` and cell variances.
    pub fn discrete_second_moments(&self) -> Vec<f64> {
        let area = self.spec.dt() * self.spec.space_step;
        let a2: Vec<f64> = self.amplitude.iter().map(|a| a * a * area).collect();
        let mut out = vec![1.0];
        if self.max_order >= 1 {
            let (mut buf, mut work) = (Vec::new(), Vec::new());
            let mut q: Vec<f64> = self.first.iter().map(|f| f * f * area).collect();
            out.push(pairwise_sum(&q));
            for _ in 2..=self.max_order {
                let conv = self.convolve(&q, &self.kernel_sq_hat, &mut buf, &mut work);
                for (c, out) in q.iter_mut().enumerate() {
                    *out = a2[c] * conv[c].max(0.0);
                }
                out.push(pairwise_sum(&q));
            }
        }
        out
    }
}

/// Simulates `𝒵_a` truncated at order `max_order` on one noise draw.
pub fn simulate_z(a: &ContinuumAmplitude, grid: &WhiteNoiseGrid, max_order: usize) -> Result<ChaosApproximation> {
    let engine = ChaosEngine::new(a, grid.spec, max_order)?;
    let noise = NoiseField::sample(grid.spec, &mut replica_stream(grid.seed, 0))?;
    engine.run(&noise)
}

fn series_term(gamma: f64, n: usize) -> f64 {
    gamma.powi(2 * n as i32) * rho_chain_norm_sq(n)
}

/// `Σ_{n > M} γ^{2n} ‖ϱ_n‖²₂`.
pub fn second_moment_tail(gamma: f64, max_order: usize) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    let mut acc = Vec::new();
    let mut n = max_order + 1;
    loop {
        let term = series_term(gamma, n);
        acc.push(term);
        if term == 0.0 || (n > 2 && term < 1e-18 * acc.iter().sum::<f64>()) || n > 10_000 {
            break;
        }
        n += 1;
    }
    pairwise_sum(&acc)
}

/// `Σ_{n ≥ 0} γ^{2n} / (2^n Γ(n/2 + 1))`, summed until a ratio-test bound
/// on the tail drops below `tol`.
pub fn second_moment_series(gamma: f64, tol: f64) -> f64 {
    second_moment_partial_sums(gamma, tol).last().copied().unwrap_or(1.0)
}

/// Partial sums of [`second_moment_series`].
pub fn second_moment_partial_sums(gamma: f64, tol: f64) -> Vec<f64> {
    let tol = tol.max(f64::MIN_POSITIVE);
    let mut sums = vec![1.0];
    if gamma == 0.0 {
        return sums;
    }
    let mut acc = 1.0;
    let mut n = 1usize;
    loop {
        let term = series_term(gamma, n);
        acc += term;
        sums.push(acc);
        if term < tol * f64::EPSILON {
            break;
        }
        let ratio = series_term(gamma, n + 1) / term;
        if ratio < 1.0 && term * ratio / (1.0 - ratio) < tol {
            break;
        }
        n += 1;
    }
    sums
}

/// Moment estimates of `𝒵_a` on a coarse grid and its refinement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZMoments {
    pub coarse: GridSpec,
    pub fine: GridSpec,
    pub max_order: usize,
    /// `E[𝒵^p]`, `p = 1..=k`, on the coarse grid.
    pub coarse_moments: Vec<MonteCarloSummary>,
    /// `E[𝒵^p]` on the refined grid.
    pub fine_moments: Vec<MonteCarloSummary>,
    /// Richardson-extrapolated `E[𝒵^p]`; equal to the fine values when the
    /// refinement ratio is degenerate.
    pub moments: Vec<MonteCarloSummary>,
    /// Exact second moments of the discrete scheme on the coarse, fine and
    /// twice-refined grids.
    pub discrete_second: [f64; 3],
    /// Observed error reduction per refinement, if well defined.
    pub refinement_ratio: Option<f64>,
    /// `|E_fine[𝒵²] − E_coarse[𝒵²]|` from the exact discrete moments.
    pub discretization_drift: f64,
    pub truncation_bound: f64,
    /// Per replicate and order, fine-grid `term_n`.
    #[serde(skip)]
    pub fine_terms: Vec<Vec<f64>>,
}

/// Monte-Carlo moments `1..=k` of `𝒵_a` over `replicates_count` noise draws.
/// Each draw is simulated on the refined grid and, through 2 × 2 block sums
/// of the same noise, on `coarse`; the two are combined by Richardson
/// extrapolation with the ratio read off the exact discrete moments.
pub fn estimate_z_moments(
    a: &ContinuumAmplitude,
    coarse: GridSpec,
    max_order: usize,
    k: usize,
    replicates_count: usize,
    seed: u64,
) -> Result<ZMoments> {
    let fine = coarse.refined();
    let coarse_engine = ChaosEngine::new(a, coarse, max_order)?;
    let fine_engine = ChaosEngine::new(a, fine, max_order)?;
    let d_c: f64 = coarse_engine.discrete_second_moments().iter().sum();
    let d_f: f64 = fine_engine.discrete_second_moments().iter().sum();
    let d_ff: f64 = ChaosEngine::new(a, fine.refined(), max_order)?.discrete_second_moments().iter().sum();
    let refinement_ratio = {
        let (num, den) = (d_f - d_c, d_ff - d_f);
        let rho = num / den;
        (den != 0.0 && rho.is_finite() && rho > 1.0 + 1e-6).then_some(rho)
    };

    let runs: Vec<Result<(f64, f64, Vec<f64>)>> = replicates(replicates_count, seed, |_, rng| {
        let noise = NoiseField::sample(fine, rng)?;
        let zf = fine_engine.run(&noise)?;
        let zc = coarse_engine.run(&noise.coarsened()?)?;
        Ok((zc.value, zf.value, zf.per_order))
    });
    let runs: Vec<(f64, f64, Vec<f64>)> = runs.into_iter().collect::<Result<_>>()?;

    let mut coarse_moments = Vec::with_capacity(k);
    let mut fine_moments = Vec::with_capacity(k);
    let mut moments = Vec::with_capacity(k);
    for p in 1..=k as i32 {
        let c: Vec<f64> = runs.iter().map(|r| r.0.powi(p)).collect();
        let f: Vec<f64> = runs.iter().map(|r| r.1.powi(p)).collect();
        coarse_moments.push(MonteCarloSummary::from_samples(&c)?);
        fine_moments.push(MonteCarloSummary::from_samples(&f)?);
        let ext: Vec<f64> = match refinement_ratio {
            Some(rho) => c.iter().zip(&f).map(|(c, f)| f + (f - c) / (rho - 1.0)).collect(),
            None => f.clone(),
        };
        moments.push(MonteCarloSummary::from_samples(&ext)?);
    }
    Ok(ZMoments {
        coarse,
        fine,
        max_order,
        coarse_moments,
        fine_moments,
        moments,
        discrete_second: [d_c, d_f, d_ff],
        refinement_ratio,
        discretization_drift: (d_f - d_c).abs(),
        truncation_bound: second_moment_tail(a.sup_bound(), max_order),
        fine_terms: runs.into_iter().map(|r| r.2).collect(),
    })
}
