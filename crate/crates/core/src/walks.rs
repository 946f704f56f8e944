//! Simple symmetric random walks on ℤ.

use rand::RngCore;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

/// Largest horizon accepted by [`enumerate_paths`].
pub const ENUMERATION_CAP: usize = 20;

/// Positions `S_0, …, S_N` of a walk started at the origin.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WalkPath {
    positions: Vec<i32>,
}

impl WalkPath {
    /// Validates a position sequence.
    pub fn from_positions(positions: Vec<i32>) -> Result<Self> {
        match positions.first() {
            None => return Err(Error::InvalidPath("empty position sequence".into())),
            Some(&s0) if s0 != 0 => {
                return Err(Error::InvalidPath(format!("S_0 = {s0}, expected 0")))
            }
            _ => {}
        }
        if let Some(n) = positions.windows(2).position(|w| (w[1] - w[0]).abs() != 1) {
            return Err(Error::InvalidPath(format!("increment at step {} is not ±1", n + 1)));
        }
        Ok(Self { positions })
    }

    /// Builds a path from its increments.
    pub fn from_steps(steps: &[i8]) -> Result<Self> {
        let mut positions = Vec::with_capacity(steps.len() + 1);
        positions.push(0i32);
        let mut s = 0i32;
        for (n, &d) in steps.iter().enumerate() {
            if d != 1 && d != -1 {
                return Err(Error::InvalidPath(format!("step {} is {d}", n + 1)));
            }
            s += i32::from(d);
            positions.push(s);
        }
        Ok(Self { positions })
    }

    pub fn horizon(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn positions(&self) -> &[i32] {
        &self.positions
    }

    /// `S_n`.
    #[inline]
    pub fn at(&self, n: usize) -> i32 {
        self.positions[n]
    }

    /// Largest `|S_n|` over the whole horizon.
    pub fn max_abs(&self) -> i32 {
        self.positions.iter().map(|s| s.abs()).max().unwrap_or(0)
    }
}

/// Samples a walk of horizon `n` using one random bit per step.
pub fn sample_walk<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> WalkPath {
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(0i32);
    let mut s = 0i32;
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(64);
        let mut bits = rng.next_u64();
        for _ in 0..take {
            s += ((bits & 1) as i32) * 2 - 1;
            bits >>= 1;
            positions.push(s);
        }
        remaining -= take;
    }
    WalkPath { positions }
}

/// `k` independent walks sharing one horizon.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkEnsemble {
    walks: Vec<WalkPath>,
}

impl WalkEnsemble {
    pub fn new(walks: Vec<WalkPath>) -> Result<Self> {
        if walks.len() < 2 {
            return Err(Error::InvalidEnsemble(format!(
                "need at least two walks, got {}",
                walks.len()
            )));
        }
        let n = walks[0].horizon();
        if walks.iter().any(|w| w.horizon() != n) {
            return Err(Error::InvalidEnsemble("walks have different horizons".into()));
        }
        Ok(Self { walks })
    }

    /// Samples `k` walks of horizon `n` from one stream.
    pub fn sample<R: RngCore + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<Self> {
        Self::new((0..k).map(|_| sample_walk(n, rng)).collect())
    }

    pub fn k(&self) -> usize {
        self.walks.len()
    }

    pub fn horizon(&self) -> usize {
        self.walks[0].horizon()
    }

    pub fn walks(&self) -> &[WalkPath] {
        &self.walks
    }

    /// Ensemble restricted to the first `n` steps.
    pub fn truncated(&self, n: usize) -> Self {
        let walks = self
            .walks
            .iter()
            .map(|w| WalkPath { positions: w.positions[..=n.min(w.horizon())].to_vec() })
            .collect();
        Self { walks }
    }
}

/// All `2^n` paths of horizon `n`, each with probability `2^{-n}`.
pub fn enumerate_paths(n: usize) -> Result<Vec<(WalkPath, f64)>> {
    if n > ENUMERATION_CAP {
        return Err(Error::HorizonTooLarge { horizon: n, cap: ENUMERATION_CAP });
    }
    let p = 0.5f64.powi(n as i32);
    Ok((0u32..1 << n)
        .map(|mask| {
            let mut positions = Vec::with_capacity(n + 1);
            positions.push(0i32);
            let mut s = 0i32;
            for b in 0..n {
                s += if mask >> b & 1 == 1 { 1 } else { -1 };
                positions.push(s);
            }
            (WalkPath { positions }, p)
        })
        .collect())
}

/// `P(T_1 = 2k)` for `k = 1..=kmax`, where `T_1` is the first return time to 0.
pub fn return_time_pmf(kmax: usize) -> Vec<f64> {
    (1..=kmax)
        .map(|k| {
            let kf = k as f64;
            let ln = (1.0 - 2.0 * kf) * std::f64::consts::LN_2 - kf.ln()
                + ln_binomial(2 * k as u64 - 2, k as u64 - 1);
            ln.exp()
        })
        .collect()
}

/// First `n ≥ 1` with `S_n = 0`, if any.
pub fn first_return_time(path: &WalkPath) -> Option<usize> {
    path.positions.iter().skip(1).position(|&s| s == 0).map(|i| i + 1)
}

/// `#{1 ≤ n ≤ up_to : S_n = 0}`.
pub fn local_time_zero(path: &WalkPath, up_to: usize) -> usize {
    let up_to = up_to.min(path.horizon());
    path.positions[1..=up_to].iter().filter(|&&s| s == 0).count()
}
