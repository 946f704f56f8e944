//! Collision measures `Π_N` (with pair multiplicity) and `Π′_N` (distinct
//! events) of a walk ensemble.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::walks::WalkEnsemble;

/// One collision event: time `n`, site `z`, weight `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub n: u32,
    pub z: i32,
    pub weight: u32,
}

/// Atomic measure on lattice collision events, sorted by `(n, z)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionMeasure {
    horizon: usize,
    k: usize,
    atoms: Vec<Atom>,
}

impl CollisionMeasure {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total mass `Σ m`.
    pub fn mass(&self) -> u64 {
        self.atoms.iter().map(|a| u64::from(a.weight)).sum()
    }

    /// `Σ m f(n/N, z/√N)`.
    pub fn integrate(&self, f: &TestFunction) -> f64 {
        let nf = self.horizon as f64;
        let sq = nf.sqrt();
        self.atoms
            .iter()
            .map(|a| f64::from(a.weight) * f.eval(f64::from(a.n) / nf, f64::from(a.z) / sq))
            .sum()
    }

    /// Writes `n,z,weight` rows after `#`-prefixed manifest lines.
    pub fn write_csv<W: Write>(&self, mut out: W, manifest: &[String]) -> Result<()> {
        for line in manifest {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "# N={} k={}", self.horizon, self.k)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "z", "weight"])?;
        for a in &self.atoms {
            w.serialize((a.n, a.z, a.weight))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Both collision measures of one ensemble.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Collisions {
    pub with_multiplicity: CollisionMeasure,
    pub distinct: CollisionMeasure,
}

impl Collisions {
    /// `‖Π_N − Π′_N‖ = Σ (m − 1)`.
    pub fn excess_mass(&self) -> u64 {
        self.with_multiplicity.mass() - self.distinct.mass()
    }
}

/// Calls `visit(n, z, m)` for every site `z` holding `m ≥ 2` walks at time
/// `n ∈ [1, N]`, in increasing `(n, z)` order.
pub fn for_each_occupied_site<F>(ensemble: &WalkEnsemble, mut visit: F)
where
    F: FnMut(usize, i32, u32),
{
    let walks = ensemble.walks();
    let mut buf: Vec<i32> = Vec::with_capacity(walks.len());
    for n in 1..=ensemble.horizon() {
        buf.clear();
        buf.extend(walks.iter().map(|w| w.at(n)));
        buf.sort_unstable();
        let mut i = 0;
        while i < buf.len() {
            let mut j = i + 1;
            while j < buf.len() && buf[j] == buf[i] {
                j += 1;
            }
            if j - i >= 2 {
                visit(n, buf[i], (j - i) as u32);
            }
            i = j;
        }
    }
}

/// Builds `Π_N` and `Π′_N`.
pub fn detect_collisions(ensemble: &WalkEnsemble) -> Collisions {
    let mut multi = Vec::new();
    let mut distinct = Vec::new();
    for_each_occupied_site(ensemble, |n, z, m| {
        multi.push(Atom { n: n as u32, z, weight: m * (m - 1) / 2 });
        distinct.push(Atom { n: n as u32, z, weight: 1 });
    });
    let (horizon, k) = (ensemble.horizon(), ensemble.k());
    Collisions {
        with_multiplicity: CollisionMeasure { horizon, k, atoms: multi },
        distinct: CollisionMeasure { horizon, k, atoms: distinct },
    }
}

/// Returns `(‖Π_N‖, #{1 ≤ n ≤ N : S¹_n = S²_n})` for a pair of walks.
pub fn total_mass_identity_check(ensemble: &WalkEnsemble) -> Result<(u64, u64)> {
    if ensemble.k() != 2 {
        return Err(Error::WrongWalkCount { expected: 2, actual: ensemble.k() });
    }
    let mass = detect_collisions(ensemble).with_multiplicity.mass();
    let (a, b) = (&ensemble.walks()[0], &ensemble.walks()[1]);
    let zeros = (1..=ensemble.horizon()).filter(|&n| a.at(n) - b.at(n) == 0).count() as u64;
    Ok((mass, zeros))
}

type Evaluator = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Bounded test function `f(t, x)` on `[0, 1] × ℝ`.
#[derive(Clone)]
pub struct TestFunction {
    f: Arc<Evaluator>,
    bound: f64,
    nonneg: bool,
    time_homogeneous: bool,
    label: String,
}

impl TestFunction {
    pub fn new<F>(label: impl Into<String>, bound: f64, nonneg: bool, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self { f: Arc::new(f), bound, nonneg, time_homogeneous: false, label: label.into() }
    }

    /// Declares that `f` does not depend on `t`.
    pub fn time_homogeneous(mut self) -> Self {
        self.time_homogeneous = true;
        self
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.time_homogeneous
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), c.abs(), c >= 0.0, move |_, _| c).time_homogeneous()
    }

    /// `α exp(−x² / 2σ²)`.
    pub fn gaussian_bump(alpha: f64, sigma: f64) -> Self {
        let inv = 1.0 / (2.0 * sigma * sigma);
        Self::new(
            format!("gaussian_bump(alpha={alpha}, sigma={sigma})"),
            alpha.abs(),
            alpha >= 0.0,
            move |_, x| alpha * (-x * x * inv).exp(),
        )
        .time_homogeneous()
    }

    /// `c` on `|x| ≤ w`, zero elsewhere.
    pub fn window(c: f64, w: f64) -> Self {
        Self::new(
            format!("window(c={c}, w={w})"),
            c.abs(),
            c >= 0.0,
            move |_, x| if x.abs() <= w { c } else { 0.0 },
        )
        .time_homogeneous()
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        (self.f)(t, x)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("bound", &self.bound)
            .field("nonneg", &self.nonneg)
            .finish()
    }
}
