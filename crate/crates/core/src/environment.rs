//! Rademacher disorder `ω(n, z)` and lattice amplitude fields `A_N(n, z)`.

use std::fmt;
use std::sync::Arc;

use crate::collisions::TestFunction;
use crate::error::{Error, Result};
use crate::stream::mix64;

/// Identity of the cell hash, recorded in every output header.
pub const HASH_ID: &str = "splitmix64-band64/v1";

const TIME_MULT: u64 = 0x9e37_79b9_7f4a_7c15;
const BLOCK_MULT: u64 = 0xc2b2_ae3d_27d4_eb4f;
const PARITY_FLAG: u64 = 1 << 63;

/// Seeded Rademacher field evaluated by hashing.
///
/// Cell `(n, z)` has band index `j = ⌊(z + n)/2⌋`. One SplitMix64 hash of
/// `(seed, n, ⌊j/64⌋, parity of z + n)` supplies 64 independent sign bits,
/// and bit `j mod 64` of it is `ω(n, z)`. A walk sweep over the parity band
/// therefore costs one hash per 64 cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EnvironmentField {
    seed: u64,
    key: u64,
}

/// Hash state for one time slice of an [`EnvironmentField`].
#[derive(Clone, Copy, Debug)]
pub struct OmegaRow {
    key: u64,
    n: i64,
}

impl OmegaRow {
    /// Sign bits for band indices `64 b ..= 64 b + 63` of the parity band.
    #[inline]
    pub fn band_word(&self, block: i64) -> u64 {
        word(self.key, block, false)
    }

    /// `ω(n, z)` as `±1.0`.
    #[inline]
    pub fn omega(&self, z: i64) -> f64 {
        let s = z + self.n;
        let j = s.div_euclid(2);
        let w = word(self.key, j.div_euclid(64), s.rem_euclid(2) == 1);
        sign_of(w, j.rem_euclid(64) as u32)
    }
}

#[inline]
fn word(row_key: u64, block: i64, odd: bool) -> u64 {
    let zz = ((block << 1) ^ (block >> 63)) as u64;
    let tagged = if odd { zz | PARITY_FLAG } else { zz };
    mix64(row_key.wrapping_add(mix64(tagged.wrapping_mul(BLOCK_MULT))))
}

/// `±1.0` from bit `bit` of `word`.
#[inline]
pub fn sign_of(word: u64, bit: u32) -> f64 {
    1.0 - 2.0 * ((word >> bit) & 1) as f64
}

impl EnvironmentField {
    pub fn new(seed: u64) -> Self {
        Self { seed, key: mix64(seed ^ 0x5851_f42d_4c95_7f2d) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn row(&self, n: usize) -> OmegaRow {
        OmegaRow { key: mix64(self.key.wrapping_add((n as u64).wrapping_mul(TIME_MULT))), n: n as i64 }
    }

    /// `ω(n, z) ∈ {−1, +1}`.
    #[inline]
    pub fn omega_at(&self, n: usize, z: i64) -> i8 {
        self.row(n).omega(z) as i8
    }

    #[inline]
    pub fn omega_f64(&self, n: usize, z: i64) -> f64 {
        self.row(n).omega(z)
    }
}

type LatticeEval = dyn Fn(usize, i64) -> f64 + Send + Sync;
type ContinuumEval = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Lattice amplitude `A(n, z)` with a sup-norm bound.
#[derive(Clone)]
pub struct DisorderFunction {
    eval: Arc<LatticeEval>,
    sup_bound: f64,
    time_homogeneous: bool,
    label: String,
}

impl DisorderFunction {
    pub fn new<F>(label: impl Into<String>, sup_bound: f64, f: F) -> Self
    where
        F: Fn(usize, i64) -> f64 + Send + Sync + 'static,
    {
        Self { eval: Arc::new(f), sup_bound, time_homogeneous: false, label: label.into() }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        let mut d = Self::new(format!("constant({c})"), c.abs(), move |_, _| c);
        d.time_homogeneous = true;
        d
    }

    /// Declares that `A` does not depend on `n`.
    pub fn time_homogeneous(mut self) -> Self {
        self.time_homogeneous = true;
        self
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.time_homogeneous
    }

    #[inline]
    pub fn at(&self, n: usize, z: i64) -> f64 {
        (self.eval)(n, z)
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `s · A`.
    pub fn scaled(&self, s: f64) -> Self {
        let inner = Arc::clone(&self.eval);
        Self {
            eval: Arc::new(move |n, z| s * inner(n, z)),
            sup_bound: s.abs() * self.sup_bound,
            time_homogeneous: self.time_homogeneous,
            label: format!("{s} * {}", self.label),
        }
    }
}

impl fmt::Debug for DisorderFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DisorderFunction")
            .field("label", &self.label)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

/// Continuum amplitude `a(t, x)` on `[0, 1] × ℝ`.
#[derive(Clone)]
pub struct ContinuumAmplitude {
    eval: Arc<ContinuumEval>,
    sup_bound: f64,
    time_homogeneous: bool,
    constant: Option<f64>,
    label: String,
}

impl ContinuumAmplitude {
    pub fn new<F>(label: impl Into<String>, sup_bound: f64, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(f),
            sup_bound,
            time_homogeneous: false,
            constant: None,
            label: label.into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        let mut a = Self::new(format!("constant({c})"), c.abs(), move |_, _| c);
        a.time_homogeneous = true;
        a.constant = Some(c);
        a
    }

    /// `√f` for a nonnegative test function.
    pub fn sqrt_of(f: &TestFunction) -> Result<Self> {
        if !f.is_nonneg() {
            return Err(Error::InvalidArgument(format!(
                "test function {} is not declared nonnegative",
                f.label()
            )));
        }
        let g = f.clone();
        let mut a = Self::new(format!("sqrt({})", f.label()), f.bound().sqrt(), move |t, x| {
            g.eval(t, x).max(0.0).sqrt()
        });
        a.time_homogeneous = f.is_time_homogeneous();
        Ok(a)
    }

    /// `s · a`.
    pub fn scaled(&self, s: f64) -> Self {
        let inner = Arc::clone(&self.eval);
        Self {
            eval: Arc::new(move |t, x| s * inner(t, x)),
            sup_bound: s.abs() * self.sup_bound,
            time_homogeneous: self.time_homogeneous,
            constant: self.constant.map(|c| s * c),
            label: format!("{s} * {}", self.label),
        }
    }

    pub fn time_homogeneous(mut self) -> Self {
        self.time_homogeneous = true;
        self
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        (self.eval)(t, x)
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.time_homogeneous
    }

    /// The value when `a` is a known constant.
    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for ContinuumAmplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContinuumAmplitude")
            .field("label", &self.label)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

/// `A_N(n, z) = a(n/N, z/√N)`.
pub fn disorder_from_function(a: &ContinuumAmplitude, horizon: usize) -> DisorderFunction {
    let nf = horizon.max(1) as f64;
    let sq = nf.sqrt();
    let inner = a.clone();
    let mut d = DisorderFunction::new(
        format!("{} on N={horizon}", a.label()),
        a.sup_bound(),
        move |n, z| inner.eval(n as f64 / nf, z as f64 / sq),
    );
    d.time_homogeneous = a.is_time_homogeneous();
    d
}

/// The lattice cell `[t, x]_N = (i, z)`: `i = ⌈N t⌉` and `z ≡ i (mod 2)`
/// with `x ∈ ((z − 1)/√N, (z + 1)/√N]`.
pub fn cell_of(t: f64, x: f64, horizon: usize) -> Result<(usize, i64)> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::TimeOutOfDomain(t));
    }
    let nf = horizon as f64;
    let mut i = (nf * t).ceil().max(1.0) as usize;
    if i > 1 && t <= (i - 1) as f64 / nf {
        i -= 1;
    }
    if t > i as f64 / nf {
        i += 1;
    }
    let i = i.min(horizon);

    let sq = nf.sqrt();
    let y = x * sq;
    let mut z = (y - 1.0).ceil() as i64;
    if z.rem_euclid(2) != (i as i64).rem_euclid(2) {
        z += 1;
    }
    // Float rounding near a boundary can leave z one parity-step off.
    for _ in 0..2 {
        if x <= (z - 1) as f64 / sq {
            z -= 2;
        } else if x > (z + 1) as f64 / sq {
            z += 2;
        } else {
            break;
        }
    }
    Ok((i, z))
}
