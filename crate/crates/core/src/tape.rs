//! Site-wise instruction stacks.
//!
//! Every site `x` carries an infinite stack of instructions `(x, 1), (x, 2), ...`.
//! A cell is computed from `(seed, x, j)` by a counter-based hash, so the stack is
//! materialized lazily and re-reading a cell always yields the same instruction no
//! matter how many times, or in which order, cells are queried.

use std::fmt;

use thiserror::Error;

/// Sleep rate and left-jump probability of the walk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    lambda: f64,
    p: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("lambda must be a finite positive real, got {0}")]
    Lambda(f64),
    #[error("p must lie in the open interval (0,1), got {0}")]
    P(f64),
}

impl ModelParams {
    pub fn new(lambda: f64, p: f64) -> Result<Self, ParamError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(ParamError::Lambda(lambda));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(ParamError::P(p));
        }
        Ok(Self { lambda, p })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Probability that a single instruction is a sleep instruction.
    pub fn sleep_probability(&self) -> f64 {
        self.lambda / (1.0 + self.lambda)
    }

    /// Probabilities of (sleep, jump left, jump right).
    pub fn instruction_probabilities(&self) -> [f64; 3] {
        let z = 1.0 + self.lambda;
        [self.lambda / z, self.p / z, (1.0 - self.p) / z]
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { lambda: 1.0, p: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    Sleep,
    JumpLeft,
    JumpRight,
    /// Removes the toppled particle from the segment. Only produced by an
    /// [`EjectorOverlay`], never by a random draw.
    Eject,
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Instruction::Sleep => "sleep",
            Instruction::JumpLeft => "left",
            Instruction::JumpRight => "right",
            Instruction::Eject => "eject",
        };
        f.write_str(s)
    }
}

/// Anything that can answer "what is the `j`-th instruction at site `x`".
///
/// Indices start at 1, matching odometer semantics: a site whose odometer reads
/// `h` consumes instruction `h + 1` on its next toppling.
pub trait Tape {
    fn instruction_at(&self, site: i64, j: u64) -> Instruction;

    /// Per-site value that [`Tape::instruction_with`] may use to skip work
    /// shared by every index at `site`.
    #[inline]
    fn site_token(&self, site: i64) -> u64 {
        site as u64
    }

    /// Same as `instruction_at(site, j)`, given `token = site_token(site)`.
    #[inline]
    fn instruction_with(&self, token: u64, site: i64, j: u64) -> Instruction {
        let _ = token;
        self.instruction_at(site, j)
    }
}

impl<T: Tape + ?Sized> Tape for &T {
    #[inline]
    fn instruction_at(&self, site: i64, j: u64) -> Instruction {
        (**self).instruction_at(site, j)
    }

    #[inline]
    fn site_token(&self, site: i64) -> u64 {
        (**self).site_token(site)
    }

    #[inline]
    fn instruction_with(&self, token: u64, site: i64, j: u64) -> Instruction {
        (**self).instruction_with(token, site, j)
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SITE_KEY: u64 = 0xD6E8_FEB8_6659_FD93;
const INDEX_KEY: u64 = 0xA076_1D64_78BD_642F;
const REPLICA_KEY: u64 = 0x5851_F42D_4C95_7F2D;
const UNIT_BITS: u32 = 53;

/// SplitMix64 finalizer. Bijective on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based hash of a `(key, a, b)` triple.
#[inline]
pub(crate) fn hash3(key: u64, a: u64, b: u64) -> u64 {
    hash_second(hash_first(key, a), b)
}

#[inline]
fn hash_first(key: u64, a: u64) -> u64 {
    mix64(key ^ a.wrapping_mul(SITE_KEY))
}

#[inline]
fn hash_second(first: u64, b: u64) -> u64 {
    mix64(first ^ b.wrapping_mul(INDEX_KEY))
}

/// Uniform in `[0, 1)` with 53 random bits.
#[inline]
pub(crate) fn unit_f64(h: u64) -> f64 {
    (h >> (64 - UNIT_BITS)) as f64 * (1.0 / (1u64 << UNIT_BITS) as f64)
}

/// Uniform index in `0..n` by multiply-shift.
#[inline]
pub(crate) fn uniform_below(h: u64, n: u64) -> u64 {
    ((h as u128 * n as u128) >> 64) as u64
}

/// Derives the seed of replica `replica_index` from a master seed.
///
/// `mix64(mix64(master ^ K) + index * GOLDEN)`: both `mix64` and multiplication by
/// an odd constant are bijections of `u64`, so for a fixed master seed distinct
/// indices always give distinct replica seeds. The function is part of the result
/// file contract and must not change between versions.
pub fn derive_replica_seed(master_seed: u64, replica_index: u64) -> u64 {
    mix64(mix64(master_seed ^ REPLICA_KEY).wrapping_add(replica_index.wrapping_mul(GOLDEN)))
}

/// Named sub-streams of one replica.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Instructions = 0,
    Driver = 1,
    InitialConfig = 2,
    Policy = 3,
    Holes = 4,
    Pairing = 5,
}

impl Stream {
    pub fn seed(self, replica_seed: u64) -> u64 {
        derive_replica_seed(replica_seed, self as u64)
    }
}

/// The i.i.d. random instruction array of the model.
#[derive(Clone, Debug)]
pub struct InstructionTape {
    seed: u64,
    key: u64,
    params: ModelParams,
    sleep_below: u64,
    left_below: u64,
}

impl InstructionTape {
    pub fn new(seed: u64, params: ModelParams) -> Self {
        let [ps, pl, _] = params.instruction_probabilities();
        let scale = (1u64 << UNIT_BITS) as f64;
        Self {
            seed,
            key: mix64(seed ^ GOLDEN),
            params,
            sleep_below: (ps * scale) as u64,
            left_below: ((ps + pl) * scale) as u64,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    /// Overlay that turns instructions `j >= threshold` at `pivot` into ejections.
    pub fn with_ejector(&self, pivot: i64, threshold: u64) -> EjectorOverlay<'_, Self> {
        EjectorOverlay::new(self, pivot, threshold)
    }
}

impl Tape for InstructionTape {
    #[inline]
    fn instruction_at(&self, site: i64, j: u64) -> Instruction {
        self.instruction_with(self.site_token(site), site, j)
    }

    #[inline]
    fn site_token(&self, site: i64) -> u64 {
        hash_first(self.key, site as u64)
    }

    #[inline]
    fn instruction_with(&self, token: u64, _site: i64, j: u64) -> Instruction {
        debug_assert!(j >= 1, "instruction indices start at 1");
        let u = hash_second(token, j) >> (64 - UNIT_BITS);
        if u < self.sleep_below {
            Instruction::Sleep
        } else if u < self.left_below {
            Instruction::JumpLeft
        } else {
            Instruction::JumpRight
        }
    }
}

/// A base tape whose stack at `pivot` is replaced by ejections from index
/// `threshold` on. Every other cell reads through to the base.
#[derive(Clone, Copy, Debug)]
pub struct EjectorOverlay<'a, T: Tape> {
    base: &'a T,
    pivot: i64,
    threshold: u64,
}

impl<'a, T: Tape> EjectorOverlay<'a, T> {
    pub fn new(base: &'a T, pivot: i64, threshold: u64) -> Self {
        assert!(threshold >= 1, "ejector threshold starts at 1");
        Self { base, pivot, threshold }
    }

    pub fn pivot(&self) -> i64 {
        self.pivot
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }
}

impl<T: Tape> Tape for EjectorOverlay<'_, T> {
    #[inline]
    fn instruction_at(&self, site: i64, j: u64) -> Instruction {
        if site == self.pivot && j >= self.threshold {
            Instruction::Eject
        } else {
            self.base.instruction_at(site, j)
        }
    }

    #[inline]
    fn site_token(&self, site: i64) -> u64 {
        self.base.site_token(site)
    }

    #[inline]
    fn instruction_with(&self, token: u64, site: i64, j: u64) -> Instruction {
        if site == self.pivot && j >= self.threshold {
            Instruction::Eject
        } else {
            self.base.instruction_with(token, site, j)
        }
    }
}

/// A tape given by explicit per-site prefixes, falling back to a base tape past
/// the prefix. Handy for forcing a particular opening sequence in tests and
/// small experiments.
#[derive(Clone, Debug)]
pub struct ScriptedTape<T: Tape> {
    base: T,
    scripts: Vec<(i64, Vec<Instruction>)>,
}

impl<T: Tape> ScriptedTape<T> {
    pub fn new(base: T) -> Self {
        Self { base, scripts: Vec::new() }
    }

    pub fn script(mut self, site: i64, prefix: impl Into<Vec<Instruction>>) -> Self {
        self.scripts.retain(|(s, _)| *s != site);
        self.scripts.push((site, prefix.into()));
        self
    }
}

impl<T: Tape> Tape for ScriptedTape<T> {
    fn instruction_at(&self, site: i64, j: u64) -> Instruction {
        for (s, prefix) in &self.scripts {
            if *s == site {
                if let Some(ins) = prefix.get((j - 1) as usize) {
                    return *ins;
                }
            }
        }
        self.base.instruction_at(site, j)
    }
}
