//! Reproducible random streams.
//!
//! Every path owns two ChaCha8 streams keyed by `seed_base`:
//! stream `2 * path_index` draws the coarse Brownian increments and stream
//! `2 * path_index + 1` draws Brownian-bridge midpoints. Path results are
//! therefore independent of how paths are scheduled across threads.
//!
//! Bridge draws for coarse step `k` start at word position `k * BRIDGE_STRIDE`
//! and are consumed level by level, so the refinement by `2F` contains the
//! refinement by `F`: summing adjacent pairs of the finer increments gives
//! the coarser ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const BRIDGE_STRIDE: u128 = 1 << 20;
/// Largest supported bridge refinement.
pub const MAX_REFINEMENT: u32 = 1 << 12;

/// Identifies the random streams of one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSeed {
    pub seed_base: u64,
    pub path_index: u64,
}

impl PathSeed {
    pub fn new(seed_base: u64, path_index: u64) -> Result<Self> {
        if path_index >= 1 << 62 {
            return Err(invalid("path index too large"));
        }
        Ok(Self { seed_base, path_index })
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed_base);
        rng.set_stream(stream);
        rng
    }

    /// Coarse Brownian increments with step `dt`.
    pub fn increments(&self, dt: f64) -> Increments {
        Increments { rng: self.rng(2 * self.path_index), scale: dt.sqrt() }
    }

    /// Bridge refinement of coarse increments of length `dt` into `factor`
    /// pieces.
    pub fn bridge(&self, dt: f64, factor: u32) -> Result<Bridge> {
        if !factor.is_power_of_two() || factor > MAX_REFINEMENT {
            return Err(invalid(format!(
                "refinement factor must be a power of two not above {MAX_REFINEMENT}"
            )));
        }
        Ok(Bridge {
            rng: self.rng(2 * self.path_index + 1),
            dt,
            factor: factor as usize,
            out: vec![0.0; factor as usize],
            z: Vec::with_capacity(factor as usize / 2),
        })
    }
}

/// Sequential `N(0, dt)` draws.
#[derive(Debug, Clone)]
pub struct Increments {
    rng: ChaCha8Rng,
    scale: f64,
}

impl Increments {
    #[inline]
    pub fn next_dw(&mut self) -> f64 {
        let xi: f64 = self.rng.sample(StandardNormal);
        self.scale * xi
    }
}

/// Dyadic Brownian-bridge refinement of coarse increments.
#[derive(Debug, Clone)]
pub struct Bridge {
    rng: ChaCha8Rng,
    dt: f64,
    factor: usize,
    out: Vec<f64>,
    z: Vec<f64>,
}

impl Bridge {
    pub fn factor(&self) -> usize {
        self.factor
    }

    /// Splits the increment `dw` of coarse step `k` into `factor` increments
    /// that sum to `dw` up to rounding.
    pub fn refine(&mut self, k: u64, dw: f64) -> &[f64] {
        self.out[0] = dw;
        if self.factor == 1 {
            return &self.out;
        }
        self.rng.set_word_pos(k as u128 * BRIDGE_STRIDE);
        let mut len = self.dt;
        let mut count = 1;
        while count < self.factor {
            self.z.clear();
            for _ in 0..count {
                self.z.push(self.rng.sample(StandardNormal));
            }
            let sd = 0.5 * len.sqrt();
            for j in (0..count).rev() {
                let x = self.out[j];
                let left = 0.5 * x + sd * self.z[j];
                self.out[2 * j] = left;
                self.out[2 * j + 1] = x - left;
            }
            count *= 2;
            len *= 0.5;
        }
        &self.out
    }
}

/// Increments of step `dt` obtained by drawing coarse increments of step
/// `dt * factor` and bridging them; `factor = 1` is the plain stream.
#[derive(Debug, Clone)]
pub struct BrownianSource {
    inc: Increments,
    bridge: Bridge,
    k: u64,
    pos: usize,
}

impl BrownianSource {
    pub fn new(seed: PathSeed, dt: f64, factor: u32) -> Result<Self> {
        let coarse = dt * factor as f64;
        let bridge = seed.bridge(coarse, factor)?;
        Ok(Self { inc: seed.increments(coarse), pos: bridge.factor, bridge, k: 0 })
    }

    #[inline]
    pub fn next_dw(&mut self) -> f64 {
        if self.bridge.factor == 1 {
            return self.inc.next_dw();
        }
        if self.pos == self.bridge.factor {
            let dw = self.inc.next_dw();
            self.bridge.refine(self.k, dw);
            self.k += 1;
            self.pos = 0;
        }
        self.pos += 1;
        self.bridge.out[self.pos - 1]
    }
}
