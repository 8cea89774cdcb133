//! Seed derivation and uniform sampling ranges.
//!
//! Every random consumer draws from its own ChaCha8 substream. The root seed
//! and a [`Stream`] tag are mixed with SplitMix64 into the generator key, and
//! the path (or row) index selects the ChaCha stream counter. Adding a new
//! tag never perturbs existing streams, and a path's draws do not depend on
//! which thread generates them.

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Consumers of randomness within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Unaffected = 1,
    Strategy = 2,
    ImpactBeta = 3,
    ImpactThinness = 4,
    /// Per-run seeds derived from a batch root seed.
    Runs = 5,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Generator for `(seed, stream, index)`.
pub fn substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, stream as u64));
    rng.set_stream(index);
    rng
}

/// Seed of run `index` within a batch rooted at `root`.
pub fn run_seed(root: u64, index: usize) -> u64 {
    mix(mix(root, Stream::Runs as u64), index as u64)
}

/// Half-open interval `[lo, hi)` sampled uniformly. A point interval
/// `lo == hi` is allowed and always yields `lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct UniformRange {
    lo: f64,
    hi: f64,
}

impl UniformRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::param(
                "range",
                format!("expected finite lo <= hi, got [{lo}, {hi})"),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn sampler(&self) -> RangeSampler {
        if self.is_point() {
            RangeSampler::Point(self.lo)
        } else {
            RangeSampler::Uniform(Uniform::new(self.lo, self.hi).expect("lo < hi checked"))
        }
    }
}

impl TryFrom<[f64; 2]> for UniformRange {
    type Error = String;

    fn try_from([lo, hi]: [f64; 2]) -> std::result::Result<Self, String> {
        UniformRange::new(lo, hi).map_err(|e| e.to_string())
    }
}

impl From<UniformRange> for [f64; 2] {
    fn from(r: UniformRange) -> Self {
        [r.lo, r.hi]
    }
}

#[derive(Debug, Clone, Copy)]
pub enum RangeSampler {
    Point(f64),
    Uniform(Uniform<f64>),
}

impl RangeSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RangeSampler::Point(v) => *v,
            RangeSampler::Uniform(u) => u.sample(rng),
        }
    }
}
