//! Named, independently seeded random streams.
//!
//! Generator: xoshiro256** (Blackman & Vigna) with its 256-bit state filled
//! by SplitMix64. A stream's seed is `splitmix64(run_seed ^ fnv1a(name) ^
//! index * 0x9E37_79B9_7F4A_7C15)`, so streams never share state and a
//! given `(seed, name, index)` always yields the same sequence.
//!
//! Conversions:
//! - uniform01: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`
//! - normal: Box–Muller, consuming two uniforms per draw, cosine branch only
//! - exp(rate): `-ln(1 - u) / rate`
//! - bernoulli(p): `u < p`

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{fnv1a, FNV_OFFSET};

pub const STREAM_NAMES: [&str; 4] = ["workload", "faults", "actions", "detectors"];

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A distribution request for [`RngStream::draw`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dist {
    Uniform01,
    Normal { mean: f64, sd: f64 },
    Bernoulli(f64),
    Exp { rate: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sample {
    Real(f64),
    Flag(bool),
}

impl Sample {
    pub fn real(self) -> Option<f64> {
        match self {
            Sample::Real(x) => Some(x),
            Sample::Flag(_) => None,
        }
    }

    pub fn flag(self) -> Option<bool> {
        match self {
            Sample::Flag(b) => Some(b),
            Sample::Real(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RngError {
    #[error("unknown random stream `{0}`")]
    UnknownStream(String),
    #[error("invalid distribution parameters: {0:?}")]
    InvalidParams(Dist),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    s: [u64; 4],
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for w in &mut s {
            *w = splitmix64(&mut sm);
        }
        if s == [0; 4] {
            s[0] = 1;
        }
        RngStream { s }
    }

    /// The stream `name` of run `seed`; `index` selects a sub-stream.
    pub fn derive(seed: u64, name: &str, index: u64) -> Self {
        let h = fnv1a(FNV_OFFSET, name.as_bytes());
        let mut mix = seed ^ h ^ index.wrapping_mul(GOLDEN);
        RngStream::from_seed(splitmix64(&mut mix))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `0..n` (n > 0), by multiply-shift on the top 32 bits.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (((self.next_u64() >> 32) * n as u64) >> 32) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(1.0 - u1));
        mean + sd * r * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Exponential with the given mean; an infinite mean yields infinity.
    pub fn exp_mean(&mut self, mean: f64) -> f64 {
        if mean.is_infinite() {
            return f64::INFINITY;
        }
        -libm::log(1.0 - self.uniform()) * mean
    }

    pub fn draw(&mut self, dist: Dist) -> Result<Sample, RngError> {
        match dist {
            Dist::Uniform01 => Ok(Sample::Real(self.uniform())),
            Dist::Normal { mean, sd } if sd > 0.0 && mean.is_finite() && sd.is_finite() => {
                Ok(Sample::Real(self.normal(mean, sd)))
            }
            Dist::Bernoulli(p) if (0.0..=1.0).contains(&p) => Ok(Sample::Flag(self.bernoulli(p))),
            Dist::Exp { rate } if rate > 0.0 && rate.is_finite() => {
                Ok(Sample::Real(-libm::log(1.0 - self.uniform()) / rate))
            }
            bad => Err(RngError::InvalidParams(bad)),
        }
    }
}

/// Registry of named streams for one run.
#[derive(Clone, Debug)]
pub struct RngStreams {
    seed: u64,
    streams: Vec<(String, RngStream)>,
}

impl RngStreams {
    /// A registry with the four standard streams registered.
    pub fn new(seed: u64) -> Self {
        let mut r = RngStreams {
            seed,
            streams: Vec::new(),
        };
        for name in STREAM_NAMES {
            r.register(name);
        }
        r
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn register(&mut self, name: &str) {
        if self.streams.iter().all(|(n, _)| n != name) {
            self.streams
                .push((name.to_string(), RngStream::derive(self.seed, name, 0)));
        }
    }

    pub fn stream(&mut self, name: &str) -> Result<&mut RngStream, RngError> {
        self.streams
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| RngError::UnknownStream(name.to_string()))
    }

    pub fn draw(&mut self, name: &str, dist: Dist) -> Result<Sample, RngError> {
        self.stream(name)?.draw(dist)
    }

    /// Sub-stream `index` of `name`, independent of the registered stream.
    pub fn fork(&self, name: &str, index: u64) -> RngStream {
        RngStream::derive(self.seed, name, index + 1)
    }
}
