//! Counter-based random streams.
//!
//! A stream is identified by `(seed, stream_id)`; ChaCha's stream parameter
//! makes each one independent of how many values other streams consumed, so
//! results do not depend on thread count or scheduling. The top byte of the
//! id carries a purpose tag and the rest a replicate index.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Path = 1,
    Martingale = 2,
    Lindeberg = 3,
    Reference = 4,
    Misc = 5,
}

pub fn stream_id(purpose: Purpose, index: u64) -> u64 {
    assert!(index < 1 << 56, "replicate index too large");
    ((purpose as u64) << 56) | index
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn for_purpose(seed: u64, purpose: Purpose, index: u64) -> Self {
        Self::new(seed, stream_id(purpose, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval `(0, 1)`: safe to take logs of.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn coin(&mut self, prob_true: f64) -> bool {
        self.uniform_open() < prob_true
    }

    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.rng.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Index in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}
