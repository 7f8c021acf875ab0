//! Keyed random streams.
//!
//! Every stochastic component draws from a ChaCha stream keyed by the run
//! seed and a textual module tag, so two components never share a stream and
//! a run is reproducible no matter how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngKey {
    pub seed: u64,
    pub tag: String,
}

impl RngKey {
    pub fn new(seed: u64, tag: impl Into<String>) -> Self {
        Self { seed, tag: tag.into() }
    }

    /// Derives a child key; `a.child("b")` has tag `a/b`.
    pub fn child(&self, tag: &str) -> Self {
        Self { seed: self.seed, tag: format!("{}/{}", self.tag, tag) }
    }

    pub fn rng(&self) -> Rng {
        keyed_rng(self.seed, &self.tag)
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn keyed_rng(seed: u64, tag: &str) -> Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&fnv1a(tag).to_le_bytes());
    bytes[16..24].copy_from_slice(&(tag.len() as u64).to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}
