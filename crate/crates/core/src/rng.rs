//! Deterministic random sub-streams.
//!
//! Every random consumer inside a sweep draws from its own ChaCha stream keyed
//! by `(seed, iteration, purpose, index)`. Results therefore do not depend on
//! how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// Purpose tags for sub-streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Latent = 1,
    Components = 2,
    Transitions = 3,
    MeanHyper = 4,
    SplitMerge = 5,
    Swap = 6,
    Theta = 7,
    Graph = 8,
    Init = 9,
    NormConst = 10,
    Simulation = 11,
    Fault = 12,
    Calibration = 13,
    NominalShift = 14,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Factory of independent, reproducible RNG streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, iteration: u64, purpose: Purpose, index: u64) -> ChainRng {
        let mut h = splitmix64(self.seed);
        h = splitmix64(h ^ iteration);
        h = splitmix64(h ^ (purpose as u64));
        h = splitmix64(h ^ index);
        ChaCha8Rng::seed_from_u64(h)
    }
}
