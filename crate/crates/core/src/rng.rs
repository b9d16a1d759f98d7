//! Seeded, splittable randomness.
//!
//! Every chain or batch item derives its own child stream from a parent seed,
//! so the values a chain sees depend only on `(seed, index)` and never on the
//! order in which chains are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

pub type NoiseRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream for item `index`.
    pub fn child(&self, index: u64) -> SeedStream {
        SeedStream {
            seed: splitmix64(splitmix64(self.seed) ^ splitmix64(index.wrapping_add(0x5EED))),
        }
    }

    pub fn rng(&self) -> NoiseRng {
        NoiseRng::seed_from_u64(self.seed)
    }
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
