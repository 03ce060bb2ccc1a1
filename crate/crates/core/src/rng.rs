//! Counter-based random streams.
//!
//! Every draw is addressed by `(base seed, stream id, step)`: the stream id
//! selects an independent ChaCha keystream and the step selects a fixed
//! offset inside it. Results therefore never depend on how work is scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Words reserved for a single step inside one stream.
const STEP_WORD_BITS: u32 = 24;

/// Stream domains keep different consumers of the same base seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Paths = 1,
    Quadrature = 2,
    Policy = 3,
    Anchors = 4,
    Training = 5,
    Audit = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub base_seed: u64,
    /// Offset added to the path index when deriving stream ids, so that
    /// disjoint path blocks can be generated from one base seed.
    pub first_stream: u64,
}

impl SeedRecord {
    pub fn new(base_seed: u64) -> Self {
        Self { base_seed, first_stream: 0 }
    }

    pub fn with_offset(base_seed: u64, first_stream: u64) -> Self {
        Self { base_seed, first_stream }
    }
}

/// Returns the generator positioned at `step` of stream `index` in `domain`.
pub fn stream(seed: u64, domain: Domain, index: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) ^ index);
    rng.set_word_pos((step as u128) << STEP_WORD_BITS);
    rng
}

pub fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn addressing_is_random_access() {
        let mut a = stream(7, Domain::Paths, 3, 5);
        let mut b = stream(7, Domain::Paths, 3, 5);
        let xa: [u64; 4] = [a.random(), a.random(), a.random(), a.random()];
        let xb: [u64; 4] = [b.random(), b.random(), b.random(), b.random()];
        assert_eq!(xa, xb);

        let mut c = stream(7, Domain::Paths, 3, 6);
        let mut d = stream(7, Domain::Paths, 4, 5);
        let mut e = stream(7, Domain::Quadrature, 3, 5);
        assert_ne!(xa[0], c.random::<u64>());
        assert_ne!(xa[0], d.random::<u64>());
        assert_ne!(xa[0], e.random::<u64>());
    }
}
