//! Deterministic random number generation.
//!
//! Every random draw in the crate flows through an explicitly seeded
//! ChaCha8 generator. Independent substreams (per class, per instance)
//! come from the generator's stream parameter, so regenerating any part
//! of a dataset never depends on draw order elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The concrete generator used everywhere determinism matters.
pub type Prng = ChaCha8Rng;

/// Root generator for a seed.
pub fn seeded(seed: u64) -> Prng {
    Prng::seed_from_u64(seed)
}

/// Independent substream `stream` of the generator for `seed`.
pub fn substream(seed: u64, stream: u64) -> Prng {
    let mut rng = Prng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a salt into a seed (splitmix64 finalizer). Lets two datasets share
/// class-level streams while keeping instance-level streams disjoint.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Serializable snapshot of a [`Prng`], used by checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Prng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Prng {
        let mut rng = Prng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
