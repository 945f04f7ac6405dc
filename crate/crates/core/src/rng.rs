//! Counter-based random streams.
//!
//! A draw is addressed by `(master_seed, purpose, a, b)`. The master seed keys a
//! ChaCha8 generator and the other three fields are packed into its 64-bit stream
//! id (`purpose << 56 | a << 32 | b`, with `a` limited to 24 bits). Each unit of
//! work therefore owns a private stream, and results do not depend on which thread
//! runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; keeps streams of different roles disjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Inputs = 1,
    Teacher = 2,
    Noise = 3,
    Weights = 4,
    MonteCarlo = 5,
    Generic = 6,
}

pub type Rng = ChaCha8Rng;

pub fn stream(master: u64, purpose: Purpose, a: u32, b: u32) -> Rng {
    assert!(a < (1 << 24), "stream index {a} exceeds 24 bits");
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((purpose as u64) << 56) | ((a as u64) << 32) | b as u64);
    rng
}
