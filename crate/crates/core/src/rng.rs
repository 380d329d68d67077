//! Seed derivation.
//!
//! Every random decision in the pipeline draws from a generator derived from
//! the run seed plus a small tuple of stream coordinates (epoch, sentence,
//! step). Work can then be split across threads or resumed mid-run without
//! changing a single draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named streams so different consumers never share a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Build = 3,
    Step = 4,
    Split = 5,
    Eval = 6,
    Synthetic = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: Stream, coords: &[u64]) -> Rng {
    let mut h = splitmix(seed ^ splitmix(stream as u64));
    for &c in coords {
        h = splitmix(h ^ c);
    }
    ChaCha8Rng::seed_from_u64(h)
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
