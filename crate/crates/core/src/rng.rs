//! Counter-based seed derivation.
//!
//! Every random draw in a run comes from a ChaCha8 stream keyed by
//! `(master_seed, slot_index, stream)`. Any slot can therefore be replayed on
//! its own, and results do not depend on how slots are spread over workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams consumed within one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Channel = 1,
    CaitError = 2,
    Aloha = 3,
}

// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Seed for one `(master, slot, stream)` triple.
pub fn derive_seed(master: u64, slot: u64, stream: Stream) -> u64 {
    let a = mix(master.wrapping_add(GOLDEN));
    let b = mix(a ^ slot.wrapping_mul(GOLDEN).wrapping_add(0x632b_e59b_d9b4_e019));
    mix(b ^ (stream as u64).wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn slot_rng(master: u64, slot: u64, stream: Stream) -> ChaCha8Rng {
    rng_from_seed(derive_seed(master, slot, stream))
}
