//! Splittable seed derivation.
//!
//! Every random component draws from its own ChaCha8 stream whose seed is
//! `derive_seed(master, stream, index)`: a SplitMix64 finaliser applied to the master
//! seed, the component's stream tag and a counter (iteration, trajectory, game index).
//! Streams are independent of evaluation order, so sweeps may fan out across threads
//! and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_PERMUTATION: u64 = 1;
pub const STREAM_TRAJECTORY: u64 = 2;
pub const STREAM_GAME: u64 = 3;
pub const STREAM_POLICY: u64 = 4;
pub const STREAM_HAA2C: u64 = 5;
pub const STREAM_VERIFY: u64 = 6;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ index.wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn rng_for(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
