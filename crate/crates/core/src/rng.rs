//! Seed derivation and the deterministic random stream used everywhere.
//!
//! Every stochastic component gets its own stream derived from a parent seed
//! and a stream tag, so results never depend on evaluation order or on how
//! many workers share the load.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator used by the whole crate.
pub type SimRng = ChaCha8Rng;

/// Named sub-streams of an episode seed.
pub mod stream {
    pub const VISUAL: u64 = 0x5649_5355;
    pub const DYN_BIND: u64 = 0x4459_4e42;
    pub const DYN_STEP: u64 = 0x4459_4e53;
    pub const AGENT: u64 = 0x4147_454e;
    pub const CALIBRATION: u64 = 0x4341_4c49;
    pub const SPECKLE: u64 = 0x5350_4543;
    pub const SPATTER: u64 = 0x5350_4154;
    pub const CRACK: u64 = 0x4352_4143;
    pub const BLUR: u64 = 0x424c_5552;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a tag into an independent child seed.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(base) ^ tag.rotate_left(17))
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Stable 64-bit FNV-1a hash for strings (scene ids, labels).
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
