//! Deterministic seed splitting.
//!
//! Every random stream in a run is keyed by the master seed plus a purpose tag
//! and indices, so parallel and sequential evaluation draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub mod tag {
    pub const TOPOLOGY: u64 = 0x746f_706f;
    pub const CHANNEL: u64 = 0x6368_616e;
    pub const URP: u64 = 0x7572_7020;
    pub const SCHEDULE: u64 = 0x7363_6864;
    pub const SWEEP: u64 = 0x7377_6570;
    pub const VALIDATE: u64 = 0x7661_6c69;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a purpose tag and a path of indices.
pub fn derive_seed(master: u64, tag: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(tag));
    for &p in path {
        h = splitmix64(h ^ p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    h
}

pub fn stream(master: u64, tag: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tag, path))
}
