//! Seed derivation for independent replication streams.
//!
//! Every replication gets its own sub-seed derived from the master seed and the
//! replication index, so results never depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for replication `index` under `master`.
pub fn sub_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_mul(GOLDEN).wrapping_add(1)))
}

/// Seed for a named purpose (driver, stationary draw, burn-in, ...) inside a replication.
pub fn purpose_seed(seed: u64, purpose: Purpose) -> u64 {
    sub_seed(seed ^ 0xA5A5_5A5A_C3C3_3C3C, purpose as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Driver = 1,
    Stationary = 2,
    BurnIn = 3,
    Perturbation = 4,
    Walk = 5,
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
