//! Deterministic random substreams.
//!
//! Every replication draws from its own ChaCha stream keyed by the user seed
//! and a domain tag, so results do not depend on how replications are spread
//! over worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Residual / smoothed bootstrap replications of the CB statistic.
pub const DOMAIN_CB: u64 = 0x4342_5f42_4f4f_5431;
/// Bootstrap replications calibrating the derivative band.
pub const DOMAIN_BAND: u64 = 0x4241_4e44_5f42_5431;
/// Synthetic data generation in the simulation harness.
pub const DOMAIN_DATA: u64 = 0x4441_5441_5f47_454e;
/// Seeds handed to per-simulation bootstraps.
pub const DOMAIN_SIM_BOOT: u64 = 0x5349_4d5f_424f_4f54;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a domain tag into a new 64-bit seed.
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ domain)
}

/// Independent stream `index` of the generator family `(seed, domain)`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain));
    rng.set_stream(index);
    rng
}
