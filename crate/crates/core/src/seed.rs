use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; the standard finalizer constants.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Child seed for (master, stream, counter). Counter-based so parallel
/// workers never share RNG state and results do not depend on scheduling.
pub fn derive_seed(master: u64, stream: u64, counter: u64) -> u64 {
    mix(mix(master ^ mix(stream)) ^ counter)
}

/// RNG for one replicate. ChaCha8 keyed by the derived seed.
pub fn rng_for(master: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, counter))
}

/// Stream labels keep seed derivations for unrelated purposes disjoint.
pub mod streams {
    pub const GENERATE: u64 = 1;
    pub const PERMUTE: u64 = 2;
    pub const NULL_CALIBRATION: u64 = 3;
    pub const BASELINE: u64 = 4;
}
