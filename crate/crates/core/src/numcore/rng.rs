use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The single RNG type used for every stochastic choice.
pub type Rng = ChaCha8Rng;

/// Independent, reproducible stream `stream` derived from `seed`.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream identifiers, so that e.g. exploration noise never shares draws
/// with network initialization.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const REPLAY: u64 = 4;
    pub const PROBE: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const FEATURES: u64 = 7;
    pub const WARMUP: u64 = 8;
}
