use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for item `index` of a named `domain` under `seed`.
/// Items never share state, so they can be produced in any order.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

pub mod domain {
    pub const EPISODE: u64 = 0;
    pub const PREDICTOR: u64 = 1;
    pub const TRAINING: u64 = 2;
}
