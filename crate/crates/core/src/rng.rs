//! Seeded generators.
//!
//! All stochastic procedures draw from ChaCha8 streams so that a given seed
//! produces the same numbers on every platform. Independent work items
//! (bootstrap replicates, slides) get their own stream of the same seed, which
//! makes results independent of how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform index in `0..n` that does not depend on the platform's pointer width.
pub fn index(rng: &mut Rng, n: usize) -> usize {
    use rand::Rng as _;
    debug_assert!(n > 0 && n <= u32::MAX as usize);
    rng.gen_range(0..n as u32) as usize
}

/// Uniform draw in `[0, 1)`.
pub fn unit(rng: &mut Rng) -> f64 {
    use rand::Rng as _;
    rng.gen::<f64>()
}
