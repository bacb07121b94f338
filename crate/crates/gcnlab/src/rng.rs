//! Seeded random number generation.
//!
//! Every stochastic component in the crate draws from a [`Rng`] created via
//! [`seeded`]. ChaCha8 is used because its output stream is identical on every
//! platform and word size, which is what makes run artifacts byte-reproducible.

use rand_chacha::ChaCha8Rng;

pub use rand::Rng as RandRng;
pub use rand::SeedableRng;

/// The concrete generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Create the crate-standard generator from a 64-bit seed.
pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
