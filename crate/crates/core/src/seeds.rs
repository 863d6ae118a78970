//! Derivation of independent random streams from one master seed.
//!
//! Stream `i` of master seed `m` is a ChaCha8 generator seeded with
//! `splitmix64(m ^ splitmix64(i + 1))`. The indices below are part of the
//! determinism contract: changing one changes every recorded run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Random MDP construction.
    Environment = 0,
    /// Initial policy, reward and critic parameters.
    Init = 1,
    /// Rollouts, replay tuples and visitation draws of the plain chain.
    ChainPlain = 2,
    /// The same for the penalized chain, including its preference batches.
    ChainPenalized = 3,
    /// Labels of the outer-step preference batch.
    Labeler = 4,
    /// Critic fits of the plain chain.
    CriticPlain = 5,
    /// Critic fits of the penalized chain.
    CriticPenalized = 6,
    /// Held-out evaluation pairs.
    Heldout = 7,
    /// Outer-step trajectories.
    Outer = 8,
}

/// One round of the splitmix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    splitmix64(master ^ splitmix64(stream as u64 + 1))
}

pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
