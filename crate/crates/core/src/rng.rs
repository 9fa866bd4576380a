//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every random quantity in an experiment is drawn from its own ChaCha8
//! stream keyed by `(seed, label, index)`, so replicates can run on any thread
//! in any order without changing their draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purposes of independent streams within one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Truth = 1,
    Data = 2,
    Splits = 3,
    Mask = 4,
    Noise = 5,
    Test = 6,
    Pilot = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a sequence of labels.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

/// A ChaCha8 generator for `(seed, stream, index)`.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream as u64, index]))
}
