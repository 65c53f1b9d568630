//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream addressed by
//! `(seed, index)`, so work split across threads or resumed from a checkpoint
//! sees the same numbers as a serial run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Independent stream `index` of the generator family keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stream keyed by a two-level index, e.g. (training step, query slot).
pub fn substream(seed: u64, major: u64, minor: u64) -> SimRng {
    stream(seed ^ major.wrapping_mul(0x9E37_79B9_7F4A_7C15), minor)
}

/// `n` i.i.d. standard normal draws.
pub fn gaussian(rng: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}
