//! Deterministic random streams.
//!
//! Every consumer of randomness draws from a ChaCha8 generator whose seed is
//! derived from a master seed and a small key path through a splitmix64-style
//! mixer. Streams for different keys are independent, so work can be split
//! across threads without changing results.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of keys into a seed.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(mix64(master), |acc, &k| mix64(acc ^ mix64(k)))
}

/// Stable 64-bit key for a string label.
pub fn label_key(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn stream(master: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, keys))
}

/// A master seed from which per-sample, per-view streams are split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeededRng {
    pub seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Stream for one view of one sample.
    pub fn view_stream(&self, sample_index: u64, view_index: u64) -> ViewStream {
        ViewStream {
            seed: derive_seed(self.seed, &[sample_index, view_index]),
        }
    }
}

/// The randomness budget of a single augmented view; each transform draws
/// from its own sub-stream so toggling one transform never shifts the
/// parameters of another.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewStream {
    seed: u64,
}

impl ViewStream {
    pub fn transform(&self, name: &str) -> ChaCha8Rng {
        stream(self.seed, &[label_key(name)])
    }
}

/// Uniform `f64` in `[0, 1)` from the top 53 bits of one draw.
#[inline]
pub fn unit_f64(rng: &mut (impl RngCore + ?Sized)) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn uniform(rng: &mut (impl RngCore + ?Sized), lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_f64(rng)
}

/// Uniform integer in `0..n` by multiply-shift; the bias is below 2⁻³² for
/// the ranges used here.
#[inline]
pub fn index(rng: &mut (impl RngCore + ?Sized), n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

#[inline]
pub fn bernoulli(rng: &mut (impl RngCore + ?Sized), p: f64) -> bool {
    unit_f64(rng) < p
}

/// Fisher–Yates shuffle driven by [`index`].
pub fn shuffle<T>(rng: &mut (impl RngCore + ?Sized), items: &mut [T]) {
    for i in (1..items.len()).rev() {
        items.swap(i, index(rng, i + 1));
    }
}
