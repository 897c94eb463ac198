//! Reproducible random streams.
//!
//! Every consumer of randomness asks for a stream keyed by `(seed, purpose,
//! index)`. The key is mixed with SplitMix64 into a 64-bit ChaCha8 seed, so a
//! stream depends only on its key: bootstrap replicate 17 or grid cell 311
//! draws the same numbers no matter which thread evaluates it or in which
//! order. ChaCha8 output is specified bit-for-bit and identical on every
//! platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::stats::normal_quantile;

pub type Stream = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// FNV-1a, used only to turn purpose labels into integers.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from a parent seed, a purpose label and an index.
pub fn derive_seed(seed: u64, purpose: &str, index: u64) -> u64 {
    let a = splitmix64(seed ^ label_hash(purpose));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn stream(seed: u64, purpose: &str, index: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose, index))
}

/// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let bits = rng.next_u64() >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw by inverse-CDF transform of one uniform.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    normal_quantile(open_unit(rng))
}

/// Uniform index in `0..n`, sampled through `u64` so the result does not
/// depend on the platform's pointer width.
pub fn index<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    rng.gen_range(0..n as u64) as usize
}

/// Fisher-Yates shuffle driven by [`index`].
pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}
