//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha12 stream created here, so
//! runs are reproducible bit-for-bit across platforms. Distinct uses (param
//! init, per-episode demands, evaluation, per-node sampling) get distinct
//! streams derived from one run seed, which keeps draws independent of each
//! other's consumption order.

use crate::scalar::Scalar;
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// The stream type used throughout the library.
pub type Stream = ChaCha12Rng;

/// Creates the stream for a bare seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derives a child seed from `(seed, tags...)` with splitmix64 steps.
///
/// Tag tuples are mixed in order, so `derive(s, &[a, b])` and
/// `derive(s, &[b, a])` differ.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t.wrapping_add(0x632b_e593_86d1_931e)));
    }
    state
}

/// Stream for a derived seed.
pub fn substream(seed: u64, tags: &[u64]) -> Stream {
    stream(derive(seed, tags))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in the open interval (0, 1), 53-bit resolution.
pub fn unit_open<T: Scalar>(rng: &mut impl RngCore) -> T {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    T::from_f64_exact(u)
}

/// Uniform draw in the half-open interval [0, 1).
pub fn unit_half_open<T: Scalar>(rng: &mut impl RngCore) -> T {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    T::from_f64_exact(u)
}

/// Uniform draw in [-a, a).
pub fn uniform_symmetric<T: Scalar>(rng: &mut impl RngCore, a: T) -> T {
    let u: T = unit_half_open(rng);
    (u + u - T::one()) * a
}

/// Uniform index in [0, bound), bias-free via rejection on the raw words.
pub fn uniform_index(rng: &mut impl RngCore, bound: usize) -> usize {
    assert!(bound >= 1, "empty index range");
    let bound = bound as u64;
    // reject the first (2^64 mod bound) words so every residue is equally
    // likely; for small bounds almost nothing is rejected
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let x = rng.next_u64();
        if x >= threshold {
            return (x % bound) as usize;
        }
    }
}

/// Standard normal draw via the Box-Muller transform.
///
/// Consumes exactly two `u64`s per call; both open-interval uniforms keep
/// the log and the angle finite.
pub fn standard_normal<T: Scalar>(rng: &mut impl RngCore) -> T {
    let u1: T = unit_open(rng);
    let u2: T = unit_open(rng);
    let two = T::from_f64_exact(2.0);
    let tau = T::from_f64_exact(std::f64::consts::TAU);
    (-two * u1.ln()).sqrt() * (tau * u2).cos()
}
