//! Named deterministic random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! master seed, a purpose tag, and optional indices (arm, replication, ...).
//! Streams are independent of each other, so adding a new consumer (say,
//! extra instrumentation) never perturbs draws seen by existing ones.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tags for stream derivation. Values are part of the
/// reproducibility contract: renumbering changes every seeded artifact.
pub mod purpose {
    pub const ANCHOR_KERNELS: u64 = 1;
    pub const CHANGE_POINTS: u64 = 2;
    pub const REWARDS: u64 = 3;
    pub const TRAJECTORY: u64 = 4;
    pub const INIT_STATE: u64 = 5;
    pub const RANDOM_POLICY: u64 = 6;
    pub const REPLICATION: u64 = 7;
    pub const DRIFT_PLAN: u64 = 8;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapse `(master, tags...)` into a single well-mixed 64-bit value.
pub fn mix(master: u64, tags: &[u64]) -> u64 {
    let mut state = master ^ 0xa076_1d64_78bd_642f;
    let mut acc = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0xe703_7ed1_a0b4_28db);
        acc ^= splitmix64(&mut state);
    }
    acc
}

/// A ChaCha8 stream for `(master, tags...)`.
pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = mix(master, tags);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn uniform_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Unbiased uniform integer in `[0, n)` via rejection on the top range.
pub fn uniform_usize<R: RngCore>(rng: &mut R, n: usize) -> usize {
    assert!(n > 0, "uniform_usize: empty range");
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// `k` distinct indices from `[0, n)` by partial Fisher-Yates; result sorted.
pub fn sample_distinct<R: RngCore>(rng: &mut R, n: usize, k: usize) -> alloc::vec::Vec<usize> {
    assert!(k <= n);
    let mut pool: alloc::vec::Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + uniform_usize(rng, n - i);
        pool.swap(i, j);
    }
    let mut picked = pool[..k].to_vec();
    picked.sort_unstable();
    picked
}
