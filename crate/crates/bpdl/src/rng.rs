//! Seeded RNG streams for reproducible replicate fleets.
//!
//! Every replicate draws from its own ChaCha8 stream derived from
//! `(master seed, replicate id)`, so results are independent of the
//! thread count and of the order in which replicates finish.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream used everywhere a simulation or estimator needs randomness.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the RNG stream for one replicate of a run.
///
/// The 256-bit ChaCha key is filled from a splitmix64 walk over the
/// (master, replicate) pair, so nearby ids give unrelated streams.
pub fn replicate_rng(master_seed: u64, replicate_id: u64) -> SimRng {
    let mut seed = [0u8; 32];
    let mut state = splitmix64(master_seed) ^ splitmix64(replicate_id.wrapping_mul(0xa076_1d64_78bd_642f));
    for chunk in seed.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    SimRng::from_seed(seed)
}

/// Uniform draw in the open interval (0, 1).
pub fn open01(rng: &mut impl Rng) -> f64 {
    // 53 mantissa bits, offset by half an ulp so 0 is excluded.
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Exponential variate with the given rate, via inverse CDF on (0, 1).
pub fn exp_variate(rng: &mut impl Rng, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    -open01(rng).ln() / rate
}
