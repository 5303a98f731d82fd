//! Deterministic, splittable randomness.
//!
//! Every stochastic ingredient (Hamiltonian fill, state amplitudes, Monte
//! Carlo checks) draws from its own ChaCha12 stream, keyed by a 64-bit seed
//! plus a `(domain, index)` pair. Distinct streams of the same seed are
//! statistically independent, so adding draws to one consumer never perturbs
//! another, and sweep steps can run in any order (or in parallel) without
//! changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Consumers of randomness, kept far apart in stream space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    /// Off-diagonal Gaussian fill of the Hamiltonian.
    Matrix = 1,
    /// Random amplitudes of initial states.
    State = 2,
    /// Monte Carlo estimators used by self-checks.
    MonteCarlo = 3,
}

/// SplitMix64 step; the standard 64-bit seed expander.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn expand_seed(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut out = [0u8; 32];
    for chunk in out.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    out
}

/// An independent generator for `(seed, domain, index)`.
///
/// `index` distinguishes repetitions within one domain (e.g. seed replicas of
/// an experiment); it must stay below 2^56.
pub fn stream(seed: u64, domain: StreamDomain, index: u64) -> ChaCha12Rng {
    debug_assert!(index < (1 << 56), "stream index out of range");
    let mut rng = ChaCha12Rng::from_seed(expand_seed(seed));
    rng.set_stream(((domain as u64) << 56) | index);
    rng
}

/// Mixes a master seed with an experiment id and a seed index into a fresh
/// 64-bit seed, for deriving per-run `ModelSpec` seeds in batch drivers.
pub fn derive_seed(master: u64, experiment_id: u64, seed_index: u64) -> u64 {
    let mut state = master;
    let a = splitmix64(&mut state);
    let mut state = a ^ experiment_id.wrapping_mul(0xd6e8_feb8_6659_fd93);
    let b = splitmix64(&mut state);
    let mut state = b ^ seed_index.wrapping_mul(0xa076_1d64_78bd_642f);
    splitmix64(&mut state)
}
