//! Seed derivation and seeded RNG construction.
//!
//! Every stochastic stage takes an explicit u64 seed. Sub-stages derive
//! their own seeds from the parent seed plus a tag, so adding a stage never
//! shifts the random stream of an unrelated one.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step.
fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a stage tag.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut state = base ^ 0x51ab_de37_9cc1_e2fa;
    let mut out = splitmix(&mut state);
    for b in tag.as_bytes() {
        state ^= u64::from(*b).wrapping_mul(0x100_0000_01b3);
        out ^= splitmix(&mut state);
    }
    out
}

/// Derive a child seed with a numeric discriminator (round/trial index).
pub fn derive_seed_n(base: u64, tag: &str, n: u64) -> u64 {
    derive_seed(derive_seed(base, tag) ^ n.wrapping_mul(0x9e37_79b9_7f4a_7c15), tag)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
