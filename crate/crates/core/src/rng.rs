//! Deterministic random streams.
//!
//! All randomness in a run flows from one master seed. Independent streams are
//! derived by hashing `(seed, domain, index)` with splitmix64, so any step of a
//! run can be reproduced from `(seed, step)` alone — this is what makes
//! checkpoint resume bit-exact without serializing generator internals.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a ChaCha stream for `(seed, domain, index)`.
///
/// The domain string keeps unrelated consumers (init, batching, augmentation,
/// lambda draws...) statistically independent even at the same index.
pub fn stream(seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ 0x51ed_270b_7a53_c8e1;
    // Fold the domain in FNV-1a style, then run the mixer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in domain.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    state ^= h;
    let a = splitmix64(&mut state);
    state ^= index.wrapping_mul(0x2545_f491_4f6c_dd1d);
    let b = splitmix64(&mut state);
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    key[24..].copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
