//! Stable seed derivation.
//!
//! Every random stream in the toolkit is keyed by a 64-bit value derived here,
//! so results do not depend on worker count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the parts (each length-prefixed), finished with splitmix64.
pub fn derive_seed(global_seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    eat(&global_seed.to_le_bytes());
    for p in parts {
        eat(&(p.len() as u64).to_le_bytes());
        eat(p);
    }
    splitmix64(h)
}

/// Seed for one dataset record.
pub fn record_seed(global_seed: u64, scene_id: &str, record_index: u64) -> u64 {
    derive_seed(
        global_seed,
        &[b"record", scene_id.as_bytes(), &record_index.to_le_bytes()],
    )
}

/// Seed for a scene-level stream (base image, view synthesis).
pub fn scene_seed(global_seed: u64, scene_id: &str) -> u64 {
    derive_seed(global_seed, &[b"scene", scene_id.as_bytes()])
}

/// Seed for one optimisation step.
pub fn step_seed(global_seed: u64, step: u64) -> u64 {
    derive_seed(global_seed, &[b"step", &step.to_le_bytes()])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
