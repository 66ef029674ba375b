//! Deterministic seeding.
//!
//! Every random stream is derived from an experiment seed plus a replica
//! index, so replicas are reproducible and independent of execution order or
//! worker count. ChaCha is counter based: the replica index selects the
//! stream, the seed selects the key.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as SimRng;

/// Generator for replica `index` of the experiment seeded with `seed`.
pub fn replica_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive an independent child seed from `seed` and a tag.
///
/// SplitMix64 finalizer over the combined words; used to give sub-experiments
/// (pilot runs, per-cell lazy sampling, per-beta ladders) their own key.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fresh generator drawn from a parent generator, for call sites that hand a
/// single `&mut rng` to code that fans out over replicas.
pub fn fork(rng: &mut impl rand::Rng) -> u64 {
    rng.random()
}
