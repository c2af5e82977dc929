//! Seeded generator construction and counter-based seed derivation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a path of counters, e.g.
/// `(cell id, trial index)`. Any single trial can be regenerated without
/// replaying the ones before it.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// First `k` entries of a uniformly random permutation of `0..p`.
///
/// Prefixes are nested: for the same generator state, the draw for `k1`
/// is a prefix of the draw for `k2 >= k1`.
pub fn random_prefix<R: Rng + ?Sized>(rng: &mut R, p: usize, k: usize) -> Vec<usize> {
    assert!(k <= p, "prefix length {k} exceeds {p}");
    let mut perm: Vec<usize> = (0..p).collect();
    for i in 0..k {
        let j = rng.random_range(i..p);
        perm.swap(i, j);
    }
    perm.truncate(k);
    perm
}
