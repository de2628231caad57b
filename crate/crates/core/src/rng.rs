//! Seeded randomness shared by every stage that samples.
//!
//! Index draws go through `u64` ranges so results do not depend on the
//! platform's pointer width.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn index_in(rng: &mut impl Rng, low: usize, high_inclusive: usize) -> usize {
    rng.random_range(low as u64..=high_inclusive as u64) as usize
}

/// In-place Fisher–Yates shuffle.
pub fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = index_in(rng, 0, i);
        items.swap(i, j);
    }
}

/// Draws `k` distinct indices from `0..n` uniformly without replacement.
///
/// Partial Fisher–Yates over the virtual array `0..n`: only displaced
/// slots are stored, so memory is O(k) however large `n` is. Returned in
/// draw order. Panics if `k > n`.
pub fn sample_without_replacement(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    assert!(k <= n, "cannot draw {k} distinct indices from {n}");
    let mut displaced: HashMap<usize, usize> = HashMap::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = index_in(rng, i, n - 1);
        let at_j = *displaced.get(&j).unwrap_or(&j);
        let at_i = *displaced.get(&i).unwrap_or(&i);
        displaced.insert(j, at_i);
        out.push(at_j);
    }
    out
}
