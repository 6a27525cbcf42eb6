#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scrp::bay::Geometry;
use scrp::instance::Instance;
use scrp::io::random_instance;

/// Seeded small instances: at most 3 tiers and 3 stacks, 1 to 6 containers,
/// batches of 1 to 3.
pub fn small_corpus(count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let tiers = rng.random_range(2..=3);
            let stacks = rng.random_range(2..=3);
            let g = Geometry::new(tiers, stacks).unwrap();
            let c = rng.random_range(1..=g.capacity().min(6));
            random_instance(g, &batch_sizes(&mut rng, c, 3), &mut rng).unwrap()
        })
        .collect()
}

/// Batch sizes uniform in `1..=max`, the last truncated to reach `total`.
pub fn batch_sizes<R: Rng>(rng: &mut R, total: usize, max: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut left = total;
    while left > 0 {
        let s = rng.random_range(1..=max).min(left);
        sizes.push(s);
        left -= s;
    }
    sizes
}
