mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scrp::bay::{Configuration, Geometry, KeySpec, NodeRole};
use scrp::bounds::{chance_envelope, lookahead_bound, BoundKind};
use scrp::exact::solve_exact;
use scrp::instance::{sample_order, validate_instance, Instance, Model, OrderDistribution};
use scrp::io::{generate, merge_batches, parse_instance, random_instance, write_instance, BatchLaw, GenRecipe};
use scrp::solver::chance_offspring;

const B: BoundKind = BoundKind::Blocking;
const B1: BoundKind = BoundKind::LookAhead(1);
const B2: BoundKind = BoundKind::LookAhead(2);

/// A seeded instance on a bay of at most 4 tiers and 4 stacks.
fn instance() -> impl Strategy<Value = Instance> {
    (2..=4usize, 2..=4usize, any::<u64>()).prop_map(|(t, s, seed)| {
        let g = Geometry::new(t, s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = 1 + (seed as usize) % g.capacity().min(9);
        let sizes = common::batch_sizes(&mut rng, c, 3);
        random_instance(g, &sizes, &mut rng).unwrap()
    })
}

/// A first batch of `m` followed by singletons, so revealing the first batch
/// leaves a fully known order.
fn first_batch_instance() -> impl Strategy<Value = Instance> {
    (2..=3usize, 2..=4usize, 2..=4usize, any::<u64>()).prop_filter_map("fits", |(t, s, m, seed)| {
        let g = Geometry::new(t, s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = m + (seed as usize) % 4;
        if c > g.capacity() {
            return None;
        }
        let mut sizes = vec![m];
        sizes.resize(c - m + 1, 1);
        Some(random_instance(g, &sizes, &mut rng).unwrap())
    })
}

fn label_stacks(config: &Configuration) -> Vec<Vec<u32>> {
    config
        .stacks()
        .iter()
        .map(|s| s.iter().map(|c| c.label.0).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonicalization_is_idempotent(inst in instance()) {
        let once = inst.initial.canonicalize();
        prop_assert!(once.is_canonical());
        prop_assert_eq!(once.canonicalize(), once.clone());
        prop_assert_eq!(once.len(), inst.initial.len());
    }

    #[test]
    fn keys_ignore_stack_order(inst in instance(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut stacks = label_stacks(&inst.initial);
        stacks.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let permuted = Configuration::from_labels(inst.geometry, &stacks).unwrap();
        let spec = KeySpec::labels_only();
        prop_assert_eq!(permuted.canonical_key(&spec), inst.initial.canonical_key(&spec));
        for k in [B, B1, B2] {
            prop_assert_eq!(lookahead_bound(&permuted, k), lookahead_bound(&inst.initial, k));
        }
    }

    #[test]
    fn bounds_are_ordered(inst in instance()) {
        let c = &inst.initial;
        let (b, b1, b2) = (lookahead_bound(c, B), lookahead_bound(c, B1), lookahead_bound(c, B2));
        prop_assert!(b >= 0.0);
        prop_assert!(b <= b1 + 1e-12, "b={} b1={}", b, b1);
        prop_assert!(b1 <= b2 + 1e-12, "b1={} b2={}", b1, b2);
    }

    #[test]
    fn bounds_below_deterministic_optimum(inst in first_batch_instance(), seed in any::<u64>()) {
        let order = sample_order(&inst, &mut ChaCha8Rng::seed_from_u64(seed));
        let slots: Vec<_> = order[..inst.batch_sizes[0]]
            .iter()
            .map(|&id| inst.initial.slot_of(id).unwrap())
            .collect();
        let revealed = inst.initial.reveal_batch(&slots).unwrap();
        let opt = solve_exact(&revealed).unwrap().relocations as f64;
        prop_assert!(lookahead_bound(&revealed, B2) <= opt + 1e-12);
    }

    #[test]
    fn write_then_parse_round_trips(inst in instance()) {
        let text = write_instance(&inst);
        prop_assert_eq!(parse_instance(&text).unwrap(), inst);
    }

    #[test]
    fn envelope_contains_offspring_values(inst in first_batch_instance()) {
        prop_assume!(inst.initial.role() == NodeRole::Chance);
        let (lo, hi) = chance_envelope(&inst.initial).unwrap();
        for (child, p) in chance_offspring(&inst.initial, Model::Batch, None).unwrap() {
            prop_assert!(p > 0.0);
            let v = solve_exact(&child).unwrap().relocations as f64;
            prop_assert!(lo - 1e-12 <= v && v <= hi + 1e-12, "{} not in [{}, {}]", v, lo, hi);
        }
    }

    #[test]
    fn offspring_probabilities_sum_to_one(inst in instance()) {
        prop_assume!(inst.initial.role() == NodeRole::Chance);
        for model in [Model::Batch, Model::Online] {
            let sum: f64 = chance_offspring(&inst.initial, model, None).unwrap().iter().map(|o| o.1).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn merging_keeps_containers(inst in instance(), gamma in 1..=4usize) {
        let merged = merge_batches(&inst, gamma);
        prop_assert!(validate_instance(&merged).is_ok());
        prop_assert_eq!(merged.container_count(), inst.container_count());
        prop_assert_eq!(merged.batch_count(), inst.batch_count().div_ceil(gamma));
        let heights = |i: &Instance| (0..i.geometry.stacks()).map(|s| i.initial.height(s)).collect::<Vec<_>>();
        prop_assert_eq!(heights(&merged), heights(&inst));
        let mut sizes = merged.batch_sizes.iter();
        for chunk in inst.batch_sizes.chunks(gamma) {
            prop_assert_eq!(*sizes.next().unwrap(), chunk.iter().sum::<usize>());
        }
    }

    #[test]
    fn generated_instances_fill_the_bay(
        t in 2..=5usize,
        s in 2..=5usize,
        fill in 0.1..0.9f64,
        seed in any::<u64>(),
    ) {
        let recipe = GenRecipe { tiers: t, stacks: s, fill, batch_law: BatchLaw::default(), count: 3, seed };
        prop_assume!(recipe.containers() > 0 && recipe.containers() <= Geometry::new(t, s).unwrap().capacity());
        for inst in generate(&recipe).unwrap() {
            prop_assert!(validate_instance(&inst).is_ok());
            prop_assert_eq!(inst.container_count(), recipe.containers());
            prop_assert!(inst.batch_sizes.iter().all(|&m| (1..=3).contains(&m)));
            prop_assert!((0..s).all(|k| inst.initial.height(k) <= t));
        }
        prop_assert_eq!(generate(&recipe).unwrap(), generate(&recipe).unwrap());
    }
}

/// Pearson statistic of observed counts against equal expected counts.
fn chi_square(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum()
}

#[test]
fn uniform_orders_are_uniform() {
    let g = Geometry::new(3, 3).unwrap();
    let inst = Instance::uniform(g, vec![3, 1], &[vec![1, 2], vec![1], vec![1]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut counts = std::collections::HashMap::new();
    let draws = 12_000;
    for _ in 0..draws {
        let order = sample_order(&inst, &mut rng);
        assert_eq!(order.len(), 4);
        assert_eq!(order[3], inst.members(1)[0]);
        *counts.entry(order[..3].to_vec()).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 6);
    // 5 degrees of freedom; 20.5 is the 0.999 quantile.
    let stat = chi_square(&counts.values().copied().collect::<Vec<_>>());
    assert!(stat < 20.5, "chi-square {stat}");
}

#[test]
fn explicit_distributions_are_followed() {
    let g = Geometry::new(3, 3).unwrap();
    let probs = [0.7, 0.2, 0.1];
    let ranks = [vec![0, 1, 2], vec![2, 1, 0], vec![1, 0, 2]];
    let dist = OrderDistribution {
        orders: ranks.iter().cloned().zip(probs).collect(),
    };
    let inst = Instance::new(g, vec![3], &[vec![1, 1], vec![1], vec![]], vec![Some(dist)]).unwrap();
    let members = inst.members(0);
    let expected: Vec<Vec<_>> = ranks
        .iter()
        .map(|r| {
            let mut by_rank: Vec<_> = r.iter().zip(&members).collect();
            by_rank.sort();
            by_rank.into_iter().map(|(_, &id)| id).collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 20_000;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        let order = sample_order(&inst, &mut rng);
        let k = expected.iter().position(|e| *e == order).expect("order outside the support");
        counts[k] += 1;
    }
    for (c, p) in counts.iter().zip(probs) {
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        let freq = *c as f64 / draws as f64;
        assert!((freq - p).abs() < 5.0 * se, "frequency {freq} against {p}");
    }
}
