//! Exact solver for the fully revealed (deterministic) problem and a naive oracle.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use rustc_hash::FxHashMap;

use crate::bay::{Action, Configuration, KeySpec, Move, NodeRole, StateKey};
use crate::bounds::{lookahead_bound, BoundKind};
use crate::error::{Error, Result};

/// Default container cap for [`brute_force_crp`].
pub const BRUTE_FORCE_CAP: usize = 9;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub expanded: u64,
    pub pruned: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrpSolution {
    pub relocations: usize,
    /// Relocations and retrievals in execution order, indexed by the input's stacks.
    pub moves: Vec<Move>,
    pub stats: SearchStats,
}

struct Node {
    config: Configuration,
    parent: Option<usize>,
    moves: Vec<Move>,
    cost: usize,
}

/// Minimum number of relocations to empty a bay whose retrieval order is fully known.
pub fn solve_exact(config: &Configuration) -> Result<CrpSolution> {
    solve_exact_until(config, None)
}

/// [`solve_exact`] with an optional wall-clock deadline.
pub fn solve_exact_until(config: &Configuration, deadline: Option<Instant>) -> Result<CrpSolution> {
    if !config.all_labels_distinct() {
        return Err(Error::NotFullyRevealed);
    }
    let spec = KeySpec::labels_only();
    let stacks = config.geometry().stacks();
    let mut arena: Vec<Node> = vec![Node {
        config: config.clone(),
        parent: None,
        moves: Vec::new(),
        cost: 0,
    }];
    let mut best: FxHashMap<StateKey, usize> = FxHashMap::default();
    best.insert(config.canonical_key(&spec), 0);
    // (estimate, remaining containers, insertion order, node, finished)
    let mut frontier: BinaryHeap<Reverse<(usize, usize, u64, usize, bool)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut stats = SearchStats::default();
    let push = |frontier: &mut BinaryHeap<_>, seq: &mut u64, node: usize, cfg: &Configuration, cost: usize| {
        let (estimate, done) = if cfg.len() <= stacks {
            (cost + lookahead_bound(cfg, BoundKind::Blocking) as usize, true)
        } else {
            (cost + lookahead_bound(cfg, BoundKind::LookAhead(2)) as usize, false)
        };
        frontier.push(Reverse((estimate, cfg.len(), *seq, node, done)));
        *seq += 1;
    };
    push(&mut frontier, &mut seq, 0, config, 0);
    while let Some(Reverse((estimate, _, _, idx, done))) = frontier.pop() {
        if stats.expanded.is_multiple_of(256) {
            if let Some(d) = deadline {
                if Instant::now() >= d {
                    return Err(Error::Timeout);
                }
            }
        }
        if done {
            let mut moves = Vec::new();
            let mut cursor = Some(idx);
            while let Some(i) = cursor {
                moves.push(std::mem::take(&mut arena[i].moves));
                cursor = arena[i].parent;
            }
            moves.reverse();
            let mut moves: Vec<Move> = moves.into_iter().flatten().collect();
            moves.extend(level_out(&arena[idx].config)?);
            debug_assert_eq!(relocation_count(&moves), estimate);
            return Ok(CrpSolution {
                relocations: relocation_count(&moves),
                moves,
                stats,
            });
        }
        let (cfg, cost) = (arena[idx].config.clone(), arena[idx].cost);
        let key = cfg.canonical_key(&spec);
        if best.get(&key).is_some_and(|&g| g < cost) {
            stats.pruned += 1;
            continue;
        }
        stats.expanded += 1;
        let r = cfg.immediate_cost()?;
        for (action, next) in cfg.raw_successors()? {
            let next_cost = cost + r;
            let next_key = next.canonical_key(&spec);
            if best.get(&next_key).is_some_and(|&g| g <= next_cost) {
                stats.pruned += 1;
                continue;
            }
            best.insert(next_key, next_cost);
            let (_, moves) = cfg.apply_action(&action)?;
            arena.push(Node {
                config: next,
                parent: Some(idx),
                moves,
                cost: next_cost,
            });
            let node = arena.len() - 1;
            push(&mut frontier, &mut seq, node, &arena[node].config, next_cost);
        }
    }
    Err(Error::NoFeasibleDestination { stack: 0 })
}

/// Value-only [`solve_exact_until`]: same search without move bookkeeping.
pub fn exact_relocations_until(config: &Configuration, deadline: Option<Instant>) -> Result<usize> {
    if !config.all_labels_distinct() {
        return Err(Error::NotFullyRevealed);
    }
    let spec = KeySpec::labels_only();
    let stacks = config.geometry().stacks();
    let estimate = |cfg: &Configuration, cost: usize| {
        if cfg.len() <= stacks {
            (cost + lookahead_bound(cfg, BoundKind::Blocking) as usize, true)
        } else {
            (cost + lookahead_bound(cfg, BoundKind::LookAhead(2)) as usize, false)
        }
    };
    let mut nodes: Vec<(Configuration, usize)> = vec![(config.clone(), 0)];
    let mut best: FxHashMap<StateKey, usize> = FxHashMap::default();
    best.insert(config.canonical_key(&spec), 0);
    let mut frontier = BinaryHeap::new();
    let (e, done) = estimate(config, 0);
    frontier.push(Reverse((e, config.len(), 0usize, done)));
    let mut expanded = 0u64;
    while let Some(Reverse((e, _, idx, done))) = frontier.pop() {
        if done {
            return Ok(e);
        }
        expanded += 1;
        if expanded.is_multiple_of(256) && deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(Error::Timeout);
        }
        let (cfg, cost) = &nodes[idx];
        let cost = *cost;
        if best.get(&cfg.canonical_key(&spec)).is_some_and(|&g| g < cost) {
            continue;
        }
        let next_cost = cost + cfg.immediate_cost()?;
        for (_, next) in cfg.raw_successors()? {
            let key = next.canonical_key(&spec);
            if best.get(&key).is_some_and(|&g| g <= next_cost) {
                continue;
            }
            best.insert(key, next_cost);
            let (e, done) = estimate(&next, next_cost);
            frontier.push(Reverse((e, next.len(), nodes.len(), done)));
            nodes.push((next, next_cost));
        }
    }
    Err(Error::NoFeasibleDestination { stack: 0 })
}

fn relocation_count(moves: &[Move]) -> usize {
    moves.iter().filter(|m| m.to.is_some()).count()
}

/// Retrieves everything by sending each blocker to the lowest stack (leftmost on ties).
/// Optimal once no more containers than stacks remain.
fn level_out(config: &Configuration) -> Result<Vec<Move>> {
    let mut cfg = config.clone();
    let mut moves = Vec::new();
    while cfg.role() != NodeRole::Terminal {
        let target = cfg.target()?;
        let r = cfg.height(target.stack) - target.tier - 1;
        let mut heights: Vec<usize> = (0..cfg.geometry().stacks()).map(|s| cfg.height(s)).collect();
        let mut destinations = Vec::with_capacity(r);
        for _ in 0..r {
            let d = (0..heights.len())
                .filter(|&s| s != target.stack && heights[s] < cfg.geometry().tiers())
                .min_by_key(|&s| (heights[s], s))
                .ok_or(Error::NoFeasibleDestination { stack: target.stack })?;
            heights[d] += 1;
            destinations.push(d);
        }
        let (next, step) = cfg.apply_action(&Action {
            source: target.stack,
            destinations,
        })?;
        moves.extend(step);
        cfg = next;
    }
    Ok(moves)
}

/// Exhaustive recursion over all actions with memoization; no bounds.
pub fn brute_force_crp(config: &Configuration) -> Result<usize> {
    brute_force_crp_capped(config, BRUTE_FORCE_CAP)
}

pub fn brute_force_crp_capped(config: &Configuration, cap: usize) -> Result<usize> {
    if !config.all_labels_distinct() {
        return Err(Error::NotFullyRevealed);
    }
    if config.len() > cap {
        return Err(Error::BudgetExceeded(format!(
            "{} containers exceed the cap of {cap}",
            config.len()
        )));
    }
    let mut memo = FxHashMap::default();
    crp_rec(config, &mut memo)
}

fn crp_rec(config: &Configuration, memo: &mut FxHashMap<StateKey, usize>) -> Result<usize> {
    if config.is_empty() {
        return Ok(0);
    }
    let key = config.canonical_key(&KeySpec::labels_only());
    if let Some(&v) = memo.get(&key) {
        return Ok(v);
    }
    let r = config.immediate_cost()?;
    let mut best = usize::MAX;
    for (_, next) in config.enumerate_actions()? {
        best = best.min(r + crp_rec(&next, memo)?);
    }
    memo.insert(key, best);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bay::Geometry;

    fn cfg(t: usize, s: usize, stacks: &[Vec<u32>]) -> Configuration {
        Configuration::from_labels(Geometry::new(t, s).unwrap(), stacks).unwrap()
    }

    fn replay(config: &Configuration, moves: &[Move]) -> usize {
        let mut stacks: Vec<Vec<u32>> = config
            .stacks()
            .iter()
            .map(|s| s.iter().map(|c| c.label.0).collect())
            .collect();
        let mut next = config.min_label().map_or(0, |l| l.0);
        let mut relocations = 0;
        for m in moves {
            let top = stacks[m.from].pop().expect("non-empty source");
            assert_eq!(top, m.container.label.0);
            match m.to {
                Some(d) => {
                    assert_ne!(d, m.from);
                    stacks[d].push(top);
                    assert!(stacks[d].len() <= config.geometry().tiers());
                    relocations += 1;
                }
                None => {
                    assert_eq!(top, next);
                    next = stacks.iter().flatten().copied().min().unwrap_or(0);
                }
            }
        }
        assert!(stacks.iter().all(Vec::is_empty));
        relocations
    }

    #[test]
    fn three_stack_optimum() {
        let c = cfg(3, 3, &[vec![3], vec![5, 6], vec![1, 4, 2]]);
        let sol = solve_exact(&c).unwrap();
        assert_eq!(sol.relocations, 3);
        assert_eq!(replay(&c, &sol.moves), 3);
        assert_eq!(brute_force_crp(&c).unwrap(), 3);
        assert_eq!(exact_relocations_until(&c, None).unwrap(), 3);
    }

    #[test]
    fn value_only_search_agrees() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 1..=8u32 {
            for _ in 0..20 {
                let mut labels: Vec<u32> = (1..=n).collect();
                labels.shuffle(&mut rng);
                let mut stacks = vec![Vec::new(); 3];
                for (i, l) in labels.into_iter().enumerate() {
                    stacks[i % 3].push(l);
                }
                let c = cfg(4, 3, &stacks);
                let v = exact_relocations_until(&c, None).unwrap();
                assert_eq!(v, solve_exact(&c).unwrap().relocations);
                assert_eq!(v, brute_force_crp(&c).unwrap());
            }
        }
    }

    #[test]
    fn trivial_cases() {
        let c = cfg(3, 3, &[vec![2, 1], vec![], vec![]]);
        assert_eq!(brute_force_crp(&c).unwrap(), 0);
        assert_eq!(solve_exact(&c).unwrap().relocations, 0);
        let e = cfg(3, 3, &[vec![], vec![], vec![]]);
        assert_eq!(brute_force_crp(&e).unwrap(), 0);
        assert_eq!(solve_exact(&e).unwrap().relocations, 0);
    }

    #[test]
    fn rejects_hidden_orders() {
        let c = cfg(3, 3, &[vec![1], vec![1], vec![]]);
        assert_eq!(solve_exact(&c).unwrap_err(), Error::NotFullyRevealed);
        assert_eq!(brute_force_crp(&c).unwrap_err(), Error::NotFullyRevealed);
    }

    #[test]
    fn cap_enforced() {
        let c = cfg(4, 3, &[vec![1, 2, 3], vec![4, 5, 6], vec![7, 8]]);
        assert!(matches!(brute_force_crp_capped(&c, 7), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn moves_replay_on_larger_case() {
        let c = cfg(4, 4, &[vec![9, 2, 7], vec![1, 8, 4, 3], vec![6, 10], vec![5, 11, 12]]);
        let sol = solve_exact(&c).unwrap();
        assert_eq!(replay(&c, &sol.moves), sol.relocations);
    }
}
