//! Lower bounds on the expected number of relocations and the chance-node
//! envelope used to size samples.

use rustc_hash::FxHashMap;

use crate::bay::{stack_min, Configuration, Container, KeySpec, NodeRole, Slot, StateKey, EMPTY_STACK_MIN};
use crate::error::{Error, Result};
use crate::instance::{OrderModel, Precedence, UniformOrder};

/// Which lower bound to evaluate.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// Expected number of blocking containers.
    Blocking,
    /// Blocking bound plus unavoidable bad relocations over the next `k` retrievals.
    LookAhead(u32),
}

impl BoundKind {
    pub fn name(self) -> String {
        match self {
            BoundKind::Blocking => "b".into(),
            BoundKind::LookAhead(k) => format!("b{k}"),
        }
    }
}

impl std::str::FromStr for BoundKind {
    type Err = Error;

    /// `b`, or `b<k>` for the look-ahead bound over `k` retrievals.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b" => Ok(BoundKind::Blocking),
            _ => s
                .strip_prefix('b')
                .and_then(|k| k.parse::<u32>().ok())
                .filter(|&k| k >= 1)
                .map(BoundKind::LookAhead)
                .ok_or_else(|| Error::Unsupported(format!("unknown bound `{s}`"))),
        }
    }
}

impl Default for BoundKind {
    fn default() -> Self {
        BoundKind::LookAhead(1)
    }
}

/// Expected number of blocking containers under uniform within-batch orders.
pub fn blocking_bound(config: &Configuration) -> f64 {
    blocking_bound_with(config, &UniformOrder)
}

/// Blocking bound with order probabilities taken from `model`.
pub fn blocking_bound_with(config: &Configuration, model: &dyn OrderModel) -> f64 {
    let mut total = 0.0;
    for stack in config.stacks() {
        total += stack.len() as f64 - free_weight(stack, model, None);
    }
    total
}

/// Blocking bound with explicit per-container probabilities `q[s][h]` that the
/// container at tier `h` of stack `s` leaves before every equal label below it.
pub fn blocking_bound_nonuniform(config: &Configuration, q: &[Vec<f64>]) -> Result<f64> {
    if q.len() != config.stacks().len() || q.iter().zip(config.stacks()).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::InvalidConfiguration("q must match the configuration's shape".into()));
    }
    if let Some(&bad) = q.iter().flatten().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::BadProbability(bad));
    }
    let mut total = 0.0;
    for (stack, qs) in config.stacks().iter().zip(q) {
        let mut prefix_min = EMPTY_STACK_MIN;
        let mut free = 0.0;
        for (c, &p) in stack.iter().zip(qs) {
            if c.label.0 <= prefix_min {
                prefix_min = c.label.0;
                free += p;
            }
        }
        total += stack.len() as f64 - free;
    }
    Ok(total)
}

/// Per-container probabilities used by [`blocking_bound_nonuniform`], derived from `model`.
pub fn first_of_group_probabilities(config: &Configuration, model: &dyn OrderModel) -> Vec<Vec<f64>> {
    config
        .stacks()
        .iter()
        .map(|stack| {
            (0..stack.len())
                .map(|h| {
                    let c = &stack[h];
                    let below: Vec<Container> =
                        stack[..h].iter().filter(|b| b.label == c.label).copied().collect();
                    model.precedes_all(c.label, c, &below, &[])
                })
                .collect()
        })
        .collect()
}

/// Expected number of containers of `stack` that never block, skipping labels
/// equal to `skip`.
fn free_weight(stack: &[Container], model: &dyn OrderModel, skip: Option<u32>) -> f64 {
    let mut prefix_min = EMPTY_STACK_MIN;
    let mut free = 0.0;
    let mut below: Vec<Container> = Vec::new();
    for (h, c) in stack.iter().enumerate() {
        let l = c.label.0;
        if l <= prefix_min {
            prefix_min = l;
            if skip != Some(l) {
                if model.is_uniform() {
                    let count = stack[..=h].iter().filter(|x| x.label.0 == l).count();
                    free += 1.0 / count as f64;
                } else {
                    below.clear();
                    below.extend(stack[..h].iter().filter(|x| x.label.0 == l));
                    free += model.precedes_all(c.label, c, &below, &[]);
                }
            }
        }
    }
    free
}

/// Number of containers above `u` that are bad to relocate: their label exceeds
/// the minimum of every other stack.
pub fn bad_count(config: &Configuration, u: Slot) -> Result<usize> {
    let Some(min) = config.min_label() else {
        return Err(Error::BadCandidate("the bay is empty".into()));
    };
    match config.container_at(u) {
        Some(c) if c.label == min => {}
        _ => {
            return Err(Error::BadCandidate(format!(
                "slot ({}, {}) does not hold a minimal-label container",
                u.stack, u.tier
            )))
        }
    }
    Ok(bad_above(config, u))
}

fn bad_above(config: &Configuration, u: Slot) -> usize {
    let threshold = config
        .stacks()
        .iter()
        .enumerate()
        .filter(|&(s, _)| s != u.stack)
        .map(|(_, st)| stack_min(st))
        .max()
        .unwrap_or(EMPTY_STACK_MIN);
    if threshold == EMPTY_STACK_MIN {
        return 0;
    }
    config.stack(u.stack)[u.tier + 1..]
        .iter()
        .filter(|c| c.label.0 > threshold)
        .count()
}

/// Expected number of unavoidable bad relocations over the next `k` retrievals.
pub fn unavoidable_bad(config: &Configuration, k: u32) -> f64 {
    unavoidable_bad_with(config, k, &UniformOrder)
}

pub fn unavoidable_bad_with(config: &Configuration, k: u32, model: &dyn OrderModel) -> f64 {
    let mut memo = FxHashMap::default();
    let mut given = Vec::new();
    lookahead_rec(config, k, model, &mut given, &mut memo)
}

fn lookahead_rec(
    config: &Configuration,
    k: u32,
    model: &dyn OrderModel,
    given: &mut Vec<Precedence>,
    memo: &mut FxHashMap<(StateKey, u32), f64>,
) -> f64 {
    if k == 0 || config.is_empty() || config.has_empty_stack() {
        return 0.0;
    }
    let uniform = model.is_uniform();
    let key = if uniform {
        let key = (config.canonical_key(&KeySpec::labels_only()), k);
        if let Some(&v) = memo.get(&key) {
            return v;
        }
        Some(key)
    } else {
        None
    };
    let group = config.min_group();
    let members: Vec<Container> = group
        .iter()
        .map(|&s| *config.container_at(s).expect("group slot"))
        .collect();
    let mut total = 0.0;
    for (i, &u) in group.iter().enumerate() {
        let p = if uniform {
            1.0 / group.len() as f64
        } else {
            let others: Vec<Container> = members
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, c)| *c)
                .collect();
            model.precedes_all(members[i].label, &members[i], &others, given)
        };
        if p == 0.0 {
            continue;
        }
        let mut term = bad_above(config, u) as f64;
        if k > 1 {
            let rest = config.without_from(u);
            let pushed = match members[i].id {
                Some(id) if !uniform => {
                    given.push(Precedence {
                        first: id,
                        over: members
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .filter_map(|(_, c)| c.id)
                            .collect(),
                    });
                    true
                }
                _ => false,
            };
            term += lookahead_rec(&rest, k - 1, model, given, memo);
            if pushed {
                given.pop();
            }
        }
        total += p * term;
    }
    if let Some(key) = key {
        memo.insert(key, total);
    }
    total
}

/// Evaluates the requested lower bound under uniform orders.
pub fn lookahead_bound(config: &Configuration, kind: BoundKind) -> f64 {
    lookahead_bound_with(config, kind, &UniformOrder)
}

pub fn lookahead_bound_with(config: &Configuration, kind: BoundKind, model: &dyn OrderModel) -> f64 {
    let b = blocking_bound_with(config, model);
    match kind {
        BoundKind::Blocking => b,
        BoundKind::LookAhead(k) => b + unavoidable_bad_with(config, k, model),
    }
}

/// Lower and upper bounds on the values of a chance node's offspring, computed
/// in closed form without enumerating orders.
pub fn chance_envelope(config: &Configuration) -> Result<(f64, f64)> {
    chance_envelope_with(config, &UniformOrder)
}

pub fn chance_envelope_with(config: &Configuration, model: &dyn OrderModel) -> Result<(f64, f64)> {
    if config.role() != NodeRole::Chance {
        return Err(Error::NotAChanceNode);
    }
    let k = config.min_label().expect("chance node is not empty").0;
    let mut min_b = 0.0;
    let mut max_b = 0.0;
    for stack in config.stacks() {
        let h = stack.len() as f64;
        let current = stack.iter().filter(|c| c.label.0 == k).count() as f64;
        let free = free_weight(stack, model, Some(k));
        min_b += h - current - free;
        max_b += h - free;
    }
    let g = config.geometry();
    Ok((min_b, envelope_upper(config.len(), g.stacks(), g.tiers(), max_b)))
}

/// Upper bound on the offspring value of a chance node from its size and
/// blocking-bound maximum: `min{((λ−S)(T−1))⁺ + min{S,λ} − 1, (2⌈λ/S⌉ − 1)·max_b}`.
pub fn envelope_upper(lambda: usize, stacks: usize, tiers: usize, max_b: f64) -> f64 {
    let (l, s, t) = (lambda as f64, stacks as f64, tiers as f64);
    let by_size = ((l - s) * (t - 1.0)).max(0.0) + (s.min(l) - 1.0);
    let by_blocking = (2.0 * (l / s).ceil() - 1.0) * max_b;
    by_size.min(by_blocking)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bay::Geometry;

    fn g(t: usize, s: usize) -> Geometry {
        Geometry::new(t, s).unwrap()
    }

    fn lookahead_bay() -> Configuration {
        Configuration::from_labels_relaxed(g(3, 3), &[vec![1], vec![3], vec![1, 3, 4]]).unwrap()
    }

    #[test]
    fn blocking_examples() {
        let empty = Configuration::from_labels(g(3, 3), &[vec![], vec![], vec![]]).unwrap();
        assert_eq!(blocking_bound(&empty), 0.0);
        assert_eq!(blocking_bound(&lookahead_bay()), 2.0);
        let pair = Configuration::from_labels(g(3, 3), &[vec![], vec![5, 5], vec![]]).unwrap();
        assert_eq!(blocking_bound(&pair), 0.5);
    }

    #[test]
    fn nonuniform_blocking() {
        let pair = Configuration::from_labels(g(3, 3), &[vec![], vec![5, 5], vec![]]).unwrap();
        assert_eq!(blocking_bound_nonuniform(&pair, &[vec![], vec![1.0, 1.0], vec![]]).unwrap(), 0.0);
        assert_eq!(blocking_bound_nonuniform(&pair, &[vec![], vec![1.0, 0.5], vec![]]).unwrap(), 0.5);
        assert!(matches!(
            blocking_bound_nonuniform(&pair, &[vec![], vec![1.0, 1.5], vec![]]),
            Err(Error::BadProbability(_))
        ));
        let c = Configuration::from_labels(g(3, 3), &[vec![3], vec![5, 6], vec![1, 4, 2]]).unwrap();
        let ones: Vec<Vec<f64>> = c.stacks().iter().map(|s| vec![1.0; s.len()]).collect();
        assert_eq!(blocking_bound_nonuniform(&c, &ones).unwrap(), blocking_bound(&c));
    }

    #[test]
    fn bad_counts_of_lookahead_bay() {
        let c = lookahead_bay();
        assert_eq!(bad_count(&c, Slot::new(2, 0)).unwrap(), 1);
        assert_eq!(bad_count(&c, Slot::new(0, 0)).unwrap(), 0);
        assert!(bad_count(&c, Slot::new(1, 0)).is_err());
    }

    #[test]
    fn lookahead_bay_values() {
        let c = lookahead_bay();
        assert_eq!(unavoidable_bad(&c, 0), 0.0);
        assert_eq!(unavoidable_bad(&c, 1), 0.5);
        assert_eq!(lookahead_bound(&c, BoundKind::LookAhead(1)), 2.5);
        assert_eq!(lookahead_bound(&c, BoundKind::Blocking), 2.0);
    }

    #[test]
    fn empty_stack_kills_lookahead() {
        let c = Configuration::from_labels(g(4, 3), &[vec![], vec![1, 4, 3, 2], vec![5]]).unwrap();
        for k in 0..4 {
            assert_eq!(unavoidable_bad(&c, k), 0.0);
        }
    }

    #[test]
    fn envelope_single_pair() {
        let c = Configuration::from_labels(g(3, 3), &[vec![], vec![1, 1], vec![]]).unwrap();
        assert_eq!(chance_envelope(&c).unwrap(), (0.0, 1.0));
        let d = Configuration::from_labels(g(3, 3), &[vec![1], vec![], vec![]]).unwrap();
        assert_eq!(chance_envelope(&d), Err(Error::NotAChanceNode));
    }

    #[test]
    fn envelope_arithmetic() {
        assert_eq!(envelope_upper(6, 3, 3, 3.0), 8.0);
    }
}
