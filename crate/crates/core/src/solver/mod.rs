//! Expected-relocation solvers: exact pruned search, its sampled variant, and a
//! brute-force oracle.

mod oracle;
mod search;

use std::fmt;

use itertools::Itertools;
use rustc_hash::FxHashMap;

use crate::bay::{Configuration, KeySpec, NodeRole, Slot, StateKey};
use crate::error::{Error, Result};
use crate::instance::{Instance, Model, OrderDistribution};

pub use oracle::{brute_force_expectimax, brute_force_expectimax_with, OracleBudget};
pub use search::{pbfs, pbfs_with, pbfsa, pbfsa_with, sample_count, DeltaRule, SearchOptions, DEFAULT_TIME_LIMIT};

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Status {
    /// Proven optimal expected value.
    Optimal,
    /// Exact expected value of a fixed policy.
    Exact,
    /// Sampled estimate with mean absolute error at most the given budget.
    Approximate(f64),
    /// Monte Carlo mean of a simulated policy.
    Sampled,
    /// Time limit hit; the value is a lower bound only.
    Timeout,
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Exact => "exact",
            Status::Approximate(_) => "approximate",
            Status::Sampled => "sampled",
            Status::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    /// Nodes whose value was computed.
    pub expanded: u64,
    /// Decision offspring skipped because their bound could not beat the incumbent.
    pub pruned: u64,
    /// Raw chance offspring merged into an equivalent sibling.
    pub deduped: u64,
    pub cache_hits: u64,
    /// Orders drawn at sampled chance nodes.
    pub samples: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Value {
    pub expected_relocations: f64,
    pub status: Status,
    pub stats: SolveStats,
}

/// Weighted offspring of a chance node before normalization.
pub(crate) struct RawOffspring {
    pub configs: Vec<Configuration>,
    /// Unnormalized weights parallel to `configs`.
    pub weights: Vec<f64>,
    pub total: f64,
}

/// The order distribution governing the minimal-label group of `config`, if any.
pub(crate) fn group_distribution<'a>(
    config: &Configuration,
    instance: Option<&'a Instance>,
) -> Option<(&'a OrderDistribution, Vec<Slot>)> {
    let instance = instance?;
    let k = config.min_label()?;
    let w = instance.batch_containing(k)?;
    if instance.batch_label(w) != k {
        return None;
    }
    let dist = instance.distributions.get(w)?.as_ref()?;
    let slots = instance
        .members(w)
        .into_iter()
        .map(|id| config.slot_of(id))
        .collect::<Option<Vec<_>>>()?;
    Some((dist, slots))
}

pub(crate) fn check_model_support(instance: &Instance, model: Model) -> Result<()> {
    if model == Model::Online && instance.has_nonuniform() {
        return Err(Error::Unsupported(
            "non-uniform order distributions are only supported in the batch model".into(),
        ));
    }
    Ok(())
}

/// Every realization of the next revelation, in the input's stack order.
pub(crate) fn raw_offspring(
    config: &Configuration,
    model: Model,
    instance: Option<&Instance>,
) -> Result<RawOffspring> {
    let group = config.min_group();
    if group.is_empty() {
        return Err(Error::NotAChanceNode);
    }
    if group.len() == 1 {
        return Ok(RawOffspring {
            configs: vec![config.clone()],
            weights: vec![1.0],
            total: 1.0,
        });
    }
    if let Some((dist, slots)) = group_distribution(config, instance) {
        if model == Model::Online {
            return Err(Error::Unsupported(
                "non-uniform order distributions are only supported in the batch model".into(),
            ));
        }
        let mut configs = Vec::with_capacity(dist.orders.len());
        let mut weights = Vec::with_capacity(dist.orders.len());
        for (ranks, p) in &dist.orders {
            configs.push(config.reveal_batch(&order_from_ranks(&slots, ranks))?);
            weights.push(*p);
        }
        return Ok(RawOffspring {
            configs,
            weights,
            total: 1.0,
        });
    }
    let configs: Vec<Configuration> = match model {
        Model::Batch => group
            .iter()
            .copied()
            .permutations(group.len())
            .map(|order| config.reveal_batch(&order))
            .collect::<Result<_>>()?,
        Model::Online => group
            .iter()
            .map(|&slot| config.reveal_next(slot))
            .collect::<Result<_>>()?,
    };
    let n = configs.len();
    Ok(RawOffspring {
        configs,
        weights: vec![1.0; n],
        total: n as f64,
    })
}

pub(crate) fn order_from_ranks(slots: &[Slot], ranks: &[usize]) -> Vec<Slot> {
    let mut order = vec![slots[0]; slots.len()];
    for (slot, &r) in slots.iter().zip(ranks) {
        order[r] = *slot;
    }
    order
}

/// Canonicalizes offspring and merges equivalent ones, keeping first-seen order.
pub(crate) fn merge_offspring(
    raw: RawOffspring,
    spec: &KeySpec,
) -> (Vec<(Configuration, StateKey, f64)>, usize) {
    let raw_count = raw.configs.len();
    let mut index: FxHashMap<StateKey, usize> = FxHashMap::default();
    let mut merged: Vec<(Configuration, StateKey, f64)> = Vec::new();
    for (config, w) in raw.configs.into_iter().zip(raw.weights) {
        let canonical = config.canonicalize();
        let key = canonical.canonical_key(spec);
        match index.get(&key) {
            Some(&i) => merged[i].2 += w,
            None => {
                index.insert(key.clone(), merged.len());
                merged.push((canonical, key, w));
            }
        }
    }
    for m in &mut merged {
        m.2 /= raw.total;
    }
    let deduped = raw_count - merged.len();
    (merged, deduped)
}

/// Offspring of a chance node with their probabilities, canonicalized and merged.
///
/// `orders` supplies non-uniform order distributions; `None` means uniform.
pub fn chance_offspring(
    config: &Configuration,
    model: Model,
    orders: Option<&Instance>,
) -> Result<Vec<(Configuration, f64)>> {
    if config.role() == NodeRole::Terminal {
        return Err(Error::NotAChanceNode);
    }
    let spec = orders.map_or_else(KeySpec::labels_only, Instance::key_spec);
    let raw = raw_offspring(config, model, orders)?;
    let (merged, _) = merge_offspring(raw, &spec);
    Ok(merged.into_iter().map(|(c, _, p)| (c, p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bay::Geometry;

    fn walkthrough() -> Configuration {
        Configuration::from_labels(Geometry::new(3, 3).unwrap(), &[vec![1], vec![5, 5], vec![1, 4, 1]]).unwrap()
    }

    #[test]
    fn batch_offspring_of_walkthrough() {
        let raw = raw_offspring(&walkthrough(), Model::Batch, None).unwrap();
        assert_eq!(raw.configs.len(), 6);
        let off = chance_offspring(&walkthrough(), Model::Batch, None).unwrap();
        assert_eq!(off.len(), 6);
        for (_, p) in &off {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn online_offspring() {
        let raw = raw_offspring(&walkthrough(), Model::Online, None).unwrap();
        assert_eq!(raw.configs.len(), 3);
        let off = chance_offspring(&walkthrough(), Model::Online, None).unwrap();
        let sum: f64 = off.iter().map(|o| o.1).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_member_group() {
        let c = Configuration::from_labels(Geometry::new(3, 3).unwrap(), &[vec![1], vec![], vec![]]).unwrap();
        let off = chance_offspring(&c, Model::Batch, None).unwrap();
        assert_eq!(off.len(), 1);
        assert_eq!(off[0].1, 1.0);
        let e = Configuration::from_labels(Geometry::new(3, 3).unwrap(), &[vec![], vec![], vec![]]).unwrap();
        assert_eq!(chance_offspring(&e, Model::Batch, None).unwrap_err(), Error::NotAChanceNode);
    }

    #[test]
    fn symmetric_offspring_merge() {
        let c = Configuration::from_labels(Geometry::new(3, 3).unwrap(), &[vec![1], vec![1], vec![]]).unwrap();
        let off = chance_offspring(&c, Model::Batch, None).unwrap();
        assert_eq!(off.len(), 1);
        assert!((off[0].1 - 1.0).abs() < 1e-15);
    }
}
