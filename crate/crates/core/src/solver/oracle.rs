use std::time::Instant;

use rustc_hash::FxHashMap;

use super::{check_model_support, merge_offspring, raw_offspring, SolveStats, Status, Value};
use crate::bay::{Configuration, KeySpec, NodeRole, StateKey};
use crate::error::{Error, Result};
use crate::instance::{Instance, Model};

/// Size limits for [`brute_force_expectimax`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_containers: usize,
    pub max_batch: usize,
    pub max_nodes: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_containers: 8,
            max_batch: 3,
            max_nodes: 5_000_000,
        }
    }
}

/// Plain expectimax to the empty bay: no bounds, no pruning, no closed forms.
pub fn brute_force_expectimax(instance: &Instance, model: Model) -> Result<Value> {
    brute_force_expectimax_with(instance, model, OracleBudget::default())
}

pub fn brute_force_expectimax_with(instance: &Instance, model: Model, budget: OracleBudget) -> Result<Value> {
    check_model_support(instance, model)?;
    if instance.container_count() > budget.max_containers {
        return Err(Error::BudgetExceeded(format!(
            "{} containers exceed the oracle limit of {}",
            instance.container_count(),
            budget.max_containers
        )));
    }
    if let Some(&big) = instance.batch_sizes.iter().find(|&&s| s > budget.max_batch) {
        return Err(Error::BudgetExceeded(format!(
            "batch of {big} exceeds the oracle limit of {}",
            budget.max_batch
        )));
    }
    let start = Instant::now();
    let mut oracle = Oracle {
        instance,
        model,
        spec: instance.key_spec(),
        memo: FxHashMap::default(),
        stats: SolveStats::default(),
        max_nodes: budget.max_nodes,
    };
    let root = instance.initial.canonicalize();
    let v = oracle.eval(&root)?;
    oracle.stats.seconds = start.elapsed().as_secs_f64();
    Ok(Value {
        expected_relocations: v,
        status: Status::Optimal,
        stats: oracle.stats,
    })
}

struct Oracle<'a> {
    instance: &'a Instance,
    model: Model,
    spec: KeySpec,
    memo: FxHashMap<StateKey, f64>,
    stats: SolveStats,
    max_nodes: u64,
}

impl Oracle<'_> {
    fn eval(&mut self, cfg: &Configuration) -> Result<f64> {
        let key = cfg.canonical_key(&self.spec);
        if let Some(&v) = self.memo.get(&key) {
            self.stats.cache_hits += 1;
            return Ok(v);
        }
        self.stats.expanded += 1;
        if self.stats.expanded > self.max_nodes {
            return Err(Error::BudgetExceeded(format!("more than {} nodes", self.max_nodes)));
        }
        let v = match cfg.role() {
            NodeRole::Terminal => 0.0,
            NodeRole::Chance => {
                let raw = raw_offspring(cfg, self.model, Some(self.instance))?;
                let (offspring, _) = merge_offspring(raw, &self.spec);
                let mut total = 0.0;
                for (child, _, p) in &offspring {
                    total += p * self.eval(child)?;
                }
                total
            }
            NodeRole::Decision => {
                let r = cfg.immediate_cost()? as f64;
                let mut best = f64::INFINITY;
                for (_, child, _) in cfg.keyed_successors(&self.spec)? {
                    best = best.min(self.eval(&child)?);
                }
                r + best
            }
        };
        self.memo.insert(key, v);
        Ok(v)
    }
}
