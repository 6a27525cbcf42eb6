use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use super::{plan_retrieval, Policy};
use crate::bay::{Configuration, ContainerId, KeySpec, NodeRole, Slot, StateKey};
use crate::bounds::blocking_bound_with;
use crate::error::{Error, Result};
use crate::instance::{sample_order, Instance, InstanceOrder, Model};
use crate::solver::{raw_offspring, SolveStats, Status, Value};

pub const DEFAULT_SAMPLES: usize = 5000;

/// Node budget for [`exact_policy_value`].
pub const DEFAULT_POLICY_NODES: u64 = 5_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Whether any sample was closed with the blocking bound.
    pub early_stop_used: bool,
}

/// Monte Carlo estimate of a policy's expected relocations.
///
/// With `early_stop`, a deterministic policy stops once no more containers than
/// stacks remain and adds the blocking bound of what is left (exact there).
pub fn simulate_policy<R: Rng + ?Sized>(
    instance: &Instance,
    policy: Policy,
    model: Model,
    samples: usize,
    rng: &mut R,
    early_stop: bool,
) -> Result<SimulationReport> {
    if samples == 0 {
        return Err(Error::InvalidConfiguration("at least one sample is required".into()));
    }
    if model == Model::Online && instance.has_nonuniform() {
        return Err(Error::Unsupported(
            "non-uniform order distributions are only supported in the batch model".into(),
        ));
    }
    let order_model = InstanceOrder::new(instance);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut used = false;
    for _ in 0..samples {
        let order = sample_order(instance, rng);
        let (cost, stopped) = replay(instance, policy, model, &order, rng, early_stop, &order_model)?;
        sum += cost;
        sum_sq += cost * cost;
        used |= stopped;
    }
    let n = samples as f64;
    let mean = sum / n;
    let std_error = if samples > 1 {
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(SimulationReport {
        mean,
        std_error,
        samples,
        early_stop_used: used,
    })
}

fn replay<R: Rng + ?Sized>(
    instance: &Instance,
    policy: Policy,
    model: Model,
    order: &[ContainerId],
    rng: &mut R,
    early_stop: bool,
    order_model: &InstanceOrder<'_>,
) -> Result<(f64, bool)> {
    let stacks = instance.geometry.stacks();
    let mut cfg = instance.initial.clone();
    let mut pos = 0;
    let mut cost = 0.0;
    loop {
        if cfg.is_empty() {
            return Ok((cost, false));
        }
        if early_stop && policy.is_deterministic() && cfg.len() <= stacks {
            return Ok((cost + blocking_bound_with(&cfg, order_model), true));
        }
        if cfg.role() == NodeRole::Chance {
            let m = cfg.min_group().len();
            cfg = match model {
                Model::Batch => {
                    let slots = slots_of(&cfg, &order[pos..pos + m])?;
                    cfg.reveal_batch(&slots)?
                }
                Model::Online => {
                    let slot = slots_of(&cfg, &order[pos..pos + 1])?[0];
                    cfg.reveal_next(slot)?
                }
            };
        }
        let action = plan_retrieval(policy, &cfg, rng)?;
        cost += action.destinations.len() as f64;
        cfg = cfg.apply_action(&action)?.0;
        pos += 1;
    }
}

fn slots_of(cfg: &Configuration, ids: &[ContainerId]) -> Result<Vec<Slot>> {
    ids.iter()
        .map(|&id| {
            cfg.slot_of(id)
                .ok_or_else(|| Error::InvalidConfiguration(format!("container {} not in the bay", id.0)))
        })
        .collect()
}

/// Exact expected relocations of a policy, enumerating every order (and, for
/// the random policy, every destination choice).
pub fn exact_policy_value(instance: &Instance, policy: Policy, model: Model) -> Result<Value> {
    exact_policy_value_with(instance, policy, model, DEFAULT_POLICY_NODES)
}

pub fn exact_policy_value_with(instance: &Instance, policy: Policy, model: Model, max_nodes: u64) -> Result<Value> {
    if model == Model::Online && instance.has_nonuniform() {
        return Err(Error::Unsupported(
            "non-uniform order distributions are only supported in the batch model".into(),
        ));
    }
    let start = Instant::now();
    let mut eval = PolicyEval {
        instance,
        policy,
        model,
        spec: instance.key_spec(),
        memo: FxHashMap::default(),
        stats: SolveStats::default(),
        max_nodes,
        rng: ChaCha8Rng::seed_from_u64(0),
    };
    let v = eval.eval(&instance.initial)?;
    eval.stats.seconds = start.elapsed().as_secs_f64();
    Ok(Value {
        expected_relocations: v,
        status: Status::Exact,
        stats: eval.stats,
    })
}

struct PolicyEval<'a> {
    instance: &'a Instance,
    policy: Policy,
    model: Model,
    spec: KeySpec,
    memo: FxHashMap<StateKey, f64>,
    stats: SolveStats,
    max_nodes: u64,
    rng: ChaCha8Rng,
}

impl PolicyEval<'_> {
    /// Stack order matters to the policies' tie-breaks, so states are keyed as laid out.
    fn eval(&mut self, cfg: &Configuration) -> Result<f64> {
        if cfg.is_empty() {
            return Ok(0.0);
        }
        let key = cfg.ordered_key(&self.spec);
        if let Some(&v) = self.memo.get(&key) {
            self.stats.cache_hits += 1;
            return Ok(v);
        }
        self.stats.expanded += 1;
        if self.stats.expanded > self.max_nodes {
            return Err(Error::BudgetExceeded(format!("more than {} nodes", self.max_nodes)));
        }
        let v = match cfg.role() {
            NodeRole::Chance => {
                let raw = raw_offspring(cfg, self.model, Some(self.instance))?;
                let mut index: FxHashMap<StateKey, usize> = FxHashMap::default();
                let mut merged: Vec<(Configuration, f64)> = Vec::new();
                for (child, w) in raw.configs.into_iter().zip(raw.weights) {
                    let k = child.ordered_key(&self.spec);
                    match index.get(&k) {
                        Some(&i) => merged[i].1 += w,
                        None => {
                            index.insert(k, merged.len());
                            merged.push((child, w));
                        }
                    }
                }
                // divide once at the end so uniform weights stay exact
                let mut total = 0.0;
                for (child, w) in &merged {
                    total += w * self.eval(child)?;
                }
                total / raw.total
            }
            NodeRole::Decision if self.policy == Policy::Random => {
                let target = cfg.target()?;
                let mut total = 0.0;
                for (next, relocations, p) in random_retrievals(cfg, target.stack, target.tier)? {
                    total += p * (relocations as f64 + self.eval(&next)?);
                }
                total
            }
            NodeRole::Decision => {
                let action = plan_retrieval(self.policy, cfg, &mut self.rng)?;
                let (next, _) = cfg.apply_action(&action)?;
                action.destinations.len() as f64 + self.eval(&next)?
            }
            NodeRole::Terminal => 0.0,
        };
        self.memo.insert(key, v);
        Ok(v)
    }
}

/// Outcomes of retrieving the container at (`source`, `tier`) when every blocker
/// goes to a uniformly random legal stack, with their probabilities.
fn random_retrievals(cfg: &Configuration, source: usize, tier: usize) -> Result<Vec<(Configuration, usize, f64)>> {
    let blockers = cfg.height(source) - tier - 1;
    let mut frontier = vec![(Vec::<usize>::new(), cfg.stacks().to_vec(), 1.0)];
    for _ in 0..blockers {
        let mut next = Vec::new();
        for (plan, stacks, p) in frontier {
            let legal: Vec<usize> = (0..stacks.len())
                .filter(|&s| s != source && stacks[s].len() < cfg.geometry().tiers())
                .collect();
            if legal.is_empty() {
                return Err(Error::NoFeasibleDestination { stack: source });
            }
            for &d in &legal {
                let mut st = stacks.clone();
                let c = st[source].pop().expect("blocker");
                st[d].push(c);
                let mut pl = plan.clone();
                pl.push(d);
                next.push((pl, st, p / legal.len() as f64));
            }
        }
        frontier = next;
    }
    frontier
        .into_iter()
        .map(|(destinations, _, p)| {
            let action = crate::bay::Action { source, destinations };
            let (next, _) = cfg.apply_action(&action)?;
            Ok((next, blockers, p))
        })
        .collect()
}
