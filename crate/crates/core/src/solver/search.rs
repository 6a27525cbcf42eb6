use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use super::{
    check_model_support, group_distribution, merge_offspring, order_from_ranks, raw_offspring, RawOffspring,
    SolveStats, Status, Value,
};
use crate::bay::{Configuration, KeySpec, NodeRole, StateKey};
use crate::bounds::{blocking_bound_with, chance_envelope_with, lookahead_bound_with, BoundKind};
use crate::error::{Error, Result};
use crate::exact::exact_relocations_until;
use crate::instance::{draw_order, Instance, InstanceOrder, Model};

/// Default per-instance time limit.
pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(3600);

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOptions {
    pub bound: BoundKind,
    pub model: Model,
    pub time_limit: Option<Duration>,
    /// Close small subtrees analytically: the blocking bound once no more
    /// containers than stacks remain, the deterministic solver once every
    /// remaining label is distinct. Disabling recurses to the empty bay.
    pub shortcuts: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            bound: BoundKind::LookAhead(1),
            model: Model::Batch,
            time_limit: Some(DEFAULT_TIME_LIMIT),
            shortcuts: true,
        }
    }
}

/// How the error budget is split across the chance nodes still ahead.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum DeltaRule {
    /// Divide by the 1-based index of the last batch needed to reach the
    /// shortcut level.
    #[default]
    BatchIndex,
    /// Divide by the number of batches from the current one to that batch.
    StageCount,
}

/// Number of offspring to sample for an envelope of width `span` and error `eps`:
/// `ceil(π·span² / (2·eps²))`, at least 1. A non-positive `eps` never samples.
pub fn sample_count(span: f64, eps: f64) -> u64 {
    if eps <= 0.0 {
        return u64::MAX;
    }
    let n = (PI * span.max(0.0).powi(2) / (2.0 * eps * eps)).ceil();
    if n >= u64::MAX as f64 {
        u64::MAX
    } else {
        (n as u64).max(1)
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    delta: DeltaRule,
}

struct Search<'a> {
    instance: &'a Instance,
    opts: SearchOptions,
    spec: KeySpec,
    order: InstanceOrder<'a>,
    exact: FxHashMap<StateKey, f64>,
    approx: FxHashMap<StateKey, (f64, f64)>,
    stats: SolveStats,
    deadline: Option<Instant>,
    sampler: Option<Sampler>,
    lambda_star: usize,
    ticks: u64,
}

/// Optimal expected number of relocations with pruned best-first search.
pub fn pbfs(instance: &Instance, bound: BoundKind, model: Model, time_limit: Option<Duration>) -> Result<Value> {
    pbfs_with(
        instance,
        &SearchOptions {
            bound,
            model,
            time_limit,
            shortcuts: true,
        },
    )
}

pub fn pbfs_with(instance: &Instance, opts: &SearchOptions) -> Result<Value> {
    run(instance, opts, None, 0.0)
}

/// Sampled variant: expected absolute error at most `epsilon` over its randomness.
pub fn pbfsa(
    instance: &Instance,
    bound: BoundKind,
    epsilon: f64,
    model: Model,
    seed: u64,
    time_limit: Option<Duration>,
) -> Result<Value> {
    pbfsa_with(
        instance,
        &SearchOptions {
            bound,
            model,
            time_limit,
            shortcuts: true,
        },
        epsilon,
        seed,
        DeltaRule::BatchIndex,
    )
}

pub fn pbfsa_with(
    instance: &Instance,
    opts: &SearchOptions,
    epsilon: f64,
    seed: u64,
    delta: DeltaRule,
) -> Result<Value> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidConfiguration(format!("epsilon must be positive, got {epsilon}")));
    }
    let sampler = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
        delta,
    };
    run(instance, opts, Some(sampler), epsilon)
}

fn run(instance: &Instance, opts: &SearchOptions, sampler: Option<Sampler>, epsilon: f64) -> Result<Value> {
    check_model_support(instance, opts.model)?;
    let start = Instant::now();
    let mut search = Search {
        instance,
        opts: opts.clone(),
        spec: instance.key_spec(),
        order: InstanceOrder::new(instance),
        exact: FxHashMap::default(),
        approx: FxHashMap::default(),
        stats: SolveStats::default(),
        deadline: opts.time_limit.map(|t| start + t),
        sampler,
        lambda_star: instance.geometry.stacks().max(instance.last_batch_size()),
        ticks: 0,
    };
    let root = instance.initial.canonicalize();
    let key = root.canonical_key(&search.spec);
    let outcome = search.value(&root, &key, epsilon);
    search.stats.seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((v, exact)) => Ok(Value {
            expected_relocations: v,
            status: if exact { Status::Optimal } else { Status::Approximate(epsilon) },
            stats: search.stats,
        }),
        Err(Error::Timeout) => Ok(Value {
            expected_relocations: lookahead_bound_with(&root, opts.bound, &search.order),
            status: Status::Timeout,
            stats: search.stats,
        }),
        Err(e) => Err(e),
    }
}

impl Search<'_> {
    fn tick(&mut self) -> Result<()> {
        self.ticks += 1;
        if self.ticks.is_multiple_of(512) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    return Err(Error::Timeout);
                }
            }
        }
        Ok(())
    }

    /// Value of a canonical configuration and whether it is exact.
    fn value(&mut self, cfg: &Configuration, key: &StateKey, eps: f64) -> Result<(f64, bool)> {
        if cfg.is_empty() {
            return Ok((0.0, true));
        }
        if self.opts.shortcuts && cfg.len() <= self.instance.geometry.stacks() {
            return Ok((blocking_bound_with(cfg, &self.order), true));
        }
        if let Some(&v) = self.exact.get(key) {
            self.stats.cache_hits += 1;
            return Ok((v, true));
        }
        if let Some(&(v, used)) = self.approx.get(key) {
            if used <= eps {
                self.stats.cache_hits += 1;
                return Ok((v, false));
            }
        }
        self.tick()?;
        self.stats.expanded += 1;
        let (v, exact) = match cfg.role() {
            NodeRole::Chance => self.chance_value(cfg, eps)?,
            NodeRole::Decision => self.decision_value(cfg, eps)?,
            NodeRole::Terminal => (0.0, true),
        };
        if exact {
            self.exact.insert(key.clone(), v);
        } else {
            self.approx.insert(key.clone(), (v, eps));
        }
        Ok((v, exact))
    }

    fn decision_value(&mut self, cfg: &Configuration, eps: f64) -> Result<(f64, bool)> {
        if self.opts.shortcuts && cfg.all_labels_distinct() {
            return Ok((exact_relocations_until(cfg, self.deadline)? as f64, true));
        }
        let r = cfg.immediate_cost()? as f64;
        let mut children: Vec<(f64, Configuration, StateKey)> = cfg
            .keyed_successors(&self.spec)?
            .into_iter()
            .map(|(_, c, k)| (lookahead_bound_with(&c, self.opts.bound, &self.order), c, k))
            .collect();
        children.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = f64::INFINITY;
        let mut exact = true;
        for (i, (bound, child, key)) in children.iter().enumerate() {
            if !(*bound < best) {
                self.stats.pruned += (children.len() - i) as u64;
                break;
            }
            let (f, e) = self.value(child, key, eps)?;
            exact &= e;
            if f < best {
                best = f;
            }
        }
        Ok((r + best, exact))
    }

    fn chance_value(&mut self, cfg: &Configuration, eps: f64) -> Result<(f64, bool)> {
        let mut child_eps = eps;
        let mut sampled = None;
        if self.sampler.is_some() && eps > 0.0 {
            let eps_n = eps / self.delta(cfg);
            child_eps = eps - eps_n;
            let (f_min, f_max) = chance_envelope_with(cfg, &self.order)?;
            let n = sample_count(f_max - f_min, eps_n);
            if (n as f64) <= self.raw_count(cfg) {
                sampled = Some(self.draw(cfg, n)?);
            }
        }
        let is_sampled = sampled.is_some();
        let raw = match sampled {
            Some(raw) => raw,
            None => raw_offspring(cfg, self.opts.model, Some(self.instance))?,
        };
        let (offspring, deduped) = merge_offspring(raw, &self.spec);
        self.stats.deduped += deduped as u64;
        let mut total = 0.0;
        let mut exact = !is_sampled;
        for (child, key, p) in &offspring {
            let (f, e) = self.value(child, key, child_eps)?;
            exact &= e;
            total += p * f;
        }
        Ok((total, exact))
    }

    /// Number of distinct raw realizations at a chance node.
    fn raw_count(&self, cfg: &Configuration) -> f64 {
        let m = cfg.min_group().len();
        if let Some((dist, _)) = group_distribution(cfg, Some(self.instance)) {
            return dist.orders.len() as f64;
        }
        match self.opts.model {
            Model::Batch => (1..=m).map(|i| i as f64).product(),
            Model::Online => m as f64,
        }
    }

    fn draw(&mut self, cfg: &Configuration, n: u64) -> Result<RawOffspring> {
        let group = cfg.min_group();
        let dist = group_distribution(cfg, Some(self.instance));
        let rng = &mut self.sampler.as_mut().expect("sampling search").rng;
        let mut configs = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let child = match (&dist, self.opts.model) {
                (Some((dist, slots)), _) => cfg.reveal_batch(&order_from_ranks(slots, draw_order(dist, rng)))?,
                (None, Model::Batch) => {
                    let mut order = group.clone();
                    order.shuffle(rng);
                    cfg.reveal_batch(&order)?
                }
                (None, Model::Online) => cfg.reveal_next(group[rng.random_range(0..group.len())])?,
            };
            configs.push(child);
        }
        self.stats.samples += n;
        Ok(RawOffspring {
            configs,
            weights: vec![1.0; n as usize],
            total: n as f64,
        })
    }

    /// Divisor applied to the remaining error budget at a chance node.
    fn delta(&self, cfg: &Configuration) -> f64 {
        let sizes = &self.instance.batch_sizes;
        let Some(w_min) = cfg.min_label().and_then(|k| self.instance.batch_containing(k)) else {
            return 1.0;
        };
        let need = cfg.len() as i64 - self.lambda_star as i64;
        let mut acc = 0i64;
        let mut last = sizes.len() - 1;
        for (w, &size) in sizes.iter().enumerate().skip(w_min) {
            acc += size as i64;
            if acc >= need {
                last = w;
                break;
            }
        }
        let delta = match self.sampler.as_ref().map_or(DeltaRule::BatchIndex, |s| s.delta) {
            DeltaRule::BatchIndex => last + 1,
            DeltaRule::StageCount => last - w_min + 1,
        };
        delta.max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bay::Geometry;
    use crate::bounds::blocking_bound;

    fn walkthrough() -> Instance {
        Instance::from_labels(Geometry::new(3, 3).unwrap(), &[vec![1], vec![5, 5], vec![1, 4, 1]]).unwrap()
    }

    #[test]
    fn walkthrough_value_both_models() {
        for model in [Model::Batch, Model::Online] {
            let v = pbfs(&walkthrough(), BoundKind::LookAhead(1), model, None).unwrap();
            assert!((v.expected_relocations - 13.0 / 6.0).abs() < 1e-9, "{model:?}: {v:?}");
            assert_eq!(v.status, Status::Optimal);
        }
    }

    #[test]
    fn small_bay_needs_no_search() {
        let inst = Instance::from_labels(Geometry::new(3, 3).unwrap(), &[vec![1, 1], vec![], vec![3]]).unwrap();
        let v = pbfs(&inst, BoundKind::LookAhead(1), Model::Batch, None).unwrap();
        assert_eq!(v.expected_relocations, blocking_bound(&inst.initial));
        assert_eq!(v.stats.expanded, 0);
    }

    #[test]
    fn sample_count_arithmetic() {
        assert_eq!(sample_count(2.0, 0.5), 26);
        assert_eq!(sample_count(0.0, 0.5), 1);
        assert_eq!(sample_count(2.0, 0.0), u64::MAX);
    }

    #[test]
    fn pbfsa_is_reproducible() {
        let inst = walkthrough();
        let a = pbfsa(&inst, BoundKind::LookAhead(1), 0.5, Model::Batch, 3, None).unwrap();
        let b = pbfsa(&inst, BoundKind::LookAhead(1), 0.5, Model::Batch, 3, None).unwrap();
        assert_eq!(a.expected_relocations, b.expected_relocations);
        assert!(pbfsa(&inst, BoundKind::LookAhead(1), 0.0, Model::Batch, 3, None).is_err());
    }
}
