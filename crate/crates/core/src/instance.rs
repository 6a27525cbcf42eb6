//! Problem instances, retrieval-order distributions and order sampling.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bay::{Configuration, Container, ContainerId, Geometry, KeySpec, Label};
use crate::error::{Error, Result};

/// Tolerance on the total probability of an order distribution.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Explicit distribution over the retrieval orders of one batch.
///
/// Each entry maps member `j` of the batch (members are ordered by container
/// id, i.e. by their position in the file) to its 0-based rank `ranks[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderDistribution {
    pub orders: Vec<(Vec<usize>, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub geometry: Geometry,
    pub batch_sizes: Vec<usize>,
    pub initial: Configuration,
    /// One entry per batch; `None` means a uniformly random order.
    pub distributions: Vec<Option<OrderDistribution>>,
}

/// Information model at chance nodes.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Model {
    /// The whole order of a batch is revealed when its first container is due.
    Batch,
    /// Only the next container to retrieve is revealed.
    Online,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Batch => "batch",
            Model::Online => "online",
        }
    }
}

impl Instance {
    /// Builds an instance from per-stack lists of 1-based batch indices (bottom to top).
    /// Container ids follow scan order; an empty `distributions` means all uniform.
    pub fn new(
        geometry: Geometry,
        batch_sizes: Vec<usize>,
        stacks: &[Vec<usize>],
        distributions: Vec<Option<OrderDistribution>>,
    ) -> Result<Self> {
        if stacks.len() != geometry.stacks() {
            return Err(Error::InvalidGeometry(format!(
                "{} stacks given for a bay with {} stacks",
                stacks.len(),
                geometry.stacks()
            )));
        }
        let starts = batch_starts(&batch_sizes);
        let mut next_id = 0u32;
        let mut columns = Vec::with_capacity(stacks.len());
        for stack in stacks {
            let mut column = Vec::with_capacity(stack.len());
            for &w in stack {
                if w == 0 || w > batch_sizes.len() {
                    return Err(Error::BatchMismatch(format!(
                        "batch index {w} outside 1..={}",
                        batch_sizes.len()
                    )));
                }
                column.push(Container::new(starts[w - 1], Some(next_id)));
                next_id += 1;
            }
            columns.push(column);
        }
        if stacks.iter().any(|s| s.len() > geometry.tiers()) {
            return Err(Error::InvalidGeometry(format!(
                "a stack is taller than {} tiers",
                geometry.tiers()
            )));
        }
        let total: usize = stacks.iter().map(Vec::len).sum();
        if total > geometry.capacity() {
            return Err(Error::CapacityExceeded {
                containers: total,
                capacity: geometry.capacity(),
                tiers: geometry.tiers(),
                stacks: geometry.stacks(),
            });
        }
        let distributions = if distributions.is_empty() {
            vec![None; batch_sizes.len()]
        } else {
            distributions
        };
        let instance = Instance {
            geometry,
            batch_sizes,
            initial: Configuration::from_parts_unchecked(geometry, columns),
            distributions,
        };
        validate_instance(&instance)?;
        Ok(instance)
    }

    /// Instance with uniform orders from batch-index stacks.
    pub fn uniform(geometry: Geometry, batch_sizes: Vec<usize>, stacks: &[Vec<usize>]) -> Result<Self> {
        Instance::new(geometry, batch_sizes, stacks, Vec::new())
    }

    /// Instance whose batches are read off the labels of `stacks`: every distinct
    /// label starts a batch whose size is its multiplicity. Labels must be 1, then
    /// contiguous (`next = label + multiplicity`).
    pub fn from_labels(geometry: Geometry, stacks: &[Vec<u32>]) -> Result<Self> {
        let mut labels: Vec<u32> = stacks.iter().flatten().copied().collect();
        labels.sort_unstable();
        let mut sizes = Vec::new();
        let mut expected = 1u32;
        let mut i = 0;
        while i < labels.len() {
            let mut j = i;
            while j < labels.len() && labels[j] == labels[i] {
                j += 1;
            }
            if labels[i] != expected {
                return Err(Error::BatchMismatch(format!(
                    "label {} found where batch label {expected} was expected",
                    labels[i]
                )));
            }
            sizes.push(j - i);
            expected += (j - i) as u32;
            i = j;
        }
        let starts = batch_starts(&sizes);
        let batch_of = |l: u32| starts.iter().position(|&s| s == l).unwrap() + 1;
        let stacks: Vec<Vec<usize>> = stacks
            .iter()
            .map(|s| s.iter().map(|&l| batch_of(l)).collect())
            .collect();
        Instance::uniform(geometry, sizes, &stacks)
    }

    pub fn container_count(&self) -> usize {
        self.initial.len()
    }

    pub fn batch_count(&self) -> usize {
        self.batch_sizes.len()
    }

    /// Label carried by every container of batch `w` (0-based) before revelation.
    pub fn batch_label(&self, w: usize) -> Label {
        Label(1 + self.batch_sizes[..w].iter().sum::<usize>() as u32)
    }

    /// 0-based batch whose label range contains `label`.
    pub fn batch_containing(&self, label: Label) -> Option<usize> {
        let mut start = 1u32;
        for (w, &size) in self.batch_sizes.iter().enumerate() {
            if label.0 >= start && label.0 < start + size as u32 {
                return Some(w);
            }
            start += size as u32;
        }
        None
    }

    /// Ids of batch `w`'s members, ordered by id.
    pub fn members(&self, w: usize) -> Vec<ContainerId> {
        let label = self.batch_label(w);
        let mut ids: Vec<ContainerId> = self
            .initial
            .containers()
            .filter(|c| c.label == label)
            .filter_map(|c| c.id)
            .collect();
        ids.sort();
        ids
    }

    /// 1-based batch indices per stack, bottom to top.
    pub fn batch_indices(&self) -> Vec<Vec<usize>> {
        self.initial
            .stacks()
            .iter()
            .map(|s| {
                s.iter()
                    .map(|c| self.batch_containing(c.label).map_or(0, |w| w + 1))
                    .collect()
            })
            .collect()
    }

    pub fn has_nonuniform(&self) -> bool {
        self.distributions.iter().any(Option::is_some)
    }

    /// Key specification distinguishing the ids that non-uniform batches need.
    pub fn key_spec(&self) -> KeySpec {
        KeySpec::tracking(
            self.distributions
                .iter()
                .enumerate()
                .filter(|(_, d)| d.is_some())
                .map(|(w, _)| self.batch_label(w))
                .collect(),
        )
    }

    /// Largest batch size `C_W` of the last batch.
    pub fn last_batch_size(&self) -> usize {
        self.batch_sizes.last().copied().unwrap_or(0)
    }
}

pub(crate) fn batch_starts(sizes: &[usize]) -> Vec<u32> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut k = 1u32;
    for &s in sizes {
        out.push(k);
        k += s as u32;
    }
    out
}

/// Checks geometry, capacity, batch/label consistency and order distributions.
pub fn validate_instance(instance: &Instance) -> Result<()> {
    let g = instance.geometry;
    Geometry::new(g.tiers(), g.stacks())?;
    if instance.initial.geometry() != g {
        return Err(Error::InvalidGeometry("configuration geometry differs from the instance".into()));
    }
    let n = instance.initial.len();
    if n > g.capacity() {
        return Err(Error::CapacityExceeded {
            containers: n,
            capacity: g.capacity(),
            tiers: g.tiers(),
            stacks: g.stacks(),
        });
    }
    instance.initial.validate().map_err(|e| match e {
        Error::InvalidConfiguration(msg) => Error::BatchMismatch(msg),
        other => other,
    })?;
    if instance.batch_sizes.contains(&0) {
        return Err(Error::BatchMismatch("batch sizes must be positive".into()));
    }
    let total: usize = instance.batch_sizes.iter().sum();
    if total != n {
        return Err(Error::BatchMismatch(format!(
            "batch sizes sum to {total} but the bay holds {n} containers"
        )));
    }
    let starts = batch_starts(&instance.batch_sizes);
    for (w, (&start, &size)) in starts.iter().zip(&instance.batch_sizes).enumerate() {
        let count = instance.initial.containers().filter(|c| c.label.0 == start).count();
        if count != size {
            return Err(Error::BatchMismatch(format!(
                "batch {} has size {size} but {count} containers carry label {start}",
                w + 1
            )));
        }
    }
    let mut ids: Vec<u32> = Vec::with_capacity(n);
    for c in instance.initial.containers() {
        match c.id {
            Some(id) => ids.push(id.0),
            None => return Err(Error::BatchMismatch("every container needs an id".into())),
        }
    }
    if !instance.distributions.is_empty() && instance.distributions.len() != instance.batch_sizes.len() {
        return Err(Error::BadDistribution(format!(
            "{} distributions for {} batches",
            instance.distributions.len(),
            instance.batch_sizes.len()
        )));
    }
    for (w, dist) in instance.distributions.iter().enumerate() {
        if let Some(dist) = dist {
            validate_distribution(dist, instance.batch_sizes[w])
                .map_err(|msg| Error::BadDistribution(format!("batch {}: {msg}", w + 1)))?;
        }
    }
    Ok(())
}

fn validate_distribution(dist: &OrderDistribution, size: usize) -> std::result::Result<(), String> {
    if dist.orders.is_empty() {
        return Err("no orders listed".into());
    }
    let mut sum = 0.0;
    for (ranks, p) in &dist.orders {
        if ranks.len() != size {
            return Err(format!("order has {} ranks for {size} members", ranks.len()));
        }
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        if sorted.iter().enumerate().any(|(i, &r)| i != r) {
            return Err("ranks are not a permutation".into());
        }
        if !(*p > 0.0) || !p.is_finite() {
            return Err(format!("probability {p} is not positive"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(format!("probabilities sum to {sum}"));
    }
    Ok(())
}

/// Draws a complete retrieval order over container ids, batch by batch.
pub fn sample_order<R: Rng + ?Sized>(instance: &Instance, rng: &mut R) -> Vec<ContainerId> {
    let mut order = Vec::with_capacity(instance.container_count());
    for w in 0..instance.batch_count() {
        let mut members = instance.members(w);
        match instance.distributions.get(w).and_then(Option::as_ref) {
            Some(dist) => {
                let ranks = draw_order(dist, rng);
                let mut ranked: Vec<(usize, ContainerId)> =
                    ranks.iter().copied().zip(members.iter().copied()).collect();
                ranked.sort();
                order.extend(ranked.into_iter().map(|(_, id)| id));
            }
            None => {
                members.shuffle(rng);
                order.extend(members);
            }
        }
    }
    order
}

pub(crate) fn draw_order<'d, R: Rng + ?Sized>(dist: &'d OrderDistribution, rng: &mut R) -> &'d [usize] {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (ranks, p) in &dist.orders {
        acc += p;
        if u < acc {
            return ranks;
        }
    }
    &dist.orders.last().expect("non-empty distribution").0
}

/// Records that `first` was retrieved before every container in `over`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Precedence {
    pub first: ContainerId,
    pub over: Vec<ContainerId>,
}

/// Relative-order probabilities among containers that share a label.
pub trait OrderModel: Sync {
    /// Probability that `c` leaves before every container in `others`, all of
    /// which carry `label`, given the precedence facts in `given`.
    fn precedes_all(&self, label: Label, c: &Container, others: &[Container], given: &[Precedence]) -> f64;

    fn is_uniform(&self) -> bool;
}

/// Every order within a batch is equally likely.
#[derive(Copy, Clone, Debug, Default)]
pub struct UniformOrder;

impl OrderModel for UniformOrder {
    #[inline]
    fn precedes_all(&self, _: Label, _: &Container, others: &[Container], _: &[Precedence]) -> f64 {
        1.0 / (others.len() + 1) as f64
    }

    fn is_uniform(&self) -> bool {
        true
    }
}

/// Orders drawn from an instance's distributions; uniform for batches without one.
///
/// Only labels equal to a batch's initial label are looked up, i.e. batches whose
/// order is still entirely hidden.
#[derive(Clone, Debug)]
pub struct InstanceOrder<'a> {
    instance: &'a Instance,
    member_of: Vec<Option<(usize, usize)>>,
}

impl<'a> InstanceOrder<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        let n = instance.container_count();
        let mut member_of = vec![None; n];
        for w in 0..instance.batch_count() {
            for (j, id) in instance.members(w).into_iter().enumerate() {
                if (id.0 as usize) < n {
                    member_of[id.0 as usize] = Some((w, j));
                }
            }
        }
        InstanceOrder { instance, member_of }
    }

    fn member(&self, c: &Container, w: usize) -> Option<usize> {
        let id = c.id?.0 as usize;
        match self.member_of.get(id).copied().flatten() {
            Some((batch, j)) if batch == w => Some(j),
            _ => None,
        }
    }
}

impl OrderModel for InstanceOrder<'_> {
    fn precedes_all(&self, label: Label, c: &Container, others: &[Container], given: &[Precedence]) -> f64 {
        let uniform = 1.0 / (others.len() + 1) as f64;
        let Some(w) = self.instance.batch_containing(label) else {
            return uniform;
        };
        if self.instance.batch_label(w) != label {
            return uniform;
        }
        let Some(dist) = self.instance.distributions.get(w).and_then(Option::as_ref) else {
            return uniform;
        };
        let Some(me) = self.member(c, w) else {
            return uniform;
        };
        let Some(rest) = others.iter().map(|o| self.member(o, w)).collect::<Option<Vec<_>>>() else {
            return uniform;
        };
        let as_member = |id: ContainerId| -> Option<usize> {
            match self.member_of.get(id.0 as usize).copied().flatten() {
                Some((batch, j)) if batch == w => Some(j),
                _ => None,
            }
        };
        let facts: Vec<(usize, Vec<usize>)> = given
            .iter()
            .filter_map(|p| {
                let first = as_member(p.first)?;
                Some((first, p.over.iter().filter_map(|&o| as_member(o)).collect()))
            })
            .collect();
        let mut total = 0.0;
        let mut hit = 0.0;
        for (ranks, p) in &dist.orders {
            if facts
                .iter()
                .any(|(first, over)| over.iter().any(|&o| ranks[o] < ranks[*first]))
            {
                continue;
            }
            total += p;
            if rest.iter().all(|&o| ranks[me] < ranks[o]) {
                hit += p;
            }
        }
        if total > 0.0 {
            hit / total
        } else {
            uniform
        }
    }

    fn is_uniform(&self) -> bool {
        !self.instance.has_nonuniform()
    }
}
