//! Bay configurations, node roles, relocation actions and order revelation.
//!
//! Stacks are stored bottom to top. A container's label is the earliest
//! position at which it can be retrieved; containers sharing a label belong to
//! the same batch and their relative order is not yet known.

use std::cmp::Ordering;
use std::fmt;

use rustc_hash::FxHashSet;

use crate::error::{Error, Result};

/// Largest label a configuration may carry (keys store labels as `u16`).
pub const MAX_LABEL: u32 = u16::MAX as u32 - 1;

/// Stack minimum reported for an empty stack. Larger than any label.
pub const EMPTY_STACK_MIN: u32 = u32::MAX;

/// Earliest possible retrieval position of a container (1-based).
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub u32);

impl Label {
    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn offset(self, by: u32) -> Label {
        Label(self.0 + by)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Stable identity of a container across relocations.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContainerId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Container {
    pub label: Label,
    pub id: Option<ContainerId>,
}

impl Container {
    #[inline]
    pub fn new(label: u32, id: Option<u32>) -> Self {
        Container {
            label: Label(label),
            id: id.map(ContainerId),
        }
    }
}

/// Bay dimensions: `tiers` is the maximum stack height, `stacks` the number of stacks.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Geometry {
    tiers: usize,
    stacks: usize,
}

impl Geometry {
    pub fn new(tiers: usize, stacks: usize) -> Result<Self> {
        if tiers == 0 || stacks == 0 {
            return Err(Error::InvalidGeometry(format!(
                "tiers and stacks must be positive (got {tiers}x{stacks})"
            )));
        }
        let geometry = Geometry { tiers, stacks };
        if geometry.capacity() > MAX_LABEL as usize {
            return Err(Error::InvalidGeometry(format!(
                "capacity {} exceeds the supported maximum {MAX_LABEL}",
                geometry.capacity()
            )));
        }
        Ok(geometry)
    }

    #[inline]
    pub fn tiers(&self) -> usize {
        self.tiers
    }

    #[inline]
    pub fn stacks(&self) -> usize {
        self.stacks
    }

    /// Most containers the bay can hold while every relocation stays possible.
    #[inline]
    pub fn capacity(&self) -> usize {
        self.stacks * self.tiers - (self.tiers - 1)
    }
}

/// Position of a container: `tier` 0 is the bottom of the stack.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Slot {
    pub stack: usize,
    pub tier: usize,
}

impl Slot {
    #[inline]
    pub fn new(stack: usize, tier: usize) -> Self {
        Slot { stack, tier }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum NodeRole {
    Terminal,
    Decision,
    Chance,
}

/// One retrieval: blockers above the target on `source` go, top-down, to
/// `destinations[0]`, `destinations[1]`, ...; then the target leaves the bay.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Action {
    pub source: usize,
    pub destinations: Vec<usize>,
}

/// A single relocation or retrieval. `to == None` means the container left the bay.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Move {
    pub container: Container,
    pub from: usize,
    pub to: Option<usize>,
}

/// Hashable encoding of a configuration used for memoization and deduplication.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(Box<[u16]>);

impl StateKey {
    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }
}

/// Which container identities a key must distinguish.
///
/// Ids matter only for labels whose batch carries a non-uniform order
/// distribution; every other container is interchangeable with its label.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeySpec {
    tracked: Vec<Label>,
}

impl KeySpec {
    pub fn labels_only() -> Self {
        KeySpec::default()
    }

    pub fn tracking(mut tracked: Vec<Label>) -> Self {
        tracked.sort();
        tracked.dedup();
        KeySpec { tracked }
    }

    #[inline]
    fn tracks(&self, label: Label) -> bool {
        !self.tracked.is_empty() && self.tracked.binary_search(&label).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    geometry: Geometry,
    stacks: Vec<Vec<Container>>,
}

impl Configuration {
    /// Builds a configuration, checking heights, capacity, ids and label consistency.
    pub fn new(geometry: Geometry, stacks: Vec<Vec<Container>>) -> Result<Self> {
        let config = Configuration { geometry, stacks };
        config.validate()?;
        Ok(config)
    }

    /// Convenience constructor from bottom-to-top label lists; ids follow scan
    /// order (stack by stack, bottom to top) starting at 0.
    pub fn from_labels(geometry: Geometry, stacks: &[Vec<u32>]) -> Result<Self> {
        let mut next_id = 0u32;
        let stacks = stacks
            .iter()
            .map(|stack| {
                stack
                    .iter()
                    .map(|&label| {
                        let c = Container::new(label, Some(next_id));
                        next_id += 1;
                        c
                    })
                    .collect()
            })
            .collect();
        Configuration::new(geometry, stacks)
    }

    /// Like [`Configuration::from_labels`] but skips the label-consistency check, for
    /// hand-written label matrices that no instance could produce. Heights and
    /// capacity are still checked.
    pub fn from_labels_relaxed(geometry: Geometry, stacks: &[Vec<u32>]) -> Result<Self> {
        let mut next_id = 0u32;
        let mut columns = Vec::with_capacity(stacks.len());
        for stack in stacks {
            let mut column = Vec::with_capacity(stack.len());
            for &label in stack {
                column.push(Container::new(label, Some(next_id)));
                next_id += 1;
            }
            columns.push(column);
        }
        let config = Configuration {
            geometry,
            stacks: columns,
        };
        config.check_shape()?;
        Ok(config)
    }

    pub(crate) fn from_parts_unchecked(geometry: Geometry, stacks: Vec<Vec<Container>>) -> Self {
        Configuration { geometry, stacks }
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        let mut labels: Vec<u32> = self.containers().map(|c| c.label.0).collect();
        labels.sort_unstable();
        let mut i = 0;
        while i < labels.len() {
            let mut j = i;
            while j < labels.len() && labels[j] == labels[i] {
                j += 1;
            }
            let span = (j - i) as u32;
            if j < labels.len() && labels[j] < labels[i] + span {
                return Err(Error::InvalidConfiguration(format!(
                    "label {} is shared by {span} containers but label {} follows too closely",
                    labels[i], labels[j]
                )));
            }
            i = j;
        }
        Ok(())
    }

    fn check_shape(&self) -> Result<()> {
        let g = self.geometry;
        if self.stacks.len() != g.stacks {
            return Err(Error::InvalidConfiguration(format!(
                "expected {} stacks, found {}",
                g.stacks,
                self.stacks.len()
            )));
        }
        for (s, stack) in self.stacks.iter().enumerate() {
            if stack.len() > g.tiers {
                return Err(Error::InvalidConfiguration(format!(
                    "stack {s} holds {} containers but the bay has {} tiers",
                    stack.len(),
                    g.tiers
                )));
            }
        }
        let n = self.len();
        if n > g.capacity() {
            return Err(Error::CapacityExceeded {
                containers: n,
                capacity: g.capacity(),
                tiers: g.tiers,
                stacks: g.stacks,
            });
        }
        if let Some(bad) = self.containers().map(|c| c.label.0).find(|&l| l == 0 || l > MAX_LABEL) {
            return Err(Error::InvalidConfiguration(format!(
                "label {bad} outside 1..={MAX_LABEL}"
            )));
        }
        let mut ids: Vec<u32> = self.containers().filter_map(|c| c.id.map(|id| id.0)).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfiguration("duplicate container id".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    #[inline]
    pub fn stacks(&self) -> &[Vec<Container>] {
        &self.stacks
    }

    #[inline]
    pub fn stack(&self, s: usize) -> &[Container] {
        &self.stacks[s]
    }

    #[inline]
    pub fn height(&self, s: usize) -> usize {
        self.stacks[s].len()
    }

    /// Number of containers in the bay.
    pub fn len(&self) -> usize {
        self.stacks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.stacks.iter().all(Vec::is_empty)
    }

    pub fn containers(&self) -> impl Iterator<Item = &Container> + '_ {
        self.stacks.iter().flatten()
    }

    pub fn container_at(&self, slot: Slot) -> Option<&Container> {
        self.stacks.get(slot.stack).and_then(|s| s.get(slot.tier))
    }

    pub fn slot_of(&self, id: ContainerId) -> Option<Slot> {
        for (s, stack) in self.stacks.iter().enumerate() {
            for (t, c) in stack.iter().enumerate() {
                if c.id == Some(id) {
                    return Some(Slot::new(s, t));
                }
            }
        }
        None
    }

    pub fn has_empty_stack(&self) -> bool {
        self.stacks.iter().any(Vec::is_empty)
    }

    pub fn min_label(&self) -> Option<Label> {
        self.containers().map(|c| c.label).min()
    }

    /// Slots holding the minimal label, in scan order.
    pub fn min_group(&self) -> Vec<Slot> {
        let Some(min) = self.min_label() else {
            return Vec::new();
        };
        self.slots_with_label(min)
    }

    pub fn slots_with_label(&self, label: Label) -> Vec<Slot> {
        let mut out = Vec::new();
        for (s, stack) in self.stacks.iter().enumerate() {
            for (t, c) in stack.iter().enumerate() {
                if c.label == label {
                    out.push(Slot::new(s, t));
                }
            }
        }
        out
    }

    pub fn role(&self) -> NodeRole {
        let Some(min) = self.min_label() else {
            return NodeRole::Terminal;
        };
        if self.containers().filter(|c| c.label == min).count() >= 2 {
            NodeRole::Chance
        } else {
            NodeRole::Decision
        }
    }

    /// The container to retrieve next at a decision node.
    pub fn target(&self) -> Result<Slot> {
        if self.role() != NodeRole::Decision {
            return Err(Error::NotADecisionNode);
        }
        Ok(self.min_group()[0])
    }

    /// Number of containers above the target.
    pub fn immediate_cost(&self) -> Result<usize> {
        let t = self.target()?;
        Ok(self.stacks[t.stack].len() - t.tier - 1)
    }

    /// Smallest label per stack; empty stacks report [`EMPTY_STACK_MIN`].
    pub fn stack_minima(&self) -> Vec<u32> {
        self.stacks.iter().map(|s| stack_min(s)).collect()
    }

    pub fn all_labels_distinct(&self) -> bool {
        let mut labels: Vec<u32> = self.containers().map(|c| c.label.0).collect();
        labels.sort_unstable();
        labels.windows(2).all(|w| w[0] != w[1])
    }

    /// Stack order that sorts stacks by height, then by their bottom-to-top labels.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.stacks.len()).collect();
        order.sort_by(|&a, &b| compare_stacks(&self.stacks[a], &self.stacks[b]));
        order
    }

    /// Representative of the configuration's equivalence class under stack permutation.
    pub fn canonicalize(&self) -> Configuration {
        let mut stacks = self.stacks.clone();
        stacks.sort_by(|a, b| compare_stacks(a, b));
        Configuration {
            geometry: self.geometry,
            stacks,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.stacks
            .windows(2)
            .all(|w| compare_stacks(&w[0], &w[1]) != Ordering::Greater)
    }

    /// Key of the canonical form.
    pub fn canonical_key(&self, spec: &KeySpec) -> StateKey {
        if self.is_canonical() {
            self.encode(spec)
        } else {
            self.canonicalize().encode(spec)
        }
    }

    /// Key of this exact stack order (no canonicalization).
    pub fn ordered_key(&self, spec: &KeySpec) -> StateKey {
        self.encode(spec)
    }

    fn encode(&self, spec: &KeySpec) -> StateKey {
        let mut out = Vec::with_capacity(self.stacks.len() + self.len() * 2);
        for stack in &self.stacks {
            out.push(stack.len() as u16);
            for c in stack {
                out.push(c.label.0 as u16);
                if spec.tracks(c.label) {
                    out.push(c.id.map_or(0, |id| id.0 as u16 + 1));
                }
            }
        }
        StateKey(out.into_boxed_slice())
    }

    /// All raw successors of a decision node, in generation order (not deduplicated).
    ///
    /// Successors are returned in the original stack order.
    pub fn raw_successors(&self) -> Result<Vec<(Action, Configuration)>> {
        let target = self.target()?;
        let g = self.geometry;
        let source = target.stack;
        let blockers: Vec<Container> = self.stacks[source][target.tier + 1..]
            .iter()
            .rev()
            .copied()
            .collect();
        let mut base = self.stacks.clone();
        base[source].truncate(target.tier);
        let mut heights: Vec<usize> = base.iter().map(Vec::len).collect();
        let mut out = Vec::new();
        let mut dests = Vec::with_capacity(blockers.len());
        assign_blockers(
            &blockers,
            source,
            g.tiers,
            &mut heights,
            &mut dests,
            &mut |dests: &[usize]| {
                let mut stacks = base.clone();
                for (c, &d) in blockers.iter().zip(dests) {
                    stacks[d].push(*c);
                }
                out.push((
                    Action {
                        source,
                        destinations: dests.to_vec(),
                    },
                    Configuration {
                        geometry: g,
                        stacks,
                    },
                ));
            },
        );
        if out.is_empty() {
            return Err(Error::NoFeasibleDestination { stack: source });
        }
        Ok(out)
    }

    /// Distinct successors of a decision node, canonicalized and deduplicated.
    /// The first generated action reaching each class is kept.
    pub fn enumerate_actions(&self) -> Result<Vec<(Action, Configuration)>> {
        Ok(self
            .keyed_successors(&KeySpec::labels_only())?
            .into_iter()
            .map(|(a, c, _)| (a, c))
            .collect())
    }

    pub(crate) fn keyed_successors(
        &self,
        spec: &KeySpec,
    ) -> Result<Vec<(Action, Configuration, StateKey)>> {
        let raw = self.raw_successors()?;
        let mut seen = FxHashSet::default();
        let mut out = Vec::with_capacity(raw.len());
        for (action, config) in raw {
            let canonical = config.canonicalize();
            let key = canonical.encode(spec);
            if seen.insert(key.clone()) {
                out.push((action, canonical, key));
            }
        }
        Ok(out)
    }

    /// Applies one retrieval in place of the current stack order and reports the moves.
    pub fn apply_action(&self, action: &Action) -> Result<(Configuration, Vec<Move>)> {
        let target = self.target()?;
        if action.source != target.stack {
            return Err(Error::BadChoice(format!(
                "action retrieves from stack {} but the target is on stack {}",
                action.source, target.stack
            )));
        }
        let r = self.stacks[target.stack].len() - target.tier - 1;
        if action.destinations.len() != r {
            return Err(Error::BadChoice(format!(
                "{} destinations given for {r} blocking containers",
                action.destinations.len()
            )));
        }
        let mut stacks = self.stacks.clone();
        let mut moves = Vec::with_capacity(r + 1);
        for &d in &action.destinations {
            if d == target.stack || d >= stacks.len() || stacks[d].len() >= self.geometry.tiers {
                return Err(Error::BadChoice(format!("stack {d} cannot receive a container")));
            }
            let c = stacks[target.stack].pop().expect("blocker present");
            stacks[d].push(c);
            moves.push(Move {
                container: c,
                from: target.stack,
                to: Some(d),
            });
        }
        let c = stacks[target.stack].pop().expect("target present");
        moves.push(Move {
            container: c,
            from: target.stack,
            to: None,
        });
        Ok((
            Configuration {
                geometry: self.geometry,
                stacks,
            },
            moves,
        ))
    }

    /// Reveals the full order of the minimal-label group: `order[i]` receives label `k + i`.
    pub fn reveal_batch(&self, order: &[Slot]) -> Result<Configuration> {
        let group = self.min_group();
        if group.is_empty() {
            return Err(Error::BadPermutation("the bay is empty".into()));
        }
        let mut sorted = order.to_vec();
        sorted.sort();
        if sorted != group {
            return Err(Error::BadPermutation(
                "order must list every minimal-label container exactly once".into(),
            ));
        }
        let k = self.stacks[group[0].stack][group[0].tier].label;
        let mut stacks = self.stacks.clone();
        for (i, slot) in order.iter().enumerate() {
            stacks[slot.stack][slot.tier].label = k.offset(i as u32);
        }
        Ok(Configuration {
            geometry: self.geometry,
            stacks,
        })
    }

    /// Reveals only the next container of the minimal-label group: it keeps label `k`
    /// and the rest of the group moves to `k + 1`.
    pub fn reveal_next(&self, chosen: Slot) -> Result<Configuration> {
        let group = self.min_group();
        if !group.contains(&chosen) {
            return Err(Error::BadChoice(format!(
                "slot ({}, {}) does not hold a minimal-label container",
                chosen.stack, chosen.tier
            )));
        }
        let mut stacks = self.stacks.clone();
        for slot in group {
            if slot != chosen {
                stacks[slot.stack][slot.tier].label.0 += 1;
            }
        }
        Ok(Configuration {
            geometry: self.geometry,
            stacks,
        })
    }

    /// Removes `slot` and every container above it (used by look-ahead bounds).
    pub(crate) fn without_from(&self, slot: Slot) -> Configuration {
        let mut stacks = self.stacks.clone();
        stacks[slot.stack].truncate(slot.tier);
        Configuration {
            geometry: self.geometry,
            stacks,
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, stack) in self.stacks.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "[")?;
            for (j, c) in stack.iter().enumerate() {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", c.label)?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn stack_min(stack: &[Container]) -> u32 {
    stack.iter().map(|c| c.label.0).min().unwrap_or(EMPTY_STACK_MIN)
}

fn compare_stacks(a: &[Container], b: &[Container]) -> Ordering {
    a.len()
        .cmp(&b.len())
        .then_with(|| a.iter().map(|c| c.label).cmp(b.iter().map(|c| c.label)))
}

fn assign_blockers(
    blockers: &[Container],
    source: usize,
    tiers: usize,
    heights: &mut [usize],
    dests: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    if dests.len() == blockers.len() {
        emit(dests);
        return;
    }
    for d in 0..heights.len() {
        if d == source || heights[d] >= tiers {
            continue;
        }
        heights[d] += 1;
        dests.push(d);
        assign_blockers(blockers, source, tiers, heights, dests, emit);
        dests.pop();
        heights[d] -= 1;
    }
}
