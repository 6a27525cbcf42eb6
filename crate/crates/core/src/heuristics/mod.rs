//! Destination rules for blocking containers and evaluators that score them.

mod eg;
mod evaluate;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::bay::{stack_min, Action, Configuration, Container, EMPTY_STACK_MIN};
use crate::error::{Error, Result};

pub use evaluate::{exact_policy_value, exact_policy_value_with, simulate_policy, SimulationReport, DEFAULT_SAMPLES};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    /// Uniformly random legal stack.
    Random,
    /// Lowest stack, leftmost on ties.
    Leveling,
    /// Fewest containers expected to leave earlier than the blocker.
    ExpectedReshuffleIndex,
    /// Smallest stack minimum above the blocker, else the largest minimum.
    ExpectedMinMax,
    /// Plans all blockers of a retrieval together, placing the ones that can
    /// be put on a later-leaving stack first.
    ExpectedGroup,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::ExpectedGroup,
        Policy::ExpectedMinMax,
        Policy::ExpectedReshuffleIndex,
        Policy::Leveling,
        Policy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::Leveling => "leveling",
            Policy::ExpectedReshuffleIndex => "eri",
            Policy::ExpectedMinMax => "em",
            Policy::ExpectedGroup => "eg",
        }
    }

    pub fn is_deterministic(self) -> bool {
        self != Policy::Random
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Policy::Random),
            "leveling" | "l" => Ok(Policy::Leveling),
            "eri" => Ok(Policy::ExpectedReshuffleIndex),
            "em" => Ok(Policy::ExpectedMinMax),
            "eg" => Ok(Policy::ExpectedGroup),
            other => Err(Error::Unsupported(format!("unknown policy `{other}`"))),
        }
    }
}

/// Destination for the top container of `source`.
///
/// For [`Policy::ExpectedGroup`], `source` must hold the current target and the
/// answer is the first step of the plan for the whole retrieval.
pub fn choose_destination<R: Rng + ?Sized>(
    policy: Policy,
    config: &Configuration,
    source: usize,
    rng: &mut R,
) -> Result<usize> {
    let blocker = *config
        .stack(source)
        .last()
        .ok_or(Error::NoFeasibleDestination { stack: source })?;
    match policy {
        Policy::ExpectedGroup => {
            let plan = eg::plan(config)?;
            if plan.source != source || plan.destinations.is_empty() {
                return Err(Error::BadChoice(format!(
                    "stack {source} has no container blocking the target"
                )));
            }
            Ok(plan.destinations[0])
        }
        _ => single_choice(policy, config.stacks(), config.geometry().tiers(), source, blocker, rng),
    }
}

/// The policy's full action for the next retrieval of a decision node.
pub fn plan_retrieval<R: Rng + ?Sized>(policy: Policy, config: &Configuration, rng: &mut R) -> Result<Action> {
    if policy == Policy::ExpectedGroup {
        return eg::plan(config);
    }
    let target = config.target()?;
    let tiers = config.geometry().tiers();
    let mut stacks: Vec<Vec<Container>> = config.stacks().to_vec();
    let mut destinations = Vec::new();
    while stacks[target.stack].len() > target.tier + 1 {
        let blocker = *stacks[target.stack].last().expect("blocker");
        let d = single_choice(policy, &stacks, tiers, target.stack, blocker, rng)?;
        stacks[target.stack].pop();
        stacks[d].push(blocker);
        destinations.push(d);
    }
    Ok(Action {
        source: target.stack,
        destinations,
    })
}

fn single_choice<R: Rng + ?Sized>(
    policy: Policy,
    stacks: &[Vec<Container>],
    tiers: usize,
    source: usize,
    blocker: Container,
    rng: &mut R,
) -> Result<usize> {
    let legal: Vec<usize> = (0..stacks.len())
        .filter(|&s| s != source && stacks[s].len() < tiers)
        .collect();
    if legal.is_empty() {
        return Err(Error::NoFeasibleDestination { stack: source });
    }
    let c = blocker.label.0;
    let height = |s: usize| stacks[s].len();
    let pick = match policy {
        Policy::Random => legal[rng.random_range(0..legal.len())],
        Policy::Leveling => *legal.iter().min_by_key(|&&s| (height(s), s)).unwrap(),
        Policy::ExpectedReshuffleIndex => *legal
            .iter()
            .min_by_key(|&&s| (eri_doubled(&stacks[s], c), std::cmp::Reverse(height(s)), s))
            .unwrap(),
        Policy::ExpectedMinMax => {
            let mins: Vec<u32> = stacks.iter().map(|s| stack_min(s)).collect();
            em_choice(&legal, c, |s| mins[s] as i64, height, |s, m| count_label(&stacks[s], m))
        }
        Policy::ExpectedGroup => unreachable!("planned per retrieval"),
    };
    Ok(pick)
}

/// Twice the expected number of containers in `stack` leaving before label `c`.
fn eri_doubled(stack: &[Container], c: u32) -> u32 {
    stack
        .iter()
        .map(|x| match x.label.0.cmp(&c) {
            std::cmp::Ordering::Less => 2,
            std::cmp::Ordering::Equal => 1,
            std::cmp::Ordering::Greater => 0,
        })
        .sum()
}

fn count_label(stack: &[Container], label: u32) -> usize {
    stack.iter().filter(|x| x.label.0 == label).count()
}

/// Expected-min-max selection over `candidates` given per-stack indices.
///
/// Rule 1 takes the smallest index above `c`; otherwise rule 2 takes the largest
/// index, preferring fewer containers carrying it. Remaining ties go to the
/// higher stack, then the leftmost. `index` may be negative for ineligible stacks.
pub(crate) fn em_choice<I, H, N>(candidates: &[usize], c: u32, index: I, height: H, holders: N) -> usize
where
    I: Fn(usize) -> i64,
    H: Fn(usize) -> usize,
    N: Fn(usize, u32) -> usize,
{
    let c = c as i64;
    let above: Vec<usize> = candidates.iter().copied().filter(|&s| index(s) > c).collect();
    if !above.is_empty() {
        return *above
            .iter()
            .min_by_key(|&&s| (index(s), std::cmp::Reverse(height(s)), s))
            .unwrap();
    }
    *candidates
        .iter()
        .min_by_key(|&&s| {
            let m = index(s);
            let holders = if m >= 0 && m < EMPTY_STACK_MIN as i64 { holders(s, m as u32) } else { 0 };
            (std::cmp::Reverse(m), holders, std::cmp::Reverse(height(s)), s)
        })
        .unwrap()
}
