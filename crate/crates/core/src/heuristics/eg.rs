use super::em_choice;
use crate::bay::{stack_min, Action, Configuration};
use crate::error::{Error, Result};

/// Assigns every blocker of the current target at once, in two passes.
///
/// Pass one handles blockers that some other stack can take without them
/// blocking again (its minimum, including pending assignments, exceeds the
/// label), highest label first; a blocker may not join a stack that already
/// received a container from below it. Pass two places the rest, lowest label
/// first, using a group index per stack: −1 when full, its minimum when nothing
/// is assigned, the label of a single assignee, 0 otherwise.
pub(super) fn plan(config: &Configuration) -> Result<Action> {
    let target = config.target()?;
    let source = target.stack;
    let tiers = config.geometry().tiers();
    let stack_count = config.geometry().stacks();
    // blockers top-down: index 0 is the top of the source stack
    let blockers: Vec<u32> = config.stack(source)[target.tier + 1..]
        .iter()
        .rev()
        .map(|c| c.label.0)
        .collect();
    let r = blockers.len();
    let heights: Vec<usize> = (0..stack_count).map(|s| config.height(s)).collect();
    let base_min: Vec<u32> = config.stacks().iter().map(|s| stack_min(s)).collect();
    let mut assigned: Vec<Option<usize>> = vec![None; r];
    let mut pending: Vec<Vec<u32>> = vec![Vec::new(); stack_count];

    let label_count = |s: usize, m: u32, pending: &[Vec<u32>]| {
        config.stack(s).iter().filter(|c| c.label.0 == m).count() + pending[s].iter().filter(|&&x| x == m).count()
    };

    // descending label, ties: higher tier (smaller top-down index) first
    let mut first: Vec<usize> = (0..r).collect();
    first.sort_by_key(|&i| (std::cmp::Reverse(blockers[i]), i));
    for i in first {
        let c = blockers[i];
        let candidates: Vec<usize> = (0..stack_count)
            .filter(|&s| s != source)
            .filter(|&s| heights[s] + pending[s].len() < tiers)
            .filter(|&s| !(i + 1..r).any(|j| assigned[j] == Some(s)))
            .filter(|&s| effective_min(base_min[s], &pending[s]) > c)
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let d = em_choice(
            &candidates,
            c,
            |s| effective_min(base_min[s], &pending[s]) as i64,
            |s| heights[s] + pending[s].len(),
            |s, m| label_count(s, m, &pending),
        );
        assigned[i] = Some(d);
        pending[d].push(c);
    }

    // ascending label, ties top-down
    let mut second: Vec<usize> = (0..r).filter(|&i| assigned[i].is_none()).collect();
    second.sort_by_key(|&i| (blockers[i], i));
    for i in second {
        let c = blockers[i];
        let candidates: Vec<usize> = (0..stack_count)
            .filter(|&s| s != source && heights[s] + pending[s].len() < tiers)
            .collect();
        if candidates.is_empty() {
            return Err(Error::NoFeasibleDestination { stack: source });
        }
        let d = em_choice(
            &candidates,
            c,
            |s| group_min(base_min[s], &pending[s], heights[s], tiers),
            |s| heights[s] + pending[s].len(),
            |s, m| label_count(s, m, &pending),
        );
        assigned[i] = Some(d);
        pending[d].push(c);
    }

    Ok(Action {
        source,
        destinations: assigned.into_iter().map(|d| d.expect("every blocker assigned")).collect(),
    })
}

fn effective_min(base: u32, pending: &[u32]) -> u32 {
    pending.iter().copied().fold(base, u32::min)
}

fn group_min(base: u32, pending: &[u32], height: usize, tiers: usize) -> i64 {
    if height + pending.len() >= tiers {
        -1
    } else {
        match pending {
            [] => base as i64,
            [only] => *only as i64,
            _ => 0,
        }
    }
}
