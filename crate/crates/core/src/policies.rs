//! Ordering policies and their rollouts on the segmentation MDP.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lspi::{greedy_action, PolicyWeights};
use crate::mdp::SegmentationEnv;
use crate::rng::{derive_seed, rng_from_seed, stream_of};
use crate::scene::ClassId;

/// Largest class set the optimal-combination search enumerates.
pub const MAX_OPTIMAL_CLASSES: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Lspi,
    Fixed,
    Random,
    Oracle,
    Optimal,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] =
        [PolicyKind::Lspi, PolicyKind::Fixed, PolicyKind::Random, PolicyKind::Oracle, PolicyKind::Optimal];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Lspi => "lspi",
            PolicyKind::Fixed => "fixed",
            PolicyKind::Random => "random",
            PolicyKind::Oracle => "oracle",
            PolicyKind::Optimal => "optimal",
        }
    }

    /// Oracle and optimal read the ground truth and are evaluation-only.
    pub fn uses_ground_truth(self) -> bool {
        matches!(self, PolicyKind::Oracle | PolicyKind::Optimal)
    }

    pub fn parse_list(list: &str) -> Result<Vec<PolicyKind>> {
        list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lspi" | "learned" => Ok(PolicyKind::Lspi),
            "fixed" => Ok(PolicyKind::Fixed),
            "random" => Ok(PolicyKind::Random),
            "oracle" => Ok(PolicyKind::Oracle),
            "optimal" => Ok(PolicyKind::Optimal),
            other => Err(Error::Invalid(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OrderingPolicy {
    /// Follows a class list (normally the frequency order).
    Fixed { order: Vec<ClassId> },
    /// Uniform order over `pool` (the action catalog when `None`), seeded per scene.
    Random { seed: u64, pool: Option<Vec<ClassId>> },
    /// Ground-truth-present classes of `order`, then no-ops. With `by_area`
    /// the present classes go by descending ground-truth area instead.
    Oracle { order: Vec<ClassId>, by_area: bool },
    /// ε-greedy on LSPI weights, seeded per scene.
    Learned { weights: PolicyWeights, epsilon: f64, seed: u64 },
    /// Best reward reachable with at most `k` placements from `classes`, for
    /// every `k`; the actions are those of the final value.
    Optimal { classes: Vec<ClassId> },
}

impl OrderingPolicy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            OrderingPolicy::Fixed { .. } => PolicyKind::Fixed,
            OrderingPolicy::Random { .. } => PolicyKind::Random,
            OrderingPolicy::Oracle { .. } => PolicyKind::Oracle,
            OrderingPolicy::Learned { .. } => PolicyKind::Lspi,
            OrderingPolicy::Optimal { .. } => PolicyKind::Optimal,
        }
    }
}

/// Actions chosen (`None` for a no-op) and the reward after each.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub actions: Vec<Option<ClassId>>,
    pub curve: Vec<f64>,
}

impl Rollout {
    /// Classes placed among the first `k` actions.
    pub fn placed(&self, k: usize) -> Vec<ClassId> {
        self.actions.iter().take(k).flatten().copied().collect()
    }
}

fn action_indices(env: &SegmentationEnv, classes: &[ClassId]) -> Result<Vec<usize>> {
    classes
        .iter()
        .map(|&c| env.actions.index_of(c).ok_or_else(|| Error::Invalid(format!("class {c} is not in the action catalog"))))
        .collect()
}

/// Plays `sequence` then pads with no-ops to `n` steps.
fn play(env: &SegmentationEnv, episode: usize, sequence: &[usize], n: usize) -> Result<Rollout> {
    let sequence = &sequence[..sequence.len().min(n)];
    let mut curve = env.evaluate_sequence(episode, sequence)?;
    let mut actions: Vec<Option<ClassId>> = sequence.iter().map(|&a| Some(env.actions.class(a))).collect();
    let last = match curve.last() {
        Some(&v) => v,
        None => env.initial_state(episode)?.value,
    };
    curve.resize(n, last);
    actions.resize(n, None);
    Ok(Rollout { actions, curve })
}

/// Rolls `policy` out for `n` actions on scene `episode` of `env`.
pub fn rollout(policy: &OrderingPolicy, env: &SegmentationEnv, episode: usize, n: usize) -> Result<Rollout> {
    if n > env.actions.len() {
        return Err(Error::Invalid(format!("{n} actions requested from a {}-action catalog", env.actions.len())));
    }
    let scene = env
        .scenes
        .get(episode)
        .ok_or_else(|| Error::Invalid(format!("episode {episode} outside {} scenes", env.scenes.len())))?;
    match policy {
        OrderingPolicy::Fixed { order } => play(env, episode, &action_indices(env, order)?, n),
        OrderingPolicy::Random { seed, pool } => {
            let mut seq = match pool {
                Some(p) => action_indices(env, p)?,
                None => (0..env.actions.len()).collect(),
            };
            let mut rng = rng_from_seed(derive_seed(*seed, stream_of(&scene.scene_id)));
            seq.shuffle(&mut rng);
            play(env, episode, &seq, n)
        }
        OrderingPolicy::Oracle { order, by_area } => {
            let mut present: Vec<usize> =
                action_indices(env, order)?.into_iter().filter(|&a| scene.gt.contains_class(env.actions.class(a))).collect();
            if *by_area {
                let area = |a: usize| scene.gt.labels().iter().filter(|&&l| l == env.actions.class(a)).count();
                present.sort_by_key(|&a| std::cmp::Reverse(area(a)));
            }
            play(env, episode, &present, n)
        }
        OrderingPolicy::Learned { weights, epsilon, seed } => {
            use crate::lspi::Environment;
            let mut rng = rng_from_seed(derive_seed(*seed, stream_of(&scene.scene_id)));
            let mut state = env.reset(episode)?;
            let mut seq = Vec::with_capacity(n);
            for _ in 0..n {
                let a = greedy_action(env, &state, weights, *epsilon, &mut rng)?;
                state = env.step(&state, a)?.0;
                seq.push(a);
            }
            play(env, episode, &seq, n)
        }
        OrderingPolicy::Optimal { classes } => {
            let search = optimal_search(env, episode, classes)?;
            let mut best: (&[ClassId], f64) = (&[], search.empty_value);
            let mut curve = Vec::with_capacity(n);
            for k in 0..n {
                if let Some((seq, v)) = search.best_by_length.get(k) {
                    if *v > best.1 {
                        best = (seq, *v);
                    }
                }
                curve.push(best.1);
            }
            let mut actions: Vec<Option<ClassId>> = best.0.iter().map(|&c| Some(c)).collect();
            actions.resize(n, None);
            Ok(Rollout { actions, curve })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalSearch {
    /// Best full-length permutation and its reward.
    pub best: (Vec<ClassId>, f64),
    /// For each length `k = 1..=K`, the best ordered `k`-subset and its reward.
    pub best_by_length: Vec<(Vec<ClassId>, f64)>,
    /// Full permutations evaluated.
    pub evaluations: usize,
    /// Reward before any action.
    pub empty_value: f64,
}

/// Exhaustive search over orderings of `classes` (at most
/// [`MAX_OPTIMAL_CLASSES`]). Candidates are visited in lexicographic order of
/// class ids and only a strictly better reward replaces the incumbent, so
/// ties go to the lexicographically smallest sequence.
pub fn optimal_search(env: &SegmentationEnv, episode: usize, classes: &[ClassId]) -> Result<OptimalSearch> {
    if classes.len() > MAX_OPTIMAL_CLASSES {
        return Err(Error::Invalid(format!(
            "{} classes for the optimal search, at most {MAX_OPTIMAL_CLASSES} allowed",
            classes.len()
        )));
    }
    let mut sorted = classes.to_vec();
    sorted.sort();
    let indices = action_indices(env, &sorted)?;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::Invalid(format!("class {} repeated in the optimal search", w[0])));
        }
    }
    let root = env.initial_state(episode)?;
    let mut best_by_length: Vec<Option<(Vec<usize>, f64)>> = vec![None; sorted.len()];
    let mut evaluations = 0;
    let mut prefix = Vec::with_capacity(sorted.len());
    let mut stack = vec![(root, 0usize)];
    // iterative DFS; each frame remembers which candidate to try next
    while let Some((state, next)) = stack.pop() {
        let depth = prefix.len();
        if depth == sorted.len() {
            evaluations += 1;
            prefix.pop();
            continue;
        }
        let Some(k) = (next..sorted.len()).find(|&k| !prefix.contains(&k)) else {
            prefix.pop();
            continue;
        };
        let (child, _) = env.step_episode(episode, &state, indices[k])?;
        stack.push((state, k + 1));
        prefix.push(k);
        let slot = &mut best_by_length[depth];
        if slot.as_ref().is_none_or(|(_, v)| child.value > *v) {
            *slot = Some((prefix.clone(), child.value));
        }
        stack.push((child, 0));
    }
    let to_classes = |p: &[usize]| p.iter().map(|&k| sorted[k]).collect::<Vec<_>>();
    let best_by_length: Vec<(Vec<ClassId>, f64)> =
        best_by_length.into_iter().flatten().map(|(p, v)| (to_classes(&p), v)).collect();
    let empty_value = env.initial_state(episode)?.value;
    let best = best_by_length.last().cloned().unwrap_or((Vec::new(), empty_value));
    Ok(OptimalSearch { best, best_by_length, evaluations: evaluations.max(usize::from(sorted.is_empty())), empty_value })
}

/// Best permutation of `classes` and its full-sequence reward.
pub fn optimal_combination(env: &SegmentationEnv, episode: usize, classes: &[ClassId]) -> Result<(Vec<ClassId>, f64)> {
    Ok(optimal_search(env, episode, classes)?.best)
}
