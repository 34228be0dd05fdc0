//! The sequential-segmentation MDP: belief state, block featurization,
//! belief updates from component scores, and episode stepping.
//!
//! The feature vector for `(s, a)` has one block of `1 + 2K` slots per
//! action; only block `a` is nonzero and holds
//! `[prior_a, P_1..P_K, U_1..U_K]` where `P_i` is the belief that class `i`
//! is present and `U_i` its binary entropy in bits.

use serde::{Deserialize, Serialize};

use crate::classifiers::PresenceScorer;
use crate::combiner::LabelCanvas;
use crate::error::{Error, Result};
use crate::lspi::{Environment, SparseFeatures};
use crate::metrics::{reward_from_counts, ConfusionCounts};
use crate::scene::{connected_components, BinaryMask, ClassCatalog, ClassId, Connectivity, LabelMap, Scene};

/// Binary entropy in bits with `0 log 0 = 0`.
pub fn entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("probability {p} outside [0,1]")));
    }
    let h = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    Ok(h(p) + h(1.0 - p))
}

/// Object classes eligible as actions, in a fixed order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCatalog {
    classes: Vec<ClassId>,
}

impl ActionCatalog {
    pub fn new(classes: Vec<ClassId>, catalog: &ClassCatalog) -> Result<Self> {
        for (i, c) in classes.iter().enumerate() {
            if c.is_void() || catalog.is_background(*c) || !catalog.contains(*c) {
                return Err(Error::Invalid(format!("action class {c} is not an object class")));
            }
            if classes[..i].contains(c) {
                return Err(Error::Invalid(format!("action class {c} listed twice")));
            }
        }
        Ok(Self { classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn class(&self, action: usize) -> ClassId {
        self.classes[action]
    }

    pub fn index_of(&self, class: ClassId) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    /// One per action.
    pub priors: Vec<f64>,
    /// One per belief class.
    pub beliefs: Vec<f64>,
    pub uncertainties: Vec<f64>,
    /// Actions taken so far, in order.
    pub observed: Vec<usize>,
}

impl BeliefState {
    pub fn new(priors: Vec<f64>, beliefs: Vec<f64>) -> Result<Self> {
        if priors.iter().chain(&beliefs).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invalid("priors and beliefs must lie in [0,1]".into()));
        }
        let uncertainties = beliefs.iter().map(|&p| entropy(p)).collect::<Result<_>>()?;
        Ok(Self { priors, beliefs, uncertainties, observed: Vec::new() })
    }

    pub fn action_count(&self) -> usize {
        self.priors.len()
    }

    pub fn class_count(&self) -> usize {
        self.beliefs.len()
    }

    pub fn block_len(&self) -> usize {
        1 + 2 * self.class_count()
    }

    pub fn feature_dim(&self) -> usize {
        self.action_count() * self.block_len()
    }

    pub fn remaining(&self) -> Vec<usize> {
        (0..self.action_count()).filter(|a| !self.observed.contains(a)).collect()
    }

    /// The nonzero block of ψ(s, a) as `(index, value)` pairs (zeros inside
    /// the block included).
    pub fn featurize_sparse(&self, action: usize) -> Result<SparseFeatures> {
        if action >= self.action_count() {
            return Err(Error::Invalid(format!("action {action} outside a {}-action catalog", self.action_count())));
        }
        let base = action * self.block_len();
        let mut out = Vec::with_capacity(self.block_len());
        out.push((base, self.priors[action]));
        for (k, &p) in self.beliefs.iter().enumerate() {
            out.push((base + 1 + k, p));
        }
        for (k, &u) in self.uncertainties.iter().enumerate() {
            out.push((base + 1 + self.class_count() + k, u));
        }
        Ok(out)
    }

    pub fn featurize(&self, action: usize) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.feature_dim()];
        for (i, x) in self.featurize_sparse(action)? {
            v[i] = x;
        }
        Ok(v)
    }

    /// Marks `action` taken and, when it maps to belief class `class_index`,
    /// sets that belief to `score`. Every other belief is left untouched.
    pub fn observe(&mut self, action: usize, class_index: Option<usize>, score: f64) -> Result<()> {
        if action >= self.action_count() {
            return Err(Error::Invalid(format!("action {action} outside a {}-action catalog", self.action_count())));
        }
        if self.observed.contains(&action) {
            return Err(Error::RepeatedAction(action as u16));
        }
        if let Some(k) = class_index {
            let u = entropy(score)?;
            self.beliefs[k] = score;
            self.uncertainties[k] = u;
        }
        self.observed.push(action);
        Ok(())
    }
}

/// Highest presence score over the 4-connected components of `mask`; 0 for an
/// empty mask.
pub fn component_belief(scene: &Scene, mask: &BinaryMask, class: ClassId, scorer: &PresenceScorer) -> Result<f64> {
    let mut best = 0.0f64;
    for comp in connected_components(mask, Connectivity::Four).components {
        best = best.max(scorer.score(scene, class, &comp)?);
    }
    Ok(best)
}

/// Everything the environment needs about one action on one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    /// MAP mask as sorted raster indices.
    pub pixels: Vec<usize>,
    /// Prior slot of the feature block.
    pub prior: f64,
    /// Belief after taking the action.
    pub presence: f64,
}

/// Precomputed inputs for the episodes of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneEpisode {
    pub scene_id: String,
    pub category: String,
    pub gt: LabelMap,
    /// Canvas with the wall, floor and ceiling masks already placed.
    pub background: LabelCanvas,
    /// Indexed like the action catalog.
    pub outcomes: Vec<ActionOutcome>,
    /// Indexed like the belief classes.
    pub initial_beliefs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Reward of the whole canvas after the step.
    #[default]
    Cumulative,
    /// Change of that value caused by the step.
    Marginal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdpState {
    pub belief: BeliefState,
    pub canvas: LabelCanvas,
    /// Cumulative reward of the current canvas.
    pub value: f64,
}

/// One step of an episode, for JSON-lines traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub scene_id: String,
    pub step: usize,
    pub action: ClassId,
    pub features: SparseFeatures,
    pub reward: f64,
    pub beliefs_after: Vec<f64>,
    pub remaining_after: Vec<ClassId>,
}

/// The MDP over a set of scenes; episode `e` runs on scene `e`.
#[derive(Clone, Debug)]
pub struct SegmentationEnv {
    pub catalog: ClassCatalog,
    pub actions: ActionCatalog,
    pub belief_classes: Vec<ClassId>,
    belief_index: Vec<Option<usize>>,
    pub scenes: Vec<SceneEpisode>,
    pub reward_mode: RewardMode,
}

impl SegmentationEnv {
    pub fn new(
        catalog: ClassCatalog,
        actions: ActionCatalog,
        belief_classes: Vec<ClassId>,
        scenes: Vec<SceneEpisode>,
        reward_mode: RewardMode,
    ) -> Result<Self> {
        for s in &scenes {
            if s.outcomes.len() != actions.len() || s.initial_beliefs.len() != belief_classes.len() {
                return Err(Error::DimensionMismatch(format!(
                    "scene {} has {} outcomes and {} beliefs for {} actions and {} classes",
                    s.scene_id,
                    s.outcomes.len(),
                    s.initial_beliefs.len(),
                    actions.len(),
                    belief_classes.len()
                )));
            }
        }
        let belief_index = actions.classes().iter().map(|c| belief_classes.iter().position(|b| b == c)).collect();
        Ok(Self { catalog, actions, belief_classes, belief_index, scenes, reward_mode })
    }

    /// Same models, different scenes.
    pub fn with_scenes(&self, scenes: Vec<SceneEpisode>) -> Self {
        Self { scenes, ..self.clone() }
    }

    pub fn initial_state(&self, episode: usize) -> Result<MdpState> {
        let s = self
            .scenes
            .get(episode)
            .ok_or_else(|| Error::Invalid(format!("episode {episode} outside {} scenes", self.scenes.len())))?;
        let belief = BeliefState::new(s.outcomes.iter().map(|o| o.prior).collect(), s.initial_beliefs.clone())?;
        let value = self.canvas_reward(episode, &s.background, &[])?;
        Ok(MdpState { belief, canvas: s.background.clone(), value })
    }

    fn canvas_reward(&self, episode: usize, canvas: &LabelCanvas, taken: &[usize]) -> Result<f64> {
        let counts = ConfusionCounts::new(canvas.assignment(), &self.scenes[episode].gt, self.catalog.len())?;
        let classes: Vec<ClassId> = taken.iter().map(|&a| self.actions.class(a)).collect();
        Ok(reward_from_counts(&counts, &classes, &self.catalog).total)
    }

    /// Takes `action` in `state` on scene `episode`; returns the successor and
    /// the step reward.
    pub fn step_episode(&self, episode: usize, state: &MdpState, action: usize) -> Result<(MdpState, f64)> {
        if state.belief.remaining().is_empty() {
            return Err(Error::EpisodeComplete);
        }
        let outcome = &self.scenes[episode].outcomes[action];
        let mut next = state.clone();
        next.belief.observe(action, self.belief_index[action], outcome.presence)?;
        next.canvas.place_pixels(&outcome.pixels, self.actions.class(action))?;
        next.value = self.canvas_reward(episode, &next.canvas, &next.belief.observed)?;
        let r = match self.reward_mode {
            RewardMode::Cumulative => next.value,
            RewardMode::Marginal => next.value - state.value,
        };
        Ok((next, r))
    }

    /// Cumulative reward after each action of `sequence`.
    pub fn evaluate_sequence(&self, episode: usize, sequence: &[usize]) -> Result<Vec<f64>> {
        let mut state = self.initial_state(episode)?;
        let mut out = Vec::with_capacity(sequence.len());
        for &a in sequence {
            state = self.step_episode(episode, &state, a)?.0;
            out.push(state.value);
        }
        Ok(out)
    }

    /// Runs `sequence` and records every step.
    pub fn trace(&self, episode: usize, sequence: &[usize]) -> Result<Vec<TransitionSample>> {
        let mut state = self.initial_state(episode)?;
        let mut out = Vec::new();
        for (step, &a) in sequence.iter().enumerate() {
            let features = state.belief.featurize_sparse(a)?;
            let (next, r) = self.step_episode(episode, &state, a)?;
            out.push(TransitionSample {
                scene_id: self.scenes[episode].scene_id.clone(),
                step,
                action: self.actions.class(a),
                features,
                reward: r,
                beliefs_after: next.belief.beliefs.clone(),
                remaining_after: next.belief.remaining().iter().map(|&b| self.actions.class(b)).collect(),
            });
            state = next;
        }
        Ok(out)
    }
}

/// Environment view with the episode index carried in the state.
impl Environment for SegmentationEnv {
    type State = (usize, MdpState);

    fn feature_dim(&self) -> usize {
        self.actions.len() * (1 + 2 * self.belief_classes.len())
    }

    fn episodes(&self) -> usize {
        self.scenes.len()
    }

    fn reset(&self, episode: usize) -> Result<Self::State> {
        Ok((episode, self.initial_state(episode)?))
    }

    fn actions(&self, state: &Self::State) -> Vec<usize> {
        state.1.belief.remaining()
    }

    fn features(&self, state: &Self::State, action: usize) -> Result<SparseFeatures> {
        state.1.belief.featurize_sparse(action)
    }

    fn step(&self, state: &Self::State, action: usize) -> Result<(Self::State, f64)> {
        let (next, r) = self.step_episode(state.0, &state.1, action)?;
        Ok(((state.0, next), r))
    }
}
