//! Least-squares policy iteration with linear Q-functions over sparse
//! features.
//!
//! Each sample `(φ(s,a), r, s')` adds `φ (φ - γ φ(s', π(s')))ᵀ` to `C` and
//! `φ r` to `b`, where `π(s')` is greedy under the current weights and a
//! terminal `s'` contributes no successor features. The next weights solve
//! `(C + λI) w = b`.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed2, rng_from_seed, SeededRng};

/// `(index, value)` pairs with distinct indices.
pub type SparseFeatures = Vec<(usize, f64)>;

pub fn dot(w: &[f64], phi: &[(usize, f64)]) -> f64 {
    phi.iter().map(|&(i, v)| w[i] * v).sum()
}

/// An episodic environment LSPI can sample from. Actions are indices into a
/// fixed action list.
pub trait Environment: Sync {
    type State: Clone + Send + Sync;

    fn feature_dim(&self) -> usize;
    /// Number of distinct start states; one episode is run from each.
    fn episodes(&self) -> usize;
    fn reset(&self, episode: usize) -> Result<Self::State>;
    /// Actions available in `state`, ascending. Empty means terminal.
    fn actions(&self, state: &Self::State) -> Vec<usize>;
    fn features(&self, state: &Self::State, action: usize) -> Result<SparseFeatures>;
    fn step(&self, state: &Self::State, action: usize) -> Result<(Self::State, f64)>;
}

/// One transition with the features of every action available afterwards,
/// so the greedy successor can be re-evaluated under new weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: SparseFeatures,
    pub reward: f64,
    /// Empty when the successor is terminal.
    pub successors: Vec<(usize, SparseFeatures)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyWeights {
    pub weights: Vec<f64>,
}

impl PolicyWeights {
    pub fn zeros(dim: usize) -> Self {
        Self { weights: vec![0.0; dim] }
    }

    pub fn q(&self, phi: &[(usize, f64)]) -> f64 {
        dot(&self.weights, phi)
    }
}

/// Greedy successor features: highest Q, ties to the earliest listed action.
fn greedy_successor<'a>(w: &[f64], successors: &'a [(usize, SparseFeatures)]) -> Option<&'a SparseFeatures> {
    let mut best: Option<(f64, &SparseFeatures)> = None;
    for (_, phi) in successors {
        let q = dot(w, phi);
        if best.is_none_or(|(b, _)| q > b) {
            best = Some((q, phi));
        }
    }
    best.map(|(_, phi)| phi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LspiAccumulator {
    pub c: DMatrix<f64>,
    pub b: DVector<f64>,
    pub samples: usize,
}

impl LspiAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { c: DMatrix::zeros(dim, dim), b: DVector::zeros(dim), samples: 0 }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Adds one sample, choosing its successor action greedily under `w`.
    pub fn accumulate(&mut self, sample: &Sample, w: &[f64], gamma: f64) -> Result<()> {
        let dim = self.dim();
        if w.len() != dim {
            return Err(Error::DimensionMismatch(format!("weights have {} entries, features {dim}", w.len())));
        }
        let out_of_range = |phi: &[(usize, f64)]| phi.iter().any(|&(i, _)| i >= dim);
        if out_of_range(&sample.features) || sample.successors.iter().any(|(_, p)| out_of_range(p)) {
            return Err(Error::DimensionMismatch(format!("feature index outside dimension {dim}")));
        }
        let mut diff: SparseFeatures = sample.features.clone();
        if let Some(next) = greedy_successor(w, &sample.successors) {
            for &(j, v) in next {
                match diff.iter_mut().find(|(k, _)| *k == j) {
                    Some(e) => e.1 -= gamma * v,
                    None => diff.push((j, -gamma * v)),
                }
            }
        }
        for &(i, vi) in &sample.features {
            for &(j, vj) in &diff {
                self.c[(i, j)] += vi * vj;
            }
            self.b[i] += vi * sample.reward;
        }
        self.samples += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &LspiAccumulator) {
        self.c += &other.c;
        self.b += &other.b;
        self.samples += other.samples;
    }

    /// Solves `(C + λI) w = b`.
    pub fn solve(&self, lambda: f64) -> Result<PolicyWeights> {
        if self.samples == 0 {
            return Err(Error::Invalid("no samples accumulated".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Invalid(format!("ridge lambda {lambda} must be finite and >= 0")));
        }
        let dim = self.dim();
        let a = &self.c + DMatrix::identity(dim, dim) * lambda;
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular);
        }
        let w = lu.solve(&self.b).ok_or(Error::Singular)?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular);
        }
        Ok(PolicyWeights { weights: w.iter().copied().collect() })
    }
}

/// ε-greedy choice among `actions` given their Q values (same order). The
/// exploit branch takes the highest Q, ties to the earliest action.
pub fn select_action(actions: &[usize], q: &[f64], epsilon: f64, rng: &mut SeededRng) -> Result<usize> {
    if actions.is_empty() {
        return Err(Error::EpisodeComplete);
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Invalid(format!("epsilon {epsilon} outside [0,1]")));
    }
    if actions.len() == 1 {
        return Ok(actions[0]);
    }
    if rng.random::<f64>() < epsilon {
        return Ok(actions[rng.random_range(0..actions.len())]);
    }
    let mut best = 0;
    for k in 1..actions.len() {
        if q[k] > q[best] {
            best = k;
        }
    }
    Ok(actions[best])
}

/// ε-greedy action for `state` under `w`.
pub fn greedy_action<E: Environment>(
    env: &E,
    state: &E::State,
    w: &PolicyWeights,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<usize> {
    let actions = env.actions(state);
    let q = actions
        .iter()
        .map(|&a| Ok(w.q(&env.features(state, a)?)))
        .collect::<Result<Vec<_>>>()?;
    select_action(&actions, &q, epsilon, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LspiConfig {
    pub gamma: f64,
    pub iterations: usize,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub test_epsilon: f64,
    pub lambda: f64,
    /// Episode length cap; `None` runs until no action is left. The last
    /// step before the cap still bootstraps from its successor.
    pub horizon: Option<usize>,
    /// Accumulate over every sample generated so far instead of only the
    /// current iteration's.
    pub reuse_samples: bool,
    /// Sequential accumulation in episode order (bitwise reproducible).
    pub deterministic: bool,
    pub seed: u64,
}

impl Default for LspiConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            iterations: 10,
            epsilon0: 1.0,
            epsilon_decay: 0.7,
            epsilon_floor: 0.1,
            test_epsilon: 0.005,
            lambda: 1e-6,
            horizon: None,
            reuse_samples: false,
            deterministic: true,
            seed: 0,
        }
    }
}

impl LspiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Invalid(format!("gamma {} outside [0,1)", self.gamma)));
        }
        for (name, e) in [
            ("epsilon0", self.epsilon0),
            ("epsilon_floor", self.epsilon_floor),
            ("test_epsilon", self.test_epsilon),
            ("epsilon_decay", self.epsilon_decay),
        ] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Invalid(format!("{name} {e} outside [0,1]")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!("lambda {} must be >= 0", self.lambda)));
        }
        Ok(())
    }

    /// `max(floor, ε0 · decay^t)`.
    pub fn epsilon(&self, iteration: usize) -> f64 {
        (self.epsilon0 * self.epsilon_decay.powi(iteration as i32)).max(self.epsilon_floor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub epsilon: f64,
    /// Mean over episodes of the per-step mean reward.
    pub mean_reward: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub weights: PolicyWeights,
    pub diagnostics: Vec<IterationStats>,
}

/// Runs one ε-greedy episode and returns its samples and rewards.
pub fn rollout_samples<E: Environment>(
    env: &E,
    episode: usize,
    w: &PolicyWeights,
    epsilon: f64,
    horizon: Option<usize>,
    rng: &mut SeededRng,
) -> Result<(Vec<Sample>, Vec<f64>)> {
    let mut state = env.reset(episode)?;
    let (mut samples, mut rewards) = (Vec::new(), Vec::new());
    let mut actions = env.actions(&state);
    let mut phis: Vec<(usize, SparseFeatures)> =
        actions.iter().map(|&a| Ok((a, env.features(&state, a)?))).collect::<Result<_>>()?;
    while !actions.is_empty() && horizon.is_none_or(|h| samples.len() < h) {
        let q: Vec<f64> = phis.iter().map(|(_, p)| w.q(p)).collect();
        let a = select_action(&actions, &q, epsilon, rng)?;
        let phi = phis.iter().find(|(b, _)| *b == a).expect("chosen action listed").1.clone();
        let (next, r) = env.step(&state, a)?;
        state = next;
        actions = env.actions(&state);
        phis = actions.iter().map(|&a| Ok((a, env.features(&state, a)?))).collect::<Result<_>>()?;
        // a horizon cut is not a terminal state: keep bootstrapping
        samples.push(Sample { features: phi, reward: r, successors: phis.clone() });
        rewards.push(r);
    }
    Ok((samples, rewards))
}

pub fn train<E: Environment>(env: &E, config: &LspiConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let dim = env.feature_dim();
    let mut w = PolicyWeights::zeros(dim);
    let mut diagnostics = Vec::new();
    let mut kept: Vec<Sample> = Vec::new();
    for t in 0..config.iterations {
        let epsilon = config.epsilon(t);
        let episodes: Vec<(Vec<Sample>, Vec<f64>)> = (0..env.episodes())
            .into_par_iter()
            .map(|e| {
                let mut rng = rng_from_seed(derive_seed2(config.seed, t as u64, e as u64));
                rollout_samples(env, e, &w, epsilon, config.horizon, &mut rng)
            })
            .collect::<Result<_>>()?;
        let per_episode: Vec<f64> = episodes
            .iter()
            .filter(|(_, r)| !r.is_empty())
            .map(|(_, r)| r.iter().sum::<f64>() / r.len() as f64)
            .collect();
        let mean_reward =
            if per_episode.is_empty() { 0.0 } else { per_episode.iter().sum::<f64>() / per_episode.len() as f64 };
        let fresh: Vec<Sample> = episodes.into_iter().flat_map(|(s, _)| s).collect();
        diagnostics.push(IterationStats { iteration: t, epsilon, mean_reward, samples: fresh.len() });
        if config.reuse_samples {
            kept.extend(fresh);
        } else {
            kept = fresh;
        }
        if kept.is_empty() {
            break;
        }
        let acc = if config.deterministic {
            let mut acc = LspiAccumulator::new(dim);
            for s in &kept {
                acc.accumulate(s, &w.weights, config.gamma)?;
            }
            acc
        } else {
            kept.par_chunks(256)
                .map(|chunk| {
                    let mut acc = LspiAccumulator::new(dim);
                    for s in chunk {
                        acc.accumulate(s, &w.weights, config.gamma)?;
                    }
                    Ok::<_, Error>(acc)
                })
                .try_reduce(|| LspiAccumulator::new(dim), |mut a, b| {
                    a.merge(&b);
                    Ok(a)
                })?
        };
        w = acc.solve(config.lambda)?;
    }
    Ok(TrainOutcome { weights: w, diagnostics })
}

/// Deterministic chain: states `0..n`, action 0 moves left, 1 moves right
/// (walls hold in place), reward `rewards[s']` on arrival. Tabular one-hot
/// features over (state, action). Used as a known-answer environment.
#[derive(Clone, Debug)]
pub struct ChainMdp {
    pub rewards: Vec<f64>,
}

impl ChainMdp {
    pub fn next_state(&self, s: usize, a: usize) -> usize {
        if a == 0 {
            s.saturating_sub(1)
        } else {
            (s + 1).min(self.rewards.len() - 1)
        }
    }

    /// Optimal greedy action per state by value iteration.
    pub fn value_iteration(&self, gamma: f64) -> Vec<usize> {
        let n = self.rewards.len();
        let mut v = vec![0.0; n];
        for _ in 0..2000 {
            v = (0..n)
                .map(|s| (0..2).map(|a| self.q_of(&v, s, a, gamma)).fold(f64::NEG_INFINITY, f64::max))
                .collect();
        }
        (0..n)
            .map(|s| if self.q_of(&v, s, 1, gamma) > self.q_of(&v, s, 0, gamma) { 1 } else { 0 })
            .collect()
    }

    fn q_of(&self, v: &[f64], s: usize, a: usize, gamma: f64) -> f64 {
        let t = self.next_state(s, a);
        self.rewards[t] + gamma * v[t]
    }
}

impl Environment for ChainMdp {
    type State = usize;

    fn feature_dim(&self) -> usize {
        2 * self.rewards.len()
    }

    fn episodes(&self) -> usize {
        self.rewards.len()
    }

    fn reset(&self, episode: usize) -> Result<usize> {
        Ok(episode)
    }

    fn actions(&self, _state: &usize) -> Vec<usize> {
        vec![0, 1]
    }

    fn features(&self, state: &usize, action: usize) -> Result<SparseFeatures> {
        Ok(vec![(2 * state + action, 1.0)])
    }

    fn step(&self, state: &usize, action: usize) -> Result<(usize, f64)> {
        let t = self.next_state(*state, action);
        Ok((t, self.rewards[t]))
    }
}
