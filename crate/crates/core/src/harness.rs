//! Cross-validated policy experiments on a dataset with trained models.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lspi::{self, LspiConfig, PolicyWeights};
use crate::mdp::{ActionCatalog, RewardMode, SceneEpisode, SegmentationEnv};
use crate::pipeline::{scene_episodes, EpisodeOptions, ModelBundle, ModelConfig};
use crate::policies::{rollout, OrderingPolicy, PolicyKind, MAX_OPTIMAL_CLASSES};
use crate::rng::{derive_seed, derive_seed2, rng_from_seed, stream_of};
use crate::scene::{read_json, write_atomic, write_json, ClassCatalog, ClassId, Dataset};
use crate::synthgen::CorpusSpec;

/// Scenes of one category's pool split into `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub category: String,
    pub seed: u64,
    /// Dataset scene indices per fold, each sorted.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn fold_of(&self, scene: usize) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(&scene))
    }

    /// Every scene outside fold `f`, sorted.
    pub fn train_scenes(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> =
            self.folds.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, s)| s.iter().copied()).collect();
        out.sort();
        out
    }
}

/// Scenes of `split` belonging to `category`, in split order.
pub fn category_scenes(dataset: &Dataset, split: &str, category: &str) -> Vec<usize> {
    dataset.split(split).iter().copied().filter(|&i| dataset.scenes[i].category == category).collect()
}

/// Seeded partition of the category's `split` scenes into `k` folds whose
/// sizes differ by at most one.
pub fn make_folds(dataset: &Dataset, split: &str, category: &str, k: usize, seed: u64) -> Result<FoldPlan> {
    let mut pool = category_scenes(dataset, split, category);
    if k == 0 || pool.len() < k {
        return Err(Error::Invalid(format!(
            "category {category}: {} scenes in split {split}, {k} folds requested",
            pool.len()
        )));
    }
    pool.shuffle(&mut rng_from_seed(derive_seed(seed, stream_of(category))));
    let mut folds = vec![Vec::new(); k];
    for (i, s) in pool.into_iter().enumerate() {
        folds[i % k].push(s);
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(FoldPlan { category: category.to_string(), seed, folds })
}

/// A category restricted to scenes where neither member of `pair` is in
/// every scene of the train and test sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub category: String,
    pub pair: [String; 2],
}

impl ControlSpec {
    pub fn label(&self) -> String {
        format!("{}/control:{}+{}", self.category, self.pair[0], self.pair[1])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSet {
    pub label: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Takes every pool scene of the category (the predicate holds for the whole
/// pool once each pair member is missing somewhere) and splits it about
/// two to one, making sure both sides contain a scene without each member.
pub fn build_control_set(dataset: &Dataset, split: &str, spec: &ControlSpec, seed: u64) -> Result<ControlSet> {
    let pair = spec
        .pair
        .iter()
        .map(|name| {
            let c = dataset.catalog.require(name)?;
            if c.is_void() || dataset.catalog.is_background(c) {
                return Err(Error::Invalid(format!("control pair member {name} is not an object class")));
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pool = category_scenes(dataset, split, &spec.category);
    pool.shuffle(&mut rng_from_seed(derive_seed(seed, stream_of(&spec.label()))));
    let lacks = |s: usize, c: ClassId| !dataset.scenes[s].labels.contains_class(c);
    for (c, name) in pair.iter().zip(&spec.pair) {
        let absent = pool.iter().filter(|&&s| lacks(s, *c)).count();
        if absent == 0 {
            return Err(Error::Invalid(format!(
                "control set {}: {name} appears in every scene",
                spec.label()
            )));
        }
        if absent < 2 {
            return Err(Error::Invalid(format!(
                "control set {}: only one scene without {name}, cannot cover train and test",
                spec.label()
            )));
        }
    }
    let mut test: Vec<usize> = Vec::new();
    let mut train: Vec<usize> = Vec::new();
    for side in [&mut test, &mut train] {
        for &c in &pair {
            if side.iter().any(|&s| lacks(s, c)) {
                continue;
            }
            let pick = pool.iter().position(|&s| lacks(s, c)).expect("absent scene counted above");
            side.push(pool.remove(pick));
        }
    }
    let test_size = (pool.len() + test.len() + train.len()).div_ceil(3).max(test.len());
    while test.len() < test_size && !pool.is_empty() {
        test.push(pool.remove(0));
    }
    train.extend(pool);
    train.sort();
    test.sort();
    Ok(ControlSet { label: spec.label(), train, test })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomPool {
    /// Every class of the action catalog.
    #[default]
    Catalog,
    /// The first `rollout_actions` classes of the frequency order.
    Frequent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Corpus generated when no dataset is supplied.
    pub corpus: CorpusSpec,
    /// Used when no trained model bundle is supplied.
    pub model: ModelConfig,
    pub model_split: String,
    pub pool_split: String,
    /// Categories to run; empty means every category of the pool split.
    pub categories: Vec<String>,
    /// Each seed redraws the folds and reseeds LSPI and the random policy.
    pub seeds: Vec<u64>,
    pub folds: usize,
    /// Size of the action catalog: the most frequent objects of the category.
    pub actions: usize,
    /// Actions per rollout (the k axis of the curves).
    pub rollout_actions: usize,
    pub policies: Vec<PolicyKind>,
    pub random_pool: RandomPool,
    pub oracle_by_area: bool,
    /// Also run every policy over the `k_opt` most frequent objects alongside
    /// the exhaustive optimal ordering, labelled `<category>/top<k_opt>`.
    pub optimal_track: bool,
    pub k_opt: usize,
    pub control_sets: Vec<ControlSpec>,
    pub reward_mode: RewardMode,
    pub episode: EpisodeOptions,
    pub lspi: LspiConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSpec::default(),
            model: ModelConfig::default(),
            model_split: "train".into(),
            pool_split: "test".into(),
            categories: Vec::new(),
            seeds: vec![1, 2, 3, 4, 5],
            folds: 3,
            actions: 12,
            rollout_actions: 9,
            policies: vec![PolicyKind::Lspi, PolicyKind::Fixed, PolicyKind::Random, PolicyKind::Oracle],
            random_pool: RandomPool::Catalog,
            oracle_by_area: false,
            optimal_track: true,
            k_opt: 5,
            control_sets: vec![
                ControlSpec { category: "livingroom".into(), pair: ["pillow".into(), "chair".into()] },
                ControlSpec { category: "livingroom".into(), pair: ["table".into(), "chair".into()] },
            ],
            reward_mode: RewardMode::Cumulative,
            episode: EpisodeOptions::default(),
            lspi: LspiConfig { gamma: 0.5, reuse_samples: true, ..LspiConfig::default() },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: Self = read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Invalid("at least one seed is required".into()));
        }
        if self.folds < 2 {
            return Err(Error::Invalid(format!("{} folds, at least 2 required", self.folds)));
        }
        if self.rollout_actions == 0 || self.rollout_actions > self.actions {
            return Err(Error::Invalid(format!(
                "rollout_actions {} must be in 1..={}",
                self.rollout_actions, self.actions
            )));
        }
        if self.optimal_track && (self.k_opt == 0 || self.k_opt > MAX_OPTIMAL_CLASSES) {
            return Err(Error::Invalid(format!("k_opt {} must be in 1..={MAX_OPTIMAL_CLASSES}", self.k_opt)));
        }
        if self.policies.is_empty() {
            return Err(Error::Invalid("no policies selected".into()));
        }
        self.lspi.validate()
    }
}

/// Episodes of every pool scene of one category under one action catalog.
#[derive(Clone, Debug)]
pub struct CategoryEpisodes {
    pub category: String,
    pub actions: ActionCatalog,
    /// Dataset scene index of each episode.
    pub scenes: Vec<usize>,
    pub episodes: Vec<SceneEpisode>,
}

impl CategoryEpisodes {
    /// Builds episodes for `scenes` with the `n` most frequent objects of the
    /// category as actions and belief classes.
    pub fn build(
        dataset: &Dataset,
        bundle: &ModelBundle,
        category: &str,
        scenes: Vec<usize>,
        n: usize,
        options: &EpisodeOptions,
    ) -> Result<Self> {
        let classes = bundle.frequent_objects(&dataset.catalog, category, n)?;
        if classes.is_empty() {
            return Err(Error::Invalid(format!("category {category} has no object classes in the model split")));
        }
        Self::with_actions(dataset, bundle, category, scenes, classes, options)
    }

    /// Episodes with an explicit action catalog (also the belief classes).
    pub fn with_actions(
        dataset: &Dataset,
        bundle: &ModelBundle,
        category: &str,
        scenes: Vec<usize>,
        classes: Vec<ClassId>,
        options: &EpisodeOptions,
    ) -> Result<Self> {
        let actions = ActionCatalog::new(classes.clone(), &dataset.catalog)?;
        let episodes = scene_episodes(bundle, dataset, &scenes, &actions, &classes, options)?;
        Ok(Self { category: category.to_string(), actions, scenes, episodes })
    }

    /// The same episodes restricted to the first `n` actions. Because the
    /// catalog is a frequency order this equals building with `n` directly.
    pub fn truncated(&self, catalog: &ClassCatalog, n: usize) -> Result<Self> {
        let n = n.min(self.actions.len());
        let actions = ActionCatalog::new(self.actions.classes()[..n].to_vec(), catalog)?;
        let episodes = self
            .episodes
            .iter()
            .map(|e| SceneEpisode {
                outcomes: e.outcomes[..n].to_vec(),
                initial_beliefs: e.initial_beliefs[..n].to_vec(),
                ..e.clone()
            })
            .collect();
        Ok(Self { category: self.category.clone(), actions, scenes: self.scenes.clone(), episodes })
    }

    /// Environment over the episodes of the given dataset scenes.
    pub fn env(&self, catalog: &ClassCatalog, scenes: &[usize], reward_mode: RewardMode) -> Result<SegmentationEnv> {
        let episodes = scenes
            .iter()
            .map(|s| {
                let i = self
                    .scenes
                    .iter()
                    .position(|t| t == s)
                    .ok_or_else(|| Error::Invalid(format!("scene index {s} has no episode in {}", self.category)))?;
                Ok(self.episodes[i].clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let classes = self.actions.classes().to_vec();
        SegmentationEnv::new(catalog.clone(), self.actions.clone(), classes, episodes, reward_mode)
    }
}

/// One row of `curves.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub scene_id: String,
    pub category: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub k: usize,
    pub reward: f64,
}

pub const CURVES_HEADER: &str = "scene_id,category,policy,seed,k,reward";

/// Renders rows as CSV; floats use the shortest round-trip form.
pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.scene_id, r.category, r.policy, r.seed, r.k, r.reward);
    }
    out
}

/// Mean reward of one (category, policy, k) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub category: String,
    pub policy: PolicyKind,
    pub k: usize,
    pub mean: f64,
    pub count: usize,
}

/// Per-cell means in order of first appearance.
pub fn summarize(rows: &[CurveRow]) -> Vec<SummaryRow> {
    let mut index: BTreeMap<(&str, PolicyKind, usize), usize> = BTreeMap::new();
    let mut sums: Vec<(SummaryRow, f64)> = Vec::new();
    for r in rows {
        let slot = *index.entry((r.category.as_str(), r.policy, r.k)).or_insert_with(|| {
            sums.push((
                SummaryRow { category: r.category.clone(), policy: r.policy, k: r.k, mean: 0.0, count: 0 },
                0.0,
            ));
            sums.len() - 1
        });
        sums[slot].0.count += 1;
        sums[slot].1 += r.reward;
    }
    sums.into_iter()
        .map(|(mut row, sum)| {
            row.mean = sum / row.count as f64;
            row
        })
        .collect()
}

/// How the policies of one evaluation are instantiated.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutSettings {
    pub actions: usize,
    pub random_pool: RandomPool,
    pub oracle_by_area: bool,
    pub k_opt: usize,
    pub test_epsilon: f64,
}

impl RolloutSettings {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            actions: config.rollout_actions,
            random_pool: config.random_pool,
            oracle_by_area: config.oracle_by_area,
            k_opt: config.k_opt,
            test_epsilon: config.lspi.test_epsilon,
        }
    }

    pub fn policy(
        &self,
        kind: PolicyKind,
        actions: &ActionCatalog,
        weights: Option<&PolicyWeights>,
        seed: u64,
    ) -> Result<OrderingPolicy> {
        let order = actions.classes().to_vec();
        let n = self.actions.min(order.len());
        Ok(match kind {
            PolicyKind::Fixed => OrderingPolicy::Fixed { order },
            PolicyKind::Random => OrderingPolicy::Random {
                seed,
                pool: match self.random_pool {
                    RandomPool::Catalog => None,
                    RandomPool::Frequent => Some(order[..n].to_vec()),
                },
            },
            PolicyKind::Oracle => OrderingPolicy::Oracle { order, by_area: self.oracle_by_area },
            PolicyKind::Lspi => OrderingPolicy::Learned {
                weights: weights.cloned().ok_or_else(|| Error::Invalid("the lspi policy needs trained weights".into()))?,
                epsilon: self.test_epsilon,
                seed,
            },
            PolicyKind::Optimal => OrderingPolicy::Optimal { classes: order[..self.k_opt.min(order.len())].to_vec() },
        })
    }
}

/// Rolls every policy out on every scene of `env`; rows ordered by scene,
/// then policy, then k.
pub fn evaluate_policies(
    env: &SegmentationEnv,
    label: &str,
    policies: &[PolicyKind],
    weights: Option<&PolicyWeights>,
    settings: &RolloutSettings,
    seed: u64,
) -> Result<Vec<CurveRow>> {
    let n = settings.actions.min(env.actions.len());
    let built = policies
        .iter()
        .map(|&k| settings.policy(k, &env.actions, weights, seed))
        .collect::<Result<Vec<_>>>()?;
    let per_scene = (0..env.scenes.len())
        .into_par_iter()
        .map(|e| {
            let mut rows = Vec::with_capacity(built.len() * n);
            for p in &built {
                let r = rollout(p, env, e, n)?;
                rows.extend(r.curve.iter().enumerate().map(|(k, &reward)| CurveRow {
                    scene_id: env.scenes[e].scene_id.clone(),
                    category: label.to_string(),
                    policy: p.kind(),
                    seed,
                    k: k + 1,
                    reward,
                }));
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_scene.into_iter().flatten().collect())
}

/// Learned ordering policy of one category, as saved by `policy train`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub category: String,
    /// Action class names in block order.
    pub catalog: Vec<String>,
    /// Belief classes per block.
    pub k: usize,
    pub gamma: f64,
    pub weights: Vec<f64>,
    pub lspi: LspiConfig,
    pub diagnostics: Vec<lspi::IterationStats>,
}

impl PolicyModel {
    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = read_json(path)?;
        let expected = model.catalog.len() * (1 + 2 * model.k);
        if model.weights.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{}: {} weights for {} actions and K = {}",
                path.display(),
                model.weights.len(),
                model.catalog.len(),
                model.k
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn policy_weights(&self) -> PolicyWeights {
        PolicyWeights { weights: self.weights.clone() }
    }

    pub fn action_catalog(&self, catalog: &ClassCatalog) -> Result<ActionCatalog> {
        let classes = self.catalog.iter().map(|a| catalog.require(a)).collect::<Result<Vec<_>>>()?;
        ActionCatalog::new(classes, catalog)
    }

    /// One row per action block: `action,prior,P_<class>...,U_<class>...`.
    pub fn reshape_csv(&self) -> String {
        let block = 1 + 2 * self.k;
        let mut out = String::from("action,prior");
        for prefix in ["P", "U"] {
            for c in &self.catalog[..self.k.min(self.catalog.len())] {
                let _ = write!(out, ",{prefix}_{c}");
            }
            for i in self.catalog.len()..self.k {
                let _ = write!(out, ",{prefix}_{i}");
            }
        }
        out.push('\n');
        for (a, name) in self.catalog.iter().enumerate() {
            out.push_str(name);
            for w in &self.weights[a * block..(a + 1) * block] {
                let _ = write!(out, ",{w}");
            }
            out.push('\n');
        }
        out
    }

    /// `iteration,epsilon,mean_reward,samples` per training iteration.
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("iteration,epsilon,mean_reward,samples\n");
        for d in &self.diagnostics {
            let _ = writeln!(out, "{},{},{},{}", d.iteration, d.epsilon, d.mean_reward, d.samples);
        }
        out
    }
}

/// Trains LSPI on the episodes of `scenes`.
pub fn train_policy(
    catalog: &ClassCatalog,
    episodes: &CategoryEpisodes,
    scenes: &[usize],
    lspi_config: &LspiConfig,
    reward_mode: RewardMode,
) -> Result<PolicyModel> {
    let env = episodes.env(catalog, scenes, reward_mode)?;
    let outcome = lspi::train(&env, lspi_config)?;
    let names = episodes
        .actions
        .classes()
        .iter()
        .map(|&c| catalog.name(c).map(str::to_string).ok_or(Error::ClassAbsent(c.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyModel {
        category: episodes.category.clone(),
        k: env.belief_classes.len(),
        catalog: names,
        gamma: lspi_config.gamma,
        weights: outcome.weights.weights,
        lspi: lspi_config.clone(),
        diagnostics: outcome.diagnostics,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<CurveRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    /// Writes `curves.csv` and `summary.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("curves.csv"), curves_csv(&self.rows).as_bytes())?;
        write_json(&dir.join("summary.json"), &self.summary)
    }

    /// Mean over every row of `category_filter`-matching labels for one policy at `k`.
    pub fn mean_where(&self, policy: PolicyKind, k: usize, label: impl Fn(&str) -> bool) -> Option<f64> {
        let vals: Vec<f64> =
            self.rows.iter().filter(|r| r.policy == policy && r.k == k && label(&r.category)).map(|r| r.reward).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Label of the optimal-comparison track of a category.
pub fn optimal_label(category: &str, k_opt: usize) -> String {
    format!("{category}/top{k_opt}")
}

struct Job<'a> {
    label: String,
    episodes: &'a CategoryEpisodes,
    policies: Vec<PolicyKind>,
    seed: u64,
    part: u64,
    train: Vec<usize>,
    test: Vec<usize>,
}

/// Runs the cross-validated comparison: per category and seed, LSPI is
/// trained on all folds but one and every policy is rolled out on the
/// remaining fold. Control sets and the optimal track add their own labels.
pub fn run_experiment(dataset: &Dataset, bundle: &ModelBundle, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    bundle.check_catalog(&dataset.catalog)?;
    let categories: Vec<String> = if config.categories.is_empty() {
        let pool = dataset.split(&config.pool_split);
        dataset.categories().into_iter().filter(|c| pool.iter().any(|&i| &dataset.scenes[i].category == c)).collect()
    } else {
        config.categories.clone()
    };
    if categories.is_empty() {
        return Err(Error::Invalid(format!("split {} has no scenes", config.pool_split)));
    }
    let mut needed = categories.clone();
    for c in &config.control_sets {
        if !needed.contains(&c.category) {
            needed.push(c.category.clone());
        }
    }
    let built = needed
        .iter()
        .map(|c| {
            let scenes = category_scenes(dataset, &config.pool_split, c);
            CategoryEpisodes::build(dataset, bundle, c, scenes, config.actions, &config.episode)
        })
        .collect::<Result<Vec<_>>>()?;
    let by_name = |c: &str| &built[needed.iter().position(|n| n == c).expect("category built")];
    let top = if config.optimal_track {
        categories.iter().map(|c| by_name(c).truncated(&dataset.catalog, config.k_opt)).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let mut optimal_policies = config.policies.clone();
    if !optimal_policies.contains(&PolicyKind::Optimal) {
        optimal_policies.push(PolicyKind::Optimal);
    }

    let mut jobs: Vec<Job> = Vec::new();
    for (ci, c) in categories.iter().enumerate() {
        for &seed in &config.seeds {
            let plan = make_folds(dataset, &config.pool_split, c, config.folds, seed)?;
            for f in 0..plan.folds.len() {
                let (train, test) = (plan.train_scenes(f), plan.folds[f].clone());
                jobs.push(Job {
                    label: c.clone(),
                    episodes: by_name(c),
                    policies: config.policies.clone(),
                    seed,
                    part: f as u64,
                    train: train.clone(),
                    test: test.clone(),
                });
                if config.optimal_track {
                    jobs.push(Job {
                        label: optimal_label(c, config.k_opt),
                        episodes: &top[ci],
                        policies: optimal_policies.clone(),
                        seed,
                        part: f as u64,
                        train,
                        test,
                    });
                }
            }
        }
    }
    for spec in &config.control_sets {
        for &seed in &config.seeds {
            let set = build_control_set(dataset, &config.pool_split, spec, seed)?;
            jobs.push(Job {
                label: set.label,
                episodes: by_name(&spec.category),
                policies: config.policies.clone(),
                seed,
                part: 0,
                train: set.train,
                test: set.test,
            });
        }
    }

    let settings = RolloutSettings::from_config(config);
    let results = jobs
        .par_iter()
        .map(|job| {
            let weights = if job.policies.contains(&PolicyKind::Lspi) {
                let mut lspi_config = config.lspi.clone();
                lspi_config.seed = derive_seed2(job.seed, stream_of(&job.label), job.part);
                let model = train_policy(&dataset.catalog, job.episodes, &job.train, &lspi_config, config.reward_mode)?;
                Some(model.policy_weights())
            } else {
                None
            };
            let env = job.episodes.env(&dataset.catalog, &job.test, config.reward_mode)?;
            evaluate_policies(&env, &job.label, &job.policies, weights.as_ref(), &settings, job.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<CurveRow> = results.into_iter().flatten().collect();
    let summary = summarize(&rows);
    Ok(ExperimentOutput { rows, summary })
}
