//! Trained per-class models and their application to scenes: unary
//! ensembles, CRF weights, presence scorers and category statistics, plus
//! the per-scene analysis that feeds the MDP.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{train_unaries_on, PresenceOptions, PresenceScorer, StumpEnsemble, UnaryOptions};
use crate::combiner::LabelCanvas;
use crate::crf::{build_graph, fit_weights, labeling_mask, map_inference, CrfWeights, FitReport, WeightGrid};
use crate::error::{Error, Result};
use crate::mdp::{component_belief, ActionCatalog, ActionOutcome, SceneEpisode};
use crate::scene::{read_json, write_json, BinaryMask, ClassCatalog, ClassId, Dataset, Scene};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefInit {
    /// Presence frequency of each class in the category's model split.
    #[default]
    Frequency,
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Mean unary probability over the MAP-foreground superpixels.
    #[default]
    MeanPosterior,
    /// Fraction of the image covered by the MAP foreground.
    AreaFraction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub unary: UnaryOptions,
    pub presence: PresenceOptions,
    pub grid: WeightGrid,
    /// Every `holdout_every`-th model scene of a category is held out from
    /// classifier training and used to fit the CRF weights.
    pub holdout_every: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            unary: UnaryOptions::default(),
            presence: PresenceOptions::default(),
            grid: WeightGrid::default(),
            holdout_every: 3,
        }
    }
}

/// Everything learned from the model split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub classes: Vec<String>,
    pub unaries: BTreeMap<ClassId, StumpEnsemble>,
    pub crf: BTreeMap<ClassId, CrfWeights>,
    pub presence: PresenceScorer,
    /// Per category, the fraction of its model scenes containing each class
    /// (indexed by class id).
    pub category_presence: BTreeMap<String, Vec<f64>>,
    /// Per category, model-split scene counts of each class.
    pub category_counts: BTreeMap<String, Vec<usize>>,
}

/// Splits the `train` split into classifier scenes and CRF holdout scenes.
pub fn model_partition(dataset: &Dataset, holdout_every: usize) -> (Vec<usize>, Vec<usize>) {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut fit, mut holdout) = (Vec::new(), Vec::new());
    for &s in dataset.split("train") {
        let k = seen.entry(dataset.scenes[s].category.as_str()).or_default();
        if holdout_every > 1 && *k % holdout_every == holdout_every - 1 {
            holdout.push(s);
        } else {
            fit.push(s);
        }
        *k += 1;
    }
    (fit, holdout)
}

/// Scene-presence counts per class for each category over `scenes`.
pub fn presence_counts(dataset: &Dataset, scenes: &[usize]) -> BTreeMap<String, (usize, Vec<usize>)> {
    let mut out: BTreeMap<String, (usize, Vec<usize>)> = BTreeMap::new();
    for &s in scenes {
        let scene = &dataset.scenes[s];
        let entry = out.entry(scene.category.clone()).or_insert_with(|| (0, vec![0; dataset.catalog.len()]));
        entry.0 += 1;
        for c in scene.labels.present_classes() {
            entry.1[c.index()] += 1;
        }
    }
    out
}

impl ModelBundle {
    /// Trains models for the background classes and every object class with
    /// at least one positive superpixel in the model split.
    pub fn train(dataset: &Dataset, config: &ModelConfig) -> Result<Self> {
        Self::train_classes(dataset, config, None)
    }

    /// [`ModelBundle::train`] restricted to `only` (when given); a requested
    /// class with no positive superpixel in the model split is an error.
    pub fn train_classes(dataset: &Dataset, config: &ModelConfig, only: Option<&[ClassId]>) -> Result<Self> {
        let catalog = &dataset.catalog;
        let (fit, holdout) = model_partition(dataset, config.holdout_every);
        if fit.is_empty() {
            return Err(Error::Invalid("model split is empty".into()));
        }
        let counts = presence_counts(dataset, &fit);
        let mut present = vec![false; catalog.len()];
        for (_, per_class) in counts.values() {
            for (c, &n) in per_class.iter().enumerate() {
                present[c] |= n > 0;
            }
        }
        if let Some(only) = only {
            for c in only {
                if !catalog.contains(*c) || c.is_void() || !present[c.index()] {
                    return Err(Error::ClassAbsent(catalog.name(*c).unwrap_or("?").to_string()));
                }
            }
        }
        let classes: Vec<ClassId> = (1..catalog.len() as u16)
            .map(ClassId)
            .filter(|c| present[c.index()] && only.is_none_or(|o| o.contains(c)))
            .collect();
        let unaries = train_unaries_on(dataset, &fit, &classes, &config.unary)?;
        let objects: Vec<ClassId> = classes.iter().copied().filter(|c| !catalog.is_background(*c)).collect();
        let presence = PresenceScorer::train_on(dataset, &fit, &objects, &config.presence)?;
        let all_counts = presence_counts(dataset, dataset.split("train"));
        let crf = classes
            .iter()
            .map(|&c| {
                let scenes = crf_fit_scenes(dataset, &fit, &holdout, &all_counts, c);
                Ok((c, fit_weights(&scenes, c, &unaries[&c], &config.grid)?.weights))
            })
            .collect::<Result<_>>()?;
        let category_presence = all_counts
            .iter()
            .map(|(cat, (n, per))| (cat.clone(), per.iter().map(|&k| k as f64 / *n as f64).collect()))
            .collect();
        let category_counts = all_counts.into_iter().map(|(cat, (_, per))| (cat, per)).collect();
        Ok(Self {
            classes: catalog.names().to_vec(),
            unaries,
            crf,
            presence,
            category_presence,
            category_counts,
        })
    }

    pub fn check_catalog(&self, catalog: &ClassCatalog) -> Result<()> {
        if self.classes != catalog.names() {
            return Err(Error::Invalid("model bundle was trained on a different class catalog".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn unary(&self, class: ClassId) -> Result<&StumpEnsemble> {
        self.unaries.get(&class).ok_or_else(|| Error::Invalid(format!("no unary model for class {class}")))
    }

    pub fn weights(&self, class: ClassId) -> CrfWeights {
        self.crf.get(&class).copied().unwrap_or_default()
    }

    /// MAP segmentation of `class`; a class without a model yields an empty mask.
    pub fn segment(&self, scene: &Scene, class: ClassId) -> Result<ClassSegmentation> {
        let Some(unary) = self.unaries.get(&class) else {
            return Ok(ClassSegmentation {
                mask: BinaryMask::empty(scene.width(), scene.height())?,
                mean_posterior: 0.0,
            });
        };
        let graph = build_graph(scene, unary)?;
        let labeling = map_inference(&graph, &self.weights(class))?;
        let fg: Vec<usize> = (0..labeling.len()).filter(|&i| labeling[i]).collect();
        let mean_posterior = if fg.is_empty() {
            0.0
        } else {
            fg.iter()
                .map(|&i| unary.predict_prob(scene.features.row(i)))
                .sum::<Result<f64>>()?
                / fg.len() as f64
        };
        Ok(ClassSegmentation { mask: labeling_mask(scene, &labeling)?, mean_posterior })
    }

    /// Top-`n` object classes of `category` by model-split scene-presence
    /// count, ties by catalog index; classes never seen are left out.
    pub fn frequent_objects(&self, catalog: &ClassCatalog, category: &str, n: usize) -> Result<Vec<ClassId>> {
        let counts = self
            .category_counts
            .get(category)
            .ok_or_else(|| Error::Invalid(format!("category {category} absent from the model split")))?;
        Ok(frequency_order(catalog, counts, n))
    }
}

/// Object classes with a positive count, by count descending then catalog
/// index, truncated to `n`.
pub fn frequency_order(catalog: &ClassCatalog, counts: &[usize], n: usize) -> Vec<ClassId> {
    let mut objects: Vec<ClassId> =
        catalog.object_ids().into_iter().filter(|c| counts.get(c.index()).is_some_and(|&k| k > 0)).collect();
    objects.sort_by(|a, b| counts[b.index()].cmp(&counts[a.index()]).then(a.cmp(b)));
    objects.truncate(n);
    objects
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSegmentation {
    pub mask: BinaryMask,
    pub mean_posterior: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeOptions {
    pub belief_init: BeliefInit,
    pub prior: PriorMode,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self { belief_init: BeliefInit::Frequency, prior: PriorMode::MeanPosterior }
    }
}

/// Runs every CRF the episode needs on `scene` and packages the results.
pub fn scene_episode(
    bundle: &ModelBundle,
    catalog: &ClassCatalog,
    scene: &Scene,
    actions: &ActionCatalog,
    belief_classes: &[ClassId],
    options: &EpisodeOptions,
) -> Result<SceneEpisode> {
    let bg = catalog
        .background_ids()
        .map(|c| bundle.segment(scene, c).map(|s| s.mask));
    let [wall, floor, ceiling] = bg;
    let (wall, floor, ceiling) = (wall?, floor?, ceiling?);
    let background = LabelCanvas::with_background(catalog, [&wall, &floor, &ceiling])?;
    let n = scene.pixel_count() as f64;
    let outcomes = actions
        .classes()
        .iter()
        .map(|&c| {
            let seg = bundle.segment(scene, c)?;
            let presence = if bundle.presence.classes.contains_key(&c) {
                component_belief(scene, &seg.mask, c, &bundle.presence)?
            } else {
                0.0
            };
            let prior = match options.prior {
                PriorMode::MeanPosterior => seg.mean_posterior,
                PriorMode::AreaFraction => seg.mask.count() as f64 / n,
            };
            Ok(ActionOutcome { pixels: seg.mask.ones(), prior, presence })
        })
        .collect::<Result<Vec<_>>>()?;
    let initial_beliefs = match options.belief_init {
        BeliefInit::Uniform => vec![0.5; belief_classes.len()],
        BeliefInit::Frequency => {
            let freq = bundle
                .category_presence
                .get(&scene.category)
                .ok_or_else(|| Error::Invalid(format!("category {} absent from the model split", scene.category)))?;
            belief_classes.iter().map(|c| freq[c.index()]).collect()
        }
    };
    Ok(SceneEpisode {
        scene_id: scene.id.clone(),
        category: scene.category.clone(),
        gt: scene.labels.clone(),
        background,
        outcomes,
        initial_beliefs,
    })
}

/// [`scene_episode`] for many scenes in parallel, order preserved.
pub fn scene_episodes(
    bundle: &ModelBundle,
    dataset: &Dataset,
    scenes: &[usize],
    actions: &ActionCatalog,
    belief_classes: &[ClassId],
    options: &EpisodeOptions,
) -> Result<Vec<SceneEpisode>> {
    scenes
        .par_iter()
        .map(|&s| scene_episode(bundle, &dataset.catalog, &dataset.scenes[s], actions, belief_classes, options))
        .collect()
}

/// Holdout scenes of the categories in which `class` occurs (falling back to
/// the classifier scenes when nothing is held out).
fn crf_fit_scenes<'a>(
    dataset: &'a Dataset,
    fit: &[usize],
    holdout: &[usize],
    counts: &BTreeMap<String, (usize, Vec<usize>)>,
    class: ClassId,
) -> Vec<&'a Scene> {
    let pool = if holdout.is_empty() { fit } else { holdout };
    let occurs = |cat: &str| counts.get(cat).is_some_and(|(_, per)| per[class.index()] > 0);
    let scenes: Vec<&Scene> =
        pool.iter().map(|&s| &dataset.scenes[s]).filter(|s| occurs(&s.category)).collect();
    if scenes.is_empty() {
        pool.iter().map(|&s| &dataset.scenes[s]).collect()
    } else {
        scenes
    }
}

/// Fit report of one class on its CRF holdout scenes, for diagnostics.
pub fn crf_fit_report(
    dataset: &Dataset,
    bundle: &ModelBundle,
    class: ClassId,
    grid: &WeightGrid,
    holdout_every: usize,
) -> Result<FitReport> {
    let (fit, holdout) = model_partition(dataset, holdout_every);
    let counts = presence_counts(dataset, dataset.split("train"));
    let scenes = crf_fit_scenes(dataset, &fit, &holdout, &counts, class);
    fit_weights(&scenes, class, bundle.unary(class)?, grid)
}
