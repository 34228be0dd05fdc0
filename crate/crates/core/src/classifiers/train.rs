//! Training the per-superpixel unary classifiers and the component-level
//! presence scorers from a dataset split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boost::{auc, boost, boost_with, BoostData, RoundSampler, StumpEnsemble};
use super::cooccurrence::{mine_negatives, CooccurrenceMatrix};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SeededRng};
use crate::scene::{connected_components, ClassId, Component, Connectivity, Dataset, Scene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnaryOptions {
    pub rounds: usize,
    pub seed: u64,
    /// Refit the sigmoid on the training margins.
    pub platt: bool,
}

impl Default for UnaryOptions {
    fn default() -> Self {
        Self { rounds: 64, seed: 0, platt: false }
    }
}

/// Every superpixel of a split with its majority ground-truth label.
pub struct SuperpixelPool {
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<ClassId>,
}

impl SuperpixelPool {
    pub fn from_split(dataset: &Dataset, split: &str) -> Result<Self> {
        Self::from_scenes(dataset, dataset.split(split))
    }

    pub fn from_scenes(dataset: &Dataset, scenes: &[usize]) -> Result<Self> {
        let dim = dataset.feature_dim().unwrap_or(0);
        let (mut features, mut labels) = (Vec::new(), Vec::new());
        for &s in scenes {
            let scene = &dataset.scenes[s];
            let majority = scene.superpixels.majority_labels(&scene.labels, dataset.catalog.len());
            features.extend_from_slice(scene.features.values());
            labels.extend(majority);
        }
        Ok(Self { dim, features, labels })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

/// Balanced unary training set for `class`: every positive superpixel (or a
/// uniform subsample) plus as many co-occurrence-mined negatives.
pub fn unary_training_set(
    pool: &SuperpixelPool,
    cooc: &CooccurrenceMatrix,
    class: ClassId,
    class_name: &str,
    seed: u64,
) -> Result<(Vec<usize>, Vec<bool>)> {
    let mut positives: Vec<usize> = (0..pool.labels.len()).filter(|&i| pool.labels[i] == class).collect();
    if positives.is_empty() {
        return Err(Error::ClassAbsent(class_name.to_string()));
    }
    let negatives_available = pool.labels.iter().filter(|c| **c != class && !c.is_void()).count();
    if negatives_available == 0 {
        return Err(Error::Invalid(format!("no negative superpixels for {class_name}")));
    }
    let n = positives.len().min(negatives_available);
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    if positives.len() > n {
        positives.shuffle(&mut rng);
        positives.truncate(n);
        positives.sort_unstable();
    }
    let negatives = mine_negatives(&pool.labels, cooc, class, n, derive_seed(seed, 2))?;
    let labels = positives.iter().map(|_| true).chain(negatives.iter().map(|_| false)).collect();
    positives.extend(negatives);
    Ok((positives, labels))
}

fn gather(pool: &SuperpixelPool, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| pool.row(i).iter().copied()).collect()
}

/// Trains the unary ensemble for one class on the `train` split.
pub fn train_unary(dataset: &Dataset, class: ClassId, options: &UnaryOptions) -> Result<StumpEnsemble> {
    let pool = SuperpixelPool::from_split(dataset, "train")?;
    let cooc = CooccurrenceMatrix::from_dataset(dataset, "train");
    train_unary_from(&pool, &cooc, class, &class_name(dataset, class), options)
}

fn class_name(dataset: &Dataset, class: ClassId) -> String {
    dataset.catalog.name(class).map_or_else(|| class.to_string(), str::to_string)
}

pub fn train_unary_from(
    pool: &SuperpixelPool,
    cooc: &CooccurrenceMatrix,
    class: ClassId,
    class_name: &str,
    options: &UnaryOptions,
) -> Result<StumpEnsemble> {
    let seed = derive_seed(options.seed, u64::from(class.0));
    let (idx, labels) = unary_training_set(pool, cooc, class, class_name, seed)?;
    let x = gather(pool, &idx);
    let data = BoostData::new(&x, pool.dim, &labels)?;
    let mut e = boost(&data, options.rounds)?;
    if options.platt {
        e.platt_refit(&x, &labels)?;
    }
    Ok(e)
}

/// Trains every listed class in parallel, sharing one pool and matrix.
pub fn train_unaries(
    dataset: &Dataset,
    classes: &[ClassId],
    options: &UnaryOptions,
) -> Result<BTreeMap<ClassId, StumpEnsemble>> {
    train_unaries_on(dataset, dataset.split("train"), classes, options)
}

pub fn train_unaries_on(
    dataset: &Dataset,
    scenes: &[usize],
    classes: &[ClassId],
    options: &UnaryOptions,
) -> Result<BTreeMap<ClassId, StumpEnsemble>> {
    let pool = SuperpixelPool::from_scenes(dataset, scenes)?;
    let cooc = CooccurrenceMatrix::from_scenes(dataset, scenes);
    classes
        .par_iter()
        .map(|&c| Ok((c, train_unary_from(&pool, &cooc, c, &class_name(dataset, c), options)?)))
        .collect()
}

/// AUC of `ensemble` at separating `class` superpixels from all others in `split`.
pub fn unary_auc(dataset: &Dataset, split: &str, class: ClassId, ensemble: &StumpEnsemble) -> Result<f64> {
    let pool = SuperpixelPool::from_split(dataset, split)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for i in 0..pool.labels.len() {
        if pool.labels[i].is_void() {
            continue;
        }
        scores.push(ensemble.margin(pool.row(i))?);
        labels.push(pool.labels[i] == class);
    }
    Ok(auc(&scores, &labels))
}

/// `[area fraction, centroid x / W, centroid y / H, bbox width / height,
/// pixel-weighted mean of each appearance channel]`.
pub fn component_features(scene: &Scene, component: &Component) -> Vec<f64> {
    let (w, h) = (scene.width() as f64, scene.height() as f64);
    let d = scene.features.appearance_dim();
    let mut out = Vec::with_capacity(4 + d);
    out.push(component.area() as f64 / (w * h));
    out.push((component.centroid.0 + 0.5) / w);
    out.push((component.centroid.1 + 0.5) / h);
    out.push(component.bbox_width() as f64 / component.bbox_height() as f64);
    let mut mean = vec![0.0; d];
    for &p in &component.pixels {
        let sp = scene.superpixels.superpixel_at(p);
        for (m, v) in mean.iter_mut().zip(scene.features.appearance(sp)) {
            *m += v;
        }
    }
    out.extend(mean.iter().map(|m| m / component.area() as f64));
    out
}

pub fn component_feature_dim(appearance_dim: usize) -> usize {
    4 + appearance_dim
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresenceOptions {
    pub rounds: usize,
    /// Minority-to-majority ratio kept by each round's undersampling.
    pub undersample_ratio: f64,
    pub seed: u64,
}

impl Default for PresenceOptions {
    fn default() -> Self {
        Self { rounds: 64, undersample_ratio: 1.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PresenceTraining {
    pub ensemble: StumpEnsemble,
    /// `(positives, negatives)` each round's stump was fitted on.
    pub round_counts: Vec<(usize, usize)>,
}

/// Ground-truth components (4-connected) of every non-void class in `split`,
/// labelled by whether they belong to `class`.
pub fn component_examples(dataset: &Dataset, split: &str, class: ClassId) -> (Vec<f64>, Vec<bool>) {
    component_examples_in(dataset, dataset.split(split), class)
}

pub fn component_examples_in(dataset: &Dataset, scenes: &[usize], class: ClassId) -> (Vec<f64>, Vec<bool>) {
    let per_scene: Vec<(Vec<f64>, Vec<bool>)> = scenes
        .par_iter()
        .map(|&s| {
            let scene = &dataset.scenes[s];
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for c in scene.labels.present_classes() {
                if c.is_void() {
                    continue;
                }
                let mask = scene.labels.mask_for_class(c);
                for comp in connected_components(&mask, Connectivity::Four).components {
                    x.extend(component_features(scene, &comp));
                    y.push(c == class);
                }
            }
            (x, y)
        })
        .collect();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (a, b) in per_scene {
        x.extend(a);
        y.extend(b);
    }
    (x, y)
}

struct Undersampler {
    rng: SeededRng,
    ratio: f64,
    counts: Vec<(usize, usize)>,
}

impl RoundSampler for Undersampler {
    fn sample(&mut self, _round: usize, y: &[f64]) -> Vec<f64> {
        let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
        let neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] <= 0.0).collect();
        let (minority, mut majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
        let keep = ((minority.len() as f64 / self.ratio).round() as usize).clamp(1, majority.len().max(1));
        let keep = keep.min(majority.len());
        majority.shuffle(&mut self.rng);
        let mut mask = vec![0.0; y.len()];
        for &i in minority.iter().chain(&majority[..keep]) {
            mask[i] = 1.0;
        }
        let n_pos = mask.iter().zip(y).filter(|(m, y)| **m > 0.0 && **y > 0.0).count();
        let n_neg = mask.iter().filter(|m| **m > 0.0).count() - n_pos;
        self.counts.push((n_pos, n_neg));
        mask
    }
}

pub fn train_presence(dataset: &Dataset, class: ClassId, options: &PresenceOptions) -> Result<PresenceTraining> {
    let (x, y) = component_examples(dataset, "train", class);
    train_presence_from(&x, &y, &class_name(dataset, class), dataset.feature_dim().unwrap_or(3), options)
}

pub fn train_presence_from(
    x: &[f64],
    y: &[bool],
    class_name: &str,
    feature_dim: usize,
    options: &PresenceOptions,
) -> Result<PresenceTraining> {
    if !(options.undersample_ratio > 0.0 && options.undersample_ratio.is_finite()) {
        return Err(Error::Invalid("undersample ratio must be positive".into()));
    }
    if !y.iter().any(|&b| b) {
        return Err(Error::ClassAbsent(class_name.to_string()));
    }
    let dim = component_feature_dim(feature_dim.saturating_sub(crate::scene::SPATIAL_CHANNELS));
    let data = BoostData::new(x, dim, y)?;
    let mut sampler = Undersampler {
        rng: rng_from_seed(options.seed),
        ratio: options.undersample_ratio,
        counts: Vec::new(),
    };
    let ensemble = boost_with(&data, options.rounds, &mut sampler)?;
    let mut round_counts = sampler.counts;
    round_counts.truncate(ensemble.rounds.len());
    Ok(PresenceTraining { ensemble, round_counts })
}

/// Per-class presence ensembles over component features.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PresenceScorer {
    pub classes: BTreeMap<ClassId, StumpEnsemble>,
}

impl PresenceScorer {
    pub fn train(dataset: &Dataset, classes: &[ClassId], options: &PresenceOptions) -> Result<Self> {
        Self::train_on(dataset, dataset.split("train"), classes, options)
    }

    pub fn train_on(dataset: &Dataset, scenes: &[usize], classes: &[ClassId], options: &PresenceOptions) -> Result<Self> {
        let feature_dim = dataset.feature_dim().unwrap_or(crate::scene::SPATIAL_CHANNELS);
        let classes = classes
            .par_iter()
            .map(|&c| {
                let opts = PresenceOptions { seed: derive_seed(options.seed, u64::from(c.0)), ..options.clone() };
                let (x, y) = component_examples_in(dataset, scenes, c);
                Ok((c, train_presence_from(&x, &y, &class_name(dataset, c), feature_dim, &opts)?.ensemble))
            })
            .collect::<Result<_>>()?;
        Ok(Self { classes })
    }

    /// Probability that `component` of `scene` is an instance of `class`.
    pub fn score(&self, scene: &Scene, class: ClassId, component: &Component) -> Result<f64> {
        let e = self
            .classes
            .get(&class)
            .ok_or_else(|| Error::Invalid(format!("no presence scorer for class {class}")))?;
        e.predict_prob(&component_features(scene, component))
    }
}
