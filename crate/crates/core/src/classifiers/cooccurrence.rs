//! Class co-presence counts and co-occurrence-guided negative mining.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scene::{ClassId, Dataset};

/// Mass given to never-co-occurring classes once the co-occurring supply is exhausted.
pub const MINING_FLOOR: f64 = 0.02;

/// Symmetric counts of scenes in which two classes are both present. The
/// diagonal holds the number of scenes containing each class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    size: usize,
    counts: Vec<u64>,
}

impl CooccurrenceMatrix {
    pub fn zeros(size: usize) -> Self {
        Self { size, counts: vec![0; size * size] }
    }

    /// Builds from explicit counts; `counts` is row-major and must be symmetric.
    pub fn from_counts(size: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != size * size {
            return Err(Error::DimensionMismatch(format!("{} counts for a {size}x{size} matrix", counts.len())));
        }
        for i in 0..size {
            for j in 0..i {
                if counts[i * size + j] != counts[j * size + i] {
                    return Err(Error::Invalid(format!("co-occurrence counts not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { size, counts })
    }

    /// Counts over the scenes of `split`; void is ignored.
    pub fn from_dataset(dataset: &Dataset, split: &str) -> Self {
        Self::from_scenes(dataset, dataset.split(split))
    }

    pub fn from_scenes(dataset: &Dataset, scenes: &[usize]) -> Self {
        let mut m = Self::zeros(dataset.catalog.len());
        for &s in scenes {
            let present: Vec<ClassId> =
                dataset.scenes[s].labels.present_classes().into_iter().filter(|c| !c.is_void()).collect();
            m.add_scene(&present);
        }
        m
    }

    pub fn add_scene(&mut self, present: &[ClassId]) {
        for &a in present {
            for &b in present {
                self.counts[a.index() * self.size + b.index()] += 1;
            }
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn count(&self, a: ClassId, b: ClassId) -> u64 {
        self.counts[a.index() * self.size + b.index()]
    }

    pub fn row(&self, a: ClassId) -> &[u64] {
        &self.counts[a.index() * self.size..(a.index() + 1) * self.size]
    }

    /// Row normalized to sum 1, or `None` for a class never seen.
    pub fn distribution(&self, a: ClassId) -> Option<Vec<f64>> {
        let row = self.row(a);
        let total: u64 = row.iter().sum();
        (total > 0).then(|| row.iter().map(|&c| c as f64 / total as f64).collect())
    }
}

/// Draws `n` distinct pool indices as negatives for `target`.
///
/// Each draw picks a class with probability proportional to its co-presence
/// count with `target` among classes that still have unused pool items, then
/// an unused item of that class uniformly. Once no co-occurring class has
/// items left, draws fall back to the remaining classes uniformly (the floor
/// mass). Items labelled `target` or void are never drawn.
pub fn mine_negatives(
    pool: &[ClassId],
    cooc: &CooccurrenceMatrix,
    target: ClassId,
    n: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::Invalid("negative pool is empty".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); cooc.size()];
    for (i, c) in pool.iter().enumerate() {
        if c.index() >= cooc.size() {
            return Err(Error::DimensionMismatch(format!("pool class {c} outside {}-class matrix", cooc.size())));
        }
        if *c != target && !c.is_void() {
            by_class[c.index()].push(i);
        }
    }
    let available: usize = by_class.iter().map(Vec::len).sum();
    if n > available {
        return Err(Error::Invalid(format!("requested {n} negatives from a pool of {available}")));
    }
    let row = cooc.row(target);
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let weight = |c: usize| if by_class[c].is_empty() { 0.0 } else { row[c] as f64 };
        let total: f64 = (0..by_class.len()).filter(|&c| c != target.index()).map(weight).sum();
        let class = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for c in (0..by_class.len()).filter(|&c| c != target.index()) {
                let w = weight(c);
                if w > 0.0 {
                    pick = Some(c);
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
            pick.expect("positive total has a class")
        } else {
            let left: Vec<usize> = (0..by_class.len()).filter(|&c| !by_class[c].is_empty()).collect();
            left[rng.random_range(0..left.len())]
        };
        let items = &mut by_class[class];
        let k = rng.random_range(0..items.len());
        out.push(items.swap_remove(k));
    }
    Ok(out)
}
