//! Jaccard index and the frequency-weighted Jaccard reward.
//!
//! For each taken class `i` the reward adds `w_i · JI_i`, where `w_i` is the
//! fraction of canvas pixels predicted as `i` and `JI_i` its Jaccard index
//! against ground truth. Wall, floor and ceiling contribute the same way
//! through `r_bg`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{BinaryMask, ClassCatalog, ClassId, LabelMap};

/// `|pred ∩ gt| / |pred ∪ gt|`, 0 when both are empty.
pub fn jaccard(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    pred.ensure_same_shape(gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        inter += usize::from(p && g);
        union += usize::from(p || g);
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardTerm {
    pub class: ClassId,
    /// Predicted pixel fraction.
    pub weight: f64,
    pub jaccard: f64,
}

impl RewardTerm {
    pub fn value(&self) -> f64 {
        self.weight * self.jaccard
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// One term per taken class, in taken order.
    pub terms: Vec<RewardTerm>,
    /// Wall, floor, ceiling.
    pub background: Vec<RewardTerm>,
    pub r_bg: f64,
    pub total: f64,
}

/// Per-class `(predicted, ground truth, intersection)` pixel counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub pred: Vec<usize>,
    pub gt: Vec<usize>,
    pub inter: Vec<usize>,
    pub pixels: usize,
}

impl ConfusionCounts {
    pub fn new(pred: &[ClassId], gt: &LabelMap, classes: usize) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(Error::DimensionMismatch(format!(
                "canvas has {} pixels, ground truth {}",
                pred.len(),
                gt.len()
            )));
        }
        let mut c = Self { pred: vec![0; classes], gt: vec![0; classes], inter: vec![0; classes], pixels: pred.len() };
        for (&p, &g) in pred.iter().zip(gt.labels()) {
            if p.index() >= classes || g.index() >= classes {
                return Err(Error::Invalid(format!("label outside {classes}-class catalog")));
            }
            c.pred[p.index()] += 1;
            c.gt[g.index()] += 1;
            if p == g {
                c.inter[p.index()] += 1;
            }
        }
        Ok(c)
    }

    pub fn term(&self, class: ClassId) -> RewardTerm {
        let i = class.index();
        let union = self.pred[i] + self.gt[i] - self.inter[i];
        RewardTerm {
            class,
            weight: if self.pixels == 0 { 0.0 } else { self.pred[i] as f64 / self.pixels as f64 },
            jaccard: if union == 0 { 0.0 } else { self.inter[i] as f64 / union as f64 },
        }
    }
}

/// Reward of a predicted label grid against ground truth for the classes
/// taken so far.
pub fn reward(pred: &[ClassId], gt: &LabelMap, taken: &[ClassId], catalog: &ClassCatalog) -> Result<RewardBreakdown> {
    for (i, c) in taken.iter().enumerate() {
        if catalog.is_background(*c) || c.is_void() || !catalog.contains(*c) {
            return Err(Error::Invalid(format!("taken list holds non-object class {c}")));
        }
        if taken[..i].contains(c) {
            return Err(Error::Invalid(format!("taken list repeats class {c}")));
        }
    }
    let counts = ConfusionCounts::new(pred, gt, catalog.len())?;
    Ok(reward_from_counts(&counts, taken, catalog))
}

pub fn reward_from_counts(counts: &ConfusionCounts, taken: &[ClassId], catalog: &ClassCatalog) -> RewardBreakdown {
    let terms: Vec<RewardTerm> = taken.iter().map(|&c| counts.term(c)).collect();
    let background: Vec<RewardTerm> = catalog.background_ids().iter().map(|&c| counts.term(c)).collect();
    let r_bg = background.iter().map(RewardTerm::value).sum::<f64>();
    let total = terms.iter().map(RewardTerm::value).sum::<f64>() + r_bg;
    RewardBreakdown { terms, background, r_bg, total }
}

impl RewardBreakdown {
    /// `taken,total,r_bg,class:w:ji,...` style CSV header and row.
    pub fn csv(&self, catalog: &ClassCatalog) -> (String, String) {
        let name = |c: ClassId| catalog.name(c).unwrap_or("?").to_string();
        let mut header = vec!["total".to_string(), "r_bg".to_string()];
        let mut row = vec![self.total.to_string(), self.r_bg.to_string()];
        for t in self.background.iter().chain(&self.terms) {
            header.push(format!("w_{}", name(t.class)));
            header.push(format!("ji_{}", name(t.class)));
            row.push(t.weight.to_string());
            row.push(t.jaccard.to_string());
        }
        (header.join(","), row.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::RngExt;

    fn catalog() -> ClassCatalog {
        ClassCatalog::with_objects(&["bed", "pillow", "lamp"]).unwrap()
    }

    fn naive(pred: &[ClassId], gt: &[ClassId], taken: &[ClassId], cat: &ClassCatalog) -> f64 {
        let n = pred.len() as f64;
        let mut classes = taken.to_vec();
        classes.extend(cat.background_ids());
        let mut total = 0.0;
        for c in classes {
            let (mut p, mut i, mut u) = (0.0, 0.0, 0.0);
            for k in 0..pred.len() {
                let (a, b) = (pred[k] == c, gt[k] == c);
                if a {
                    p += 1.0;
                }
                if a && b {
                    i += 1.0;
                }
                if a || b {
                    u += 1.0;
                }
            }
            if u > 0.0 {
                total += p / n * i / u;
            }
        }
        total
    }

    fn mask(w: usize, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(w, bits.len() / w, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn jaccard_examples() {
        let a = mask(4, &[1, 1, 0, 0, 1, 1, 0, 0]);
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard(&a, &mask(4, &[0, 0, 1, 1, 0, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(jaccard(&a, &mask(4, &[1; 8])).unwrap(), 0.5);
        assert_eq!(jaccard(&mask(2, &[0, 0]), &mask(2, &[0, 0])).unwrap(), 0.0);
        assert!(jaccard(&a, &mask(2, &[0, 0])).is_err());
    }

    #[test]
    fn perfect_single_object() {
        let cat = catalog();
        let bed = cat.require("bed").unwrap();
        let gt = LabelMap::filled(4, 4, bed).unwrap();
        let r = reward(gt.labels(), &gt, &[bed], &cat).unwrap();
        assert_eq!(r.total, 1.0);
        assert_eq!(r.r_bg, 0.0);
        let r = reward(gt.labels(), &gt, &[], &cat).unwrap();
        assert_eq!(r.total, r.r_bg);
    }

    #[test]
    fn matches_naive_counting() {
        let cat = catalog();
        let taken = [ClassId(4), ClassId(6)];
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            let pred: Vec<ClassId> = (0..1024).map(|_| ClassId(rng.random_range(0..7))).collect();
            let gt: Vec<ClassId> = (0..1024).map(|_| ClassId(rng.random_range(0..7))).collect();
            let gt_map = LabelMap::new(32, 32, gt.clone()).unwrap();
            let r = reward(&pred, &gt_map, &taken, &cat).unwrap();
            assert!((r.total - naive(&pred, &gt, &taken, &cat)).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r.total));
        }
    }

    #[test]
    fn rejects_background_or_repeats_in_taken() {
        let cat = catalog();
        let gt = LabelMap::filled(2, 2, ClassId(1)).unwrap();
        assert!(reward(gt.labels(), &gt, &[ClassId(1)], &cat).is_err());
        assert!(reward(gt.labels(), &gt, &[ClassId(4), ClassId(4)], &cat).is_err());
    }

    #[test]
    fn empty_action_changes_nothing() {
        let cat = catalog();
        let gt = LabelMap::new(2, 2, vec![ClassId(1), ClassId(4), ClassId(2), ClassId(5)]).unwrap();
        let pred = vec![ClassId(1), ClassId(4), ClassId(4), ClassId(2)];
        let a = reward(&pred, &gt, &[ClassId(4)], &cat).unwrap();
        let b = reward(&pred, &gt, &[ClassId(4), ClassId(6)], &cat).unwrap();
        assert_eq!(a.total, b.total);
    }
}
