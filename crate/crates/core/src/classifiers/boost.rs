//! Logistic AdaBoost over decision stumps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `h(x) = polarity` if `x[feature] > threshold`, else `-polarity`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
    pub alpha: f64,
}

impl Stump {
    pub fn vote(&self, x: &[f64]) -> f64 {
        let h = if x[self.feature] > self.threshold { 1.0 } else { -1.0 };
        h * f64::from(self.polarity)
    }
}

/// `p = sigmoid(scale * margin + offset)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scale: f64,
    pub offset: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self { scale: 1.0, offset: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StumpEnsemble {
    pub dim: usize,
    pub rounds: Vec<Stump>,
    #[serde(default)]
    pub calibration: Calibration,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl StumpEnsemble {
    pub fn new(dim: usize, rounds: Vec<Stump>, calibration: Calibration) -> Result<Self> {
        if rounds.is_empty() {
            return Err(Error::Invalid("ensemble needs at least one round".into()));
        }
        for s in &rounds {
            if s.feature >= dim || !s.alpha.is_finite() || !(s.polarity == 1 || s.polarity == -1) {
                return Err(Error::Invalid(format!("bad stump {s:?} for dimension {dim}")));
            }
        }
        if !(calibration.scale.is_finite() && calibration.offset.is_finite()) {
            return Err(Error::Invalid("calibration must be finite".into()));
        }
        Ok(Self { dim, rounds, calibration })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "feature vector has {} values, ensemble expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.margin_unchecked(x))
    }

    fn margin_unchecked(&self, x: &[f64]) -> f64 {
        self.rounds.iter().map(|s| s.alpha * s.vote(x)).sum()
    }

    pub fn prob_from_margin(&self, margin: f64) -> f64 {
        sigmoid(self.calibration.scale * margin + self.calibration.offset)
    }

    pub fn predict_prob(&self, x: &[f64]) -> Result<f64> {
        Ok(self.prob_from_margin(self.margin(x)?))
    }

    /// Refits the calibration on `(x, y)` by maximum likelihood.
    pub fn platt_refit(&mut self, x: &[f64], y: &[bool]) -> Result<()> {
        let margins = rows(x, self.dim, y.len())?
            .map(|r| self.margin_unchecked(r))
            .collect::<Vec<_>>();
        self.calibration = platt(&margins, y);
        Ok(())
    }
}

fn rows<'a>(x: &'a [f64], dim: usize, n: usize) -> Result<std::slice::ChunksExact<'a, f64>> {
    if dim == 0 || x.len() != dim * n {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {n} examples of dimension {dim}",
            x.len()
        )));
    }
    Ok(x.chunks_exact(dim))
}

/// Two-parameter logistic fit of labels on margins by Newton's method.
pub fn platt(margins: &[f64], y: &[bool]) -> Calibration {
    let (mut a, mut b) = (1.0f64, 0.0f64);
    for _ in 0..50 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-9, 0.0, 1e-9);
        for (&m, &t) in margins.iter().zip(y) {
            let p = sigmoid(a * m + b);
            let r = p - if t { 1.0 } else { 0.0 };
            let v = p * (1.0 - p);
            ga += r * m;
            gb += r;
            haa += v * m * m;
            hab += v * m;
            hbb += v;
        }
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        a -= da;
        b -= db;
        if !(a.is_finite() && b.is_finite()) {
            return Calibration::default();
        }
        if da.abs() + db.abs() < 1e-10 {
            break;
        }
    }
    Calibration { scale: a, offset: b }
}

/// Area under the ROC curve; tied scores count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut rank_sum, mut n_pos) = (0.0, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum += mid_rank;
                n_pos += 1;
            }
        }
        i = j + 1;
    }
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    (rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64)
}

/// Training matrix with each feature column presorted once.
pub struct BoostData<'a> {
    x: &'a [f64],
    dim: usize,
    y: Vec<f64>,
    order: Vec<Vec<u32>>,
}

impl<'a> BoostData<'a> {
    pub fn new(x: &'a [f64], dim: usize, labels: &[bool]) -> Result<Self> {
        let n = labels.len();
        let _ = rows(x, dim, n)?;
        if n == 0 {
            return Err(Error::Invalid("no training examples".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("training features must be finite".into()));
        }
        let order = (0..dim)
            .map(|f| {
                let mut o: Vec<u32> = (0..n as u32).collect();
                o.sort_by(|&a, &b| x[a as usize * dim + f].total_cmp(&x[b as usize * dim + f]));
                o
            })
            .collect();
        Ok(Self {
            x,
            dim,
            y: labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect(),
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn value(&self, i: usize, f: usize) -> f64 {
        self.x[i * self.dim + f]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// Stump with the smallest weighted error under `w` (alpha unset).
    /// Ties keep the lowest feature, then the lowest threshold, then
    /// positive polarity.
    fn best_stump(&self, w: &[f64]) -> Stump {
        let total: f64 = w.iter().sum();
        // weight of positives; a stump answering +1 everywhere errs on the negatives
        let pos_total: f64 = w.iter().zip(&self.y).filter(|(_, &y)| y > 0.0).map(|(w, _)| w).sum();
        let mut best = (f64::INFINITY, Stump { feature: 0, threshold: 0.0, polarity: 1, alpha: 0.0 });
        for f in 0..self.dim {
            let order = &self.order[f];
            let lowest = self.value(order[0] as usize, f);
            // err_plus: error of polarity +1 with everything at or below the threshold voting -1
            let mut err_plus = total - pos_total;
            let consider = |err_plus: f64, threshold: f64, best: &mut (f64, Stump)| {
                let err_minus = total - err_plus;
                if err_plus < best.0 {
                    *best = (err_plus, Stump { feature: f, threshold, polarity: 1, alpha: 0.0 });
                }
                if err_minus < best.0 {
                    *best = (err_minus, Stump { feature: f, threshold, polarity: -1, alpha: 0.0 });
                }
            };
            consider(err_plus, lowest - 1.0, &mut best);
            let mut k = 0;
            while k < order.len() {
                let v = self.value(order[k] as usize, f);
                while k < order.len() && self.value(order[k] as usize, f) == v {
                    let i = order[k] as usize;
                    err_plus += w[i] * self.y[i];
                    k += 1;
                }
                if k < order.len() {
                    let next = self.value(order[k] as usize, f);
                    consider(err_plus, v + (next - v) / 2.0, &mut best);
                }
            }
        }
        best.1
    }
}

/// Per-round hook that masks the examples a stump may be fitted on.
pub trait RoundSampler {
    /// Returns the per-example inclusion multiplier for this round.
    fn sample(&mut self, round: usize, y: &[f64]) -> Vec<f64>;
}

struct Everyone;

impl RoundSampler for Everyone {
    fn sample(&mut self, _round: usize, y: &[f64]) -> Vec<f64> {
        vec![1.0; y.len()]
    }
}

/// Logistic AdaBoost: example weights `1 / (1 + exp(y F(x)))`, stump weight
/// `0.5 ln((1 - err) / err)`. Stops early after a perfect stump or when no
/// stump beats chance.
pub fn boost(data: &BoostData, rounds: usize) -> Result<StumpEnsemble> {
    boost_with(data, rounds, &mut Everyone)
}

pub fn boost_with(data: &BoostData, rounds: usize, sampler: &mut dyn RoundSampler) -> Result<StumpEnsemble> {
    if rounds == 0 {
        return Err(Error::Invalid("rounds must be at least 1".into()));
    }
    let n = data.len();
    let mut margin = vec![0.0f64; n];
    let mut stumps = Vec::new();
    for t in 0..rounds {
        let w: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + (data.y[i] * margin[i]).exp())).collect();
        let mask = sampler.sample(t, &data.y);
        let fit_w: Vec<f64> = w.iter().zip(&mask).map(|(a, b)| a * b).collect();
        let mut stump = data.best_stump(&fit_w);
        let total: f64 = w.iter().sum();
        let err: f64 = (0..n)
            .filter(|&i| stump.vote(data.row(i)) != data.y[i])
            .map(|i| w[i])
            .sum::<f64>()
            / total;
        let err = err.clamp(1e-10, 1.0 - 1e-10);
        stump.alpha = 0.5 * ((1.0 - err) / err).ln();
        if stump.alpha <= 0.0 && !stumps.is_empty() {
            break;
        }
        for (i, m) in margin.iter_mut().enumerate() {
            *m += stump.alpha * stump.vote(data.row(i));
        }
        stumps.push(stump);
        if err <= 1e-10 {
            break;
        }
    }
    StumpEnsemble::new(data.dim, stumps, Calibration::default())
}
