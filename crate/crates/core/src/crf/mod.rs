//! Binary object/background CRF over superpixel adjacency with exact MAP
//! inference by minimum cut.
//!
//! Energy of a labeling `x` (true = object):
//! `w1 Σ θ_d(x_i) + Σ_{(i,j): x_i ≠ x_j} (w2 exp(-dc_ij) + w3 exp(-ds_ij))`
//! where `θ_d(object) = -ln p_i`, `θ_d(background) = -ln(1 - p_i)` and
//! `dc`, `ds` are the distances between the appearance and spatial feature
//! means of adjacent superpixels.

mod maxflow;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use maxflow::FlowNetwork;

use crate::classifiers::StumpEnsemble;
use crate::error::{Error, Result};
use crate::metrics::jaccard;
use crate::scene::{BinaryMask, ClassId, Scene};

pub const P_MIN: f64 = 1e-4;

/// `true` marks an object node.
pub type CrfLabeling = Vec<bool>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for CrfWeights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 0.5, w3: 0.5 }
    }
}

impl CrfWeights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self> {
        let w = Self { w1, w2, w3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w1 > 0.0 && self.w1.is_finite()) {
            return Err(Error::NonSubmodular(format!("unary weight w1 = {} must be positive", self.w1)));
        }
        if !(self.w2 >= 0.0 && self.w2.is_finite() && self.w3 >= 0.0 && self.w3.is_finite()) {
            return Err(Error::NonSubmodular(format!(
                "pairwise weights w2 = {}, w3 = {} must be non-negative",
                self.w2, self.w3
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfEdge {
    pub a: usize,
    pub b: usize,
    pub color_diff: f64,
    pub spatial_diff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrfGraph {
    /// Unary cost of labelling each node object.
    cost_object: Vec<f64>,
    /// Unary cost of labelling each node background.
    cost_background: Vec<f64>,
    edges: Vec<CrfEdge>,
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(P_MIN, 1.0 - P_MIN)
}

impl CrfGraph {
    /// Graph from per-node object probabilities and undirected edges.
    pub fn new(probabilities: &[f64], edges: Vec<CrfEdge>) -> Result<Self> {
        let n = probabilities.len();
        if probabilities.iter().any(|p| p.is_nan()) {
            return Err(Error::Invalid("node probability is NaN".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            if e.a >= n || e.b >= n {
                return Err(Error::Invalid(format!("edge ({}, {}) outside {n} nodes", e.a, e.b)));
            }
            if e.a == e.b {
                return Err(Error::Invalid(format!("self-loop at node {}", e.a)));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(Error::Invalid(format!("duplicate edge ({}, {})", e.a, e.b)));
            }
            if !(e.color_diff >= 0.0 && e.spatial_diff >= 0.0) {
                return Err(Error::Invalid("edge statistics must be non-negative".into()));
            }
        }
        Ok(Self {
            cost_object: probabilities.iter().map(|&p| -clamp_p(p).ln()).collect(),
            cost_background: probabilities.iter().map(|&p| -(1.0 - clamp_p(p)).ln()).collect(),
            edges,
        })
    }

    pub fn node_count(&self) -> usize {
        self.cost_object.len()
    }

    pub fn edges(&self) -> &[CrfEdge] {
        &self.edges
    }

    /// `(cost if object, cost if background)` before weighting.
    pub fn unary(&self, i: usize) -> (f64, f64) {
        (self.cost_object[i], self.cost_background[i])
    }

    pub fn pairwise(edge: &CrfEdge, weights: &CrfWeights) -> f64 {
        weights.w2 * (-edge.color_diff).exp() + weights.w3 * (-edge.spatial_diff).exp()
    }

    pub fn energy(&self, labeling: &[bool], weights: &CrfWeights) -> Result<f64> {
        if labeling.len() != self.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "labeling has {} nodes, graph has {}",
                labeling.len(),
                self.node_count()
            )));
        }
        let unary: f64 = labeling
            .iter()
            .enumerate()
            .map(|(i, &obj)| if obj { self.cost_object[i] } else { self.cost_background[i] })
            .sum();
        let pair: f64 = self
            .edges
            .iter()
            .filter(|e| labeling[e.a] != labeling[e.b])
            .map(|e| Self::pairwise(e, weights))
            .sum();
        Ok(weights.w1 * unary + pair)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Graph for `scene` with node probabilities from `unary`.
pub fn build_graph(scene: &Scene, unary: &StumpEnsemble) -> Result<CrfGraph> {
    let f = &scene.features;
    let probs = (0..f.rows()).map(|i| unary.predict_prob(f.row(i))).collect::<Result<Vec<_>>>()?;
    let edges = scene
        .superpixels
        .adjacency()
        .into_iter()
        .map(|(a, b)| CrfEdge {
            a,
            b,
            color_diff: distance(f.appearance(a), f.appearance(b)),
            spatial_diff: distance(f.spatial(a), f.spatial(b)),
        })
        .collect();
    CrfGraph::new(&probs, edges)
}

/// Exact minimum-energy labeling. Among minimizers the one with the fewest
/// object nodes (the minimal source set of the cut) is returned.
pub fn map_inference(graph: &CrfGraph, weights: &CrfWeights) -> Result<CrfLabeling> {
    weights.validate()?;
    let n = graph.node_count();
    let (s, t) = (n, n + 1);
    let mut net = FlowNetwork::new(n + 2);
    for i in 0..n {
        let a = weights.w1 * graph.cost_object[i];
        let b = weights.w1 * graph.cost_background[i];
        let m = a.min(b);
        // cutting s->i puts i on the background side, cutting i->t makes it object
        if b - m > 0.0 {
            net.add_edge(s, i, b - m, 0.0);
        }
        if a - m > 0.0 {
            net.add_edge(i, t, a - m, 0.0);
        }
    }
    for e in &graph.edges {
        let c = CrfGraph::pairwise(e, weights);
        if c > 0.0 {
            net.add_edge(e.a, e.b, c, c);
        }
    }
    net.max_flow(s, t);
    let mut side = net.source_side(s);
    side.truncate(n);
    Ok(side)
}

/// Pixel mask of the superpixels labelled object.
pub fn labeling_mask(scene: &Scene, labeling: &[bool]) -> Result<BinaryMask> {
    scene.superpixels.expand(labeling)
}

/// MAP mask of `scene` for one class.
pub fn segment(scene: &Scene, unary: &StumpEnsemble, weights: &CrfWeights) -> Result<BinaryMask> {
    let g = build_graph(scene, unary)?;
    labeling_mask(scene, &map_inference(&g, weights)?)
}

/// Candidate weights for [`fit_weights`], the cartesian product of three
/// value lists. Parsed from `w1=1;w2=0,0.5,1;w3=0,1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightGrid {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w3: Vec<f64>,
}

impl Default for WeightGrid {
    fn default() -> Self {
        "w1=1;w2=0,0.25,0.5,1,2;w3=0,0.25,0.5,1".parse().expect("default grid parses")
    }
}

impl WeightGrid {
    /// Points in order: w1 outermost, w3 innermost.
    pub fn points(&self) -> Vec<CrfWeights> {
        let mut out = Vec::new();
        for &w1 in &self.w1 {
            for &w2 in &self.w2 {
                for &w3 in &self.w3 {
                    out.push(CrfWeights { w1, w2, w3 });
                }
            }
        }
        out
    }
}

impl FromStr for WeightGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lists: [Option<Vec<f64>>; 3] = [None, None, None];
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("grid entry {part:?} is not name=values")))?;
            let slot = match key.trim() {
                "w1" => 0,
                "w2" => 1,
                "w3" => 2,
                other => return Err(Error::Invalid(format!("unknown grid weight {other:?}"))),
            };
            let parsed = values
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("bad grid value {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            lists[slot] = Some(parsed);
        }
        let [w1, w2, w3] = lists.map(|l| l.unwrap_or_default());
        let grid = WeightGrid { w1, w2, w3 };
        let points = grid.points();
        if points.is_empty() {
            return Err(Error::Invalid("weight grid is empty".into()));
        }
        for p in &points {
            p.validate()?;
        }
        Ok(grid)
    }
}

impl fmt::Display for WeightGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        write!(f, "w1={};w2={};w3={}", join(&self.w1), join(&self.w2), join(&self.w3))
    }
}

/// Per-scene fitting score: Jaccard, except that predicting nothing for a
/// scene without the class counts as a perfect 1.
pub fn fit_score(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    if pred.count() == 0 && gt.count() == 0 {
        return Ok(1.0);
    }
    jaccard(pred, gt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub weights: CrfWeights,
    pub score: f64,
    /// Mean Jaccard of every grid point, in grid order.
    pub table: Vec<(CrfWeights, f64)>,
}

/// Mean Jaccard of every grid point on `scenes`; the best point wins, ties go
/// to the smaller `w2 + w3`, then to grid order.
pub fn fit_weights(scenes: &[&Scene], class: ClassId, unary: &StumpEnsemble, grid: &WeightGrid) -> Result<FitReport> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::Invalid("weight grid is empty".into()));
    }
    for p in &points {
        p.validate()?;
    }
    if scenes.is_empty() {
        return Err(Error::Invalid("no scenes to fit CRF weights on".into()));
    }
    let per_scene: Vec<Vec<f64>> = scenes
        .par_iter()
        .map(|scene| {
            let graph = build_graph(scene, unary)?;
            let gt = scene.labels.mask_for_class(class);
            points
                .iter()
                .map(|w| fit_score(&labeling_mask(scene, &map_inference(&graph, w)?)?, &gt))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let table: Vec<(CrfWeights, f64)> = points
        .iter()
        .enumerate()
        .map(|(k, w)| (*w, per_scene.iter().map(|s| s[k]).sum::<f64>() / scenes.len() as f64))
        .collect();
    let mut best = 0;
    for k in 1..table.len() {
        let (w, s) = table[k];
        let (bw, bs) = table[best];
        if s > bs || (s == bs && w.w2 + w.w3 < bw.w2 + bw.w3) {
            best = k;
        }
    }
    Ok(FitReport { weights: table[best].0, score: table[best].1, table })
}
