//! Procedural indoor-like scenes.
//!
//! A scene is painted back to front: ceiling/wall/floor bands with sloped
//! boundaries, then objects as axis-aligned rectangles or ellipses drawn in
//! containment order, so contained objects (a pillow on a bed) overwrite
//! their container. The superpixel partition is a regular grid whose cells
//! are split along label boundaries when they straddle too much. Features
//! are per-class appearance signatures blurred by the superpixel's label mix
//! and corrupted with Gaussian noise, followed by the normalized centroid and
//! area fraction.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::RngExt;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SeededRng};
use crate::scene::{
    save_dataset, ClassCatalog, ClassId, Dataset, FeatureTable, LabelMap, Scene, SuperpixelPartition,
    BACKGROUND_NAMES,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Rect,
    Ellipse,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Bottom edge rests inside the floor band.
    #[default]
    Floor,
    /// Entirely inside the wall band.
    Wall,
    /// Anywhere in the image.
    Any,
    /// Inside the container named by `inside`.
    Inside,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class: String,
    pub presence: f64,
    /// Area as a fraction of the image, `[min, max]`.
    pub size: [f64; 2],
    #[serde(default = "default_aspect")]
    pub aspect: [f64; 2],
    #[serde(default)]
    pub shape: Shape,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inside: Option<String>,
}

fn default_aspect() -> [f64; 2] {
    [0.7, 1.4]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundLayout {
    pub ceiling_probability: f64,
    /// Ceiling height as a fraction of the image height.
    pub ceiling_band: [f64; 2],
    /// Floor height as a fraction of the image height.
    pub floor_band: [f64; 2],
    /// Largest |dy/dx| of the band boundaries.
    #[serde(default)]
    pub max_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneTemplate {
    pub category: String,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    pub background: BackgroundLayout,
    pub objects: Vec<ObjectSpec>,
}

fn default_sigma() -> f64 {
    0.35
}

fn check_range(what: &str, r: [f64; 2], lo_open: f64, hi_open: f64) -> Result<()> {
    if !(r[0] > lo_open && r[1] < hi_open && r[0] <= r[1]) {
        return Err(Error::Invalid(format!("{what}: range {r:?} must be nonempty and inside ({lo_open}, {hi_open})")));
    }
    Ok(())
}

impl SceneTemplate {
    pub fn validate(&self) -> Result<()> {
        let cat = &self.category;
        let bg = &self.background;
        if !(0.0..=1.0).contains(&bg.ceiling_probability) {
            return Err(Error::Invalid(format!("{cat}: ceiling probability outside [0,1]")));
        }
        check_range(&format!("{cat}: ceiling band"), bg.ceiling_band, 0.0, 1.0)?;
        check_range(&format!("{cat}: floor band"), bg.floor_band, 0.0, 1.0)?;
        if bg.ceiling_band[1] + bg.floor_band[1] >= 0.9 {
            return Err(Error::Invalid(format!("{cat}: ceiling and floor bands leave no wall")));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Invalid(format!("{cat}: noise sigma must be >= 0")));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if BACKGROUND_NAMES.contains(&o.class.as_str()) || o.class == "void" {
                return Err(Error::Invalid(format!("{cat}: {} is not an object class", o.class)));
            }
            if self.objects[..i].iter().any(|p| p.class == o.class) {
                return Err(Error::Invalid(format!("{cat}: object {} listed twice", o.class)));
            }
            if !(0.0..=1.0).contains(&o.presence) {
                return Err(Error::Invalid(format!("{cat}: {} presence outside [0,1]", o.class)));
            }
            check_range(&format!("{cat}: {} size", o.class), o.size, 0.0, 1.0)?;
            check_range(&format!("{cat}: {} aspect", o.class), o.aspect, 0.0, f64::INFINITY)?;
            match (&o.inside, o.placement) {
                (Some(c), Placement::Inside) => {
                    if !self.objects.iter().any(|p| &p.class == c) {
                        return Err(Error::Invalid(format!("{cat}: {} inside unknown {c}", o.class)));
                    }
                }
                (None, Placement::Inside) => {
                    return Err(Error::Invalid(format!("{cat}: {} has inside placement but no container", o.class)))
                }
                (Some(_), _) => {
                    return Err(Error::Invalid(format!("{cat}: {} names a container but is not placed inside", o.class)))
                }
                (None, _) => {}
            }
        }
        self.placement_order().map(|_| ())
    }

    /// Object indices with every container before its contents.
    pub fn placement_order(&self) -> Result<Vec<usize>> {
        let n = self.objects.len();
        let container: Vec<Option<usize>> = self
            .objects
            .iter()
            .map(|o| o.inside.as_ref().and_then(|c| self.objects.iter().position(|p| &p.class == c)))
            .collect();
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        while order.len() < n {
            let before = order.len();
            for i in 0..n {
                if !placed[i] && container[i].is_none_or(|c| placed[c]) {
                    placed[i] = true;
                    order.push(i);
                }
            }
            if order.len() == before {
                return Err(Error::Invalid(format!("{}: containment graph has a cycle", self.category)));
            }
        }
        Ok(order)
    }
}

pub fn default_templates() -> Vec<SceneTemplate> {
    serde_json::from_str(include_str!("../assets/default_templates.json")).expect("bundled templates parse")
}

pub fn load_templates(path: &Path) -> Result<Vec<SceneTemplate>> {
    let templates: Vec<SceneTemplate> = crate::scene::read_json(path)?;
    for t in &templates {
        t.validate()?;
    }
    Ok(templates)
}

/// Catalog with void, the background classes and every template object in
/// order of first appearance.
pub fn catalog_for(templates: &[SceneTemplate]) -> Result<ClassCatalog> {
    let mut objects: Vec<&str> = Vec::new();
    for t in templates {
        for o in &t.objects {
            if !objects.contains(&o.class.as_str()) {
                objects.push(&o.class);
            }
        }
    }
    ClassCatalog::with_objects(&objects)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub appearance_channels: usize,
    pub grid_cell: usize,
    /// A grid cell whose minority labels cover more than this fraction of it
    /// is split along label boundaries.
    pub straddle_tolerance: f64,
    pub signature_seed: u64,
    /// Replaces every template's noise level when set.
    pub sigma: Option<f64>,
    pub max_retries: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            appearance_channels: 16,
            grid_cell: 4,
            straddle_tolerance: 0.2,
            signature_seed: 0x5EED,
            sigma: None,
            max_retries: 50,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

impl Rect {
    fn intersection_area(&self, o: &Rect) -> usize {
        let x = (self.x0 + self.w).min(o.x0 + o.w).saturating_sub(self.x0.max(o.x0));
        let y = (self.y0 + self.h).min(o.y0 + o.h).saturating_sub(self.y0.max(o.y0));
        x * y
    }
}

/// Scene generator bound to one catalog and one set of appearance signatures.
#[derive(Clone, Debug)]
pub struct Generator {
    catalog: ClassCatalog,
    config: SynthConfig,
    signatures: Vec<Vec<f64>>,
}

impl Generator {
    pub fn new(catalog: ClassCatalog, config: SynthConfig) -> Result<Self> {
        if config.appearance_channels == 0 {
            return Err(Error::Invalid("need at least one appearance channel".into()));
        }
        if config.grid_cell == 0 {
            return Err(Error::Invalid("grid cell must be positive".into()));
        }
        if !(0.0..=1.0).contains(&config.straddle_tolerance) {
            return Err(Error::Invalid("straddle tolerance outside [0,1]".into()));
        }
        if let Some(s) = config.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Invalid("sigma must be >= 0".into()));
            }
        }
        let signatures = (0..catalog.len() as u64)
            .map(|c| {
                let mut rng = rng_from_seed(derive_seed(config.signature_seed, c));
                (0..config.appearance_channels).map(|_| rng.random::<f64>()).collect()
            })
            .collect();
        Ok(Self {
            catalog,
            config,
            signatures,
        })
    }

    pub fn catalog(&self) -> &ClassCatalog {
        &self.catalog
    }

    pub fn signature(&self, class: ClassId) -> &[f64] {
        &self.signatures[class.index()]
    }

    /// Deterministic in `(template, width, height, seed)`.
    pub fn generate_scene(&self, template: &SceneTemplate, width: usize, height: usize, seed: u64) -> Result<Scene> {
        if width < 32 || height < 32 {
            return Err(Error::Invalid(format!("resolution {width}x{height} below 32x32")));
        }
        template.validate()?;
        let mut rng = rng_from_seed(seed);
        let labels = self.paint(template, width, height, &mut rng)?;
        let superpixels = self.partition(&labels)?;
        let sigma = self.config.sigma.unwrap_or(template.noise_sigma);
        let features = self.features(&labels, &superpixels, sigma, &mut rng)?;
        Scene::new(
            format!("{}-{seed:016x}", template.category),
            template.category.clone(),
            labels,
            superpixels,
            features,
        )
    }

    fn paint(&self, t: &SceneTemplate, w: usize, h: usize, rng: &mut SeededRng) -> Result<LabelMap> {
        let [wall, floor, ceiling] = self.catalog.background_ids();
        let mut labels = vec![wall; w * h];
        let bg = &t.background;
        let cx = w as f64 / 2.0;

        let has_ceiling = rng.random_bool(bg.ceiling_probability);
        let ceil_frac = rng.random_range(bg.ceiling_band[0]..=bg.ceiling_band[1]);
        let ceil_slope = slope(rng, bg.max_slope);
        let floor_frac = rng.random_range(bg.floor_band[0]..=bg.floor_band[1]);
        let floor_slope = slope(rng, bg.max_slope);
        let ceil_y = ceil_frac * h as f64;
        let floor_y = h as f64 - floor_frac * h as f64;
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let l = &mut labels[y * w + x];
                if has_ceiling && py < ceil_y + ceil_slope * (px - cx) {
                    *l = ceiling;
                } else if py >= floor_y + floor_slope * (px - cx) {
                    *l = floor;
                }
            }
        }
        let wall_top = if has_ceiling { ceil_y.ceil() as usize } else { 0 };
        let floor_top = floor_y.floor() as usize;

        let mut placed: HashMap<&str, Rect> = HashMap::new();
        let mut free_standing: Vec<Rect> = Vec::new();
        for i in t.placement_order()? {
            let o = &t.objects[i];
            let container = match &o.inside {
                Some(c) => match placed.get(c.as_str()) {
                    Some(r) => Some(*r),
                    None => continue,
                },
                None => None,
            };
            if !rng.random_bool(o.presence) {
                continue;
            }
            let class = self.catalog.require(&o.class)?;
            let rect = match container {
                Some(c) => place_inside(o, c, w, h, rng),
                None => {
                    let r = place_free(o, w, h, wall_top, floor_top, &free_standing, self.config.max_retries, rng)?;
                    free_standing.push(r);
                    r
                }
            };
            paint_shape(&mut labels, w, rect, o.shape, class);
            placed.insert(&o.class, rect);
        }
        LabelMap::new(w, h, labels)
    }

    fn partition(&self, labels: &LabelMap) -> Result<SuperpixelPartition> {
        let (w, h) = (labels.width(), labels.height());
        let cell = self.config.grid_cell;
        let cols = w.div_ceil(cell);
        const UNSET: u32 = u32::MAX;
        // provisional ids are (cell, piece) pairs packed into one u32
        let mut provisional = vec![UNSET; w * h];
        let mut next = 0u32;
        for cy in 0..h.div_ceil(cell) {
            for cx in 0..cols {
                let (x0, y0) = (cx * cell, cy * cell);
                let (x1, y1) = ((x0 + cell).min(w), (y0 + cell).min(h));
                let mut hist: BTreeMap<ClassId, usize> = BTreeMap::new();
                for y in y0..y1 {
                    for x in x0..x1 {
                        *hist.entry(labels.get(x, y)).or_default() += 1;
                    }
                }
                let total = (x1 - x0) * (y1 - y0);
                let dominant = hist.values().copied().max().unwrap_or(0);
                let straddle = 1.0 - dominant as f64 / total as f64;
                if straddle <= self.config.straddle_tolerance {
                    for y in y0..y1 {
                        for x in x0..x1 {
                            provisional[y * w + x] = next;
                        }
                    }
                    next += 1;
                    continue;
                }
                for y in y0..y1 {
                    for x in x0..x1 {
                        if provisional[y * w + x] != UNSET {
                            continue;
                        }
                        let label = labels.get(x, y);
                        let mut stack = vec![(x, y)];
                        provisional[y * w + x] = next;
                        while let Some((px, py)) = stack.pop() {
                            let mut visit = |nx: usize, ny: usize| {
                                if nx >= x0 && nx < x1 && ny >= y0 && ny < y1
                                    && provisional[ny * w + nx] == UNSET
                                    && labels.get(nx, ny) == label
                                {
                                    provisional[ny * w + nx] = next;
                                    stack.push((nx, ny));
                                }
                            };
                            if px > 0 {
                                visit(px - 1, py);
                            }
                            visit(px + 1, py);
                            if py > 0 {
                                visit(px, py - 1);
                            }
                            visit(px, py + 1);
                        }
                        next += 1;
                    }
                }
            }
        }
        // renumber by raster order of each superpixel's first pixel
        let mut remap = vec![UNSET; next as usize];
        let mut count = 0u32;
        let assignment = provisional
            .iter()
            .map(|&p| {
                if remap[p as usize] == UNSET {
                    remap[p as usize] = count;
                    count += 1;
                }
                remap[p as usize]
            })
            .collect();
        SuperpixelPartition::new(w, h, assignment)
    }

    fn features(
        &self,
        labels: &LabelMap,
        sp: &SuperpixelPartition,
        sigma: f64,
        rng: &mut SeededRng,
    ) -> Result<FeatureTable> {
        let (w, h) = (labels.width(), labels.height());
        let d = self.config.appearance_channels;
        let dim = d + crate::scene::SPATIAL_CHANNELS;
        let mut acc = vec![0.0f64; sp.count() * dim];
        for (p, &l) in labels.labels().iter().enumerate() {
            let s = sp.superpixel_at(p);
            let row = &mut acc[s * dim..(s + 1) * dim];
            for (k, v) in self.signatures[l.index()].iter().enumerate() {
                row[k] += v;
            }
            row[d] += (p % w) as f64 + 0.5;
            row[d + 1] += (p / w) as f64 + 0.5;
        }
        let noise = Normal::new(0.0, sigma).map_err(|e| Error::Invalid(format!("noise: {e}")))?;
        let n_pixels = (w * h) as f64;
        for s in 0..sp.count() {
            let area = sp.area(s) as f64;
            let row = &mut acc[s * dim..(s + 1) * dim];
            for v in row[..d].iter_mut() {
                *v = *v / area + noise.sample(rng);
            }
            row[d] /= area * w as f64;
            row[d + 1] /= area * h as f64;
            row[d + 2] = area / n_pixels;
        }
        FeatureTable::new(dim, acc)
    }
}

fn slope(rng: &mut SeededRng, max: f64) -> f64 {
    if max > 0.0 {
        rng.random_range(-max..=max)
    } else {
        0.0
    }
}

fn draw_dims(o: &ObjectSpec, w: usize, h: usize, rng: &mut SeededRng) -> (usize, usize) {
    let area = rng.random_range(o.size[0]..=o.size[1]) * (w * h) as f64;
    let aspect = rng.random_range(o.aspect[0]..=o.aspect[1]);
    let rw = (area * aspect).sqrt().round().max(1.0) as usize;
    let rh = (area / (area * aspect).sqrt()).round().max(1.0) as usize;
    (rw, rh)
}

fn place_inside(o: &ObjectSpec, c: Rect, w: usize, h: usize, rng: &mut SeededRng) -> Rect {
    let (rw, rh) = draw_dims(o, w, h, rng);
    let (rw, rh) = (rw.min(c.w), rh.min(c.h));
    let x0 = c.x0 + rng.random_range(0..=c.w - rw);
    let y0 = c.y0 + rng.random_range(0..=c.h - rh);
    Rect { x0, y0, w: rw, h: rh }
}

#[allow(clippy::too_many_arguments)]
fn place_free(
    o: &ObjectSpec,
    w: usize,
    h: usize,
    wall_top: usize,
    floor_top: usize,
    existing: &[Rect],
    retries: usize,
    rng: &mut SeededRng,
) -> Result<Rect> {
    let mut best: Option<(usize, Rect)> = None;
    for _ in 0..retries.max(1) {
        let (rw, rh) = draw_dims(o, w, h, rng);
        if rw > w {
            continue;
        }
        let y_range = match o.placement {
            Placement::Floor => {
                // bottom edge in [floor_top, h]
                let lo = floor_top.max(rh);
                (lo <= h).then(|| (lo - rh, h - rh))
            }
            Placement::Wall => (wall_top + rh <= floor_top).then(|| (wall_top, floor_top - rh)),
            Placement::Any | Placement::Inside => (rh <= h).then(|| (0, h - rh)),
        };
        let Some((ylo, yhi)) = y_range else { continue };
        let x0 = rng.random_range(0..=w - rw);
        let y0 = rng.random_range(ylo..=yhi);
        let r = Rect { x0, y0, w: rw, h: rh };
        let overlap = existing.iter().map(|e| r.intersection_area(e)).sum::<usize>();
        if overlap * 4 <= rw * rh {
            return Ok(r);
        }
        if best.is_none_or(|(o, _)| overlap < o) {
            best = Some((overlap, r));
        }
    }
    best.map(|(_, r)| r).ok_or_else(|| Error::InfeasiblePlacement(o.class.clone()))
}

fn paint_shape(labels: &mut [ClassId], w: usize, r: Rect, shape: Shape, class: ClassId) {
    let (cx, cy) = (r.x0 as f64 + r.w as f64 / 2.0, r.y0 as f64 + r.h as f64 / 2.0);
    let (ax, ay) = (r.w as f64 / 2.0, r.h as f64 / 2.0);
    for y in r.y0..r.y0 + r.h {
        for x in r.x0..r.x0 + r.w {
            let inside = match shape {
                Shape::Rect => true,
                Shape::Ellipse => {
                    let dx = (x as f64 + 0.5 - cx) / ax;
                    let dy = (y as f64 + 0.5 - cy) / ay;
                    dx * dx + dy * dy <= 1.0
                }
            };
            if inside {
                labels[y * w + x] = class;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub name: String,
    pub per_category: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Fraction of each category assigned to the `train` (model) split; the
    /// rest forms the `test` (policy) pool.
    pub model_fraction: f64,
    pub synth: SynthConfig,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            per_category: 120,
            width: 64,
            height: 48,
            seed: 1,
            model_fraction: 0.25,
            synth: SynthConfig::default(),
        }
    }
}

/// Generates `per_category` scenes for every template. Scene `i` overall uses
/// seed `derive_seed(seed, i)`.
pub fn generate_corpus(templates: &[SceneTemplate], spec: &CorpusSpec) -> Result<Dataset> {
    if spec.per_category == 0 {
        return Err(Error::Invalid("per_category must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.model_fraction) {
        return Err(Error::Invalid("model_fraction outside [0,1]".into()));
    }
    for (i, t) in templates.iter().enumerate() {
        t.validate()?;
        if templates[..i].iter().any(|p| p.category == t.category) {
            return Err(Error::Invalid(format!("category {} listed twice", t.category)));
        }
    }
    let catalog = catalog_for(templates)?;
    let generator = Generator::new(catalog.clone(), spec.synth.clone())?;
    let jobs: Vec<(usize, usize)> = (0..templates.len())
        .flat_map(|t| (0..spec.per_category).map(move |i| (t, i)))
        .collect();
    let scenes = jobs
        .par_iter()
        .enumerate()
        .map(|(g, &(t, i))| {
            let template = &templates[t];
            let mut scene = generator.generate_scene(template, spec.width, spec.height, derive_seed(spec.seed, g as u64))?;
            scene.id = format!("{}_{i:04}", template.category);
            Ok(scene)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_model = (spec.per_category as f64 * spec.model_fraction).round() as usize;
    let mut splits = BTreeMap::new();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (g, &(_, i)) in jobs.iter().enumerate() {
        if i < n_model {
            train.push(g);
        } else {
            test.push(g);
        }
    }
    splits.insert("train".to_string(), train);
    splits.insert("test".to_string(), test);
    Dataset::new(spec.name.clone(), catalog, scenes, splits)
}

/// [`generate_corpus`] followed by [`save_dataset`]; returns the manifest path.
pub fn write_corpus(templates: &[SceneTemplate], spec: &CorpusSpec, dir: &Path) -> Result<PathBuf> {
    let dataset = generate_corpus(templates, spec)?;
    save_dataset(&dataset, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template(objects: Vec<ObjectSpec>) -> SceneTemplate {
        SceneTemplate {
            category: "test".into(),
            noise_sigma: 0.35,
            background: BackgroundLayout {
                ceiling_probability: 0.5,
                ceiling_band: [0.1, 0.2],
                floor_band: [0.25, 0.4],
                max_slope: 0.1,
            },
            objects,
        }
    }

    fn obj(class: &str, presence: f64) -> ObjectSpec {
        ObjectSpec {
            class: class.into(),
            presence,
            size: [0.05, 0.1],
            aspect: [0.8, 1.2],
            shape: Shape::Rect,
            placement: Placement::Floor,
            inside: None,
        }
    }

    fn generator(t: &SceneTemplate) -> Generator {
        Generator::new(catalog_for(std::slice::from_ref(t)).unwrap(), SynthConfig::default()).unwrap()
    }

    #[test]
    fn absent_objects_leave_background_only() {
        let t = template(vec![obj("bed", 0.0), obj("chair", 0.0)]);
        let g = generator(&t);
        let s = g.generate_scene(&t, 64, 48, 3).unwrap();
        let bg = g.catalog().background_ids();
        assert!(s.labels.labels().iter().all(|l| bg.contains(l)));
    }

    #[test]
    fn same_seed_same_scene() {
        let t = template(vec![obj("bed", 0.7), obj("chair", 0.5)]);
        let g = generator(&t);
        assert_eq!(g.generate_scene(&t, 64, 48, 11).unwrap(), g.generate_scene(&t, 64, 48, 11).unwrap());
        assert_ne!(g.generate_scene(&t, 64, 48, 11).unwrap(), g.generate_scene(&t, 64, 48, 12).unwrap());
    }

    #[test]
    fn contained_objects_stay_in_container_box() {
        let mut pillow = obj("pillow", 1.0);
        pillow.placement = Placement::Inside;
        pillow.inside = Some("bed".into());
        pillow.size = [0.01, 0.02];
        let t = template(vec![pillow, obj("bed", 1.0)]);
        let g = generator(&t);
        let (bed, pil) = (g.catalog().require("bed").unwrap(), g.catalog().require("pillow").unwrap());
        for seed in 0..20 {
            let s = g.generate_scene(&t, 64, 48, seed).unwrap();
            let bbox = |c: ClassId| {
                let m = s.labels.mask_for_class(c);
                let ones = m.ones();
                let xs = ones.iter().map(|p| p % 64);
                let ys = ones.iter().map(|p| p / 64);
                (xs.clone().min().unwrap(), ys.clone().min().unwrap(), xs.max().unwrap(), ys.max().unwrap())
            };
            let (b, p) = (bbox(bed), bbox(pil));
            assert!(p.0 >= b.0 && p.1 >= b.1 && p.2 <= b.2 && p.3 <= b.3, "seed {seed}");
        }
    }

    #[test]
    fn cycles_and_bad_ranges_are_rejected() {
        let mut a = obj("a", 0.5);
        a.placement = Placement::Inside;
        a.inside = Some("b".into());
        let mut b = obj("b", 0.5);
        b.placement = Placement::Inside;
        b.inside = Some("a".into());
        assert!(template(vec![a, b]).validate().is_err());
        let mut c = obj("c", 0.5);
        c.size = [0.2, 0.1];
        assert!(template(vec![c]).validate().is_err());
        assert!(template(vec![obj("d", 1.5)]).validate().is_err());
    }

    #[test]
    fn oversized_object_is_infeasible() {
        let mut huge = obj("wardrobe", 1.0);
        huge.placement = Placement::Wall;
        huge.size = [0.9, 0.95];
        let t = template(vec![huge]);
        let err = generator(&t).generate_scene(&t, 64, 48, 1).unwrap_err();
        assert!(matches!(err, Error::InfeasiblePlacement(ref o) if o == "wardrobe"), "{err}");
    }

    #[test]
    fn partition_respects_straddle_tolerance() {
        let t = template(vec![obj("bed", 1.0), obj("chair", 1.0)]);
        let g = generator(&t);
        let s = g.generate_scene(&t, 64, 48, 5).unwrap();
        let n = g.catalog().len();
        let majority = s.superpixels.majority_labels(&s.labels, n);
        // every superpixel is either a whole grid cell or label-pure
        let mut minority = vec![0usize; s.superpixels.count()];
        for (p, &l) in s.labels.labels().iter().enumerate() {
            let sp = s.superpixels.superpixel_at(p);
            if l != majority[sp] {
                minority[sp] += 1;
            }
        }
        for (sp, &m) in minority.iter().enumerate() {
            assert!(m as f64 <= 0.2 * s.superpixels.area(sp) as f64 + 1e-9);
        }
        assert_eq!(s.features.rows(), s.superpixels.count());
        assert!(s.features.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn default_templates_are_valid() {
        let ts = default_templates();
        assert_eq!(ts.len(), 9);
        for t in &ts {
            t.validate().unwrap();
        }
    }
}
