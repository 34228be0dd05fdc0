//! Scenes, label maps, binary masks and superpixel partitions.

mod components;
mod io;
pub mod pgm;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use components::{connected_components, Component, ComponentSet, Connectivity};
pub use io::{
    load_catalog, load_dataset, read_json, read_label_map, save_dataset, write_atomic, write_json, Manifest, ManifestScene,
};

/// Index into a [`ClassCatalog`]. Id 0 is reserved for void/unlabeled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u16);

impl ClassId {
    pub const VOID: ClassId = ClassId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_void(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const BACKGROUND_NAMES: [&str; 3] = ["wall", "floor", "ceiling"];

/// Ordered class names. Void sits at index 0; wall, floor and ceiling are
/// the background classes and every other id is an object class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCatalog {
    names: Vec<String>,
    background: [ClassId; 3],
}

impl ClassCatalog {
    /// `names[0]` must be the void class. The three background classes are
    /// looked up by name.
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Invalid("catalog has no classes".into()));
        }
        if names.len() > u16::MAX as usize {
            return Err(Error::Invalid("catalog too large".into()));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::Invalid(format!("duplicate class name {a:?}")));
            }
        }
        let mut background = [ClassId::VOID; 3];
        for (slot, bg) in background.iter_mut().zip(BACKGROUND_NAMES) {
            let pos = names
                .iter()
                .position(|n| n == bg)
                .ok_or_else(|| Error::Invalid(format!("catalog lacks background class {bg:?}")))?;
            if pos == 0 {
                return Err(Error::Invalid(format!("{bg:?} cannot take the void slot")));
            }
            *slot = ClassId(pos as u16);
        }
        Ok(Self { names, background })
    }

    /// Catalog with a leading `void` entry followed by wall, floor, ceiling and `objects`.
    pub fn with_objects<S: AsRef<str>>(objects: &[S]) -> Result<Self> {
        let mut names = vec!["void".to_string()];
        names.extend(BACKGROUND_NAMES.iter().map(|s| s.to_string()));
        names.extend(objects.iter().map(|s| s.as_ref().to_string()));
        Self::new(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<ClassId> {
        self.names.iter().position(|n| n == name).map(|i| ClassId(i as u16))
    }

    pub fn require(&self, name: &str) -> Result<ClassId> {
        self.id(name)
            .ok_or_else(|| Error::Invalid(format!("unknown class {name:?}")))
    }

    pub fn contains(&self, id: ClassId) -> bool {
        id.index() < self.names.len()
    }

    /// Wall, floor, ceiling, in that order.
    pub fn background_ids(&self) -> [ClassId; 3] {
        self.background
    }

    pub fn is_background(&self, id: ClassId) -> bool {
        self.background.contains(&id)
    }

    pub fn object_ids(&self) -> Vec<ClassId> {
        (1..self.names.len() as u16)
            .map(ClassId)
            .filter(|id| !self.is_background(*id))
            .collect()
    }

    pub fn parse_list(&self, list: &str) -> Result<Vec<ClassId>> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| self.require(s))
            .collect()
    }
}

fn check_dims(width: usize, height: usize, len: usize, what: &str) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::DimensionMismatch(format!("{what}: zero dimension {width}x{height}")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {len} entries for a {width}x{height} grid"
        )));
    }
    Ok(())
}

/// Row-major grid of class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<ClassId>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<ClassId>) -> Result<Self> {
        check_dims(width, height, labels.len(), "label map")?;
        Ok(Self { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, class: ClassId) -> Result<Self> {
        Self::new(width, height, vec![class; width * height])
    }

    /// Checks every label against the catalog size.
    pub fn validate(&self, catalog: &ClassCatalog) -> Result<()> {
        match self.labels.iter().position(|l| !catalog.contains(*l)) {
            None => Ok(()),
            Some(i) => Err(Error::Invalid(format!(
                "label out of range at pixel {i}: id {} >= catalog size {}",
                self.labels[i],
                catalog.len()
            ))),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> ClassId {
        self.labels[y * self.width + x]
    }

    pub fn mask_for_class(&self, class: ClassId) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == class).collect(),
        }
    }

    /// Classes with at least one pixel, ascending. Void is excluded.
    pub fn present_classes(&self) -> Vec<ClassId> {
        let mut seen = std::collections::BTreeSet::new();
        for &l in &self.labels {
            if !l.is_void() {
                seen.insert(l);
            }
        }
        seen.into_iter().collect()
    }

    pub fn contains_class(&self, class: ClassId) -> bool {
        self.labels.contains(&class)
    }
}

/// Free-function form of [`LabelMap::mask_for_class`].
pub fn mask_for_class(labels: &LabelMap, class: ClassId) -> BinaryMask {
    labels.mask_for_class(class)
}

/// Row-major boolean grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len(), "binary mask")?;
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_indices(width: usize, height: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = Self::empty(width, height)?;
        for &i in indices {
            if i >= mask.bits.len() {
                return Err(Error::DimensionMismatch(format!("pixel index {i} outside mask")));
            }
            mask.bits[i] = true;
        }
        Ok(mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn set_index(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Raster-order indices of foreground pixels.
    pub fn ones(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape(&self, other: &BinaryMask) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }
}

/// Row-major assignment of pixels to superpixels `0..count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperpixelPartition {
    width: usize,
    height: usize,
    assignment: Vec<u32>,
    count: usize,
    areas: Vec<usize>,
}

impl SuperpixelPartition {
    pub fn new(width: usize, height: usize, assignment: Vec<u32>) -> Result<Self> {
        check_dims(width, height, assignment.len(), "superpixel partition")?;
        let count = assignment.iter().map(|&s| s as usize + 1).max().unwrap_or(0);
        let mut areas = vec![0usize; count];
        for &s in &assignment {
            areas[s as usize] += 1;
        }
        if let Some(empty) = areas.iter().position(|&a| a == 0) {
            return Err(Error::Invalid(format!(
                "superpixel ids not contiguous: id {empty} has no pixels"
            )));
        }
        Ok(Self {
            width,
            height,
            assignment,
            count,
            areas,
        })
    }

    /// Regular grid of `cell`x`cell` blocks (edge blocks may be smaller).
    pub fn grid(width: usize, height: usize, cell: usize) -> Result<Self> {
        if cell == 0 {
            return Err(Error::Invalid("grid cell size must be positive".into()));
        }
        let cols = width.div_ceil(cell);
        let assignment = (0..height)
            .flat_map(|y| (0..width).map(move |x| ((y / cell) * cols + x / cell) as u32))
            .collect();
        Self::new(width, height, assignment)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn superpixel_at(&self, pixel: usize) -> usize {
        self.assignment[pixel] as usize
    }

    pub fn area(&self, sp: usize) -> usize {
        self.areas[sp]
    }

    /// Rook-adjacent superpixel pairs `(i, j)` with `i < j`, sorted and unique.
    pub fn adjacency(&self) -> Vec<(usize, usize)> {
        let mut edges = std::collections::BTreeSet::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let a = self.assignment[y * self.width + x];
                if x + 1 < self.width {
                    let b = self.assignment[y * self.width + x + 1];
                    if a != b {
                        edges.insert((a.min(b) as usize, a.max(b) as usize));
                    }
                }
                if y + 1 < self.height {
                    let b = self.assignment[(y + 1) * self.width + x];
                    if a != b {
                        edges.insert((a.min(b) as usize, a.max(b) as usize));
                    }
                }
            }
        }
        edges.into_iter().collect()
    }

    /// Majority non-void label of every superpixel; ties go to the lower id.
    /// Superpixels made only of void pixels map to void.
    pub fn majority_labels(&self, labels: &LabelMap, catalog_size: usize) -> Vec<ClassId> {
        let mut hist = vec![0u32; self.count * catalog_size];
        for (p, &l) in labels.labels().iter().enumerate() {
            if !l.is_void() {
                hist[self.assignment[p] as usize * catalog_size + l.index()] += 1;
            }
        }
        hist.chunks(catalog_size)
            .map(|h| {
                let mut best = 0usize;
                for (c, &n) in h.iter().enumerate() {
                    if n > h[best] {
                        best = c;
                    }
                }
                if h[best] == 0 {
                    ClassId::VOID
                } else {
                    ClassId(best as u16)
                }
            })
            .collect()
    }

    /// Pixel mask of the superpixels flagged in `selected`.
    pub fn expand(&self, selected: &[bool]) -> Result<BinaryMask> {
        if selected.len() != self.count {
            return Err(Error::DimensionMismatch(format!(
                "{} superpixel flags for {} superpixels",
                selected.len(),
                self.count
            )));
        }
        BinaryMask::new(
            self.width,
            self.height,
            self.assignment.iter().map(|&s| selected[s as usize]).collect(),
        )
    }
}

/// Per-superpixel feature rows, `count` rows of `dim` reals.
///
/// The last three columns are the spatial channels (normalized centroid x,
/// centroid y, area fraction); every column before them is an appearance
/// channel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    values: Vec<f64>,
}

pub const SPATIAL_CHANNELS: usize = 3;

impl FeatureTable {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim <= SPATIAL_CHANNELS {
            return Err(Error::Invalid(format!(
                "feature dimension {dim} leaves no appearance channels"
            )));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values is not a multiple of dimension {dim}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite feature value at {i}")));
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn appearance_dim(&self) -> usize {
        self.dim - SPATIAL_CHANNELS
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn appearance(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.appearance_dim()]
    }

    pub fn spatial(&self, i: usize) -> &[f64] {
        &self.row(i)[self.appearance_dim()..]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One episode's worth of input: ground truth, partition and features.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub id: String,
    pub category: String,
    pub labels: LabelMap,
    pub superpixels: SuperpixelPartition,
    pub features: FeatureTable,
}

impl Scene {
    pub fn new(
        id: impl Into<String>,
        category: impl Into<String>,
        labels: LabelMap,
        superpixels: SuperpixelPartition,
        features: FeatureTable,
    ) -> Result<Self> {
        let id = id.into();
        if labels.width() != superpixels.width() || labels.height() != superpixels.height() {
            return Err(Error::DimensionMismatch(format!(
                "scene {id}: label map {}x{} vs superpixels {}x{}",
                labels.width(),
                labels.height(),
                superpixels.width(),
                superpixels.height()
            )));
        }
        if features.rows() != superpixels.count() {
            return Err(Error::DimensionMismatch(format!(
                "scene {id}: {} feature rows for {} superpixels",
                features.rows(),
                superpixels.count()
            )));
        }
        Ok(Self {
            id,
            category: category.into(),
            labels,
            superpixels,
            features,
        })
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn pixel_count(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub catalog: ClassCatalog,
    pub scenes: Vec<Scene>,
    /// Named scene-index lists. `train` holds the scenes used to fit the
    /// segmentation models, `test` the pool used for policy experiments.
    pub splits: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        catalog: ClassCatalog,
        scenes: Vec<Scene>,
        splits: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            catalog,
            scenes,
            splits,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.scenes.first().map(|s| s.features.dim());
        for s in &self.scenes {
            s.labels.validate(&self.catalog)?;
            if Some(s.features.dim()) != dim {
                return Err(Error::DimensionMismatch(format!(
                    "scene {}: feature dimension {} differs from dataset",
                    s.id,
                    s.features.dim()
                )));
            }
        }
        for (name, idx) in &self.splits {
            let mut seen = std::collections::HashSet::new();
            for &i in idx {
                if i >= self.scenes.len() {
                    return Err(Error::Invalid(format!("split {name}: index {i} out of range")));
                }
                if !seen.insert(i) {
                    return Err(Error::Invalid(format!("split {name}: duplicate index {i}")));
                }
            }
        }
        if let (Some(train), Some(test)) = (self.splits.get("train"), self.splits.get("test")) {
            if let Some(i) = train.iter().find(|i| test.contains(i)) {
                return Err(Error::Invalid(format!("scene index {i} in both train and test")));
            }
        }
        Ok(())
    }

    pub fn split(&self, name: &str) -> &[usize] {
        self.splits.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.scenes.first().map(|s| s.features.dim())
    }

    /// Categories in order of first appearance.
    pub fn categories(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.scenes {
            if !out.contains(&s.category) {
                out.push(s.category.clone());
            }
        }
        out
    }

    pub fn scene_index(&self, id: &str) -> Option<usize> {
        self.scenes.iter().position(|s| s.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn catalog_layout() {
        let cat = ClassCatalog::with_objects(&["bed", "pillow"]).unwrap();
        assert_eq!(cat.len(), 6);
        assert_eq!(cat.background_ids(), [ClassId(1), ClassId(2), ClassId(3)]);
        assert_eq!(cat.object_ids(), vec![ClassId(4), ClassId(5)]);
        assert!(ClassCatalog::new(vec!["void".into(), "wall".into(), "wall".into()]).is_err());
        assert!(ClassCatalog::new(vec!["void".into(), "wall".into(), "floor".into()]).is_err());
    }

    #[test]
    fn uniform_map_masks() {
        let map = LabelMap::filled(5, 4, ClassId(3)).unwrap();
        assert_eq!(map.mask_for_class(ClassId(3)).count(), 20);
        assert_eq!(map.mask_for_class(ClassId(5)).count(), 0);
    }

    #[test]
    fn checkerboard_mask_is_half() {
        let labels = (0..8)
            .flat_map(|y| (0..8).map(move |x| ClassId(1 + ((x + y) % 2) as u16)))
            .collect();
        let map = LabelMap::new(8, 8, labels).unwrap();
        assert_eq!(mask_for_class(&map, ClassId(1)).count(), 32);
    }

    #[test]
    fn grid_adjacency_is_rook() {
        let p = SuperpixelPartition::grid(9, 9, 3).unwrap();
        assert_eq!(p.count(), 9);
        assert_eq!(p.adjacency().len(), 12);
    }

    #[test]
    fn partition_rejects_gaps() {
        assert!(SuperpixelPartition::new(2, 1, vec![0, 2]).is_err());
        assert!(SuperpixelPartition::new(2, 1, vec![0]).is_err());
    }

    #[test]
    fn label_validation() {
        let cat = ClassCatalog::with_objects(&["bed"]).unwrap();
        let map = LabelMap::filled(2, 2, ClassId(9)).unwrap();
        assert!(map.validate(&cat).is_err());
    }

    proptest! {
        #[test]
        fn class_masks_partition_grid(labels in proptest::collection::vec(0u16..6, 1..200)) {
            let n = labels.len();
            let map = LabelMap::new(n, 1, labels.into_iter().map(ClassId).collect()).unwrap();
            let masks: Vec<_> = (0..6).map(|c| map.mask_for_class(ClassId(c))).collect();
            for p in 0..n {
                let hits = masks.iter().filter(|m| m.bits()[p]).count();
                prop_assert_eq!(hits, 1);
            }
        }
    }
}
