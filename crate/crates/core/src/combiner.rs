//! Sequential combination of per-class binary masks into one label canvas.
//!
//! When an incoming segment B overlaps pixels C already claimed by segment
//! A, C goes to whichever has the larger ratio C/|A| vs C/|B| with both
//! areas taken before any clipping. Equal ratios leave C with A.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{BinaryMask, ClassCatalog, ClassId, LabelMap};

const NO_STEP: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedSegment {
    pub class: ClassId,
    /// Mask area before any clipping.
    pub original_area: usize,
    /// Pixels the segment still holds on the canvas.
    pub surviving: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelCanvas {
    width: usize,
    height: usize,
    assignment: Vec<ClassId>,
    provenance: Vec<u32>,
    segments: Vec<PlacedSegment>,
}

impl LabelCanvas {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            assignment: vec![ClassId::VOID; width * height],
            provenance: vec![NO_STEP; width * height],
            segments: Vec::new(),
        }
    }

    /// Canvas with wall, floor and ceiling placed in that order.
    pub fn with_background(catalog: &ClassCatalog, backgrounds: [&BinaryMask; 3]) -> Result<Self> {
        let mut canvas = Self::new(backgrounds[0].width(), backgrounds[0].height());
        for (mask, class) in backgrounds.into_iter().zip(catalog.background_ids()) {
            canvas.place_mask(mask, class)?;
        }
        Ok(canvas)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn assignment(&self) -> &[ClassId] {
        &self.assignment
    }

    /// Step that claimed pixel `p`, or `None` while unassigned.
    pub fn provenance(&self, p: usize) -> Option<usize> {
        (self.provenance[p] != NO_STEP).then_some(self.provenance[p] as usize)
    }

    pub fn segments(&self) -> &[PlacedSegment] {
        &self.segments
    }

    pub fn steps(&self) -> usize {
        self.segments.len()
    }

    pub fn has_class(&self, class: ClassId) -> bool {
        self.segments.iter().any(|s| s.class == class)
    }

    /// Raster indices currently held by step `step`.
    pub fn surviving_pixels(&self, step: usize) -> Vec<usize> {
        (0..self.provenance.len()).filter(|&p| self.provenance[p] as usize == step).collect()
    }

    pub fn to_label_map(&self) -> LabelMap {
        LabelMap::new(self.width, self.height, self.assignment.clone()).expect("canvas shape is consistent")
    }

    pub fn place_mask(&mut self, mask: &BinaryMask, class: ClassId) -> Result<usize> {
        if mask.width() != self.width || mask.height() != self.height {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, canvas is {}x{}",
                mask.width(),
                mask.height(),
                self.width,
                self.height
            )));
        }
        self.place_pixels(&mask.ones(), class)
    }

    /// [`place_mask`](Self::place_mask) for a mask given as sorted, distinct
    /// raster indices. Returns the new step index.
    pub fn place_pixels(&mut self, pixels: &[usize], class: ClassId) -> Result<usize> {
        if class.is_void() {
            return Err(Error::Invalid("cannot place the void class".into()));
        }
        if self.has_class(class) {
            return Err(Error::RepeatedAction(class.0));
        }
        if let Some(&p) = pixels.iter().find(|&&p| p >= self.assignment.len()) {
            return Err(Error::DimensionMismatch(format!("pixel {p} outside a {}-pixel canvas", self.assignment.len())));
        }
        let step = self.segments.len();
        let incoming = pixels.len();
        let mut overlap = vec![0usize; step];
        for &p in pixels {
            if self.provenance[p] != NO_STEP {
                overlap[self.provenance[p] as usize] += 1;
            }
        }
        // C/|A| > C/|B|  <=>  C·|B| < C·|A|  (both areas positive when C > 0)
        let takes: Vec<bool> = overlap
            .iter()
            .zip(&self.segments)
            .map(|(&c, a)| c > 0 && c * incoming < c * a.original_area)
            .collect();
        let mut surviving = 0;
        for &p in pixels {
            let owner = self.provenance[p];
            if owner == NO_STEP || takes[owner as usize] {
                if owner != NO_STEP {
                    self.segments[owner as usize].surviving -= 1;
                }
                self.assignment[p] = class;
                self.provenance[p] = step as u32;
                surviving += 1;
            }
        }
        self.segments.push(PlacedSegment { class, original_area: incoming, surviving });
        Ok(step)
    }
}

/// Backgrounds (wall, floor, ceiling) first, then each class of `order` with
/// its mask from `masks`.
pub fn combine_sequence<'a>(
    catalog: &ClassCatalog,
    backgrounds: [&BinaryMask; 3],
    masks: impl Fn(ClassId) -> Option<&'a BinaryMask>,
    order: &[ClassId],
) -> Result<LabelCanvas> {
    for (i, c) in order.iter().enumerate() {
        if catalog.is_background(*c) || c.is_void() {
            return Err(Error::Invalid(format!("order contains background class {c}")));
        }
        if order[..i].contains(c) {
            return Err(Error::Invalid(format!("order repeats class {c}")));
        }
    }
    let mut canvas = LabelCanvas::with_background(catalog, backgrounds)?;
    for &c in order {
        let mask = masks(c).ok_or_else(|| Error::Invalid(format!("no mask for class {c}")))?;
        canvas.place_mask(mask, c)?;
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(w, h).unwrap();
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn small_on_large_wins_the_overlap() {
        // bed 1000 px, pillow 200 px with 150 px on the bed
        let bed = rect(100, 100, 0, 0, 50, 20);
        let mut pillow = rect(100, 100, 35, 10, 50, 20);
        for x in 50..55 {
            for y in 10..20 {
                pillow.set(x, y, true);
            }
        }
        assert_eq!((bed.count(), pillow.count()), (1000, 200));
        let mut c = LabelCanvas::new(100, 100);
        c.place_mask(&bed, ClassId(4)).unwrap();
        c.place_mask(&pillow, ClassId(5)).unwrap();
        assert_eq!(c.segments()[0].surviving, 850);
        assert_eq!(c.segments()[1].surviving, 200);
        assert_eq!(c.assignment()[15 * 100 + 40], ClassId(5));
    }

    #[test]
    fn equal_areas_full_overlap_keeps_existing() {
        let m = rect(10, 10, 2, 2, 6, 6);
        let mut c = LabelCanvas::new(10, 10);
        c.place_mask(&m, ClassId(4)).unwrap();
        c.place_mask(&m, ClassId(5)).unwrap();
        assert!(c.assignment().iter().all(|&l| l != ClassId(5)));
        assert_eq!(c.segments()[1].surviving, 0);
    }

    #[test]
    fn disjoint_is_union_and_errors_are_reported() {
        let mut c = LabelCanvas::new(10, 10);
        c.place_mask(&rect(10, 10, 0, 0, 3, 3), ClassId(4)).unwrap();
        c.place_mask(&rect(10, 10, 5, 5, 9, 9), ClassId(5)).unwrap();
        assert_eq!(c.assignment().iter().filter(|l| !l.is_void()).count(), 25);
        assert!(c.provenance(0) == Some(0) && c.provenance(99).is_none());
        assert!(matches!(c.place_mask(&rect(9, 10, 0, 0, 1, 1), ClassId(6)), Err(Error::DimensionMismatch(_))));
        assert!(matches!(c.place_mask(&rect(10, 10, 0, 0, 1, 1), ClassId(4)), Err(Error::RepeatedAction(4))));
    }

    #[test]
    fn combine_sequence_checks_order() {
        let cat = ClassCatalog::with_objects(&["bed", "pillow"]).unwrap();
        let bg = [rect(8, 8, 0, 0, 8, 5), rect(8, 8, 0, 5, 8, 8), rect(8, 8, 0, 0, 0, 0)];
        let bed = rect(8, 8, 1, 3, 6, 7);
        let masks = |c: ClassId| (c == ClassId(4)).then_some(&bed);
        let only_bg = combine_sequence(&cat, [&bg[0], &bg[1], &bg[2]], masks, &[]).unwrap();
        assert_eq!(only_bg.steps(), 3);
        assert!(only_bg.assignment().iter().all(|l| !l.is_void()));
        let with_bed = combine_sequence(&cat, [&bg[0], &bg[1], &bg[2]], masks, &[ClassId(4)]).unwrap();
        assert_eq!(with_bed.segments()[3].surviving, 20);
        assert!(combine_sequence(&cat, [&bg[0], &bg[1], &bg[2]], masks, &[ClassId(4), ClassId(4)]).is_err());
        assert!(combine_sequence(&cat, [&bg[0], &bg[1], &bg[2]], masks, &[ClassId(1)]).is_err());
    }

    fn arb_masks() -> impl Strategy<Value = Vec<(usize, usize, usize, usize)>> {
        prop::collection::vec((0usize..12, 0usize..12, 1usize..6, 1usize..6), 1..6)
    }

    proptest! {
        #[test]
        fn assigned_pixels_stay_assigned(rects in arb_masks()) {
            let mut c = LabelCanvas::new(16, 16);
            let mut before = 0;
            for (k, (x, y, w, h)) in rects.into_iter().enumerate() {
                c.place_mask(&rect(16, 16, x, y, (x + w).min(16), (y + h).min(16)), ClassId(4 + k as u16)).unwrap();
                let now = c.assignment().iter().filter(|l| !l.is_void()).count();
                prop_assert!(now >= before);
                before = now;
                for (p, l) in c.assignment().iter().enumerate() {
                    prop_assert_eq!(l.is_void(), c.provenance(p).is_none());
                }
                for (s, seg) in c.segments().iter().enumerate() {
                    prop_assert_eq!(seg.surviving, c.surviving_pixels(s).len());
                    prop_assert!(seg.surviving <= seg.original_area);
                }
            }
        }

        #[test]
        fn integer_upscaling_keeps_decisions(rects in arb_masks(), k in 2usize..4) {
            let mut small = LabelCanvas::new(16, 16);
            let mut big = LabelCanvas::new(16 * k, 16 * k);
            for (i, (x, y, w, h)) in rects.into_iter().enumerate() {
                let (x1, y1) = ((x + w).min(16), (y + h).min(16));
                small.place_mask(&rect(16, 16, x, y, x1, y1), ClassId(4 + i as u16)).unwrap();
                big.place_mask(&rect(16 * k, 16 * k, x * k, y * k, x1 * k, y1 * k), ClassId(4 + i as u16)).unwrap();
            }
            for y in 0..16 * k {
                for x in 0..16 * k {
                    prop_assert_eq!(big.assignment()[y * 16 * k + x], small.assignment()[(y / k) * 16 + x / k]);
                }
            }
        }
    }
}
