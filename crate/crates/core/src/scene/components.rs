//! Connected-component analysis of binary masks.

use serde::{Deserialize, Serialize};

use super::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_neighbors(n: u8) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }
}

/// One connected foreground region.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    /// Raster-order pixel indices.
    pub pixels: Vec<usize>,
    /// Inclusive bounding box `(min_x, min_y, max_x, max_y)`.
    pub bbox: (usize, usize, usize, usize),
    pub centroid: (f64, f64),
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bbox_width(&self) -> usize {
        self.bbox.2 - self.bbox.0 + 1
    }

    pub fn bbox_height(&self) -> usize {
        self.bbox.3 - self.bbox.1 + 1
    }
}

/// Components sorted by descending area, ties by their first pixel in raster order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSet {
    pub components: Vec<Component>,
    pub connectivity: Connectivity,
}

impl ComponentSet {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller label as root so roots follow raster order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labelling.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentSet {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    const NONE: u32 = u32::MAX;
    let mut provisional = vec![NONE; bits.len()];
    let mut sets = DisjointSet { parent: Vec::new() };

    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if !bits[p] {
                continue;
            }
            let mut neighbors = [NONE; 4];
            if x > 0 {
                neighbors[0] = provisional[p - 1];
            }
            if y > 0 {
                neighbors[1] = provisional[p - w];
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        neighbors[2] = provisional[p - w - 1];
                    }
                    if x + 1 < w {
                        neighbors[3] = provisional[p - w + 1];
                    }
                }
            }
            let label = match neighbors.iter().copied().filter(|&l| l != NONE).min() {
                Some(l) => l,
                None => {
                    let l = sets.parent.len() as u32;
                    sets.parent.push(l);
                    l
                }
            };
            for &n in &neighbors {
                if n != NONE {
                    sets.union(label, n);
                }
            }
            provisional[p] = label;
        }
    }

    let mut root_slot = vec![NONE; sets.parent.len()];
    let mut components: Vec<Component> = Vec::new();
    for (p, &l) in provisional.iter().enumerate() {
        if l == NONE {
            continue;
        }
        let root = sets.find(l) as usize;
        if root_slot[root] == NONE {
            root_slot[root] = components.len() as u32;
            components.push(Component {
                pixels: Vec::new(),
                bbox: (usize::MAX, usize::MAX, 0, 0),
                centroid: (0.0, 0.0),
            });
        }
        let c = &mut components[root_slot[root] as usize];
        let (x, y) = (p % w, p / w);
        c.pixels.push(p);
        c.bbox.0 = c.bbox.0.min(x);
        c.bbox.1 = c.bbox.1.min(y);
        c.bbox.2 = c.bbox.2.max(x);
        c.bbox.3 = c.bbox.3.max(y);
        c.centroid.0 += x as f64;
        c.centroid.1 += y as f64;
    }
    for c in &mut components {
        let n = c.pixels.len() as f64;
        c.centroid = (c.centroid.0 / n, c.centroid.1 / n);
    }
    // components were created in order of their first raster pixel
    components.sort_by(|a, b| b.area().cmp(&a.area()).then(a.pixels[0].cmp(&b.pixels[0])));
    ComponentSet {
        components,
        connectivity,
    }
}
