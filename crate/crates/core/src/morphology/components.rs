use super::SliceMask;
use crate::volume::{Dims, Mask};
use std::collections::VecDeque;

/// Voxel adjacency in 3D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    /// Shared face.
    Face6,
    /// Shared face or edge.
    Edge18,
    /// Shared face, edge or corner.
    #[default]
    Vertex26,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Self::Face6),
            18 => Some(Self::Edge18),
            26 => Some(Self::Vertex26),
            _ => None,
        }
    }

    fn offsets(self) -> Vec<[i64; 3]> {
        let mut v = Vec::new();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Self::Face6 => l1 == 1,
                        Self::Edge18 => l1 == 1 || l1 == 2,
                        Self::Vertex26 => l1 >= 1,
                    };
                    if keep {
                        v.push([dx, dy, dz]);
                    }
                }
            }
        }
        v
    }
}

/// Pixel adjacency in 2D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity2d {
    Four,
    #[default]
    Eight,
}

impl Connectivity2d {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            4 => Some(Self::Four),
            8 => Some(Self::Eight),
            _ => None,
        }
    }
}

/// Component labels: 0 is background, components are `1..=count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledComponents {
    pub dims: Dims,
    pub labels: Vec<u32>,
    pub count: usize,
    /// `sizes[k]` is the voxel count of label `k + 1`.
    pub sizes: Vec<usize>,
}

impl LabeledComponents {
    pub fn mask_of(&self, template: &Mask, label: u32) -> Mask {
        let bits = self.labels.iter().map(|l| *l == label).collect();
        Mask::new(template.dims(), template.spacing(), bits, template.label()).expect("same grid")
    }

    /// Label with the most voxels; ties go to the lower label.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (k, s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(bs, _)| *s > bs) {
                best = Some((*s, k as u32 + 1));
            }
        }
        best.map(|(_, l)| l)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledComponents2d {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub count: usize,
    pub sizes: Vec<usize>,
}

impl LabeledComponents2d {
    pub fn slice_of(&self, label: u32) -> SliceMask {
        SliceMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|l| *l == label).collect(),
        }
    }
}

/// Flood fill in raster order, so labels follow the lexicographic `(z, y, x)`
/// order of each component's first voxel.
fn label_raw(bits: &[bool], dims: Dims, offsets: &[[i64; 3]]) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; bits.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..bits.len() {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let [x, y, z] = dims.coords(idx);
            for o in offsets {
                if let Some(n) = dims.checked_index(x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]) {
                    if bits[n] && labels[n] == 0 {
                        labels[n] = label;
                        queue.push_back(n);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

pub fn connected_components(m: &Mask, connectivity: Connectivity) -> LabeledComponents {
    let (labels, sizes) = label_raw(m.bits(), m.dims(), &connectivity.offsets());
    LabeledComponents {
        dims: m.dims(),
        count: sizes.len(),
        labels,
        sizes,
    }
}

pub fn connected_components_2d(m: &SliceMask, connectivity: Connectivity2d) -> LabeledComponents2d {
    let offsets: Vec<[i64; 3]> = match connectivity {
        Connectivity2d::Four => vec![[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]],
        Connectivity2d::Eight => Connectivity::Vertex26
            .offsets()
            .into_iter()
            .filter(|o| o[2] == 0)
            .collect(),
    };
    let dims = Dims::new(m.width, m.height, 1);
    let (labels, sizes) = label_raw(&m.bits, dims, &offsets);
    LabeledComponents2d {
        width: m.width,
        height: m.height,
        count: sizes.len(),
        labels,
        sizes,
    }
}

/// Largest component of `m` (lowest label on ties); empty in, empty out.
pub fn largest_component(m: &Mask, connectivity: Connectivity) -> Mask {
    let cc = connected_components(m, connectivity);
    match cc.largest() {
        Some(l) => cc.mask_of(m, l),
        None => m.clone(),
    }
}
