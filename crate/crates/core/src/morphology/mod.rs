//! Binary morphology on voxel grids: box erosion/dilation, connected
//! components, in-plane borders and topology-preserving thinning.
//!
//! Voxels outside the grid are background for every operator here.

mod components;
mod skeleton;

pub use components::{
    connected_components, connected_components_2d, largest_component, Connectivity, Connectivity2d,
    LabeledComponents, LabeledComponents2d,
};
pub use skeleton::{is_simple_point, skeletonize};

use crate::volume::Mask;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MorphologyError {
    #[error("input mask is empty")]
    EmptyInput,
    #[error("invalid structuring element: {0}")]
    InvalidElement(String),
}

/// Axis of a 3D grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Box-shaped structuring element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuringElement {
    shape: [usize; 3],
    anchor: [usize; 3],
}

impl StructuringElement {
    /// Anchor defaults to `floor((s - 1) / 2)` per axis: the center for odd
    /// sizes, the voxel just before the center for even sizes.
    pub fn new(shape: [usize; 3]) -> Result<Self, MorphologyError> {
        if shape.contains(&0) {
            return Err(MorphologyError::InvalidElement(format!("zero-sized shape {shape:?}")));
        }
        let anchor = shape.map(|s| (s - 1) / 2);
        Ok(StructuringElement { shape, anchor })
    }

    pub fn with_anchor(shape: [usize; 3], anchor: [usize; 3]) -> Result<Self, MorphologyError> {
        let se = Self::new(shape)?;
        if (0..3).any(|a| anchor[a] >= shape[a]) {
            return Err(MorphologyError::InvalidElement(format!("anchor {anchor:?} outside {shape:?}")));
        }
        Ok(StructuringElement { anchor, ..se })
    }

    pub fn cube(size: usize) -> Self {
        Self::new([size; 3]).expect("cube size must be positive")
    }

    /// In-plane square (`size × size × 1`).
    pub fn square(size: usize) -> Self {
        Self::new([size, size, 1]).expect("square size must be positive")
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn anchor(&self) -> [usize; 3] {
        self.anchor
    }
}

/// Gathers every line of `bits` along `axis`, transforms it and scatters the
/// result back.
fn for_each_line(bits: &mut [bool], dims: [usize; 3], axis: usize, mut f: impl FnMut(&[bool], &mut [bool])) {
    let n = dims[axis];
    if n == 0 {
        return;
    }
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let stride_of = |ax: usize| match ax {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let (sa, sb) = (stride_of(a), stride_of(b));
    let mut line = vec![false; n];
    let mut out = vec![false; n];
    for j in 0..dims[b] {
        for i in 0..dims[a] {
            let base = i * sa + j * sb;
            for (k, v) in line.iter_mut().enumerate() {
                *v = bits[base + k * stride];
            }
            f(&line, &mut out);
            for (k, v) in out.iter().enumerate() {
                bits[base + k * stride] = *v;
            }
        }
    }
}

fn erode_line(input: &[bool], out: &mut [bool], size: usize, anchor: usize) {
    let n = input.len();
    // run[j]: consecutive foreground voxels ending at j
    let mut run = 0usize;
    let mut runs = vec![0usize; n];
    for (j, v) in input.iter().enumerate() {
        run = if *v { run + 1 } else { 0 };
        runs[j] = run;
    }
    for (q, o) in out.iter_mut().enumerate() {
        let start = q as i64 - anchor as i64;
        let end = start + size as i64 - 1;
        *o = start >= 0 && (end as usize) < n && runs[end as usize] >= size;
    }
}

fn dilate_line(input: &[bool], out: &mut [bool], size: usize, anchor: usize) {
    let n = input.len() as i64;
    // last[j]: last foreground position <= j
    let mut last = vec![-1i64; input.len()];
    let mut cur = -1i64;
    for (j, v) in input.iter().enumerate() {
        if *v {
            cur = j as i64;
        }
        last[j] = cur;
    }
    for (q, o) in out.iter_mut().enumerate() {
        let hi = (q as i64 + anchor as i64).min(n - 1);
        let lo = q as i64 + anchor as i64 - (size as i64 - 1);
        *o = hi >= 0 && last[hi as usize] >= lo && last[hi as usize] >= 0;
    }
}

fn erode_raw(bits: &mut [bool], dims: [usize; 3], se: &StructuringElement) {
    for axis in 0..3 {
        let (s, a) = (se.shape[axis], se.anchor[axis]);
        if s > 1 {
            for_each_line(bits, dims, axis, |l, o| erode_line(l, o, s, a));
        }
    }
}

fn dilate_raw(bits: &mut [bool], dims: [usize; 3], se: &StructuringElement) {
    for axis in 0..3 {
        let (s, a) = (se.shape[axis], se.anchor[axis]);
        if s > 1 {
            for_each_line(bits, dims, axis, |l, o| dilate_line(l, o, s, a));
        }
    }
}

/// A voxel survives iff the element placed at it lies entirely inside `m`.
pub fn erode(m: &Mask, se: &StructuringElement) -> Mask {
    let mut out = m.clone();
    let dims = m.dims().as_array();
    erode_raw(out.bits_mut(), dims, se);
    out
}

/// Union of element translates over the foreground, clipped to the grid.
pub fn dilate(m: &Mask, se: &StructuringElement) -> Mask {
    let mut out = m.clone();
    let dims = m.dims().as_array();
    dilate_raw(out.bits_mut(), dims, se);
    out
}

/// 2D binary image, `x` fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl SliceMask {
    pub fn empty(width: usize, height: usize) -> Self {
        SliceMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        SliceMask { width, height, bits }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[u + self.width * v]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, b: bool) {
        self.bits[u + self.width * v] = b;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Foreground pixel coordinates in raster order.
    pub fn points(&self) -> Vec<[usize; 2]> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| [i % self.width, i / self.width])
            .collect()
    }

    fn dims3(&self) -> [usize; 3] {
        [self.width, self.height, 1]
    }

    pub fn erode(&self, size: usize) -> SliceMask {
        let mut out = self.clone();
        erode_raw(&mut out.bits, self.dims3(), &StructuringElement::square(size));
        out
    }

    pub fn dilate(&self, size: usize) -> SliceMask {
        let mut out = self.clone();
        dilate_raw(&mut out.bits, self.dims3(), &StructuringElement::square(size));
        out
    }
}

impl Mask {
    /// Plane of the grid perpendicular to `axis`. Slice coordinates are
    /// `(x, y)` for `Z`, `(y, z)` for `X` and `(x, z)` for `Y`.
    pub fn slice(&self, axis: Axis, index: usize) -> SliceMask {
        let d = self.dims();
        match axis {
            Axis::Z => {
                let start = d.index(0, 0, index);
                SliceMask {
                    width: d.nx,
                    height: d.ny,
                    bits: self.bits()[start..start + d.nx * d.ny].to_vec(),
                }
            }
            Axis::X => SliceMask::from_fn(d.ny, d.nz, |y, z| self.get(index, y, z)),
            Axis::Y => SliceMask::from_fn(d.nx, d.nz, |x, z| self.get(x, index, z)),
        }
    }

    pub fn set_slice(&mut self, axis: Axis, index: usize, s: &SliceMask) {
        for v in 0..s.height {
            for u in 0..s.width {
                let b = s.get(u, v);
                match axis {
                    Axis::Z => self.set(u, v, index, b),
                    Axis::X => self.set(index, u, v, b),
                    Axis::Y => self.set(u, index, v, b),
                }
            }
        }
    }
}

/// Border of a 2D region: pixels removed by a 3×3 erosion.
pub fn slice_border(m2d: &SliceMask) -> SliceMask {
    let eroded = m2d.erode(3);
    SliceMask {
        width: m2d.width,
        height: m2d.height,
        bits: m2d.bits.iter().zip(&eroded.bits).map(|(a, e)| *a && !*e).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;
    use crate::volume::Spacing;

    fn grid(n: usize) -> (Dims, Spacing) {
        (Dims::new(n, n, n), Spacing::isotropic(1.0))
    }

    /// Direct definition of erosion, used as the oracle.
    fn brute_erode(m: &Mask, se: &StructuringElement) -> Mask {
        let d = m.dims();
        let (s, a) = (se.shape(), se.anchor());
        Mask::from_fn(d, m.spacing(), m.label(), |x, y, z| {
            for k in 0..s[2] {
                for j in 0..s[1] {
                    for i in 0..s[0] {
                        let p = d.checked_index(
                            x as i64 + i as i64 - a[0] as i64,
                            y as i64 + j as i64 - a[1] as i64,
                            z as i64 + k as i64 - a[2] as i64,
                        );
                        if !p.is_some_and(|p| m.bits()[p]) {
                            return false;
                        }
                    }
                }
            }
            true
        })
    }

    fn brute_dilate(m: &Mask, se: &StructuringElement) -> Mask {
        let d = m.dims();
        let (s, a) = (se.shape(), se.anchor());
        let mut out = m.empty_like(m.label());
        for idx in m.indices() {
            let [x, y, z] = d.coords(idx);
            for k in 0..s[2] {
                for j in 0..s[1] {
                    for i in 0..s[0] {
                        if let Some(q) = d.checked_index(
                            x as i64 + i as i64 - a[0] as i64,
                            y as i64 + j as i64 - a[1] as i64,
                            z as i64 + k as i64 - a[2] as i64,
                        ) {
                            out.bits_mut()[q] = true;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn single_voxel_erodes_away() {
        let (d, s) = grid(5);
        let m = Mask::from_fn(d, s, "v", |x, y, z| (x, y, z) == (2, 2, 2));
        assert!(erode(&m, &StructuringElement::cube(3)).is_empty());
    }

    #[test]
    fn cube_5_erodes_to_cube_3() {
        let (d, s) = grid(9);
        let m = Mask::from_fn(d, s, "c", |x, y, z| [x, y, z].iter().all(|c| (2..7).contains(c)));
        let e = erode(&m, &StructuringElement::cube(3));
        assert_eq!(e, brute_erode(&m, &StructuringElement::cube(3)));
        assert_eq!(e.count(), 27);
        assert!(e.get(3, 3, 3) && e.get(5, 5, 5) && !e.get(2, 3, 3));
    }

    #[test]
    fn empty_in_empty_out() {
        let (d, s) = grid(4);
        let m = Mask::empty(d, s, "e");
        assert!(erode(&m, &StructuringElement::cube(3)).is_empty());
        assert!(dilate(&m, &StructuringElement::cube(3)).is_empty());
    }

    #[test]
    fn dilate_center_and_corner() {
        let (d, s) = grid(5);
        let m = Mask::from_fn(d, s, "v", |x, y, z| (x, y, z) == (2, 2, 2));
        assert_eq!(dilate(&m, &StructuringElement::cube(3)).count(), 27);
        let c = Mask::from_fn(d, s, "v", |x, y, z| (x, y, z) == (0, 0, 0));
        let dc = dilate(&c, &StructuringElement::cube(3));
        assert_eq!(dc, brute_dilate(&c, &StructuringElement::cube(3)));
        assert_eq!(dc.count(), 8);
    }

    #[test]
    fn even_element_anchor() {
        let se = StructuringElement::cube(4);
        assert_eq!(se.anchor(), [1, 1, 1]);
        let (d, s) = grid(6);
        let m = Mask::from_fn(d, s, "v", |x, y, z| (x, y, z) == (2, 2, 2));
        let out = dilate(&m, &se);
        assert_eq!(out, brute_dilate(&m, &se));
        // offsets -1..=2 around the voxel
        assert!(out.get(1, 1, 1) && out.get(4, 4, 4) && !out.get(0, 2, 2) && !out.get(5, 2, 2));
    }

    #[test]
    fn anchor_must_be_inside() {
        assert!(StructuringElement::with_anchor([3, 3, 3], [3, 0, 0]).is_err());
        assert!(StructuringElement::new([0, 3, 3]).is_err());
    }

    #[test]
    fn border_of_square_and_point() {
        let sq = SliceMask::from_fn(7, 7, |u, v| (1..6).contains(&u) && (1..6).contains(&v));
        let b = slice_border(&sq);
        assert_eq!(b.count(), 16);
        // set-difference oracle
        let inner = SliceMask::from_fn(7, 7, |u, v| (2..5).contains(&u) && (2..5).contains(&v));
        for i in 0..49 {
            assert_eq!(b.bits[i], sq.bits[i] && !inner.bits[i]);
        }
        let pt = SliceMask::from_fn(3, 3, |u, v| (u, v) == (1, 1));
        assert_eq!(slice_border(&pt), pt);
        assert!(slice_border(&SliceMask::empty(4, 4)).is_empty());
    }

    #[test]
    fn slices_round_trip() {
        let (d, s) = grid(4);
        let m = Mask::from_fn(d, s, "m", |x, y, z| (x * 7 + y * 3 + z) % 3 == 0);
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let mut back = m.empty_like("m");
            for i in 0..4 {
                back.set_slice(axis, i, &m.slice(axis, i));
            }
            assert_eq!(back, m);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_mask() -> impl Strategy<Value = Mask> {
            (2usize..9, 2usize..9, 2usize..9).prop_flat_map(|(nx, ny, nz)| {
                proptest::collection::vec(proptest::bool::weighted(0.6), nx * ny * nz).prop_map(move |bits| {
                    Mask::new(Dims::new(nx, ny, nz), Spacing::isotropic(1.0), bits, "p").unwrap()
                })
            })
        }

        fn arb_se() -> impl Strategy<Value = StructuringElement> {
            (1usize..5, 1usize..5, 1usize..5).prop_map(|(a, b, c)| StructuringElement::new([a, b, c]).unwrap())
        }

        proptest! {
            #[test]
            fn separable_matches_brute_force(m in arb_mask(), se in arb_se()) {
                prop_assert_eq!(erode(&m, &se), brute_erode(&m, &se));
                prop_assert_eq!(dilate(&m, &se), brute_dilate(&m, &se));
            }

            #[test]
            fn erosion_shrinks_dilation_grows(m in arb_mask(), se in arb_se()) {
                let e = erode(&m, &se);
                let d = dilate(&m, &se);
                prop_assert!(e.is_subset_of(&m));
                prop_assert!(m.is_subset_of(&d));
            }

            #[test]
            fn duality_away_from_border(m in arb_mask()) {
                let se = StructuringElement::cube(3);
                let lhs = erode(&m, &se);
                let rhs = dilate(&m.not(), &se).not();
                let d = m.dims();
                for idx in 0..d.len() {
                    let [x, y, z] = d.coords(idx);
                    let interior = x >= 1 && y >= 1 && z >= 1 && x + 1 < d.nx && y + 1 < d.ny && z + 1 < d.nz;
                    if interior {
                        prop_assert_eq!(lhs.bits()[idx], rhs.bits()[idx]);
                    }
                }
            }
        }
    }
}
