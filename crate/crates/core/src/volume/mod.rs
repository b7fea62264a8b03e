//! Volumes, masks and their on-disk NIfTI-1 representation.
//!
//! Voxels are stored in NIfTI order: `x` varies fastest, then `y`, then `z`.
//! Physical coordinates of a voxel center are `index * spacing` along each
//! axis, measured from the grid origin.

mod nifti;
mod resample;

pub use nifti::{load_mask, load_nifti, load_volume, save_mask, save_volume, NiftiDatatype, NiftiImage};
pub use resample::{resample_isotropic, resample_volume_trilinear, resampled_dims};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("malformed NIfTI header at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("expected a 3D image, found {0} dimensions")]
    Dimension(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid spacing {0:?}: components must be finite and > 0")]
    InvalidSpacing([f64; 3]),
    #[error("data length {len} does not match dims {dims:?}")]
    DataLength { len: usize, dims: Dims },
    #[error("grids are not co-registered: {0}")]
    GridMismatch(String),
}

/// Millimeters per voxel along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Spacing {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self, VolumeError> {
        let s = Spacing { dx, dy, dz };
        if s.as_array().iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(s)
        } else {
            Err(VolumeError::InvalidSpacing(s.as_array()))
        }
    }

    pub fn isotropic(d: f64) -> Self {
        Spacing { dx: d, dy: d, dz: d }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    pub fn min(&self) -> f64 {
        self.dx.min(self.dy).min(self.dz)
    }

    /// Equality within `tol` millimeters on every axis.
    pub fn approx_eq(&self, other: &Spacing, tol: f64) -> bool {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Grid extent in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims { nx, ny, nz }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn from_array(a: [usize; 3]) -> Self {
        Dims::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.nx;
        let y = (idx / self.nx) % self.ny;
        let z = idx / (self.nx * self.ny);
        [x, y, z]
    }

    /// Index of a signed coordinate, or `None` when it falls off the grid.
    #[inline]
    pub fn checked_index(&self, x: i64, y: i64, z: i64) -> Option<usize> {
        if x < 0 || y < 0 || z < 0 {
            return None;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        if x >= self.nx || y >= self.ny || z >= self.nz {
            return None;
        }
        Some(self.index(x, y, z))
    }
}

pub type Affine = [[f64; 4]; 4];

pub fn diagonal_affine(spacing: &Spacing) -> Affine {
    [
        [spacing.dx, 0.0, 0.0, 0.0],
        [0.0, spacing.dy, 0.0, 0.0],
        [0.0, 0.0, spacing.dz, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// True when the upper-left 3x3 block has exactly one non-zero entry per row
/// and column, i.e. the voxel axes are parallel to the world axes.
pub fn affine_is_axis_aligned(affine: &Affine) -> bool {
    let tol = 1e-6;
    for r in 0..3 {
        let scale = (0..3).map(|c| affine[r][c].abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            return false;
        }
        let nonzero = (0..3).filter(|&c| affine[r][c].abs() > tol * scale).count();
        if nonzero != 1 {
            return false;
        }
    }
    true
}

/// Scalar CT volume in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f32>,
    affine: Affine,
}

impl Volume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self, VolumeError> {
        let affine = diagonal_affine(&spacing);
        Self::with_affine(dims, spacing, data, affine)
    }

    pub fn with_affine(
        dims: Dims,
        spacing: Spacing,
        data: Vec<f32>,
        affine: Affine,
    ) -> Result<Self, VolumeError> {
        Spacing::new(spacing.dx, spacing.dy, spacing.dz)?;
        if data.len() != dims.len() {
            return Err(VolumeError::DataLength { len: data.len(), dims });
        }
        if !affine_is_axis_aligned(&affine) {
            log::warn!("non axis-aligned affine; voxel axes are treated as axis-aligned");
        }
        Ok(Volume { dims, spacing, data, affine })
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f32) -> Self {
        Volume {
            dims,
            spacing,
            data: vec![value; dims.len()],
            affine: diagonal_affine(&spacing),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }
}

/// Binary per-voxel annotation of one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    dims: Dims,
    spacing: Spacing,
    bits: Vec<bool>,
    label: String,
}

impl Mask {
    pub fn new(dims: Dims, spacing: Spacing, bits: Vec<bool>, label: impl Into<String>) -> Result<Self, VolumeError> {
        Spacing::new(spacing.dx, spacing.dy, spacing.dz)?;
        if bits.len() != dims.len() {
            return Err(VolumeError::DataLength { len: bits.len(), dims });
        }
        Ok(Mask {
            dims,
            spacing,
            bits,
            label: label.into(),
        })
    }

    pub fn empty(dims: Dims, spacing: Spacing, label: impl Into<String>) -> Self {
        Mask {
            dims,
            spacing,
            bits: vec![false; dims.len()],
            label: label.into(),
        }
    }

    /// Empty mask on the same grid with a new label.
    pub fn empty_like(&self, label: impl Into<String>) -> Self {
        Mask::empty(self.dims, self.spacing, label)
    }

    pub fn from_fn(
        dims: Dims,
        spacing: Spacing,
        label: impl Into<String>,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Self {
        let mut bits = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    bits.push(f(x, y, z));
                }
            }
        }
        Mask {
            dims,
            spacing,
            bits,
            label: label.into(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.dims.index(x, y, z);
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Linear indices of foreground voxels in raster order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, b)| if *b { Some(i) } else { None })
    }

    /// Foreground voxel centers in millimeters.
    pub fn points_mm(&self) -> Vec<[f64; 3]> {
        let s = self.spacing.as_array();
        self.indices()
            .map(|i| {
                let c = self.dims.coords(i);
                [c[0] as f64 * s[0], c[1] as f64 * s[1], c[2] as f64 * s[2]]
            })
            .collect()
    }

    pub fn same_grid(&self, other: &Mask) -> bool {
        self.dims == other.dims && self.spacing.approx_eq(&other.spacing, 1e-6)
    }

    pub fn check_same_grid(&self, other: &Mask) -> Result<(), VolumeError> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(VolumeError::GridMismatch(format!(
                "'{}' {:?} vs '{}' {:?}",
                self.label, self.dims, other.label, other.dims
            )))
        }
    }

    pub fn check_volume_grid(&self, volume: &Volume) -> Result<(), VolumeError> {
        if self.dims == volume.dims && self.spacing.approx_eq(&volume.spacing, 1e-6) {
            Ok(())
        } else {
            Err(VolumeError::GridMismatch(format!(
                "mask '{}' {:?} vs volume {:?}",
                self.label, self.dims, volume.dims
            )))
        }
    }

    fn zip_with(&self, other: &Mask, label: &str, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert!(self.same_grid(other), "mask grids differ");
        Mask {
            dims: self.dims,
            spacing: self.spacing,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| f(*a, *b)).collect(),
            label: label.to_string(),
        }
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip_with(other, &self.label, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip_with(other, &self.label, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip_with(other, &self.label, |a, b| a && !b)
    }

    pub fn not(&self) -> Mask {
        Mask {
            dims: self.dims,
            spacing: self.spacing,
            bits: self.bits.iter().map(|b| !b).collect(),
            label: self.label.clone(),
        }
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        assert!(self.same_grid(other), "mask grids differ");
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Inclusive voxel bounding box `(min, max)` of the foreground.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for i in self.indices() {
            let c = self.dims.coords(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            any = true;
        }
        any.then_some((lo, hi))
    }

    /// Sub-grid `[lo, hi]` (inclusive) copied into a new mask.
    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> Mask {
        let dims = Dims::new(hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1);
        Mask::from_fn(dims, self.spacing, self.label.clone(), |x, y, z| {
            self.get(x + lo[0], y + lo[1], z + lo[2])
        })
    }

    /// Writes `part` into this grid with its origin at voxel `offset`.
    pub fn paste(&mut self, part: &Mask, offset: [usize; 3]) {
        let pd = part.dims;
        for z in 0..pd.nz {
            for y in 0..pd.ny {
                for x in 0..pd.nx {
                    if part.get(x, y, z) {
                        self.set(x + offset[0], y + offset[1], z + offset[2], true);
                    }
                }
            }
        }
    }

    /// `count · dx·dy·dz` in mm³.
    pub fn volume_mm3(&self) -> f64 {
        self.count() as f64 * self.spacing.voxel_volume_mm3()
    }
}

/// Jaccard index of two masks on the same grid; 1.0 when both are empty.
pub fn jaccard(a: &Mask, b: &Mask) -> f64 {
    let inter = a.intersection_count(b);
    let union = a.count() + b.count() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
