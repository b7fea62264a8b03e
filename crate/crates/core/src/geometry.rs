//! Principal axes, rigid alignment of masks to the x axis and the inverse
//! pullback onto the original grid.
//!
//! Coordinates are millimeters with voxel `i` centered at `i · spacing`.

use crate::morphology::Axis;
use crate::volume::{Dims, Mask, Spacing};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("point cloud is degenerate (fewer than two distinct points)")]
    DegenerateCloud,
    #[error("input mask is empty")]
    EmptyInput,
}

/// Voxel clouds above this size are subsampled for PCA.
pub const PCA_MAX_POINTS: usize = 100_000;
pub const PCA_SEED: u64 = 0x5eed_0001;

/// Rotation followed by translation: `q = R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.rotation * Vector3::from(p) + self.translation;
        [q.x, q.y, q.z]
    }

    pub fn apply_inverse(&self, q: [f64; 3]) -> [f64; 3] {
        let p = self.rotation.transpose() * (Vector3::from(q) - self.translation);
        [p.x, p.y, p.z]
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Largest deviation of `RᵀR` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max()
    }
}

/// Mask resampled into a rotated frame whose x axis is the principal axis.
#[derive(Debug, Clone)]
pub struct AlignedMask {
    /// Mask on the aligned grid; aligned voxel `j` sits at `j · spacing` in
    /// the frame given by `transform`.
    pub mask: Mask,
    /// Maps source millimeters to aligned-grid millimeters.
    pub transform: RigidTransform,
    pub source_dims: Dims,
    pub source_spacing: Spacing,
}

impl AlignedMask {
    /// Resamples another mask on the source grid into this aligned grid.
    pub fn pull(&self, other: &Mask) -> Mask {
        forward_pull(other, &self.transform, self.mask.dims(), self.mask.spacing().dx)
    }

    /// Maps the aligned mask (or any mask on the aligned grid) back to the
    /// source grid.
    pub fn to_source(&self, aligned: &Mask) -> Mask {
        apply_inverse(&self.transform, aligned, self.source_dims, self.source_spacing)
    }

    /// Position along the aligned x axis, in aligned-grid millimeters, of a
    /// source-space point.
    pub fn aligned_x(&self, p: [f64; 3]) -> f64 {
        self.transform.apply(p)[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    /// Aligned grid pitch in mm; `None` uses the smallest source spacing.
    pub grid_spacing: Option<f64>,
    /// Empty voxels added around the rotated bounding box.
    pub margin_voxels: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            grid_spacing: None,
            margin_voxels: 2,
        }
    }
}

fn subsample(points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    if points.len() <= PCA_MAX_POINTS {
        return points.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PCA_SEED);
    let mut idx = sample(&mut rng, points.len(), PCA_MAX_POINTS).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| points[i]).collect()
}

pub fn centroid(points: &[[f64; 3]]) -> [f64; 3] {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    c.map(|v| v / n)
}

/// Eigen-decomposition of the covariance: eigenvalues in descending order
/// with their unit eigenvectors.
pub fn principal_components(points: &[[f64; 3]]) -> Result<([f64; 3], [[f64; 3]; 3]), GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::DegenerateCloud);
    }
    let c = centroid(points);
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = Vector3::new(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    if cov.abs().max() <= 1e-18 {
        return Err(GeometryError::DegenerateCloud);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|k| eig.eigenvalues[k]);
    let vectors = order.map(|k| {
        let v = eig.eigenvectors.column(k);
        fix_sign([v[0], v[1], v[2]])
    });
    Ok((values, vectors))
}

/// Flips `v` so that its largest-magnitude component is positive.
fn fix_sign(v: [f64; 3]) -> [f64; 3] {
    let mut k = 0;
    for a in 1..3 {
        if v[a].abs() > v[k].abs() + 1e-12 {
            k = a;
        }
    }
    if v[k] < 0.0 {
        v.map(|x| -x)
    } else {
        v
    }
}

/// Unit direction of largest variance of `points`.
pub fn principal_axis(points: &[[f64; 3]]) -> Result<[f64; 3], GeometryError> {
    let sampled = subsample(points);
    principal_components(&sampled).map(|(_, v)| v[0])
}

/// Smallest rotation taking unit vector `a` onto +x.
pub fn rotation_to_x(a: [f64; 3]) -> Matrix3<f64> {
    let a = Vector3::from(a).normalize();
    let ex = Vector3::x();
    let v = a.cross(&ex);
    let c = a.dot(&ex);
    if v.norm() < 1e-12 {
        return if c > 0.0 {
            Matrix3::identity()
        } else {
            Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0)
        };
    }
    let k = Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0);
    Matrix3::identity() + k + k * k * (1.0 / (1.0 + c))
}

fn source_lookup(m: &Mask, p: [f64; 3]) -> bool {
    let s = m.spacing().as_array();
    let d = m.dims();
    d.checked_index(
        (p[0] / s[0]).round() as i64,
        (p[1] / s[1]).round() as i64,
        (p[2] / s[2]).round() as i64,
    )
    .is_some_and(|i| m.bits()[i])
}

fn forward_pull(src: &Mask, t: &RigidTransform, dims: Dims, pitch: f64) -> Mask {
    let rt = t.rotation.transpose();
    let mut out = Mask::empty(dims, Spacing::isotropic(pitch), src.label());
    let mut i = 0;
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let q = Vector3::new(x as f64 * pitch, y as f64 * pitch, z as f64 * pitch);
                let p = rt * (q - t.translation);
                if source_lookup(src, [p.x, p.y, p.z]) {
                    out.bits_mut()[i] = true;
                }
                i += 1;
            }
        }
    }
    out
}

/// Rotates `m` so its principal axis lies along +x, about its center of mass.
pub fn align_to_x(m: &Mask) -> Result<AlignedMask, GeometryError> {
    align_to_x_with(m, &[], &AlignOptions::default())
}

/// As [`align_to_x`], with the aligned grid enlarged to also contain
/// `companions` (resample them with [`AlignedMask::pull`]).
pub fn align_to_x_with(m: &Mask, companions: &[&Mask], opts: &AlignOptions) -> Result<AlignedMask, GeometryError> {
    let pts = m.points_mm();
    if pts.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let axis = principal_axis(&pts).unwrap_or([1.0, 0.0, 0.0]);
    let center = Vector3::from(centroid(&pts));
    let rotation = rotation_to_x(axis);
    let pitch = opts.grid_spacing.unwrap_or_else(|| m.spacing().min());

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for mask in std::iter::once(m).chain(companions.iter().copied()) {
        let Some((blo, bhi)) = mask.bounding_box() else { continue };
        let s = mask.spacing().as_array();
        for corner in 0..8 {
            let p = Vector3::new(
                if corner & 1 == 0 { blo[0] } else { bhi[0] } as f64 * s[0],
                if corner & 2 == 0 { blo[1] } else { bhi[1] } as f64 * s[1],
                if corner & 4 == 0 { blo[2] } else { bhi[2] } as f64 * s[2],
            );
            let q = rotation * (p - center);
            for a in 0..3 {
                lo[a] = lo[a].min(q[a]);
                hi[a] = hi[a].max(q[a]);
            }
        }
    }
    let margin = opts.margin_voxels as f64 * pitch;
    let origin = Vector3::new(lo[0] - margin, lo[1] - margin, lo[2] - margin);
    let extent = |a: usize| ((hi[a] - lo[a] + 2.0 * margin) / pitch + 1e-9).floor() as usize + 1;
    let dims = Dims::new(extent(0), extent(1), extent(2));
    let transform = RigidTransform {
        rotation,
        translation: -(rotation * center) - origin,
    };
    let mask = forward_pull(m, &transform, dims, pitch);
    Ok(AlignedMask {
        mask,
        transform,
        source_dims: m.dims(),
        source_spacing: m.spacing(),
    })
}

/// Nearest-neighbor pullback of an aligned-grid mask onto the source grid;
/// source voxels landing outside the aligned grid are background.
pub fn apply_inverse(t: &RigidTransform, m: &Mask, target_dims: Dims, target_spacing: Spacing) -> Mask {
    let mut out = Mask::empty(target_dims, target_spacing, m.label());
    let Some((blo, bhi)) = m.bounding_box() else {
        return out;
    };
    let pitch = m.spacing().as_array();
    let ts = target_spacing.as_array();
    // source-grid box covering the aligned foreground
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for corner in 0..8 {
        let q = [
            if corner & 1 == 0 { blo[0] as f64 - 1.0 } else { bhi[0] as f64 + 1.0 } * pitch[0],
            if corner & 2 == 0 { blo[1] as f64 - 1.0 } else { bhi[1] as f64 + 1.0 } * pitch[1],
            if corner & 4 == 0 { blo[2] as f64 - 1.0 } else { bhi[2] as f64 + 1.0 } * pitch[2],
        ];
        let p = t.apply_inverse(q);
        for a in 0..3 {
            lo[a] = lo[a].min(p[a] / ts[a]);
            hi[a] = hi[a].max(p[a] / ts[a]);
        }
    }
    let td = target_dims.as_array();
    let range = |a: usize| {
        let l = lo[a].floor().max(0.0) as usize;
        let h = (hi[a].ceil().max(-1.0) as i64).min(td[a] as i64 - 1);
        (l, h)
    };
    let (rx, ry, rz) = (range(0), range(1), range(2));
    if rx.1 < 0 || ry.1 < 0 || rz.1 < 0 {
        return out;
    }
    let md = m.dims();
    for z in rz.0..=rz.1 as usize {
        for y in ry.0..=ry.1 as usize {
            for x in rx.0..=rx.1 as usize {
                let q = t.apply([x as f64 * ts[0], y as f64 * ts[1], z as f64 * ts[2]]);
                let hit = md
                    .checked_index(
                        (q[0] / pitch[0]).round() as i64,
                        (q[1] / pitch[1]).round() as i64,
                        (q[2] / pitch[2]).round() as i64,
                    )
                    .is_some_and(|j| m.bits()[j]);
                if hit {
                    out.set(x, y, z, true);
                }
            }
        }
    }
    out
}

/// Extent of the voxel centers along one axis, in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub min: f64,
    pub max: f64,
    pub midpoint: f64,
}

pub fn project_extent(m: &Mask, axis: Axis) -> Result<Extent, GeometryError> {
    let a = axis.index();
    let s = m.spacing().as_array()[a];
    let (lo, hi) = m.bounding_box().ok_or(GeometryError::EmptyInput)?;
    let (min, max) = (lo[a] as f64 * s, hi[a] as f64 * s);
    Ok(Extent {
        min,
        max,
        midpoint: (min + max) / 2.0,
    })
}
