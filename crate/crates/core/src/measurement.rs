//! Two-diameter tumor size, physical volume and attenuation statistics.

use crate::morphology::{connected_components, slice_border, Axis, Connectivity};
use crate::organ::Organ;
use crate::volume::{Dims, Mask, Spacing, Volume, VolumeError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("tumor instance is empty")]
    EmptyInstance,
    #[error("mask is empty")]
    EmptyMask,
    #[error(transparent)]
    Grid(#[from] VolumeError),
}

/// One 26-connected tumor component, stored as a crop of the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TumorInstance {
    /// Cropped mask; voxel `(x, y, z)` is `(x, y, z) + origin` on the full grid.
    pub mask: Mask,
    pub origin: [usize; 3],
    pub grid: Dims,
    pub organ: Organ,
    pub instance_id: u32,
}

impl TumorInstance {
    pub fn from_mask(m: &Mask, organ: Organ, instance_id: u32) -> Self {
        let (lo, hi) = m.bounding_box().unwrap_or(([0; 3], [0; 3]));
        TumorInstance {
            mask: m.crop(lo, hi),
            origin: lo,
            grid: m.dims(),
            organ,
            instance_id,
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.mask.count()
    }

    pub fn spacing(&self) -> Spacing {
        self.mask.spacing()
    }

    /// Flat indices of the instance's voxels on the full grid.
    pub fn grid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        let cd = self.mask.dims();
        self.mask.indices().map(move |i| {
            let [x, y, z] = cd.coords(i);
            self.grid.index(x + self.origin[0], y + self.origin[1], z + self.origin[2])
        })
    }

    pub fn full_mask(&self) -> Mask {
        let mut out = Mask::empty(self.grid, self.mask.spacing(), self.mask.label());
        out.paste(&self.mask, self.origin);
        out
    }
}

/// Splits a tumor mask into its 26-connected components, largest first.
/// Equal sizes keep raster order of each component's first voxel.
pub fn split_instances(tumor: &Mask, organ: Organ) -> Vec<TumorInstance> {
    let cc = connected_components(tumor, Connectivity::Vertex26);
    let mut lo = vec![[usize::MAX; 3]; cc.count];
    let mut hi = vec![[0usize; 3]; cc.count];
    let dims = tumor.dims();
    for (i, &l) in cc.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = dims.coords(i);
        let k = l as usize - 1;
        for a in 0..3 {
            lo[k][a] = lo[k][a].min(c[a]);
            hi[k][a] = hi[k][a].max(c[a]);
        }
    }
    let mut order: Vec<usize> = (0..cc.count).collect();
    order.sort_by(|&a, &b| cc.sizes[b].cmp(&cc.sizes[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .enumerate()
        .map(|(rank, k)| {
            let label = k as u32 + 1;
            let (l, h) = (lo[k], hi[k]);
            let cd = Dims::new(h[0] - l[0] + 1, h[1] - l[1] + 1, h[2] - l[2] + 1);
            let mask = Mask::from_fn(cd, tumor.spacing(), tumor.label(), |x, y, z| {
                cc.labels[dims.index(x + l[0], y + l[1], z + l[2])] == label
            });
            TumorInstance {
                mask,
                origin: l,
                grid: dims,
                organ,
                instance_id: rank as u32 + 1,
            }
        })
        .collect()
}

/// Axial diameters of one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhoDiameters {
    /// Longest in-plane diameter, mm.
    pub long_axis_mm: f64,
    /// Width perpendicular to the long axis in the same plane, mm.
    pub short_axis_mm: f64,
    /// z index of the measured slice on the native grid.
    pub slice_index: usize,
}

/// Result of the per-slice diameter search on the resampled grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceDiameter {
    /// Resampled slice index on the global (uncropped) resampled grid.
    pub k: usize,
    /// Native z index containing the slice center.
    pub native_z: usize,
    pub border_points: usize,
    /// Squared diameter in resampled voxel units.
    pub diameter_sq: i64,
    /// Endpoints of the diameter, in-plane resampled coordinates.
    pub endpoints: ([i64; 2], [i64; 2]),
    /// Support width perpendicular to the diameter, resampled voxel units.
    pub width: f64,
}

/// Nearest-neighbor resampling of a crop, indexed on the resampled version of
/// the full grid so the result does not depend on where the crop starts.
///
/// Returns the resampled crop and the global resampled index of its corner.
pub fn resample_instance(inst: &TumorInstance, target: Spacing) -> (Mask, [usize; 3]) {
    let src = inst.spacing().as_array();
    let t = target.as_array();
    let cd = inst.mask.dims().as_array();
    let mut axes: Vec<(usize, Vec<usize>)> = Vec::with_capacity(3);
    for a in 0..3 {
        let o = inst.origin[a];
        let n = cd[a];
        let native = |k: usize| ((k as f64 + 0.5) * t[a] / src[a]).floor() as usize;
        // first global k landing at or after the crop start
        let mut k = ((o as f64 * src[a] / t[a]).floor() as usize).saturating_sub(1);
        while native(k) < o {
            k += 1;
        }
        let k0 = k;
        let mut lookup = Vec::new();
        while native(k) < o + n {
            lookup.push(native(k) - o);
            k += 1;
        }
        axes.push((k0, lookup));
    }
    let dims = Dims::new(axes[0].1.len().max(1), axes[1].1.len().max(1), axes[2].1.len().max(1));
    if axes.iter().any(|(_, l)| l.is_empty()) {
        return (Mask::empty(dims, target, inst.mask.label()), [axes[0].0, axes[1].0, axes[2].0]);
    }
    let m = &inst.mask;
    let out = Mask::from_fn(dims, target, m.label(), |x, y, z| m.get(axes[0].1[x], axes[1].1[y], axes[2].1[z]));
    (out, [axes[0].0, axes[1].0, axes[2].0])
}

/// Spread of the cross products `(p − a) × (b − a)` over `points`; divided by
/// `|b − a|` this is the support width perpendicular to `ab`. Integer, so
/// comparisons are exact and independent of translation.
fn cross_range(points: &[[i64; 2]], a: [i64; 2], b: [i64; 2]) -> i64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    for p in points {
        let c = (p[0] - a[0]) * dy - (p[1] - a[1]) * dx;
        lo = lo.min(c);
        hi = hi.max(c);
    }
    hi - lo
}

/// Longest pairwise distance among `points` (exhaustive). Among equally
/// long pairs the one with the widest perpendicular support wins, then the
/// first found.
fn slice_diameter(points: &[[i64; 2]]) -> (i64, ([i64; 2], [i64; 2]), f64) {
    let mut best = 0i64;
    let mut pairs: Vec<(usize, usize)> = vec![(0, 0)];
    for i in 0..points.len() {
        let p = points[i];
        for (j, q) in points.iter().enumerate().skip(i + 1) {
            let d2 = (p[0] - q[0]).pow(2) + (p[1] - q[1]).pow(2);
            if d2 > best {
                best = d2;
                pairs.clear();
                pairs.push((i, j));
            } else if d2 == best && best > 0 {
                pairs.push((i, j));
            }
        }
    }
    if best == 0 {
        return (0, (points[0], points[0]), 0.0);
    }
    let mut chosen = (points[pairs[0].0], points[pairs[0].1]);
    let mut spread = cross_range(points, chosen.0, chosen.1);
    for &(i, j) in &pairs[1..] {
        let r = cross_range(points, points[i], points[j]);
        if r > spread {
            spread = r;
            chosen = (points[i], points[j]);
        }
    }
    let len = (best as f64).sqrt();
    (best, chosen, (spread as f64 / len).min(len))
}

/// Per-slice border diameters of an instance after resampling to `target`.
pub fn slice_diameters(inst: &TumorInstance, target: Spacing) -> Vec<SliceDiameter> {
    let (r, corner) = resample_instance(inst, target);
    let dz = inst.spacing().dz;
    let mut out = Vec::new();
    for z in 0..r.dims().nz {
        let s = r.slice(Axis::Z, z);
        if s.is_empty() {
            continue;
        }
        let pts: Vec<[i64; 2]> = slice_border(&s).points().iter().map(|p| [p[0] as i64, p[1] as i64]).collect();
        let (d2, endpoints, width) = slice_diameter(&pts);
        let k = corner[2] + z;
        out.push(SliceDiameter {
            k,
            native_z: ((k as f64 + 0.5) * target.dz / dz).floor() as usize,
            border_points: pts.len(),
            diameter_sq: d2,
            endpoints,
            width,
        });
    }
    out
}

/// WHO-style measurement on a grid resampled to `target` spacing.
///
/// Diameters are floored at one resampled voxel pitch so a detected
/// instance never measures zero.
pub fn measure_who(inst: &TumorInstance, target: Spacing) -> Result<WhoDiameters, MeasurementError> {
    if inst.mask.is_empty() {
        return Err(MeasurementError::EmptyInstance);
    }
    let slices = slice_diameters(inst, target);
    let best = slices
        .iter()
        .fold(None::<&SliceDiameter>, |acc, s| match acc {
            Some(b) if b.diameter_sq >= s.diameter_sq => Some(b),
            _ => Some(s),
        })
        .ok_or(MeasurementError::EmptyInstance)?;
    let pitch = target.dx;
    let long = (best.diameter_sq as f64).sqrt() * pitch;
    let short = best.width * pitch;
    Ok(WhoDiameters {
        long_axis_mm: long.max(pitch),
        short_axis_mm: short.max(pitch),
        slice_index: best.native_z,
    })
}

/// `count · voxel volume` in cm³, rounded to 3 decimals.
pub fn physical_volume(m: &Mask) -> f64 {
    round_to(m.volume_mm3() / 1000.0, 3)
}

/// Mean and population standard deviation of HU over the masked voxels.
pub fn attenuation_stats(v: &Volume, m: &Mask) -> Result<(f64, f64), MeasurementError> {
    m.check_volume_grid(v)?;
    stats_over(v, m.indices())
}

fn stats_over(v: &Volume, idx: impl Iterator<Item = usize>) -> Result<(f64, f64), MeasurementError> {
    let data = v.data();
    let vals: Vec<f64> = idx.map(|i| data[i] as f64).collect();
    if vals.is_empty() {
        return Err(MeasurementError::EmptyMask);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

pub fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    let r = (x * f).round() / f;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Reported measurement of one tumor instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TumorMeasurement {
    /// Longest axial diameter, cm, one decimal.
    #[serde(rename = "D_cm")]
    pub long_axis_cm: f64,
    /// Perpendicular extent in the same slice, cm, one decimal.
    #[serde(rename = "d_cm")]
    pub short_axis_cm: f64,
    #[serde(rename = "D_mm")]
    pub long_axis_mm: f64,
    #[serde(rename = "d_mm")]
    pub short_axis_mm: f64,
    pub slice_index: usize,
    pub volume_cm3: f64,
    pub hu_mean: f64,
    pub hu_std: f64,
    pub voxels: usize,
}

/// Full measurement of an instance against the native HU volume.
pub fn measure_tumor(inst: &TumorInstance, volume: &Volume, target: Spacing) -> Result<TumorMeasurement, MeasurementError> {
    if volume.dims() != inst.grid {
        return Err(VolumeError::GridMismatch(format!("volume {:?} vs mask {:?}", volume.dims(), inst.grid)).into());
    }
    let who = measure_who(inst, target)?;
    let (mean, std) = stats_over(volume, inst.grid_indices())?;
    Ok(TumorMeasurement {
        long_axis_cm: round_to(who.long_axis_mm / 10.0, 1),
        short_axis_cm: round_to(who.short_axis_mm / 10.0, 1),
        long_axis_mm: round_to(who.long_axis_mm, 3),
        short_axis_mm: round_to(who.short_axis_mm, 3),
        slice_index: who.slice_index,
        volume_cm3: physical_volume(&inst.mask),
        hu_mean: round_to(mean, 2),
        hu_std: round_to(std, 2),
        voxels: inst.voxel_count(),
    })
}
