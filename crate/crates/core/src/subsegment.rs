//! Pancreas head/body/tail partition from the SMA landmark, and tumor
//! localization against organ sub-segments.

use crate::geometry::{align_to_x_with, AlignOptions, AlignedMask, GeometryError};
use crate::measurement::TumorInstance;
use crate::morphology::{connected_components_2d, Axis, Connectivity2d, SliceMask};
use crate::organ::Organ;
use crate::volume::{Mask, VolumeError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SubsegmentError {
    #[error("pancreas mask is empty")]
    EmptyPancreas,
    #[error("sub-segmentation unavailable: SMA mask is empty at or above the pancreas")]
    SubsegmentationUnavailable,
    #[error("invalid sub-segments: {0}")]
    InvalidSegments(String),
    #[error(transparent)]
    Grid(#[from] VolumeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which end of the aligned x axis holds the pancreatic head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadSide {
    HeadIsLowX,
    HeadIsHighX,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PancreasSubsegments {
    pub head: Mask,
    pub body: Mask,
    pub tail: Mask,
}

impl PancreasSubsegments {
    pub fn into_map(self) -> SubsegmentMap {
        SubsegmentMap {
            organ: Organ::Pancreas,
            segments: vec![("head".into(), self.head), ("body".into(), self.body), ("tail".into(), self.tail)],
        }
    }
}

/// Boundary planes in aligned-frame millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsegmentPlanes {
    pub head_side: HeadSide,
    pub head_body_x: f64,
    pub body_tail_x: f64,
    /// Voxels moved from body or tail to head by the slice sweep.
    pub reclassified_voxels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsegmentOptions {
    pub align: AlignOptions,
    /// Half-width of the slab on each side of the head/body plane compared
    /// by [`orient_head`], mm.
    pub orient_window_mm: f64,
    /// Relative area difference below which orientation is a tie.
    pub orient_tie_fraction: f64,
}

impl Default for SubsegmentOptions {
    fn default() -> Self {
        SubsegmentOptions {
            align: AlignOptions::default(),
            orient_window_mm: 15.0,
            orient_tie_fraction: 0.05,
        }
    }
}

pub fn subsegment_pancreas(pancreas: &Mask, sma: &Mask) -> Result<PancreasSubsegments, SubsegmentError> {
    subsegment_pancreas_with(pancreas, sma, &SubsegmentOptions::default()).map(|(s, _)| s)
}

const HEAD: u8 = 1;
const BODY: u8 = 2;
const TAIL: u8 = 3;

pub fn subsegment_pancreas_with(
    pancreas: &Mask,
    sma: &Mask,
    opts: &SubsegmentOptions,
) -> Result<(PancreasSubsegments, SubsegmentPlanes), SubsegmentError> {
    pancreas.check_same_grid(sma)?;
    let (plo, _) = pancreas.bounding_box().ok_or(SubsegmentError::EmptyPancreas)?;
    // drop the SMA below the pancreas
    let d = sma.dims();
    let mut sma_kept = sma.clone();
    for i in sma.indices() {
        if d.coords(i)[2] < plo[2] {
            sma_kept.bits_mut()[i] = false;
        }
    }
    if sma_kept.is_empty() {
        return Err(SubsegmentError::SubsegmentationUnavailable);
    }

    let aligned = align_to_x_with(pancreas, &[&sma_kept], &opts.align)?;
    let sma_x: Vec<f64> = sma_kept.points_mm().into_iter().map(|p| aligned.aligned_x(p)).collect();
    let (smin, smax) = sma_x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let plane1 = (smin + smax) / 2.0;
    let sma_centroid = sma_x.iter().sum::<f64>() / sma_x.len() as f64;
    let side = orient_head_at(&aligned.mask, plane1, sma_centroid, opts);

    let pitch = aligned.mask.spacing().dx;
    let ad = aligned.mask.dims();
    // head side of the first plane, voxel on the plane included
    let on_head_side = |x: f64| match side {
        HeadSide::HeadIsLowX => x <= plane1 + 1e-9,
        HeadSide::HeadIsHighX => x >= plane1 - 1e-9,
    };
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in aligned.mask.indices() {
        let x = ad.coords(i)[0] as f64 * pitch;
        if !on_head_side(x) {
            rmin = rmin.min(x);
            rmax = rmax.max(x);
        }
    }
    let plane2 = if rmin.is_finite() { (rmin + rmax) / 2.0 } else { plane1 };
    // body side of the second plane, voxel on the plane included
    let in_tail = |x: f64| match side {
        HeadSide::HeadIsLowX => x > plane2 + 1e-9,
        HeadSide::HeadIsHighX => x < plane2 - 1e-9,
    };
    let plane_label = |x: f64| {
        if on_head_side(x) {
            HEAD
        } else if in_tail(x) {
            TAIL
        } else {
            BODY
        }
    };

    let mut labels = vec![0u8; ad.len()];
    for i in aligned.mask.indices() {
        labels[i] = plane_label(ad.coords(i)[0] as f64 * pitch);
    }
    let reclassified = sweep_from_tail(&aligned.mask, &mut labels, side, &on_head_side);

    let native = labels_to_native(&aligned, pancreas, &labels, plane_label);
    let pick = |l: u8, name: &str| {
        let mut m = pancreas.empty_like(name);
        for (b, v) in m.bits_mut().iter_mut().zip(&native) {
            *b = *v == l;
        }
        m
    };
    let subsegments = PancreasSubsegments {
        head: pick(HEAD, "pancreas_head"),
        body: pick(BODY, "pancreas_body"),
        tail: pick(TAIL, "pancreas_tail"),
    };
    let planes = SubsegmentPlanes {
        head_side: side,
        head_body_x: plane1,
        body_tail_x: plane2,
        reclassified_voxels: reclassified,
    };
    Ok((subsegments, planes))
}

/// Sweeps the non-head x-slices from the tail end. The chain of components
/// overlapping the previous slice's chain stays body/tail; everything else
/// is relabeled head. Returns the number of relabeled voxels.
fn sweep_from_tail(m: &Mask, labels: &mut [u8], side: HeadSide, on_head_side: &dyn Fn(f64) -> bool) -> usize {
    let d = m.dims();
    let pitch = m.spacing().dx;
    let xs: Vec<usize> = match side {
        HeadSide::HeadIsLowX => (0..d.nx).rev().collect(),
        HeadSide::HeadIsHighX => (0..d.nx).collect(),
    };
    let mut prev: Option<SliceMask> = None;
    let mut moved = 0;
    for x in xs {
        if on_head_side(x as f64 * pitch) {
            break;
        }
        let s = m.slice(Axis::X, x);
        if s.is_empty() {
            continue;
        }
        let cc = connected_components_2d(&s, Connectivity2d::Eight);
        let mut keep = vec![false; cc.count + 1];
        if let Some(p) = &prev {
            for (i, &l) in cc.labels.iter().enumerate() {
                if l > 0 && p.bits[i] {
                    keep[l as usize] = true;
                }
            }
        }
        if !keep.iter().any(|k| *k) {
            // first slice, or the chain was broken by an empty gap
            keep.iter_mut().for_each(|k| *k = true);
        }
        let mut chain = SliceMask::empty(s.width, s.height);
        for (i, &l) in cc.labels.iter().enumerate() {
            if l == 0 {
                continue;
            }
            let (u, v) = (i % s.width, i / s.width);
            if keep[l as usize] {
                chain.bits[i] = true;
            } else {
                // slice of the x axis: u is y, v is z
                labels[d.index(x, u, v)] = HEAD;
                moved += 1;
            }
        }
        prev = Some(chain);
    }
    moved
}

/// Nearest-neighbor pullback of the aligned label grid; pancreas voxels
/// whose nearest aligned voxel is unlabeled fall back to the plane rule.
fn labels_to_native(aligned: &AlignedMask, pancreas: &Mask, labels: &[u8], plane_label: impl Fn(f64) -> u8) -> Vec<u8> {
    let ad = aligned.mask.dims();
    let pitch = aligned.mask.spacing().dx;
    let s = pancreas.spacing().as_array();
    let pd = pancreas.dims();
    let mut out = vec![0u8; pd.len()];
    for i in pancreas.indices() {
        let c = pd.coords(i);
        let q = aligned.transform.apply([c[0] as f64 * s[0], c[1] as f64 * s[1], c[2] as f64 * s[2]]);
        let l = ad
            .checked_index(
                (q[0] / pitch).round() as i64,
                (q[1] / pitch).round() as i64,
                (q[2] / pitch).round() as i64,
            )
            .map_or(0, |j| labels[j]);
        out[i] = if l == 0 { plane_label(q[0]) } else { l };
    }
    out
}

/// Head orientation from the aligned masks: the SMA's x-projection midpoint
/// is the head/body plane, and the side with the larger mean pancreas
/// cross-section next to that plane is the head.
pub fn orient_head(pancreas_aligned: &Mask, sma_aligned: &Mask) -> HeadSide {
    let pitch = sma_aligned.spacing().dx;
    let xs: Vec<f64> = sma_aligned
        .indices()
        .map(|i| sma_aligned.dims().coords(i)[0] as f64 * pitch)
        .collect();
    if xs.is_empty() {
        return HeadSide::HeadIsLowX;
    }
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let centroid = xs.iter().sum::<f64>() / xs.len() as f64;
    orient_head_at(pancreas_aligned, (lo + hi) / 2.0, centroid, &SubsegmentOptions::default())
}

/// Ties (relative difference under `orient_tie_fraction`) go to the side
/// whose pancreas end is nearer the SMA centroid, then to low x.
pub fn orient_head_at(pancreas_aligned: &Mask, plane_x: f64, sma_centroid_x: f64, opts: &SubsegmentOptions) -> HeadSide {
    let d = pancreas_aligned.dims();
    let pitch = pancreas_aligned.spacing().dx;
    let mut area = vec![0usize; d.nx];
    for i in pancreas_aligned.indices() {
        area[d.coords(i)[0]] += 1;
    }
    let w = opts.orient_window_mm;
    let mean_area = |in_window: &dyn Fn(f64) -> bool| {
        let sel: Vec<usize> = (0..d.nx).filter(|&x| in_window(x as f64 * pitch)).map(|x| area[x]).collect();
        if sel.is_empty() {
            0.0
        } else {
            sel.iter().sum::<usize>() as f64 / sel.len() as f64
        }
    };
    let low = mean_area(&|x| x < plane_x - 1e-9 && x >= plane_x - w - 1e-9);
    let high = mean_area(&|x| x > plane_x + 1e-9 && x <= plane_x + w + 1e-9);
    let larger = low.max(high);
    if larger > 0.0 && (low - high).abs() / larger >= opts.orient_tie_fraction {
        return if low > high { HeadSide::HeadIsLowX } else { HeadSide::HeadIsHighX };
    }
    let xs: Vec<usize> = (0..d.nx).filter(|&x| area[x] > 0).collect();
    let (Some(&first), Some(&last)) = (xs.first(), xs.last()) else {
        return HeadSide::HeadIsLowX;
    };
    let to_low = (sma_centroid_x - first as f64 * pitch).abs();
    let to_high = (last as f64 * pitch - sma_centroid_x).abs();
    if to_high + 1e-9 < to_low {
        HeadSide::HeadIsHighX
    } else {
        HeadSide::HeadIsLowX
    }
}

/// Named, pairwise disjoint sub-segments of one organ on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsegmentMap {
    pub organ: Organ,
    pub segments: Vec<(String, Mask)>,
}

impl SubsegmentMap {
    /// Validates disjointness, and when `organ_mask` is given, that the
    /// segments cover it exactly.
    pub fn new(organ: Organ, segments: Vec<(String, Mask)>, organ_mask: Option<&Mask>) -> Result<Self, SubsegmentError> {
        let Some(first) = segments.first() else {
            return Err(SubsegmentError::InvalidSegments("no segments".into()));
        };
        let mut union = first.1.empty_like("union");
        for (name, m) in &segments {
            m.check_same_grid(&union)?;
            if union.intersection_count(m) > 0 {
                return Err(SubsegmentError::InvalidSegments(format!("{name} overlaps another segment")));
            }
            union = union.or(m);
        }
        if let Some(om) = organ_mask {
            om.check_same_grid(&union)?;
            if union.bits() != om.bits() {
                return Err(SubsegmentError::InvalidSegments(format!("segments do not cover the {organ} mask exactly")));
            }
        }
        Ok(SubsegmentMap { organ, segments })
    }

    /// Liver map from Couinaud masks given in order 1..=8.
    pub fn liver(segments: Vec<Mask>, liver: &Mask) -> Result<Self, SubsegmentError> {
        let named = segments
            .into_iter()
            .enumerate()
            .map(|(i, m)| (format!("segment {}", i + 1), m))
            .collect();
        Self::new(Organ::Liver, named, Some(liver))
    }
}

/// Segments hit by the tumor with their overlap fraction (of tumor voxels),
/// largest first; ties keep segment order.
pub fn localize_tumor(inst: &TumorInstance, segmap: &SubsegmentMap) -> Vec<(String, f64)> {
    let total = inst.voxel_count();
    if total == 0 {
        return Vec::new();
    }
    let idx: Vec<usize> = inst.grid_indices().collect();
    let mut hits: Vec<(String, f64)> = segmap
        .segments
        .iter()
        .filter(|(_, m)| m.dims() == inst.grid)
        .filter_map(|(name, m)| {
            let n = idx.iter().filter(|&&i| m.bits()[i]).count();
            (n > 0).then(|| (name.clone(), n as f64 / total as f64))
        })
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1));
    hits
}
