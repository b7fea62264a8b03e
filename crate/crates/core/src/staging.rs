//! PDAC T stage from tumor size and tumor-vessel contact angles.

use crate::geometry::{centroid, principal_axis};
use crate::measurement::TumorMeasurement;
use crate::morphology::{
    connected_components_2d, dilate, erode, largest_component, skeletonize, slice_border, Axis, Connectivity,
    Connectivity2d, SliceMask, StructuringElement,
};
use crate::volume::{Mask, VolumeError};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StagingError {
    #[error("vessel mask is empty")]
    EmptyVessel,
    #[error("tumor mask is empty")]
    EmptyTumor,
    #[error("no tumor measurement to stage")]
    MissingMeasurement,
    #[error(transparent)]
    Grid(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Vessel {
    #[serde(rename = "SMA")]
    Sma,
    #[serde(rename = "CHA")]
    Cha,
    #[serde(rename = "CA")]
    Ca,
    #[serde(rename = "SA")]
    Sa,
}

impl Vessel {
    pub const ALL: [Vessel; 4] = [Vessel::Sma, Vessel::Cha, Vessel::Ca, Vessel::Sa];

    pub fn name(self) -> &'static str {
        match self {
            Vessel::Sma => "SMA",
            Vessel::Cha => "CHA",
            Vessel::Ca => "CA",
            Vessel::Sa => "SA",
        }
    }

    /// Whether contact of at least 180° with this vessel makes the tumor T4.
    pub fn is_critical(self) -> bool {
        !matches!(self, Vessel::Sa)
    }

    pub fn parse(s: &str) -> Option<Vessel> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Vessel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Contact of the staged tumor with one vessel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselContact {
    pub vessel: Vessel,
    /// False when the vessel mask was not available.
    pub evaluated: bool,
    pub contact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_angle_deg: Option<f64>,
}

impl VesselContact {
    pub fn not_evaluated(vessel: Vessel) -> Self {
        VesselContact {
            vessel,
            evaluated: false,
            contact: false,
            max_angle_deg: None,
        }
    }

    pub fn none(vessel: Vessel) -> Self {
        VesselContact {
            vessel,
            evaluated: true,
            contact: false,
            max_angle_deg: None,
        }
    }

    pub fn with_angle(vessel: Vessel, angle: f64) -> Self {
        VesselContact {
            vessel,
            evaluated: true,
            contact: true,
            max_angle_deg: Some(angle.clamp(0.0, 360.0)),
        }
    }

    fn describe(&self) -> String {
        match (self.evaluated, self.max_angle_deg) {
            (false, _) => format!("{} not evaluated", self.vessel),
            (true, Some(a)) => format!("{} {:.0} degrees", self.vessel, a),
            (true, None) => format!("{} no contact", self.vessel),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TStage {
    T1a,
    T1b,
    T1c,
    T2,
    T3,
    T4,
}

impl fmt::Display for TStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TStage::T1a => "T1a",
            TStage::T1b => "T1b",
            TStage::T1c => "T1c",
            TStage::T2 => "T2",
            TStage::T3 => "T3",
            TStage::T4 => "T4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: TStage,
    #[serde(rename = "D_cm")]
    pub long_axis_cm: f64,
    #[serde(rename = "d_cm")]
    pub short_axis_cm: f64,
    pub contacts: Vec<VesselContact>,
    pub justification: String,
}

/// Size bucket on the longest diameter in cm; upper bounds inclusive.
pub fn size_stage(long_axis_cm: f64) -> TStage {
    // compare in integer tenths so 0.5 is exactly on the boundary
    let tenths = (long_axis_cm * 10.0).round() as i64;
    match tenths {
        i64::MIN..=5 => TStage::T1a,
        6..=10 => TStage::T1b,
        11..=20 => TStage::T1c,
        21..=40 => TStage::T2,
        _ => TStage::T3,
    }
}

pub const T4_ANGLE_DEG: f64 = 180.0;

pub fn stage_pdac(meas: Option<&TumorMeasurement>, contacts: &[VesselContact]) -> Result<StageResult, StagingError> {
    let meas = meas.ok_or(StagingError::MissingMeasurement)?;
    let critical = contacts
        .iter()
        .filter(|c| c.vessel.is_critical())
        .filter_map(|c| c.max_angle_deg.map(|a| (c.vessel, a)))
        .filter(|(_, a)| *a >= T4_ANGLE_DEG)
        .fold(None::<(Vessel, f64)>, |acc, (v, a)| match acc {
            Some((_, b)) if b >= a => acc,
            _ => Some((v, a)),
        });
    let size = format!("{:.1} x {:.1} cm", meas.long_axis_cm, meas.short_axis_cm);
    let listed: Vec<String> = contacts.iter().map(VesselContact::describe).collect();
    let listed = if listed.is_empty() { "no vessels evaluated".to_string() } else { listed.join(", ") };
    let (stage, why) = match critical {
        Some((v, a)) => (
            TStage::T4,
            format!("contact with the {v} over {a:.0} degrees (at least 180)"),
        ),
        None => {
            let s = size_stage(meas.long_axis_cm);
            (s, format!("longest diameter {:.1} cm without critical vessel contact of 180 degrees or more", meas.long_axis_cm))
        }
    };
    Ok(StageResult {
        stage,
        long_axis_cm: meas.long_axis_cm,
        short_axis_cm: meas.short_axis_cm,
        contacts: contacts.to_vec(),
        justification: format!("{stage}: {why}. Tumor size {size}. Vessel contact: {listed}."),
    })
}

/// Keeps the main branch of a vessel tree.
///
/// Sweeping z from top to bottom, each slice keeps its largest 8-connected
/// component touching the previous slice's kept pixels (3×3 neighborhood),
/// or simply its largest component within the first 5% of non-empty slices.
/// The result is opened with a 5³ cube, intersected with the vessel and
/// reduced to its largest 26-connected component. When the opening erases
/// everything (vessels thinner than the cube) the per-slice result is used.
pub fn isolate_main_branch(vessel: &Mask) -> Result<Mask, StagingError> {
    if vessel.is_empty() {
        return Err(StagingError::EmptyVessel);
    }
    let d = vessel.dims();
    let nonempty: Vec<usize> = (0..d.nz).rev().filter(|&z| !vessel.slice(Axis::Z, z).is_empty()).collect();
    let window = ((nonempty.len() as f64 * 0.05).ceil() as usize).max(1);
    let mut swept = vessel.empty_like(vessel.label());
    let mut prev: Option<(usize, SliceMask)> = None;
    for (rank, &z) in nonempty.iter().enumerate() {
        let s = vessel.slice(Axis::Z, z);
        let cc = connected_components_2d(&s, Connectivity2d::Eight);
        let chosen = if rank < window {
            largest_label(&cc.sizes, |_| true)
        } else {
            match &prev {
                Some((pz, p)) if *pz == z + 1 => {
                    let reach = p.dilate(3);
                    let mut touching = vec![false; cc.count + 1];
                    for (i, &l) in cc.labels.iter().enumerate() {
                        if l > 0 && reach.bits[i] {
                            touching[l as usize] = true;
                        }
                    }
                    largest_label(&cc.sizes, |l| touching[l as usize])
                }
                _ => None,
            }
        };
        let Some(label) = chosen else {
            if rank >= window {
                break;
            }
            continue;
        };
        let kept = cc.slice_of(label);
        swept.set_slice(Axis::Z, z, &kept);
        prev = Some((z, kept));
    }
    let opened = dilate(&erode(&swept, &StructuringElement::cube(5)), &StructuringElement::cube(5)).and(vessel);
    let main = largest_component(&opened, Connectivity::Vertex26);
    if main.is_empty() {
        Ok(largest_component(&swept, Connectivity::Vertex26))
    } else {
        Ok(main)
    }
}

fn largest_label(sizes: &[usize], allow: impl Fn(u32) -> bool) -> Option<u32> {
    let mut best: Option<(usize, u32)> = None;
    for (k, &s) in sizes.iter().enumerate() {
        let l = k as u32 + 1;
        if allow(l) && best.is_none_or(|(bs, _)| s > bs) {
            best = Some((s, l));
        }
    }
    best.map(|(_, l)| l)
}

/// Sampling parameters for [`contact_angle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactOptions {
    /// Length of the skeleton segment used for the local vessel axis, mm.
    pub segment_mm: f64,
    /// Length of the central slab sampled across the vessel, mm.
    pub crop_mm: f64,
    /// Half-width of each perpendicular cross-section, mm.
    pub half_width_mm: f64,
    /// In-plane and through-plane sampling pitch, mm.
    pub pitch_mm: f64,
}

impl Default for ContactOptions {
    fn default() -> Self {
        ContactOptions {
            segment_mm: 5.0,
            crop_mm: 2.5,
            half_width_mm: 20.0,
            pitch_mm: 1.0,
        }
    }
}

pub fn contact_angle(tumor: &Mask, vessel_main: &Mask, vessel: Vessel) -> Result<VesselContact, StagingError> {
    contact_angle_with(tumor, vessel_main, vessel, &ContactOptions::default())
}

/// Tumor-vessel contact angle.
///
/// The tumor is dilated by a 3³ cube. Every position along the vessel axis
/// where the dilated tumor meets the vessel is examined: the 5 mm skeleton
/// segment around it gives a local axis, and cross-sections perpendicular
/// to that axis across the central 2.5 mm are sampled. In each, the share
/// of the vessel border covered by the dilated tumor, times 360, is an
/// angle; the largest one is reported.
pub fn contact_angle_with(
    tumor: &Mask,
    vessel_main: &Mask,
    vessel: Vessel,
    opts: &ContactOptions,
) -> Result<VesselContact, StagingError> {
    tumor.check_same_grid(vessel_main)?;
    if tumor.is_empty() {
        return Err(StagingError::EmptyTumor);
    }
    if vessel_main.is_empty() {
        return Err(StagingError::EmptyVessel);
    }
    let grown = dilate(tumor, &StructuringElement::cube(3));
    let touch = grown.and(vessel_main);
    if touch.is_empty() {
        return Ok(VesselContact::none(vessel));
    }

    let skeleton = skeletonize(vessel_main).map_err(|_| StagingError::EmptyVessel)?;
    let mut sk = skeleton.points_mm();
    if sk.len() < 2 {
        sk = vessel_main.points_mm();
    }
    let axis = principal_axis(&sk).unwrap_or([1.0, 0.0, 0.0]);
    let center = centroid(&sk);
    let along = |p: [f64; 3]| (0..3).map(|a| (p[a] - center[a]) * axis[a]).sum::<f64>();
    let sk_t: Vec<f64> = sk.iter().map(|p| along(*p)).collect();

    let step = opts.pitch_mm;
    let mut positions: Vec<i64> = touch.points_mm().into_iter().map(|p| (along(p) / step).round() as i64).collect();
    positions.sort_unstable();
    positions.dedup();

    let half_seg = opts.segment_mm / 2.0;
    let half_crop = opts.crop_mm / 2.0;
    let n_off = (half_crop / step + 1e-9).floor() as i64;
    let mut best = 0.0f64;
    for pos in positions {
        let t0 = pos as f64 * step;
        let local: Vec<[f64; 3]> = sk
            .iter()
            .zip(&sk_t)
            .filter(|(_, t)| (**t - t0).abs() <= half_seg + 1e-9)
            .map(|(p, _)| *p)
            .collect();
        let (dir, origin) = if local.len() >= 2 {
            (principal_axis(&local).unwrap_or(axis), centroid(&local))
        } else {
            (axis, [center[0] + t0 * axis[0], center[1] + t0 * axis[1], center[2] + t0 * axis[2]])
        };
        let (u, v) = perpendicular_basis(dir);
        for k in -n_off..=n_off {
            let o = k as f64 * step;
            let base = [origin[0] + o * dir[0], origin[1] + o * dir[1], origin[2] + o * dir[2]];
            if let Some(a) = section_angle(vessel_main, &grown, base, u, v, opts) {
                best = best.max(a);
            }
        }
    }
    Ok(VesselContact::with_angle(vessel, best))
}

fn perpendicular_basis(d: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let n = nalgebra::Vector3::from(d).normalize();
    let helper = if n.x.abs() < 0.9 { nalgebra::Vector3::x() } else { nalgebra::Vector3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    ([u.x, u.y, u.z], [v.x, v.y, v.z])
}

fn lookup(m: &Mask, p: [f64; 3]) -> bool {
    let s = m.spacing().as_array();
    m.dims()
        .checked_index((p[0] / s[0]).round() as i64, (p[1] / s[1]).round() as i64, (p[2] / s[2]).round() as i64)
        .is_some_and(|i| m.bits()[i])
}

/// Angle covered in one cross-section centered at `base`, or `None` when
/// the section misses the vessel.
fn section_angle(vessel: &Mask, grown: &Mask, base: [f64; 3], u: [f64; 3], v: [f64; 3], opts: &ContactOptions) -> Option<f64> {
    let n = (opts.half_width_mm / opts.pitch_mm).round() as i64;
    let w = (2 * n + 1) as usize;
    let at = |i: usize, j: usize| {
        let (a, b) = ((i as i64 - n) as f64 * opts.pitch_mm, (j as i64 - n) as f64 * opts.pitch_mm);
        [
            base[0] + a * u[0] + b * v[0],
            base[1] + a * u[1] + b * v[1],
            base[2] + a * u[2] + b * v[2],
        ]
    };
    let section = SliceMask::from_fn(w, w, |i, j| lookup(vessel, at(i, j)));
    if section.is_empty() {
        return None;
    }
    let cc = connected_components_2d(&section, Connectivity2d::Eight);
    let center_label = cc.labels[n as usize + w * n as usize];
    let label = if center_label > 0 { center_label } else { largest_label(&cc.sizes, |_| true)? };
    let border = slice_border(&cc.slice_of(label));
    let pts = border.points();
    if pts.is_empty() {
        return None;
    }
    let covered = pts.iter().filter(|p| lookup(grown, at(p[0], p[1]))).count();
    Some(covered as f64 / pts.len() as f64 * 360.0)
}

/// Contacts for every vessel; absent vessels are reported as not evaluated.
///
/// Each present vessel is first checked against the dilated tumor, then
/// reduced to its main branch before the angle is measured.
pub fn evaluate_contacts(tumor: &Mask, vessels: &[(Vessel, Option<&Mask>)]) -> Result<Vec<VesselContact>, StagingError> {
    if tumor.is_empty() {
        return Err(StagingError::EmptyTumor);
    }
    let grown = dilate(tumor, &StructuringElement::cube(3));
    let mut out = Vec::with_capacity(vessels.len());
    for &(v, mask) in vessels {
        let Some(mask) = mask else {
            out.push(VesselContact::not_evaluated(v));
            continue;
        };
        mask.check_same_grid(tumor)?;
        if mask.is_empty() || grown.intersection_count(mask) == 0 {
            out.push(VesselContact::none(v));
            continue;
        }
        let main = isolate_main_branch(mask)?;
        out.push(contact_angle(tumor, &main, v)?);
    }
    Ok(out)
}
