//! Seeded synthetic abdominal phantoms with closed-form ground truth.
//!
//! Masks depend only on geometry. HU noise comes from ChaCha8 seeded with the
//! phantom seed, one stream per structure, so two seeds give the same masks
//! and different noise.

use crate::organ::Organ;
use crate::staging::{size_stage, TStage, Vessel};
use crate::volume::{Dims, Mask, Spacing, Volume, VolumeError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("shape `{0}` extends outside the grid")]
    ShapeOutOfBounds(String),
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Ellipsoid {
        center: [f64; 3],
        semi_axes: [f64; 3],
        /// In-plane rotation about z, degrees.
        #[serde(default)]
        rotation_z_deg: f64,
    },
    /// Points within `radius` of a polyline (capsules joined end to end).
    Tube { points: Vec<[f64; 3]>, radius: f64 },
    Union { parts: Vec<Shape> },
}

impl Shape {
    pub fn ellipsoid(center: [f64; 3], semi_axes: [f64; 3]) -> Shape {
        Shape::Ellipsoid {
            center,
            semi_axes,
            rotation_z_deg: 0.0,
        }
    }

    pub fn tube(points: &[[f64; 3]], radius: f64) -> Shape {
        Shape::Tube {
            points: points.to_vec(),
            radius,
        }
    }

    /// Center-inside test, boundary inclusive.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Shape::Ellipsoid {
                center,
                semi_axes,
                rotation_z_deg,
            } => {
                let (s, c) = rotation_z_deg.to_radians().sin_cos();
                let (dx, dy, dz) = (p[0] - center[0], p[1] - center[1], p[2] - center[2]);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / semi_axes[0]).powi(2) + (v / semi_axes[1]).powi(2) + (dz / semi_axes[2]).powi(2) <= 1.0 + 1e-12
            }
            Shape::Tube { points, radius } => {
                let r2 = radius * radius + 1e-9;
                if points.len() == 1 {
                    return dist2(p, points[0]) <= r2;
                }
                points.windows(2).any(|w| segment_dist2(p, w[0], w[1]) <= r2)
            }
            Shape::Union { parts } => parts.iter().any(|s| s.contains(p)),
        }
    }

    /// Axis-aligned bounds in mm.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Shape::Ellipsoid {
                center,
                semi_axes,
                rotation_z_deg,
            } => {
                let (s, c) = rotation_z_deg.to_radians().sin_cos();
                let ex = ((c * semi_axes[0]).powi(2) + (s * semi_axes[1]).powi(2)).sqrt();
                let ey = ((s * semi_axes[0]).powi(2) + (c * semi_axes[1]).powi(2)).sqrt();
                let e = [ex, ey, semi_axes[2]];
                ([0, 1, 2].map(|a| center[a] - e[a]), [0, 1, 2].map(|a| center[a] + e[a]))
            }
            Shape::Tube { points, radius } => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for p in points {
                    for a in 0..3 {
                        lo[a] = lo[a].min(p[a] - radius);
                        hi[a] = hi[a].max(p[a] + radius);
                    }
                }
                (lo, hi)
            }
            Shape::Union { parts } => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for s in parts {
                    let (l, h) = s.bounds();
                    for a in 0..3 {
                        lo[a] = lo[a].min(l[a]);
                        hi[a] = hi[a].max(h[a]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Closed-form volume in mm³ where one exists (ellipsoids and
    /// single-segment tubes).
    pub fn analytic_volume_mm3(&self) -> Option<f64> {
        match self {
            Shape::Ellipsoid { semi_axes, .. } => Some(4.0 / 3.0 * PI * semi_axes[0] * semi_axes[1] * semi_axes[2]),
            Shape::Tube { points, radius } if points.len() == 2 => {
                let len = dist2(points[0], points[1]).sqrt();
                Some(PI * radius * radius * len + 4.0 / 3.0 * PI * radius.powi(3))
            }
            _ => None,
        }
    }

    fn translated(&self, o: [f64; 3]) -> Shape {
        let add = |p: [f64; 3]| [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
        match self {
            Shape::Ellipsoid {
                center,
                semi_axes,
                rotation_z_deg,
            } => Shape::Ellipsoid {
                center: add(*center),
                semi_axes: *semi_axes,
                rotation_z_deg: *rotation_z_deg,
            },
            Shape::Tube { points, radius } => Shape::Tube {
                points: points.iter().map(|p| add(*p)).collect(),
                radius: *radius,
            },
            Shape::Union { parts } => Shape::Union {
                parts: parts.iter().map(|s| s.translated(o)).collect(),
            },
        }
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

fn segment_dist2(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((0..3).map(|k| ap[k] * ab[k]).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    dist2(p, [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuDist {
    pub mean: f64,
    pub std: f64,
}

impl HuDist {
    pub const fn new(mean: f64, std: f64) -> Self {
        HuDist { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganSpec {
    /// `liver`, `pancreas`, `kidneys`, `spleen`, ...
    pub name: String,
    pub shape: Shape,
    pub hu: HuDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TumorSpec {
    pub organ: Organ,
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    #[serde(default)]
    pub rotation_z_deg: f64,
    pub hu: HuDist,
    /// Sub-segment the tumor is built to sit in, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_location: Option<String>,
}

impl TumorSpec {
    pub fn shape(&self) -> Shape {
        Shape::Ellipsoid {
            center: self.center,
            semi_axes: self.semi_axes,
            rotation_z_deg: self.rotation_z_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselSpec {
    pub vessel: Vessel,
    pub points: Vec<[f64; 3]>,
    pub radius: f64,
    pub hu: HuDist,
}

/// Isolated voxels added to one organ's tumor mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaltNoise {
    pub organ: Organ,
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub name: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    #[serde(default = "default_background")]
    pub background_hu: f64,
    pub organs: Vec<OrganSpec>,
    #[serde(default)]
    pub tumors: Vec<TumorSpec>,
    #[serde(default)]
    pub vessels: Vec<VesselSpec>,
    /// Split the liver into eight sub-segments (four x bands, two z halves).
    #[serde(default)]
    pub liver_segments: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salt: Option<SaltNoise>,
    pub seed: u64,
}

fn default_background() -> f64 {
    -1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TumorTruth {
    pub organ: Organ,
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    #[serde(rename = "D_cm")]
    pub long_axis_cm: f64,
    #[serde(rename = "d_cm")]
    pub short_axis_cm: f64,
    pub volume_cm3: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselTruth {
    pub vessel: Vessel,
    /// Largest angular share of the vessel wall inside a pancreatic tumor.
    pub encasement_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganTruth {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_cm3: Option<f64>,
    pub hu_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub tumors: Vec<TumorTruth>,
    pub vessels: Vec<VesselTruth>,
    pub organs: Vec<OrganTruth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_stage: Option<TStage>,
    pub salt_voxels: usize,
}

/// Generated case: HU volume, named masks and ground truth.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume,
    pub masks: BTreeMap<String, Mask>,
    pub truth: GroundTruth,
}

struct Grid {
    dims: Dims,
    spacing: [f64; 3],
}

impl Grid {
    fn voxelize(&self, shape: &Shape) -> Vec<usize> {
        let (lo, hi) = shape.bounds();
        let n = self.dims.as_array();
        let range = |a: usize| {
            let l = (lo[a] / self.spacing[a]).floor().max(0.0) as usize;
            let h = ((hi[a] / self.spacing[a]).ceil().max(0.0) as usize).min(n[a].saturating_sub(1));
            l..=h
        };
        let mut out = Vec::new();
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    let p = [x as f64 * self.spacing[0], y as f64 * self.spacing[1], z as f64 * self.spacing[2]];
                    if shape.contains(p) {
                        out.push(self.dims.index(x, y, z));
                    }
                }
            }
        }
        out
    }

    fn fits(&self, shape: &Shape) -> bool {
        let (lo, hi) = shape.bounds();
        let n = self.dims.as_array();
        (0..3).all(|a| lo[a] >= -1e-9 && hi[a] <= (n[a] - 1) as f64 * self.spacing[a] + 1e-9)
    }
}

/// Fraction of the vessel wall (radius + half a voxel) inside the tumor,
/// maximized over centerline samples, in degrees.
fn encasement_deg(tumor: &Shape, vessel: &VesselSpec) -> f64 {
    let r = vessel.radius + 0.5;
    let mut best: f64 = 0.0;
    for w in vessel.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let axis = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let len = dist2(a, b).sqrt();
        if len == 0.0 {
            continue;
        }
        let d = axis.map(|v| v / len);
        let helper = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let u = normalize(cross(d, helper));
        let v = cross(d, u);
        let steps = (len / 0.5).ceil() as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64 * len;
            let c = [a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]];
            let n = 360;
            let inside = (0..n)
                .filter(|&j| {
                    let th = j as f64 / n as f64 * 2.0 * PI;
                    let (s, co) = th.sin_cos();
                    tumor.contains([
                        c[0] + r * (co * u[0] + s * v[0]),
                        c[1] + r * (co * u[1] + s * v[1]),
                        c[2] + r * (co * u[2] + s * v[2]),
                    ])
                })
                .count();
            best = best.max(inside as f64 / n as f64 * 360.0);
        }
    }
    best
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dist2(a, [0.0; 3]).sqrt();
    a.map(|v| v / n)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    let dims = Dims::from_array(spec.dims);
    let spacing = Spacing::new(spec.spacing[0], spec.spacing[1], spec.spacing[2])?;
    if dims.is_empty() {
        return Err(PhantomError::InvalidSpec("grid has no voxels".into()));
    }
    let grid = Grid {
        dims,
        spacing: spec.spacing,
    };
    let check = |name: &str, s: &Shape| -> Result<(), PhantomError> {
        if !grid.fits(s) {
            return Err(PhantomError::ShapeOutOfBounds(name.to_string()));
        }
        Ok(())
    };
    for o in &spec.organs {
        check(&o.name, &o.shape)?;
    }
    for (i, t) in spec.tumors.iter().enumerate() {
        if t.semi_axes.iter().any(|a| *a <= 0.0) {
            return Err(PhantomError::InvalidSpec(format!("tumor {i} has a non-positive semi-axis")));
        }
        check(&format!("tumor {i}"), &t.shape())?;
    }
    for v in &spec.vessels {
        if v.radius <= 0.0 || v.points.is_empty() {
            return Err(PhantomError::InvalidSpec(format!("vessel {} needs points and a positive radius", v.vessel)));
        }
        check(v.vessel.name(), &Shape::tube(&v.points, v.radius))?;
    }

    // label map: 0 background; structures in spec order, later ones win
    let mut label = vec![0u16; dims.len()];
    let mut hu_of: Vec<HuDist> = vec![HuDist::new(spec.background_hu, 0.0)];
    let mut masks: BTreeMap<String, Mask> = BTreeMap::new();
    let empty = |name: &str| Mask::empty(dims, spacing, name);

    for o in &spec.organs {
        let idx = grid.voxelize(&o.shape);
        hu_of.push(o.hu);
        let id = (hu_of.len() - 1) as u16;
        let m = masks.entry(o.name.clone()).or_insert_with(|| empty(&o.name));
        for i in idx {
            m.bits_mut()[i] = true;
            label[i] = id;
        }
    }
    let mut tumor_sets: Vec<(Organ, Vec<usize>)> = Vec::new();
    for t in &spec.tumors {
        let idx = grid.voxelize(&t.shape());
        hu_of.push(t.hu);
        let id = (hu_of.len() - 1) as u16;
        for &i in &idx {
            label[i] = id;
        }
        tumor_sets.push((t.organ, idx));
    }
    let mut vessel_voxels = vec![false; dims.len()];
    for v in &spec.vessels {
        let idx = grid.voxelize(&Shape::tube(&v.points, v.radius));
        hu_of.push(v.hu);
        let id = (hu_of.len() - 1) as u16;
        let name = v.vessel.name().to_string();
        let m = masks.entry(name.clone()).or_insert_with(|| empty(&name));
        for i in idx {
            m.bits_mut()[i] = true;
            label[i] = id;
            vessel_voxels[i] = true;
        }
    }
    // tumors exclude vessel lumen; organs hold their tumors but no vessels
    for (organ, idx) in &tumor_sets {
        let tname = organ.tumor_mask_name().to_string();
        let oname = organ.mask_name();
        masks.entry(tname.clone()).or_insert_with(|| empty(&tname));
        masks.entry(oname.to_string()).or_insert_with(|| empty(oname));
        for &i in idx {
            if !vessel_voxels[i] {
                masks.get_mut(&tname).expect("inserted").bits_mut()[i] = true;
                masks.get_mut(oname).expect("inserted").bits_mut()[i] = true;
            }
        }
    }
    for o in &spec.organs {
        let m = masks.get_mut(&o.name).expect("organ mask");
        for (b, v) in m.bits_mut().iter_mut().zip(&vessel_voxels) {
            if *v {
                *b = false;
            }
        }
    }
    for organ in Organ::ALL {
        let tname = organ.tumor_mask_name().to_string();
        masks.entry(tname.clone()).or_insert_with(|| empty(&tname));
    }

    let mut salt_voxels = 0;
    if let Some(salt) = spec.salt {
        let host = masks
            .get(salt.organ.mask_name())
            .ok_or_else(|| PhantomError::InvalidSpec(format!("salt noise needs a {} mask", salt.organ)))?
            .clone();
        let candidates: Vec<usize> = host.indices().collect();
        if candidates.is_empty() {
            return Err(PhantomError::InvalidSpec("salt host organ is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(salt.seed);
        let tname = salt.organ.tumor_mask_name().to_string();
        let tm = masks.get_mut(&tname).expect("tumor mask");
        for _ in 0..salt.count {
            let i = candidates[rng.random_range(0..candidates.len())];
            let [x, y, z] = dims.coords(i);
            // keep salt isolated from existing tumor so it stays noise
            let near_tumor = (-1i64..=1).any(|dz| {
                (-1i64..=1).any(|dy| {
                    (-1i64..=1).any(|dx| {
                        dims.checked_index(x as i64 + dx, y as i64 + dy, z as i64 + dz)
                            .is_some_and(|j| tm.bits()[j])
                    })
                })
            });
            if !near_tumor {
                tm.bits_mut()[i] = true;
                salt_voxels += 1;
            }
        }
    }

    if spec.liver_segments {
        if let Some(liver) = masks.get("liver").cloned() {
            for (k, seg) in liver_segments(&liver).into_iter().enumerate() {
                masks.insert(format!("liver_segment_{}", k + 1), seg);
            }
        }
    }

    // HU: one ChaCha8 stream per structure, drawn in raster order
    let mut streams: Vec<(ChaCha8Rng, Option<Normal<f64>>)> = hu_of
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(k as u64);
            let dist = (h.std > 0.0).then(|| Normal::new(h.mean, h.std).expect("finite std"));
            (rng, dist)
        })
        .collect();
    let data: Vec<f32> = label
        .iter()
        .map(|&l| {
            let (rng, dist) = &mut streams[l as usize];
            match dist {
                Some(d) => d.sample(rng) as f32,
                None => hu_of[l as usize].mean as f32,
            }
        })
        .collect();
    let volume = Volume::new(dims, spacing, data)?;

    let tumors: Vec<TumorTruth> = spec
        .tumors
        .iter()
        .map(|t| {
            let (a, b) = (t.semi_axes[0].max(t.semi_axes[1]), t.semi_axes[0].min(t.semi_axes[1]));
            TumorTruth {
                organ: t.organ,
                center: t.center,
                semi_axes: t.semi_axes,
                long_axis_cm: 2.0 * a / 10.0,
                short_axis_cm: 2.0 * b / 10.0,
                volume_cm3: round3(t.shape().analytic_volume_mm3().unwrap_or(0.0) / 1000.0),
                expected_location: t.expected_location.clone(),
            }
        })
        .collect();
    let pdac: Vec<&TumorSpec> = spec.tumors.iter().filter(|t| t.organ == Organ::Pancreas).collect();
    let vessels: Vec<VesselTruth> = spec
        .vessels
        .iter()
        .map(|v| VesselTruth {
            vessel: v.vessel,
            encasement_deg: pdac.iter().map(|t| encasement_deg(&t.shape(), v)).fold(0.0, f64::max),
        })
        .collect();
    let index_pdac = pdac
        .iter()
        .max_by(|a, b| a.shape().analytic_volume_mm3().unwrap_or(0.0).total_cmp(&b.shape().analytic_volume_mm3().unwrap_or(0.0)));
    let expected_stage = index_pdac.map(|t| {
        let critical = spec
            .vessels
            .iter()
            .filter(|v| v.vessel.is_critical())
            .any(|v| encasement_deg(&t.shape(), v) >= 180.0);
        if critical {
            TStage::T4
        } else {
            size_stage(2.0 * t.semi_axes[0].max(t.semi_axes[1]) / 10.0)
        }
    });
    let organs = spec
        .organs
        .iter()
        .map(|o| OrganTruth {
            name: o.name.clone(),
            volume_cm3: o.shape.analytic_volume_mm3().map(|v| round3(v / 1000.0)),
            hu_mean: o.hu.mean,
        })
        .collect();

    Ok(Phantom {
        volume,
        masks,
        truth: GroundTruth {
            scenario: spec.name.clone(),
            tumors,
            vessels,
            organs,
            expected_stage,
            salt_voxels,
        },
    })
}

/// Eight liver sub-segments: four equal x bands of the bounding box times
/// two z halves. Segment `1 + band + 4·half`.
pub fn liver_segments(liver: &Mask) -> Vec<Mask> {
    let mut segs: Vec<Mask> = (1..=8).map(|k| liver.empty_like(format!("liver_segment_{k}"))).collect();
    let Some((lo, hi)) = liver.bounding_box() else {
        return segs;
    };
    let d = liver.dims();
    let width = (hi[0] - lo[0] + 1) as f64;
    let zmid = (lo[2] + hi[2]) as f64 / 2.0;
    for i in liver.indices() {
        let [x, _, z] = d.coords(i);
        let band = (((x - lo[0]) as f64 / width * 4.0).floor() as usize).min(3);
        let half = usize::from(z as f64 > zmid);
        segs[band + 4 * half].bits_mut()[i] = true;
    }
    segs
}

pub const SCENARIOS: [&str; 19] = [
    "control",
    "liver_small",
    "liver_large",
    "pancreas_small",
    "pancreas_large",
    "kidney_small",
    "kidney_large",
    "liver_24",
    "pancreas_head",
    "pancreas_body",
    "pancreas_tail",
    "t1a",
    "t1b",
    "t1c",
    "t2",
    "t3",
    "t4_encasement",
    "noisy_segmentation",
    "desk_256",
];

const LIVER_HU: HuDist = HuDist::new(60.0, 12.0);
const TUMOR_HU: HuDist = HuDist::new(39.17, 29.65);

fn tumor(organ: Organ, center: [f64; 3], semi: [f64; 3], loc: Option<&str>) -> TumorSpec {
    TumorSpec {
        organ,
        center,
        semi_axes: semi,
        rotation_z_deg: 0.0,
        hu: TUMOR_HU,
        expected_location: loc.map(str::to_string),
    }
}

/// Shared anatomy on a 200×200×128 mm frame, shifted by `o`.
fn anatomy(o: [f64; 3]) -> (Vec<OrganSpec>, Vec<VesselSpec>) {
    let organs = vec![
        OrganSpec {
            name: "liver".into(),
            shape: Shape::ellipsoid([50.0, 60.0, 80.0], [38.0, 32.0, 30.0]),
            hu: LIVER_HU,
        },
        OrganSpec {
            name: "spleen".into(),
            shape: Shape::ellipsoid([165.0, 70.0, 80.0], [14.0, 22.0, 26.0]),
            hu: HuDist::new(50.0, 10.0),
        },
        OrganSpec {
            name: "pancreas".into(),
            shape: Shape::Union {
                parts: vec![
                    Shape::tube(&[[70.0, 120.0, 40.0], [150.0, 120.0, 40.0]], 8.0),
                    Shape::ellipsoid([82.0, 120.0, 40.0], [14.0, 13.0, 11.0]),
                ],
            },
            hu: HuDist::new(45.0, 10.0),
        },
        OrganSpec {
            name: "kidneys".into(),
            shape: Shape::Union {
                parts: vec![
                    Shape::ellipsoid([40.0, 150.0, 45.0], [18.0, 16.0, 30.0]),
                    Shape::ellipsoid([160.0, 150.0, 45.0], [18.0, 16.0, 30.0]),
                ],
            },
            hu: HuDist::new(150.0, 15.0),
        },
    ];
    let artery = HuDist::new(250.0, 20.0);
    let v = |vessel, points: &[[f64; 3]], radius| VesselSpec {
        vessel,
        points: points.to_vec(),
        radius,
        hu: artery,
    };
    let vessels = vec![
        v(Vessel::Sma, &[[100.0, 138.0, 75.0], [100.0, 138.0, 5.0]], 4.0),
        v(Vessel::Ca, &[[100.0, 150.0, 80.0], [100.0, 150.0, 115.0]], 3.0),
        v(Vessel::Cha, &[[100.0, 150.0, 100.0], [60.0, 150.0, 100.0]], 3.0),
        v(Vessel::Sa, &[[100.0, 150.0, 100.0], [150.0, 150.0, 100.0]], 3.0),
    ];
    let organs = organs
        .into_iter()
        .map(|s| OrganSpec {
            shape: s.shape.translated(o),
            ..s
        })
        .collect();
    let vessels = vessels
        .into_iter()
        .map(|s| VesselSpec {
            points: s.points.iter().map(|p| [p[0] + o[0], p[1] + o[1], p[2] + o[2]]).collect(),
            ..s
        })
        .collect();
    (organs, vessels)
}

/// The 24 liver lesions: integer radii 4 to 7 mm on a 4×3×2 lattice.
///
/// Neighbors along x have radii summing to at most 12 mm at 14 mm pitch, so
/// no two lesions touch, and every lesion lies inside the liver.
fn liver_lesions(o: [f64; 3]) -> Vec<TumorSpec> {
    let mut out = Vec::new();
    let mut k = 0;
    for z in [72.0, 88.0] {
        for y in [44.0, 60.0, 76.0] {
            for (x, r) in [(29.0, 5.0), (43.0, 7.0), (57.0, 4.0), (71.0, 6.0)] {
                let b = if k % 3 == 0 { r - 1.0 } else { r };
                out.push(tumor(Organ::Liver, [x + o[0], y + o[1], z + o[2]], [r, b, r], None));
                k += 1;
            }
        }
    }
    out
}

fn base(name: &str, dims: [usize; 3], o: [f64; 3]) -> PhantomSpec {
    let (organs, vessels) = anatomy(o);
    PhantomSpec {
        name: name.into(),
        dims,
        spacing: [1.0; 3],
        background_hu: -1000.0,
        organs,
        tumors: Vec::new(),
        vessels,
        liver_segments: true,
        salt: None,
        seed: 20250101,
    }
}

/// Built-in scenario by name (see [`SCENARIOS`]).
pub fn scenario(name: &str) -> Result<PhantomSpec, PhantomError> {
    const DIMS: [usize; 3] = [200, 200, 128];
    let o = [0.0; 3];
    let mut s = base(name, DIMS, o);
    let pan = |c: [f64; 3], semi: [f64; 3], loc: &str| tumor(Organ::Pancreas, c, semi, Some(loc));
    match name {
        "control" => {}
        "liver_small" => s.tumors.push(tumor(Organ::Liver, [50.0, 60.0, 80.0], [8.0, 7.0, 8.0], None)),
        "liver_large" => s.tumors.push(tumor(Organ::Liver, [45.0, 60.0, 80.0], [20.0, 15.0, 14.0], None)),
        "pancreas_small" => s.tumors.push(pan([140.0, 120.0, 40.0], [7.0, 6.0, 6.0], "tail")),
        "pancreas_large" => s.tumors.push(pan([138.0, 120.0, 40.0], [15.0, 11.0, 10.0], "tail")),
        "kidney_small" => s.tumors.push(tumor(Organ::Kidney, [40.0, 150.0, 45.0], [8.0, 7.0, 8.0], None)),
        "kidney_large" => s.tumors.push(tumor(Organ::Kidney, [160.0, 150.0, 45.0], [14.0, 12.0, 14.0], None)),
        "liver_24" => s.tumors = liver_lesions(o),
        "pancreas_head" => s.tumors.push(pan([78.0, 120.0, 40.0], [6.0, 6.0, 6.0], "head")),
        "pancreas_body" => s.tumors.push(pan([116.0, 120.0, 40.0], [5.0, 5.0, 5.0], "body")),
        "pancreas_tail" => s.tumors.push(pan([146.0, 120.0, 40.0], [5.0, 5.0, 5.0], "tail")),
        "t1a" => s.tumors.push(pan([140.0, 120.0, 40.0], [2.0, 2.0, 2.0], "tail")),
        "t1b" => s.tumors.push(pan([140.0, 120.0, 40.0], [4.0, 4.0, 4.0], "tail")),
        "t1c" => s.tumors.push(pan([140.0, 120.0, 40.0], [7.0, 6.0, 6.0], "tail")),
        "t2" => s.tumors.push(pan([136.0, 120.0, 40.0], [12.0, 10.0, 9.0], "tail")),
        "t3" => s.tumors.push(pan([129.0, 120.0, 40.0], [22.0, 12.0, 10.0], "tail")),
        "t4_encasement" => s.tumors.push(pan([100.0, 134.0, 45.0], [14.0, 12.0, 10.0], "body")),
        "noisy_segmentation" => {
            s.tumors.push(tumor(Organ::Liver, [45.0, 60.0, 80.0], [10.0, 9.0, 9.0], None));
            s.salt = Some(SaltNoise {
                organ: Organ::Liver,
                count: 300,
                seed: 77,
            });
        }
        "desk_256" => {
            let o = [28.0, 28.0, 64.0];
            s = base(name, [256, 256, 256], o);
            s.tumors = liver_lesions(o);
            s.tumors.push(tumor(Organ::Pancreas, [128.0, 162.0, 109.0], [14.0, 12.0, 10.0], Some("body")));
            s.tumors.push(tumor(Organ::Kidney, [188.0, 178.0, 109.0], [10.0, 9.0, 10.0], None));
        }
        other => return Err(PhantomError::UnknownScenario(other.to_string())),
    }
    Ok(s)
}

pub fn scenario_library() -> Vec<PhantomSpec> {
    SCENARIOS.iter().map(|n| scenario(n).expect("built-in scenario")).collect()
}
