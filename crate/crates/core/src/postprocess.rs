//! Segmentation noise removal and organ-wise tumor presence thresholds.

use crate::morphology::{dilate, erode, StructuringElement};
use crate::volume::Mask;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown organ `{0}` (expected pancreas, kidney, liver or metastases)")]
pub struct UnknownOrgan(pub String);

/// Minimum tumor volume, mm³, for an organ to count as having tumors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrganThresholds {
    pub pancreas: f64,
    pub kidney: f64,
    pub liver: f64,
    pub metastases: f64,
}

impl Default for OrganThresholds {
    fn default() -> Self {
        OrganThresholds {
            pancreas: 1.0,
            kidney: 150.0,
            liver: 100.0,
            metastases: 50.0,
        }
    }
}

impl OrganThresholds {
    pub fn for_organ(&self, organ: &str) -> Result<f64, UnknownOrgan> {
        match organ.trim().to_ascii_lowercase().as_str() {
            "pancreas" => Ok(self.pancreas),
            "kidney" | "kidneys" => Ok(self.kidney),
            "liver" => Ok(self.liver),
            "metastases" | "metastasis" => Ok(self.metastases),
            _ => Err(UnknownOrgan(organ.to_string())),
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.pancreas, self.kidney, self.liver, self.metastases]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Erodes with a 3³ cube, dilates back with a 4³ cube and keeps only
/// voxels of the original: structures that cannot hold a 3³ cube vanish.
pub fn denoise(m: &Mask) -> Mask {
    let eroded = erode(m, &StructuringElement::cube(3));
    // the even-sized element reaches one voxel back and two forward
    dilate(&eroded, &StructuringElement::cube(4)).and(m)
}

/// Whether the total tumor volume exceeds the organ's threshold.
pub fn tumor_present(m: &Mask, organ: &str, th: &OrganThresholds) -> Result<bool, UnknownOrgan> {
    let limit = th.for_organ(organ)?;
    Ok(m.volume_mm3() > limit)
}
