//! Organ-level findings: fatty liver and pancreas, organ size classes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("spleen attenuation is unavailable")]
    MissingSpleen,
    #[error("spleen mean attenuation {0} HU is not positive; the ratio is undefined")]
    SpleenAttenuationNonpositive(f64),
    #[error("no size standard for organ `{0}`")]
    UnknownOrgan(String),
    #[error("volume must be finite and non-negative, got {0}")]
    InvalidVolume(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Normal,
    Large,
    /// Spleen only.
    Massive,
}

/// Thresholds; every comparison is strict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticThresholds {
    /// Liver mean HU below this is fatty.
    pub fatty_liver_hu: f64,
    /// Pancreas/spleen HU ratio below this is fatty.
    pub fatty_pancreas_ratio: f64,
    pub spleen_large_cm3: f64,
    pub spleen_massive_cm3: f64,
    /// Both kidneys together; each kidney is compared with half of it.
    pub kidneys_large_cm3: f64,
    pub liver_large_cm3: f64,
    pub pancreas_large_cm3: f64,
}

impl Default for DiagnosticThresholds {
    fn default() -> Self {
        DiagnosticThresholds {
            fatty_liver_hu: 40.0,
            fatty_pancreas_ratio: 0.7,
            spleen_large_cm3: 314.5,
            spleen_massive_cm3: 430.8,
            kidneys_large_cm3: 415.2,
            liver_large_cm3: 3000.0,
            pancreas_large_cm3: 83.0,
        }
    }
}

pub fn assess_fatty_liver(liver_hu_mean: f64, th: &DiagnosticThresholds) -> bool {
    liver_hu_mean < th.fatty_liver_hu
}

pub fn assess_fatty_pancreas(
    pancreas_hu_mean: f64,
    spleen_hu_mean: Option<f64>,
    th: &DiagnosticThresholds,
) -> Result<bool, DiagnosticsError> {
    let spleen = spleen_hu_mean.ok_or(DiagnosticsError::MissingSpleen)?;
    if spleen <= 0.0 || !spleen.is_finite() {
        return Err(DiagnosticsError::SpleenAttenuationNonpositive(spleen));
    }
    Ok(pancreas_hu_mean / spleen < th.fatty_pancreas_ratio)
}

/// Size class for `spleen`, `kidney` (a single kidney), `liver` or `pancreas`.
pub fn classify_organ_size(organ: &str, volume_cm3: f64, th: &DiagnosticThresholds) -> Result<SizeClass, DiagnosticsError> {
    if !volume_cm3.is_finite() || volume_cm3 < 0.0 {
        return Err(DiagnosticsError::InvalidVolume(volume_cm3));
    }
    let large = |limit: f64| if volume_cm3 > limit { SizeClass::Large } else { SizeClass::Normal };
    Ok(match organ.trim().to_ascii_lowercase().as_str() {
        "spleen" if volume_cm3 > th.spleen_massive_cm3 => SizeClass::Massive,
        "spleen" => large(th.spleen_large_cm3),
        "kidney" | "kidney_left" | "kidney_right" => large(th.kidneys_large_cm3 / 2.0),
        "liver" => large(th.liver_large_cm3),
        "pancreas" => large(th.pancreas_large_cm3),
        _ => return Err(DiagnosticsError::UnknownOrgan(organ.to_string())),
    })
}
