//! Structured report model, text rendering and canonical JSON.

mod build;
mod render;

pub use build::{build_report, CaseInputs, ReportError, ReportOptions};
pub use render::render_text;

use crate::diagnostics::SizeClass;
use crate::measurement::TumorMeasurement;
use crate::organ::Organ;
use crate::staging::StageResult;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag written into every report.
pub const SCHEMA: &str = "radgpt-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    /// Masks are reference annotations; no denoising or presence gate.
    #[default]
    GroundTruthMasks,
    /// Masks come from a segmentation model and are cleaned first.
    Automated,
}

impl std::str::FromStr for GenerationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ground_truth_masks" | "ground_truth" | "gt" => Ok(GenerationMode::GroundTruthMasks),
            "automated" | "auto" => Ok(GenerationMode::Automated),
            other => Err(format!("unknown mode `{other}` (expected ground_truth_masks or automated)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttenuationClass {
    Hypoattenuating,
    Isoattenuating,
    Hyperattenuating,
}

impl AttenuationClass {
    pub fn word(self) -> &'static str {
        match self {
            AttenuationClass::Hypoattenuating => "Hypoattenuating",
            AttenuationClass::Isoattenuating => "Isoattenuating",
            AttenuationClass::Hyperattenuating => "Hyperattenuating",
        }
    }
}

/// Tumor HU against the host parenchyma: more than `delta` below is hypo,
/// more than `delta` above is hyper.
pub fn attenuation_class(tumor_hu: f64, parenchyma_hu: f64, delta: f64) -> AttenuationClass {
    if tumor_hu < parenchyma_hu - delta {
        AttenuationClass::Hypoattenuating
    } else if tumor_hu > parenchyma_hu + delta {
        AttenuationClass::Hyperattenuating
    } else {
        AttenuationClass::Isoattenuating
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Location {
    pub segment: String,
    /// Share of the tumor's voxels inside the segment.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TumorFinding {
    /// 1-based, unique within the organ, in report order.
    pub instance_id: u32,
    pub organ: Organ,
    pub measurement: TumorMeasurement,
    pub locations: Vec<Location>,
    /// `None` when no parenchyma was left to compare against.
    pub attenuation_class: Option<AttenuationClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrganAssessment {
    /// `liver`, `pancreas`, `spleen`, `kidney 1`, `kidney 2`.
    pub organ: String,
    pub volume_cm3: f64,
    /// Mean HU of the organ without its tumors.
    pub hu_mean: f64,
    pub size_class: SizeClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fatty_liver: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fatty_pancreas: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_phase: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredReport {
    pub schema: String,
    pub case_id: String,
    pub metadata: Metadata,
    pub generation_mode: GenerationMode,
    pub organs: Vec<OrganAssessment>,
    /// Liver, then pancreas, then kidney; within an organ by descending D.
    pub findings: Vec<TumorFinding>,
    pub pdac_stage: Option<StageResult>,
    /// Parts of the report that could not be produced, with the reason.
    pub omissions: Vec<String>,
}

impl StructuredReport {
    pub fn findings_for(&self, organ: Organ) -> impl Iterator<Item = &TumorFinding> {
        self.findings.iter().filter(move |f| f.organ == organ)
    }

    pub fn assessment(&self, organ: &str) -> Option<&OrganAssessment> {
        self.organs.iter().find(|a| a.organ == organ)
    }

    /// Checks the ordering and uniqueness rules.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.schema != SCHEMA {
            return Err(SchemaError::new("/schema", format!("expected `{SCHEMA}`, found `{}`", self.schema)));
        }
        let mut last: Option<(Organ, f64)> = None;
        for (i, f) in self.findings.iter().enumerate() {
            let expect_id = self.findings[..i].iter().filter(|g| g.organ == f.organ).count() as u32 + 1;
            if f.instance_id != expect_id {
                return Err(SchemaError::new(
                    format!("/findings/{i}/instance_id"),
                    format!("expected {expect_id}, found {}", f.instance_id),
                ));
            }
            if let Some((o, d)) = last {
                let rank = |o: Organ| Organ::ALL.iter().position(|x| *x == o);
                if rank(f.organ) < rank(o) || (f.organ == o && f.measurement.long_axis_mm > d) {
                    return Err(SchemaError::new(format!("/findings/{i}"), "findings out of order"));
                }
            }
            last = Some((f.organ, f.measurement.long_axis_mm));
        }
        Ok(())
    }
}

/// JSON that does not match the report schema; `pointer` locates the
/// offending value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schema error at {pointer}: {message}")]
pub struct SchemaError {
    pub pointer: String,
    pub message: String,
}

impl SchemaError {
    fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

/// Canonical JSON: keys sorted, two-space indent, trailing newline.
pub fn to_json(r: &StructuredReport) -> String {
    // going through Value sorts object keys
    let v = serde_json::to_value(r).expect("report serializes");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<StructuredReport, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let r: StructuredReport = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut pointer = json_pointer(e.path());
        let message = e.into_inner().to_string();
        // serde reports a missing field at its parent object
        if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            if pointer == "/" {
                pointer.clear();
            }
            pointer.push('/');
            pointer.push_str(field);
        }
        SchemaError::new(pointer, message)
    })?;
    r.validate()?;
    Ok(r)
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}
