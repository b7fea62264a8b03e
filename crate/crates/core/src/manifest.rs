//! Case manifests: which files make up one case.

use crate::report::CaseInputs;
use crate::volume::{load_mask, load_volume, VolumeError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("mask name `{0}` is not in the vocabulary")]
    UnknownMask(String),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", .path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: VolumeError,
    },
}

const FIXED_NAMES: [&str; 15] = [
    "liver",
    "pancreas",
    "kidneys",
    "spleen",
    "SMA",
    "CHA",
    "CA",
    "SA",
    "liver_tumor",
    "pancreas_tumor",
    "kidney_tumor",
    "pancreas_head",
    "pancreas_body",
    "pancreas_tail",
    "metastases",
];

/// Whether `name` is an accepted mask key.
pub fn is_known_mask(name: &str) -> bool {
    FIXED_NAMES.contains(&name)
        || name
            .strip_prefix("liver_segment_")
            .and_then(|k| k.parse::<u8>().ok())
            .is_some_and(|k| (1..=8).contains(&k))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseManifest {
    pub case_id: String,
    pub volume: PathBuf,
    pub masks: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clinical_notes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_phase: Option<String>,
}

impl CaseManifest {
    /// Reads a JSON manifest. Relative paths are taken from the manifest's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<CaseManifest, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m: CaseManifest = serde_json::from_str(&text).map_err(|e| ManifestError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let abs = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        m.volume = abs(&m.volume);
        for p in m.masks.values_mut() {
            *p = abs(p);
        }
        m.clinical_notes = m.clinical_notes.as_ref().map(abs);
        m.human_report = m.human_report.as_ref().map(abs);
        m.validate()?;
        Ok(m)
    }

    /// Checks mask names and that every referenced file exists.
    pub fn validate(&self) -> Result<(), ManifestError> {
        if let Some(bad) = self.masks.keys().find(|k| !is_known_mask(k)) {
            return Err(ManifestError::UnknownMask(bad.clone()));
        }
        let files = std::iter::once(&self.volume)
            .chain(self.masks.values())
            .chain(self.clinical_notes.iter())
            .chain(self.human_report.iter());
        for f in files {
            if !f.is_file() {
                return Err(ManifestError::MissingFile(f.clone()));
            }
        }
        Ok(())
    }

    /// Loads the volume and every mask.
    pub fn load_case(&self) -> Result<CaseInputs, ManifestError> {
        let image = |path: PathBuf| move |source| ManifestError::Image { path, source };
        let volume = load_volume(&self.volume).map_err(image(self.volume.clone()))?;
        let mut masks = BTreeMap::new();
        for (name, p) in &self.masks {
            masks.insert(name.clone(), load_mask(p, name.as_str()).map_err(image(p.clone()))?);
        }
        Ok(CaseInputs {
            case_id: self.case_id.clone(),
            volume,
            masks,
            contrast_phase: self.contrast_phase.clone(),
        })
    }
}
