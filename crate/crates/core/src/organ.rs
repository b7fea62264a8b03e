use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Organs that carry tumor findings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Organ {
    Liver,
    Pancreas,
    Kidney,
}

impl Organ {
    pub const ALL: [Organ; 3] = [Organ::Liver, Organ::Pancreas, Organ::Kidney];

    pub fn name(self) -> &'static str {
        match self {
            Organ::Liver => "liver",
            Organ::Pancreas => "pancreas",
            Organ::Kidney => "kidney",
        }
    }

    /// Name of the organ's mask in a case manifest.
    pub fn mask_name(self) -> &'static str {
        match self {
            Organ::Liver => "liver",
            Organ::Pancreas => "pancreas",
            Organ::Kidney => "kidneys",
        }
    }

    /// Name of the organ's tumor mask in a case manifest.
    pub fn tumor_mask_name(self) -> &'static str {
        match self {
            Organ::Liver => "liver_tumor",
            Organ::Pancreas => "pancreas_tumor",
            Organ::Kidney => "kidney_tumor",
        }
    }

    /// Noun used for a tumor of this organ in rendered text.
    pub fn tumor_term(self) -> &'static str {
        match self {
            Organ::Liver => "lesion",
            Organ::Pancreas => "PDAC",
            Organ::Kidney => "lesion",
        }
    }
}

impl fmt::Display for Organ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown organ `{0}`")]
pub struct UnknownOrgan(pub String);

impl FromStr for Organ {
    type Err = UnknownOrgan;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "liver" => Ok(Organ::Liver),
            "pancreas" => Ok(Organ::Pancreas),
            "kidney" | "kidneys" => Ok(Organ::Kidney),
            _ => Err(UnknownOrgan(s.to_string())),
        }
    }
}
