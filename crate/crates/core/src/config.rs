//! Run configuration, loaded from TOML.

use crate::diagnostics::DiagnosticThresholds;
use crate::evaluation::UncertainPolicy;
use crate::postprocess::OrganThresholds;
use crate::report::{GenerationMode, ReportOptions};
use crate::textgen::ChatEndpoint;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Every field has a default, so a config file only lists overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub mode: GenerationMode,
    /// Cases processed at once.
    pub jobs: usize,
    pub target_spacing_mm: f64,
    pub attenuation_delta_hu: f64,
    /// Human reports shown to the style prompt.
    pub style_examples: usize,
    pub uncertain_policy: UncertainPolicy,
    pub size_cutoff_cm: f64,
    pub postprocess: OrganThresholds,
    pub diagnostics: DiagnosticThresholds,
    pub chat: ChatEndpoint,
}

impl Default for Config {
    fn default() -> Self {
        let r = ReportOptions::default();
        Config {
            version: CONFIG_VERSION,
            mode: r.mode,
            jobs: 1,
            target_spacing_mm: r.target_spacing_mm,
            attenuation_delta_hu: r.attenuation_delta_hu,
            style_examples: 10,
            uncertain_policy: UncertainPolicy::Drop,
            size_cutoff_cm: 2.0,
            postprocess: r.postprocess,
            diagnostics: r.diagnostics,
            chat: ChatEndpoint::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config, ConfigError> {
        let c: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("version {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if !(self.target_spacing_mm > 0.0 && self.target_spacing_mm.is_finite()) {
            return bad(format!("target_spacing_mm must be positive, got {}", self.target_spacing_mm));
        }
        if !(self.attenuation_delta_hu >= 0.0) {
            return bad(format!("attenuation_delta_hu must be non-negative, got {}", self.attenuation_delta_hu));
        }
        if self.style_examples == 0 {
            return bad("style_examples must be at least 1".into());
        }
        if !(self.size_cutoff_cm > 0.0) {
            return bad(format!("size_cutoff_cm must be positive, got {}", self.size_cutoff_cm));
        }
        if !self.postprocess.is_valid() {
            return bad("postprocess thresholds must be finite and non-negative".into());
        }
        let d = &self.diagnostics;
        let all = [
            d.fatty_liver_hu,
            d.fatty_pancreas_ratio,
            d.spleen_large_cm3,
            d.spleen_massive_cm3,
            d.kidneys_large_cm3,
            d.liver_large_cm3,
            d.pancreas_large_cm3,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("diagnostic thresholds must be finite".into());
        }
        if d.spleen_massive_cm3 < d.spleen_large_cm3 {
            return bad("spleen_massive_cm3 is below spleen_large_cm3".into());
        }
        self.chat.validate().map_err(|e| ConfigError::Invalid(format!("chat: {e}")))
    }

    pub fn report_options(&self) -> ReportOptions {
        ReportOptions {
            mode: self.mode,
            target_spacing_mm: self.target_spacing_mm,
            attenuation_delta_hu: self.attenuation_delta_hu,
            postprocess: self.postprocess,
            diagnostics: self.diagnostics,
        }
    }
}
