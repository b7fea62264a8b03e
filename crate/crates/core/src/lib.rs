pub mod config;
pub mod diagnostics;
pub mod evaluation;
pub mod geometry;
pub mod manifest;
pub mod measurement;
pub mod morphology;
pub mod organ;
pub mod phantom;
pub mod postprocess;
pub mod report;
pub mod staging;
pub mod subsegment;
pub mod textgen;
pub mod volume;
