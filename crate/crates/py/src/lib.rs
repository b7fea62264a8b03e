//! Python bindings. Structured values (reports, measurements, labels,
//! prompts, metrics) cross the boundary as plain dicts and lists with the
//! same shape as their JSON form.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use segreport::config::Config;
use segreport::diagnostics::{assess_fatty_liver as fatty_liver, assess_fatty_pancreas as fatty_pancreas, classify_organ_size as size_class, DiagnosticThresholds};
use segreport::evaluation::{self, MetricRow, TumorLabels, UncertainPolicy};
use segreport::measurement::{measure_tumor, split_instances, TumorMeasurement};
use segreport::organ::Organ;
use segreport::phantom::{self, SCENARIOS};
use segreport::postprocess::{self, OrganThresholds};
use segreport::report::{self, CaseInputs, GenerationMode, ReportOptions, StructuredReport};
use segreport::staging::{self, Vessel, VesselContact};
use segreport::textgen::{self, PromptBundle};
use segreport::volume::{load_mask, load_volume, save_mask, save_volume, Dims, Mask, Spacing, Volume};
use std::collections::BTreeMap;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// Rust value to Python objects through its JSON form.
fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn spacing(s: (f64, f64, f64)) -> PyResult<Spacing> {
    Spacing::new(s.0, s.1, s.2).map_err(value_err)
}

fn organ(name: &str) -> PyResult<Organ> {
    name.parse().map_err(value_err)
}

/// Binary voxel mask, x fastest.
#[pyclass(name = "Mask", module = "segreport")]
#[derive(Clone)]
pub struct PyMask {
    inner: Mask,
}

#[pymethods]
impl PyMask {
    #[new]
    #[pyo3(signature = (dims, spacing_mm, bits, label = "mask"))]
    fn new(dims: (usize, usize, usize), spacing_mm: (f64, f64, f64), bits: Vec<bool>, label: &str) -> PyResult<Self> {
        let inner = Mask::new(Dims::new(dims.0, dims.1, dims.2), spacing(spacing_mm)?, bits, label).map_err(value_err)?;
        Ok(PyMask { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, label = "mask"))]
    fn load(path: &str, label: &str) -> PyResult<Self> {
        Ok(PyMask {
            inner: load_mask(path, label).map_err(io_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_mask(&self.inner, path).map_err(io_err)
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.inner.dims();
        (d.nx, d.ny, d.nz)
    }

    #[getter]
    fn spacing_mm(&self) -> (f64, f64, f64) {
        let s = self.inner.spacing().as_array();
        (s[0], s[1], s[2])
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    fn count(&self) -> usize {
        self.inner.count()
    }

    fn volume_mm3(&self) -> f64 {
        self.inner.volume_mm3()
    }

    fn to_list(&self) -> Vec<bool> {
        self.inner.bits().to_vec()
    }

    fn is_subset_of(&self, other: &PyMask) -> bool {
        self.inner.is_subset_of(&other.inner)
    }

    fn __eq__(&self, other: &PyMask) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let (x, y, z) = self.dims();
        format!("Mask('{}', {x}x{y}x{z}, {} voxels)", self.inner.label(), self.inner.count())
    }
}

/// HU volume, x fastest.
#[pyclass(name = "Volume", module = "segreport")]
#[derive(Clone)]
pub struct PyVolume {
    inner: Volume,
}

#[pymethods]
impl PyVolume {
    #[new]
    fn new(dims: (usize, usize, usize), spacing_mm: (f64, f64, f64), data: Vec<f32>) -> PyResult<Self> {
        let inner = Volume::new(Dims::new(dims.0, dims.1, dims.2), spacing(spacing_mm)?, data).map_err(value_err)?;
        Ok(PyVolume { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyVolume {
            inner: load_volume(path).map_err(io_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_volume(&self.inner, path).map_err(io_err)
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.inner.dims();
        (d.nx, d.ny, d.nz)
    }

    #[getter]
    fn spacing_mm(&self) -> (f64, f64, f64) {
        let s = self.inner.spacing().as_array();
        (s[0], s[1], s[2])
    }

    fn to_list(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn __repr__(&self) -> String {
        let (x, y, z) = self.dims();
        format!("Volume({x}x{y}x{z})")
    }
}

/// Names of the built-in phantom scenarios.
#[pyfunction]
fn phantom_scenarios() -> Vec<&'static str> {
    SCENARIOS.to_vec()
}

/// Builds a phantom; returns `(volume, masks, truth)`.
#[pyfunction]
fn generate_phantom(py: Python<'_>, scenario: &str) -> PyResult<(PyVolume, BTreeMap<String, PyMask>, Py<PyAny>)> {
    let spec = phantom::scenario(scenario).map_err(value_err)?;
    let p = phantom::generate(&spec).map_err(value_err)?;
    let masks = p.masks.into_iter().map(|(k, m)| (k, PyMask { inner: m })).collect();
    Ok((PyVolume { inner: p.volume }, masks, to_py(py, &p.truth)?))
}

/// Structured report as a dict.
#[pyfunction]
#[pyo3(signature = (volume, masks, case_id = "case", mode = None, config = None))]
fn build_report(
    py: Python<'_>,
    volume: &PyVolume,
    masks: BTreeMap<String, PyMask>,
    case_id: &str,
    mode: Option<&str>,
    config: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let mut cfg = match config {
        Some(p) => Config::load(p).map_err(value_err)?,
        None => Config::default(),
    };
    if let Some(m) = mode {
        cfg.mode = m.parse::<GenerationMode>().map_err(value_err)?;
    }
    let inputs = CaseInputs {
        case_id: case_id.into(),
        volume: volume.inner.clone(),
        masks: masks.into_iter().map(|(k, m)| (k, m.inner)).collect(),
        contrast_phase: None,
    };
    let opts: ReportOptions = cfg.report_options();
    let r = py.detach(|| report::build_report(&inputs, &opts)).map_err(value_err)?;
    to_py(py, &r)
}

fn report_from(obj: &Bound<'_, PyAny>) -> PyResult<StructuredReport> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    report::from_json(&text).map_err(value_err)
}

/// Canonical JSON text of a report dict (validated).
#[pyfunction]
fn report_to_json(report: &Bound<'_, PyAny>) -> PyResult<String> {
    Ok(report::to_json(&report_from(report)?))
}

/// Plain-text rendering of a report dict.
#[pyfunction]
fn render_text(report: &Bound<'_, PyAny>) -> PyResult<String> {
    Ok(report::render_text(&report_from(report)?))
}

/// Measurements of every instance in a tumor mask.
#[pyfunction]
#[pyo3(signature = (mask, volume = None, organ = "liver", spacing_mm = 1.0))]
fn measure(py: Python<'_>, mask: &PyMask, volume: Option<&PyVolume>, organ: &str, spacing_mm: f64) -> PyResult<Py<PyAny>> {
    let o = self::organ(organ)?;
    let v = match volume {
        Some(v) => {
            mask.inner.check_volume_grid(&v.inner).map_err(value_err)?;
            v.inner.clone()
        }
        None => Volume::new(mask.inner.dims(), mask.inner.spacing(), vec![0.0; mask.inner.dims().len()]).map_err(value_err)?,
    };
    let target = Spacing::isotropic(spacing_mm);
    let rows: Vec<TumorMeasurement> = split_instances(&mask.inner, o)
        .iter()
        .map(|i| measure_tumor(i, &v, target))
        .collect::<Result<_, _>>()
        .map_err(value_err)?;
    to_py(py, &rows)
}

/// Size bucket for a longest diameter in cm.
#[pyfunction]
fn size_stage(d_cm: f64) -> String {
    staging::size_stage(d_cm).to_string()
}

/// Stage from a longest diameter and per-vessel contact angles in degrees
/// (`{"SMA": 200.0}`); vessels left out count as not evaluated.
#[pyfunction]
#[pyo3(signature = (d_cm, angles = None))]
fn stage_pdac(py: Python<'_>, d_cm: f64, angles: Option<BTreeMap<String, f64>>) -> PyResult<Py<PyAny>> {
    let meas = TumorMeasurement {
        long_axis_cm: d_cm,
        short_axis_cm: d_cm,
        long_axis_mm: d_cm * 10.0,
        short_axis_mm: d_cm * 10.0,
        slice_index: 0,
        volume_cm3: 0.0,
        hu_mean: 0.0,
        hu_std: 0.0,
        voxels: 0,
    };
    let mut contacts = Vec::new();
    for (name, angle) in angles.unwrap_or_default() {
        let v = Vessel::parse(&name).ok_or_else(|| value_err(format!("unknown vessel `{name}`")))?;
        contacts.push(if angle > 0.0 {
            VesselContact::with_angle(v, angle)
        } else {
            VesselContact::none(v)
        });
    }
    let r = staging::stage_pdac(Some(&meas), &contacts).map_err(value_err)?;
    to_py(py, &r)
}

#[pyfunction]
fn denoise(mask: &PyMask) -> PyMask {
    PyMask {
        inner: postprocess::denoise(&mask.inner),
    }
}

#[pyfunction]
fn tumor_present(mask: &PyMask, organ: &str) -> PyResult<bool> {
    postprocess::tumor_present(&mask.inner, organ, &OrganThresholds::default()).map_err(value_err)
}

/// `(head, body, tail)` masks.
#[pyfunction]
fn subsegment_pancreas(py: Python<'_>, pancreas: &PyMask, sma: &PyMask) -> PyResult<(PyMask, PyMask, PyMask)> {
    let s = py
        .detach(|| segreport::subsegment::subsegment_pancreas(&pancreas.inner, &sma.inner))
        .map_err(value_err)?;
    Ok((PyMask { inner: s.head }, PyMask { inner: s.body }, PyMask { inner: s.tail }))
}

#[pyfunction]
fn assess_fatty_liver(liver_hu_mean: f64) -> bool {
    fatty_liver(liver_hu_mean, &DiagnosticThresholds::default())
}

#[pyfunction]
fn assess_fatty_pancreas(pancreas_hu_mean: f64, spleen_hu_mean: f64) -> PyResult<bool> {
    fatty_pancreas(pancreas_hu_mean, Some(spleen_hu_mean), &DiagnosticThresholds::default()).map_err(value_err)
}

#[pyfunction]
fn classify_organ_size(organ: &str, volume_cm3: f64) -> PyResult<String> {
    let c = size_class(organ, volume_cm3, &DiagnosticThresholds::default()).map_err(value_err)?;
    Ok(serde_json::to_value(c).map_err(value_err)?.as_str().unwrap_or_default().to_string())
}

/// `{"liver": "yes", "kidney": "no", "pancreas": "U"}` from labeler text.
#[pyfunction]
fn parse_labels(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &evaluation::parse_labels(text).map_err(value_err)?)
}

#[pyfunction]
fn format_labels(labels: &Bound<'_, PyAny>) -> PyResult<String> {
    Ok(evaluation::format_labels(&from_py::<TumorLabels>(labels)?))
}

/// Labels a report dict by its findings.
#[pyfunction]
fn rule_labels(py: Python<'_>, report: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    to_py(py, &evaluation::rule_label_structured(&report_from(report)?))
}

fn bundle(py: Python<'_>, p: Result<PromptBundle, textgen::PromptError>) -> PyResult<Py<PyAny>> {
    to_py(py, &p.map_err(value_err)?)
}

/// Style prompt as `{"kind", "system", "user"}`.
#[pyfunction]
fn build_style_prompt(py: Python<'_>, structured: &str, examples: Vec<String>) -> PyResult<Py<PyAny>> {
    let refs: Vec<&str> = examples.iter().map(String::as_str).collect();
    bundle(py, textgen::build_style_prompt(structured, &refs))
}

#[pyfunction]
fn build_fusion_prompt(py: Python<'_>, notes: &str, structured: &str) -> PyResult<Py<PyAny>> {
    bundle(py, textgen::build_fusion_prompt(notes, structured))
}

#[pyfunction]
fn build_label_prompt(py: Python<'_>, report_text: &str) -> PyResult<Py<PyAny>> {
    bundle(py, textgen::build_label_prompt(report_text))
}

#[pyfunction]
fn extract_between_markers(completion: &str) -> PyResult<String> {
    textgen::extract_between_markers(completion).map_err(value_err)
}

/// Metric rows (all, large, small) for one organ.
#[pyfunction]
#[pyo3(signature = (pred, truth, largest_cm, organ, policy = "drop", cutoff_cm = 2.0))]
fn evaluate_organ(
    py: Python<'_>,
    pred: &Bound<'_, PyAny>,
    truth: &Bound<'_, PyAny>,
    largest_cm: Vec<Option<f64>>,
    organ: &str,
    policy: &str,
    cutoff_cm: f64,
) -> PyResult<Py<PyAny>> {
    let p: Vec<TumorLabels> = from_py(pred)?;
    let t: Vec<TumorLabels> = from_py(truth)?;
    let policy: UncertainPolicy = policy.parse().map_err(value_err)?;
    let rows = evaluation::evaluate_organ(&p, &t, &largest_cm, self::organ(organ)?, policy, cutoff_cm).map_err(value_err)?;
    to_py(py, &rows)
}

/// CSV text for metric rows from `evaluate_organ`.
#[pyfunction]
fn metrics_csv(rows: &Bound<'_, PyAny>) -> PyResult<String> {
    Ok(evaluation::metrics_csv(&from_py::<Vec<MetricRow>>(rows)?))
}

/// Default configuration as a dict.
#[pyfunction]
fn default_config(py: Python<'_>) -> PyResult<Py<PyAny>> {
    to_py(py, &Config::default())
}

#[pymodule]
#[pyo3(name = "segreport")]
fn segreport_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMask>()?;
    m.add_class::<PyVolume>()?;
    m.add("REPORT_SCHEMA", report::SCHEMA)?;
    m.add_function(wrap_pyfunction!(phantom_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(generate_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(build_report, m)?)?;
    m.add_function(wrap_pyfunction!(report_to_json, m)?)?;
    m.add_function(wrap_pyfunction!(render_text, m)?)?;
    m.add_function(wrap_pyfunction!(measure, m)?)?;
    m.add_function(wrap_pyfunction!(size_stage, m)?)?;
    m.add_function(wrap_pyfunction!(stage_pdac, m)?)?;
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    m.add_function(wrap_pyfunction!(tumor_present, m)?)?;
    m.add_function(wrap_pyfunction!(subsegment_pancreas, m)?)?;
    m.add_function(wrap_pyfunction!(assess_fatty_liver, m)?)?;
    m.add_function(wrap_pyfunction!(assess_fatty_pancreas, m)?)?;
    m.add_function(wrap_pyfunction!(classify_organ_size, m)?)?;
    m.add_function(wrap_pyfunction!(parse_labels, m)?)?;
    m.add_function(wrap_pyfunction!(format_labels, m)?)?;
    m.add_function(wrap_pyfunction!(rule_labels, m)?)?;
    m.add_function(wrap_pyfunction!(build_style_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(build_fusion_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(build_label_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(extract_between_markers, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_organ, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_csv, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
