use super::{attenuation_class, GenerationMode, Location, Metadata, OrganAssessment, StructuredReport, TumorFinding, SCHEMA};
use crate::diagnostics::{assess_fatty_liver, assess_fatty_pancreas, classify_organ_size, DiagnosticThresholds};
use crate::measurement::{attenuation_stats, measure_tumor, physical_volume, round_to, split_instances, TumorInstance, TumorMeasurement};
use crate::morphology::{connected_components, Connectivity};
use crate::organ::Organ;
use crate::postprocess::{denoise, tumor_present, OrganThresholds};
use crate::staging::{evaluate_contacts, stage_pdac, StageResult, Vessel};
use crate::subsegment::{localize_tumor, subsegment_pancreas, SubsegmentMap};
use crate::volume::{Mask, Spacing, Volume};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

/// One case: the HU volume and its masks keyed by manifest name
/// (`liver`, `pancreas_tumor`, `SMA`, `liver_segment_3`, ...).
#[derive(Debug, Clone)]
pub struct CaseInputs {
    pub case_id: String,
    pub volume: Volume,
    pub masks: BTreeMap<String, Mask>,
    pub contrast_phase: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportOptions {
    pub mode: GenerationMode,
    /// Isotropic pitch used for diameter measurement.
    pub target_spacing_mm: f64,
    /// HU margin for the hypo/iso/hyper call.
    pub attenuation_delta_hu: f64,
    pub postprocess: OrganThresholds,
    pub diagnostics: DiagnosticThresholds,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            mode: GenerationMode::GroundTruthMasks,
            target_spacing_mm: 1.0,
            attenuation_delta_hu: 10.0,
            postprocess: OrganThresholds::default(),
            diagnostics: DiagnosticThresholds::default(),
        }
    }
}

#[derive(Debug, Error)]
#[error("case {case_id}: {stage}: {source}")]
pub struct ReportError {
    pub case_id: String,
    pub stage: &'static str,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

type Res<T> = Result<T, ReportError>;

struct Ctx<'a> {
    inp: &'a CaseInputs,
    opts: &'a ReportOptions,
    omissions: Vec<String>,
}

impl Ctx<'_> {
    fn fail<E: std::error::Error + Send + Sync + 'static>(&self, stage: &'static str) -> impl FnOnce(E) -> ReportError + '_ {
        move |e| ReportError {
            case_id: self.inp.case_id.clone(),
            stage,
            source: Box::new(e),
        }
    }

    fn mask(&self, name: &str) -> Option<Mask> {
        let m = self.inp.masks.get(name)?;
        Some(match self.opts.mode {
            GenerationMode::Automated => denoise(m),
            GenerationMode::GroundTruthMasks => m.clone(),
        })
    }

    fn omit(&mut self, what: String) {
        self.omissions.push(what);
    }
}

/// Runs the whole pipeline for one case. Pure: equal inputs give equal
/// reports.
pub fn build_report(inp: &CaseInputs, opts: &ReportOptions) -> Res<StructuredReport> {
    let t0 = Instant::now();
    let mut cx = Ctx {
        inp,
        opts,
        omissions: Vec::new(),
    };
    for m in inp.masks.values() {
        m.check_volume_grid(&inp.volume).map_err(cx.fail("input"))?;
    }
    if !(opts.target_spacing_mm > 0.0) {
        return Err(cx.fail("input")(crate::volume::VolumeError::InvalidSpacing([opts.target_spacing_mm; 3])));
    }
    let target = Spacing::isotropic(opts.target_spacing_mm);

    let mut tumors: BTreeMap<Organ, Mask> = BTreeMap::new();
    for organ in Organ::ALL {
        let name = organ.tumor_mask_name();
        let Some(m) = cx.mask(name) else {
            cx.omit(format!("{organ} tumors: no {name} mask"));
            continue;
        };
        let present = match opts.mode {
            GenerationMode::Automated => tumor_present(&m, organ.name(), &opts.postprocess).map_err(cx.fail("presence"))?,
            GenerationMode::GroundTruthMasks => !m.is_empty(),
        };
        tumors.insert(organ, if present { m } else { m.empty_like(name) });
    }
    let organs: BTreeMap<&str, Mask> = ["liver", "pancreas", "kidneys", "spleen"]
        .into_iter()
        .filter_map(|n| cx.mask(n).map(|m| (n, m)))
        .collect();
    let t_clean = t0.elapsed();

    let mut findings = Vec::new();
    let mut pdac_index: Option<(TumorInstance, TumorMeasurement)> = None;
    for organ in Organ::ALL {
        let Some(tm) = tumors.get(&organ) else { continue };
        let instances = split_instances(tm, organ);
        if instances.is_empty() {
            continue;
        }
        let mut measured = Vec::with_capacity(instances.len());
        for inst in instances {
            let m = measure_tumor(&inst, &inp.volume, target).map_err(cx.fail("measurement"))?;
            measured.push((inst, m));
        }
        // descending D; larger instances first on ties, then split order
        measured.sort_by(|a, b| {
            b.1.long_axis_mm
                .total_cmp(&a.1.long_axis_mm)
                .then(b.1.voxels.cmp(&a.1.voxels))
                .then(a.0.instance_id.cmp(&b.0.instance_id))
        });
        let segmap = segment_map(&mut cx, organ);
        let parenchyma_hu = match organs.get(organ.mask_name()) {
            Some(om) => attenuation_stats(&inp.volume, &om.and_not(tm)).ok().map(|s| s.0),
            None => None,
        };
        if parenchyma_hu.is_none() {
            cx.omit(format!("{organ} tumor attenuation: no {} parenchyma to compare against", organ.mask_name()));
        }
        for (k, (inst, m)) in measured.iter().enumerate() {
            let locations = segmap
                .as_ref()
                .map(|sm| {
                    localize_tumor(inst, sm)
                        .into_iter()
                        .map(|(segment, f)| Location {
                            segment,
                            fraction: round_to(f, 3),
                        })
                        .collect()
                })
                .unwrap_or_default();
            findings.push(TumorFinding {
                instance_id: k as u32 + 1,
                organ,
                measurement: m.clone(),
                locations,
                attenuation_class: parenchyma_hu.map(|p| attenuation_class(m.hu_mean, p, opts.attenuation_delta_hu)),
            });
        }
        if organ == Organ::Pancreas {
            pdac_index = measured.into_iter().next();
        }
    }
    let t_measure = t0.elapsed();

    let assessments = assess_organs(&mut cx, &organs, &tumors)?;

    let pdac_stage = match pdac_index {
        Some((inst, m)) => Some(stage(&mut cx, &inst, &m)?),
        None => None,
    };
    log::info!(
        "case={} mode={:?} findings={} clean_ms={} measure_ms={} total_ms={}",
        inp.case_id,
        opts.mode,
        findings.len(),
        t_clean.as_millis(),
        (t_measure - t_clean).as_millis(),
        t0.elapsed().as_millis()
    );

    let v = &inp.volume;
    Ok(StructuredReport {
        schema: SCHEMA.into(),
        case_id: inp.case_id.clone(),
        metadata: Metadata {
            dims: v.dims().as_array(),
            spacing_mm: v.spacing().as_array(),
            contrast_phase: inp.contrast_phase.clone(),
        },
        generation_mode: opts.mode,
        organs: assessments,
        findings,
        pdac_stage,
        omissions: cx.omissions,
    })
}

fn segment_map(cx: &mut Ctx, organ: Organ) -> Option<SubsegmentMap> {
    match organ {
        Organ::Liver => {
            let names: Vec<String> = (1..=8).map(|k| format!("liver_segment_{k}")).collect();
            let missing: Vec<&str> = names.iter().filter(|n| !cx.inp.masks.contains_key(*n)).map(String::as_str).collect();
            if !missing.is_empty() {
                cx.omit(format!("liver tumor locations: missing {}", missing.join(", ")));
                return None;
            }
            let segs = names
                .iter()
                .enumerate()
                .map(|(i, n)| (format!("segment {}", i + 1), cx.inp.masks[n].clone()))
                .collect();
            into_map(cx, SubsegmentMap::new(Organ::Liver, segs, None))
        }
        Organ::Pancreas => {
            let given: Vec<Option<&Mask>> =
                ["pancreas_head", "pancreas_body", "pancreas_tail"].iter().map(|n| cx.inp.masks.get(*n)).collect();
            if given.iter().all(Option::is_some) {
                let segs = ["head", "body", "tail"]
                    .iter()
                    .zip(given)
                    .map(|(n, m)| (n.to_string(), m.expect("checked").clone()))
                    .collect();
                return into_map(cx, SubsegmentMap::new(Organ::Pancreas, segs, None));
            }
            let (Some(p), Some(sma)) = (cx.mask("pancreas"), cx.inp.masks.get("SMA")) else {
                cx.omit("pancreas tumor locations: needs pancreas and SMA masks or pancreas_head/body/tail".into());
                return None;
            };
            match subsegment_pancreas(&p, sma) {
                Ok(s) => Some(s.into_map()),
                Err(e) => {
                    cx.omit(format!("pancreas tumor locations: {e}"));
                    None
                }
            }
        }
        Organ::Kidney => None,
    }
}

fn into_map<E: std::fmt::Display>(cx: &mut Ctx, r: Result<SubsegmentMap, E>) -> Option<SubsegmentMap> {
    r.map_err(|e| cx.omit(format!("tumor locations: {e}"))).ok()
}

fn assess_organs(cx: &mut Ctx, organs: &BTreeMap<&str, Mask>, tumors: &BTreeMap<Organ, Mask>) -> Res<Vec<OrganAssessment>> {
    let th = cx.opts.diagnostics;
    let vol = &cx.inp.volume;
    let parenchyma = |m: &Mask, organ: Option<Organ>| -> Option<f64> {
        let p = match organ.and_then(|o| tumors.get(&o)) {
            Some(t) => m.and_not(t),
            None => m.clone(),
        };
        attenuation_stats(vol, &p).ok().map(|s| round_to(s.0, 2))
    };
    let assess = |name: &str, m: &Mask, organ: Option<Organ>, th: &DiagnosticThresholds| -> Option<Res<OrganAssessment>> {
        let hu = parenchyma(m, organ)?;
        let volume_cm3 = physical_volume(m);
        Some(
            classify_organ_size(name.split(' ').next().unwrap_or(name), volume_cm3, th)
                .map(|size_class| OrganAssessment {
                    organ: name.to_string(),
                    volume_cm3,
                    hu_mean: hu,
                    size_class,
                    fatty_liver: None,
                    fatty_pancreas: None,
                })
                .map_err(|e| ReportError {
                    case_id: cx.inp.case_id.clone(),
                    stage: "diagnostics",
                    source: Box::new(e),
                }),
        )
    };

    let mut out = Vec::new();
    let mut missing = Vec::new();
    let spleen = organs.get("spleen").and_then(|m| assess("spleen", m, None, &th)).transpose()?;
    match organs.get("liver").and_then(|m| assess("liver", m, Some(Organ::Liver), &th)).transpose()? {
        Some(mut a) => {
            a.fatty_liver = Some(assess_fatty_liver(a.hu_mean, &th));
            out.push(a);
        }
        None => missing.push("liver"),
    }
    match organs.get("pancreas").and_then(|m| assess("pancreas", m, Some(Organ::Pancreas), &th)).transpose()? {
        Some(mut a) => {
            match assess_fatty_pancreas(a.hu_mean, spleen.as_ref().map(|s| s.hu_mean), &th) {
                Ok(f) => a.fatty_pancreas = Some(f),
                Err(e) => missing.push(if matches!(e, crate::diagnostics::DiagnosticsError::MissingSpleen) {
                    "fatty pancreas (no spleen mask)"
                } else {
                    "fatty pancreas (spleen attenuation not positive)"
                }),
            }
            out.push(a);
        }
        None => missing.push("pancreas"),
    }
    match organs.get("kidneys") {
        Some(k) if !k.is_empty() => {
            for (i, part) in kidney_parts(k).iter().enumerate() {
                if let Some(a) = assess(&format!("kidney {}", i + 1), part, Some(Organ::Kidney), &th).transpose()? {
                    out.push(a);
                }
            }
        }
        _ => missing.push("kidneys"),
    }
    match spleen {
        Some(s) => out.push(s),
        None => missing.push("spleen"),
    }
    for m in missing {
        cx.omit(format!("organ assessment: {m}"));
    }
    Ok(out)
}

/// The two largest components of the kidneys mask, ordered by x.
fn kidney_parts(k: &Mask) -> Vec<Mask> {
    let cc = connected_components(k, Connectivity::Vertex26);
    let mut order: Vec<usize> = (0..cc.count).collect();
    order.sort_by(|&a, &b| cc.sizes[b].cmp(&cc.sizes[a]).then(a.cmp(&b)));
    order.truncate(2);
    let mut parts: Vec<(f64, Mask)> = order
        .into_iter()
        .map(|c| {
            let label = c as u32 + 1;
            let mut m = k.empty_like("kidney");
            let mut sx = 0usize;
            for (i, &l) in cc.labels.iter().enumerate() {
                if l == label {
                    m.bits_mut()[i] = true;
                    sx += k.dims().coords(i)[0];
                }
            }
            (sx as f64 / cc.sizes[c] as f64, m)
        })
        .collect();
    parts.sort_by(|a, b| a.0.total_cmp(&b.0));
    parts.into_iter().map(|p| p.1).collect()
}

fn stage(cx: &mut Ctx, inst: &TumorInstance, m: &TumorMeasurement) -> Res<StageResult> {
    let tumor = inst.full_mask();
    let vessels = [Vessel::Sma, Vessel::Ca, Vessel::Cha, Vessel::Sa];
    let masks: Vec<Option<&Mask>> = vessels.iter().map(|v| cx.inp.masks.get(v.name())).collect();
    for (v, m) in vessels.iter().zip(&masks) {
        if m.is_none() {
            cx.omit(format!("{v} contact: no {v} mask"));
        }
    }
    let pairs: Vec<(Vessel, Option<&Mask>)> = vessels.iter().copied().zip(masks).collect();
    let contacts = evaluate_contacts(&tumor, &pairs).map_err(cx.fail("staging"))?;
    stage_pdac(Some(m), &contacts).map_err(cx.fail("staging"))
}
