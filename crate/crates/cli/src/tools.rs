//! Single-algorithm entry points. Each prints one JSON object to stdout.

use crate::failure::{print_json, read_text, write_text, Failure, INTERNAL};
use crate::Global;
use clap::Args;
use segreport::manifest::CaseManifest;
use segreport::measurement::{measure_tumor, split_instances, TumorInstance, TumorMeasurement};
use segreport::organ::Organ;
use segreport::phantom::{generate, scenario, PhantomSpec, SCENARIOS};
use segreport::postprocess::{denoise as denoise_mask, tumor_present};
use segreport::staging::{evaluate_contacts, stage_pdac, Vessel};
use segreport::subsegment::subsegment_pancreas;
use segreport::volume::{load_mask, load_volume, save_mask, save_volume, Mask, Spacing, Volume};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn mask(path: &Path, label: &str) -> Result<Mask, Failure> {
    load_mask(path, label).map_err(|e| Failure::at(path)(&e))
}

/// The CT if given, else a zero image on the mask's grid (HU fields are
/// then dropped from the output).
fn volume_for(path: Option<&Path>, m: &Mask) -> Result<Volume, Failure> {
    match path {
        Some(p) => {
            let v = load_volume(p).map_err(|e| Failure::at(p)(&e))?;
            m.check_volume_grid(&v).map_err(|e| Failure::at(p)(&e))?;
            Ok(v)
        }
        None => Volume::new(m.dims(), m.spacing(), vec![0.0; m.dims().len()]).map_err(Failure::internal),
    }
}

fn save(m: &Mask, path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::internal(format!("{}: {e}", dir.display())))?;
    }
    save_mask(m, path).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}

fn measurement_json(id: u32, m: &TumorMeasurement, with_hu: bool) -> Value {
    let mut v = serde_json::to_value(m).expect("measurement serializes");
    let obj = v.as_object_mut().expect("struct serializes to an object");
    obj.insert("instance_id".into(), id.into());
    if !with_hu {
        obj.remove("hu_mean");
        obj.remove("hu_std");
    }
    v
}

#[derive(Args)]
pub struct PhantomArgs {
    /// Built-in scenario name or a phantom spec JSON file.
    scenario: Option<String>,
    /// List the built-in scenarios.
    #[arg(long)]
    list: bool,
}

pub fn phantom(g: &Global, a: PhantomArgs) -> Result<(), Failure> {
    if a.list {
        print_json(&json!({ "scenarios": SCENARIOS }));
        return Ok(());
    }
    let Some(name) = a.scenario else {
        return Err(Failure::input("give a scenario name, a spec file or --list"));
    };
    let path = PathBuf::from(&name);
    let spec: PhantomSpec = if path.is_file() {
        serde_json::from_str(&read_text(&path)?).map_err(|e| Failure::at(&path)(&e))?
    } else {
        scenario(&name).map_err(Failure::input)?
    };
    let p = generate(&spec).map_err(Failure::input)?;
    let out = g.out_dir();
    let internal = |e: &dyn std::fmt::Display| Failure::internal(format!("{}: {e}", out.display()));
    std::fs::create_dir_all(out.join("masks")).map_err(|e| internal(&e))?;
    save_volume(&p.volume, out.join("ct.nii.gz")).map_err(|e| internal(&e))?;
    let mut masks = BTreeMap::new();
    for (k, m) in &p.masks {
        let rel = PathBuf::from("masks").join(format!("{k}.nii.gz"));
        save(m, &out.join(&rel))?;
        masks.insert(k.clone(), rel);
    }
    let manifest = CaseManifest {
        case_id: spec.name.clone(),
        volume: "ct.nii.gz".into(),
        masks,
        clinical_notes: None,
        human_report: None,
        contrast_phase: None,
    };
    let manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&out.join("manifest.json"), &format!("{manifest_text}\n"))?;
    let truth_text = serde_json::to_string_pretty(&p.truth).expect("truth serializes");
    write_text(&out.join("truth.json"), &format!("{truth_text}\n"))?;
    print_json(&json!({
        "scenario": spec.name,
        "manifest": out.join("manifest.json"),
        "truth": out.join("truth.json"),
        "masks": p.masks.len(),
    }));
    Ok(())
}

#[derive(Args)]
pub struct MeasureArgs {
    /// Tumor mask.
    mask: PathBuf,
    /// CT volume on the same grid, for HU statistics.
    #[arg(long)]
    volume: Option<PathBuf>,
    #[arg(long, default_value = "liver")]
    organ: Organ,
}

pub fn measure(g: &Global, a: MeasureArgs) -> Result<(), Failure> {
    let cfg = g.config()?;
    let m = mask(&a.mask, "tumor")?;
    let v = volume_for(a.volume.as_deref(), &m)?;
    let target = Spacing::isotropic(cfg.target_spacing_mm);
    let mut rows = Vec::new();
    for inst in split_instances(&m, a.organ) {
        let meas = measure_tumor(&inst, &v, target).map_err(|e| Failure::new(INTERNAL, e))?;
        rows.push(measurement_json(inst.instance_id, &meas, a.volume.is_some()));
    }
    print_json(&json!({"organ": a.organ.name(), "instances": rows}));
    Ok(())
}

#[derive(Args)]
pub struct StageArgs {
    /// Pancreatic tumor mask; its largest instance is staged.
    tumor: PathBuf,
    #[arg(long)]
    volume: Option<PathBuf>,
    #[arg(long)]
    sma: Option<PathBuf>,
    #[arg(long)]
    ca: Option<PathBuf>,
    #[arg(long)]
    cha: Option<PathBuf>,
    #[arg(long)]
    sa: Option<PathBuf>,
}

pub fn stage(g: &Global, a: StageArgs) -> Result<(), Failure> {
    let cfg = g.config()?;
    let tumor = mask(&a.tumor, "pancreas_tumor")?;
    let v = volume_for(a.volume.as_deref(), &tumor)?;
    let target = Spacing::isotropic(cfg.target_spacing_mm);
    let mut best: Option<(TumorInstance, TumorMeasurement)> = None;
    for inst in split_instances(&tumor, Organ::Pancreas) {
        let m = measure_tumor(&inst, &v, target).map_err(Failure::internal)?;
        if best.as_ref().is_none_or(|(_, b)| m.long_axis_mm > b.long_axis_mm) {
            best = Some((inst, m));
        }
    }
    let Some((inst, meas)) = best else {
        return Err(Failure::input(format!("{}: empty tumor mask", a.tumor.display())));
    };
    let paths = [(Vessel::Sma, a.sma), (Vessel::Ca, a.ca), (Vessel::Cha, a.cha), (Vessel::Sa, a.sa)];
    let mut masks = Vec::new();
    for (vessel, p) in &paths {
        let m = match p {
            Some(p) => {
                let m = mask(p, vessel.name())?;
                m.check_volume_grid(&v).map_err(|e| Failure::at(p)(&e))?;
                Some(m)
            }
            None => None,
        };
        masks.push((*vessel, m));
    }
    let pairs: Vec<(Vessel, Option<&Mask>)> = masks.iter().map(|(v, m)| (*v, m.as_ref())).collect();
    let contacts = evaluate_contacts(&inst.full_mask(), &pairs).map_err(Failure::internal)?;
    let r = stage_pdac(Some(&meas), &contacts).map_err(Failure::internal)?;
    print_json(&serde_json::to_value(&r).expect("stage serializes"));
    Ok(())
}

#[derive(Args)]
pub struct SubsegmentArgs {
    pancreas: PathBuf,
    sma: PathBuf,
}

pub fn subsegment(g: &Global, a: SubsegmentArgs) -> Result<(), Failure> {
    let p = mask(&a.pancreas, "pancreas")?;
    let s = mask(&a.sma, "SMA")?;
    s.check_volume_grid(&volume_for(None, &p)?).map_err(|e| Failure::at(&a.sma)(&e))?;
    let parts = subsegment_pancreas(&p, &s).map_err(Failure::input)?;
    let out = g.out_dir();
    let mut result = serde_json::Map::new();
    for (name, m) in [("head", &parts.head), ("body", &parts.body), ("tail", &parts.tail)] {
        let path = out.join(format!("pancreas_{name}.nii.gz"));
        save(m, &path)?;
        result.insert(name.into(), json!({"path": path, "voxels": m.count()}));
    }
    result.insert("pancreas_voxels".into(), p.count().into());
    print_json(&Value::Object(result));
    Ok(())
}

#[derive(Args)]
pub struct DenoiseArgs {
    mask: PathBuf,
    /// Also apply the presence gate for this organ (`liver`, `pancreas`,
    /// `kidney`, `metastases`).
    #[arg(long)]
    organ: Option<String>,
}

pub fn denoise(g: &Global, a: DenoiseArgs) -> Result<(), Failure> {
    let cfg = g.config()?;
    let Some(out) = g.out.clone() else {
        return Err(Failure::input("denoise needs --out <file>"));
    };
    let m = mask(&a.mask, "mask")?;
    let clean = denoise_mask(&m);
    save(&clean, &out)?;
    let mut r = json!({
        "output": out,
        "input_voxels": m.count(),
        "output_voxels": clean.count(),
        "subset": clean.is_subset_of(&m),
    });
    if let Some(organ) = &a.organ {
        let present = tumor_present(&clean, organ, &cfg.postprocess).map_err(Failure::input)?;
        r["present"] = present.into();
    }
    print_json(&r);
    Ok(())
}
