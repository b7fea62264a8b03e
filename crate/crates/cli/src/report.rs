use crate::failure::{print_json, write_text, Failure, INPUT, INTERNAL};
use crate::Global;
use clap::Args;
use rayon::prelude::*;
use segreport::manifest::CaseManifest;
use segreport::report::{build_report, render_text, to_json, ReportOptions};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct ReportArgs {
    /// Case manifests, or directories. A directory contributes its own
    /// `manifest.json` if it has one, else every `*.manifest.json` in it
    /// and every `<subdir>/manifest.json`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

/// Manifest paths in a stable order.
fn collect(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in inputs {
        if !p.is_dir() {
            out.push(p.clone());
            continue;
        }
        if p.join("manifest.json").is_file() {
            out.push(p.join("manifest.json"));
            continue;
        }
        let mut found = Vec::new();
        let entries = std::fs::read_dir(p).map_err(|e| Failure::at(p)(&e))?;
        for e in entries {
            let path = e.map_err(|e| Failure::at(p)(&e))?.path();
            if path.join("manifest.json").is_file() {
                found.push(path.join("manifest.json"));
            } else if path.to_str().is_some_and(|s| s.ends_with(".manifest.json")) {
                found.push(path);
            }
        }
        if found.is_empty() {
            return Err(Failure::input(format!("{}: no case manifests", p.display())));
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

fn one_case(manifest: &Path, opts: &ReportOptions, out: &Path) -> Result<(String, PathBuf), Failure> {
    let m = CaseManifest::load(manifest).map_err(Failure::input)?;
    let inputs = m.load_case().map_err(Failure::input)?;
    let r = build_report(&inputs, opts).map_err(|e| Failure::new(if e.stage == "input" { INPUT } else { INTERNAL }, &e))?;
    let json_path = out.join(format!("{}.report.json", r.case_id));
    write_text(&json_path, &to_json(&r))?;
    write_text(&out.join(format!("{}.report.txt", r.case_id)), &render_text(&r))?;
    Ok((r.case_id, json_path))
}

pub fn run(g: &Global, a: ReportArgs) -> Result<(), Failure> {
    let cfg = g.config()?;
    let opts = cfg.report_options();
    let out = g.out_dir();
    let manifests = collect(&a.inputs)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(Failure::internal)?;
    let results: Vec<Result<(String, PathBuf), Failure>> =
        pool.install(|| manifests.par_iter().map(|m| one_case(m, &opts, &out)).collect());

    let mut cases = Vec::new();
    let mut first_failure: Option<u8> = None;
    for (m, r) in manifests.iter().zip(results) {
        match r {
            Ok((id, path)) => cases.push(json!({"case_id": id, "status": "ok", "report": path})),
            Err(f) => {
                eprintln!("error: {}: {}", m.display(), f.message);
                first_failure.get_or_insert(f.code);
                cases.push(json!({"manifest": m, "status": "error", "error": f.message}));
            }
        }
    }
    let failed = cases.iter().filter(|c| c["status"] == "error").count();
    print_json(&json!({"cases": cases, "failed": failed}));
    match first_failure {
        Some(code) => Err(Failure::new(code, format!("{failed} of {} cases failed", manifests.len()))),
        None => Ok(()),
    }
}
