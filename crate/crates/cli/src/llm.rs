use crate::failure::{print_json, read_text, write_text, Failure, ENDPOINT, INCONSISTENT, INTERNAL, NO_EXAMPLES};
use crate::Global;
use clap::Args;
use segreport::evaluation::{Label, TumorLabels};
use segreport::organ::Organ;
use segreport::report::{from_json, render_text, StructuredReport};
use segreport::textgen::{fuse_reports, generate_narrative, EndpointCompleter, LabeledReport, NarrativeError};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct NarrativeArgs {
    /// Structured report JSON.
    report: PathBuf,
    /// Directory with `labels.csv` (id,liver,kidney,pancreas) and one
    /// `<id>.txt` per example report.
    #[arg(long)]
    examples: PathBuf,
}

#[derive(Args)]
pub struct FuseArgs {
    /// Structured report JSON.
    report: PathBuf,
    /// Clinical notes as plain text.
    #[arg(long)]
    notes: PathBuf,
}

fn load_report(path: &Path) -> Result<StructuredReport, Failure> {
    from_json(&read_text(path)?).map_err(|e| Failure::at(path)(&e))
}

/// Example pool in `labels.csv` order.
pub fn load_examples(dir: &Path) -> Result<Vec<LabeledReport>, Failure> {
    let index = dir.join("labels.csv");
    let mut rd = csv::Reader::from_path(&index).map_err(|e| Failure::at(&index)(&e))?;
    let headers = rd.headers().map_err(|e| Failure::at(&index)(&e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Failure::input(format!("{}: no `{name}` column", index.display())))
    };
    let (id, liver, kidney, pancreas) = (col("id")?, col("liver")?, col("kidney")?, col("pancreas")?);
    let mut pool = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Failure::at(&index)(&e))?;
        let label = |c: usize| {
            Label::parse(&rec[c]).ok_or_else(|| Failure::input(format!("{} row {}: bad label `{}`", index.display(), line + 2, &rec[c])))
        };
        let labels = TumorLabels::new(label(liver)?, label(kidney)?, label(pancreas)?);
        let text = read_text(&dir.join(format!("{}.txt", &rec[id])))?;
        pool.push(LabeledReport {
            id: rec[id].to_string(),
            text,
            labels,
        });
    }
    Ok(pool)
}

fn narrative_failure(e: NarrativeError) -> Failure {
    match &e {
        NarrativeError::NoExamples(_) => Failure::new(NO_EXAMPLES, &e),
        NarrativeError::Inconsistent { expected, got } => {
            let diff: Vec<String> = Organ::ALL
                .iter()
                .filter(|o| expected.get(**o) != got.get(**o))
                .map(|o| format!("  {}: report {}, narrative {}", o.name(), expected.get(*o).as_str(), got.get(*o).as_str()))
                .collect();
            Failure::new(INCONSISTENT, format!("{e}\n{}", diff.join("\n")))
        }
        NarrativeError::Chat(_) => Failure::new(ENDPOINT, &e),
        _ => Failure::new(INTERNAL, &e),
    }
}

pub fn narrative(g: &Global, a: NarrativeArgs) -> Result<(), Failure> {
    let cfg = g.config()?;
    cfg.chat.validate().map_err(Failure::input)?;
    let report = load_report(&a.report)?;
    let pool = load_examples(&a.examples)?;
    let client = EndpointCompleter {
        endpoint: &cfg.chat,
        case_id: &report.case_id,
    };
    let n = generate_narrative(&report, &pool, cfg.style_examples, &client, &client).map_err(narrative_failure)?;
    let path = g.out_dir().join(format!("{}.narrative.txt", report.case_id));
    write_text(&path, &format!("{}\n", n.text.trim_end()))?;
    print_json(&json!({
        "case_id": report.case_id,
        "narrative": path,
        "reprompts": n.reprompts,
        "examples": n.examples,
    }));
    Ok(())
}

pub fn fuse(g: &Global, a: FuseArgs) -> Result<(), Failure> {
    let cfg = g.config()?;
    cfg.chat.validate().map_err(Failure::input)?;
    let report = load_report(&a.report)?;
    let notes = read_text(&a.notes)?;
    let client = EndpointCompleter {
        endpoint: &cfg.chat,
        case_id: &report.case_id,
    };
    let text = fuse_reports(&notes, &render_text(&report), &client).map_err(narrative_failure)?;
    let path = g.out_dir().join(format!("{}.fused.txt", report.case_id));
    write_text(&path, &format!("{}\n", text.trim_end()))?;
    print_json(&json!({"case_id": report.case_id, "fused": path}));
    Ok(())
}
