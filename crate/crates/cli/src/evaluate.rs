use crate::failure::{read_text, write_text, Failure, MISALIGNED};
use crate::Global;
use clap::Args;
use segreport::evaluation::{evaluate_organ, metrics_csv, parse_labels, rule_label_structured, Label, TumorLabels};
use segreport::organ::Organ;
use segreport::report::from_json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Truth CSV: `case_id,liver,kidney,pancreas` with labels yes/no/U, plus
    /// optional `liver_cm,kidney_cm,pancreas_cm` largest-tumor sizes for
    /// the size strata.
    #[arg(long)]
    truth: PathBuf,
    /// Predictions: `<case>.report.json` (labeled by rule) and/or
    /// `<case>.labels.txt` (labeler answers). A labels file wins over a
    /// report for the same case.
    #[arg(long)]
    pred: PathBuf,
}

struct TruthRow {
    case_id: String,
    labels: TumorLabels,
    sizes: [Option<f64>; 3],
}

const ORGANS: [Organ; 3] = [Organ::Liver, Organ::Kidney, Organ::Pancreas];

fn load_truth(path: &Path) -> Result<Vec<TruthRow>, Failure> {
    let at = Failure::at(path);
    let mut rd = csv::Reader::from_path(path).map_err(|e| at(&e))?;
    let headers = rd.headers().map_err(|e| at(&e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| col(name).ok_or_else(|| Failure::input(format!("{}: no `{name}` column", path.display())));
    let id = need("case_id")?;
    let label_cols = [need("liver")?, need("kidney")?, need("pancreas")?];
    let size_cols = ["liver_cm", "kidney_cm", "pancreas_cm"].map(col);
    let mut rows = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| at(&e))?;
        let bad = |what: &str, v: &str| Failure::input(format!("{} row {}: bad {what} `{v}`", path.display(), n + 2));
        let mut l = [Label::No; 3];
        for (k, c) in label_cols.iter().enumerate() {
            l[k] = Label::parse(&rec[*c]).ok_or_else(|| bad("label", &rec[*c]))?;
        }
        let mut sizes = [None; 3];
        for (k, c) in size_cols.iter().enumerate() {
            if let Some(v) = c.map(|c| rec[c].trim()).filter(|v| !v.is_empty() && *v != "NA") {
                sizes[k] = Some(v.parse::<f64>().map_err(|_| bad("size", v))?);
            }
        }
        rows.push(TruthRow {
            case_id: rec[id].trim().to_string(),
            labels: TumorLabels::new(l[0], l[1], l[2]),
            sizes,
        });
    }
    Ok(rows)
}

fn load_predictions(dir: &Path) -> Result<BTreeMap<String, TumorLabels>, Failure> {
    let at = Failure::at(dir);
    let mut reports = BTreeMap::new();
    let mut answers = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| at(&e))? {
        let path = e.map_err(|e| at(&e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(id) = name.strip_suffix(".report.json") {
            let r = from_json(&read_text(&path)?).map_err(|e| Failure::at(&path)(&e))?;
            reports.insert(id.to_string(), rule_label_structured(&r));
        } else if let Some(id) = name.strip_suffix(".labels.txt") {
            let l = parse_labels(&read_text(&path)?).map_err(|e| Failure::at(&path)(&e))?;
            answers.insert(id.to_string(), l);
        }
    }
    reports.extend(answers);
    Ok(reports)
}

pub fn run(g: &Global, a: EvaluateArgs) -> Result<(), Failure> {
    let cfg = g.config()?;
    let truth = load_truth(&a.truth)?;
    let preds = load_predictions(&a.pred)?;
    if preds.is_empty() {
        return Err(Failure::new(MISALIGNED, format!("{}: no predictions", a.pred.display())));
    }
    let missing: Vec<&str> = truth.iter().filter(|t| !preds.contains_key(&t.case_id)).map(|t| t.case_id.as_str()).collect();
    let extra: Vec<&String> = preds.keys().filter(|k| !truth.iter().any(|t| &t.case_id == *k)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Failure::new(
            MISALIGNED,
            format!(
                "{} predictions for {} truth cases; without prediction: {missing:?}; without truth: {extra:?}",
                preds.len(),
                truth.len()
            ),
        ));
    }
    let pred: Vec<TumorLabels> = truth.iter().map(|t| preds[&t.case_id]).collect();
    let labels: Vec<TumorLabels> = truth.iter().map(|t| t.labels).collect();
    let mut rows = Vec::new();
    for (k, organ) in ORGANS.into_iter().enumerate() {
        let sizes: Vec<Option<f64>> = truth.iter().map(|t| t.sizes[k]).collect();
        rows.extend(
            evaluate_organ(&pred, &labels, &sizes, organ, cfg.uncertain_policy, cfg.size_cutoff_cm)
                .map_err(|e| Failure::new(MISALIGNED, e))?,
        );
    }
    let table = metrics_csv(&rows);
    if let Some(dir) = &g.out {
        write_text(&dir.join("metrics.csv"), &table)?;
    }
    print!("{table}");
    Ok(())
}
