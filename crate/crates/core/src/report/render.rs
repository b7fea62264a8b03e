use super::{GenerationMode, OrganAssessment, StructuredReport, TumorFinding};
use crate::diagnostics::SizeClass;
use crate::organ::Organ;
use std::fmt::Write;

/// Segments below this share of a tumor are left out of the location phrase.
const LOCATION_MIN_FRACTION: f64 = 0.1;

/// Plain-text report. Sections always appear in the same order, so two
/// renders of one report are byte-identical.
pub fn render_text(r: &StructuredReport) -> String {
    let mut s = String::new();
    let m = &r.metadata;
    let _ = writeln!(s, "STRUCTURED CT REPORT");
    let _ = writeln!(s, "Case: {}", r.case_id);
    let _ = writeln!(
        s,
        "Image: {} x {} x {} voxels, spacing {:.2} x {:.2} x {:.2} mm",
        m.dims[0], m.dims[1], m.dims[2], m.spacing_mm[0], m.spacing_mm[1], m.spacing_mm[2]
    );
    if let Some(phase) = &m.contrast_phase {
        let _ = writeln!(s, "Contrast phase: {phase}");
    }
    let source = match r.generation_mode {
        GenerationMode::GroundTruthMasks => "reference segmentation masks",
        GenerationMode::Automated => "automated segmentation",
    };
    let _ = writeln!(s, "Source: {source}");

    s.push_str("\nFINDINGS\n");
    organ_block(&mut s, r, Organ::Liver, "Liver", &["liver"]);
    organ_block(&mut s, r, Organ::Pancreas, "Pancreas", &["pancreas"]);
    organ_block(&mut s, r, Organ::Kidney, "Kidneys", &["kidney 1", "kidney 2"]);
    if let Some(a) = r.assessment("spleen") {
        let _ = writeln!(s, "Spleen: {}", organ_line(a));
    }

    s.push_str("\nPDAC STAGING\n");
    match &r.pdac_stage {
        Some(st) => {
            let _ = writeln!(s, "Stage {}. {}", st.stage, st.justification);
        }
        None => s.push_str("Not applicable, no pancreatic tumor.\n"),
    }

    s.push_str("\nIMPRESSION\n");
    for line in impression(r) {
        let _ = writeln!(s, "{line}");
    }

    if !r.omissions.is_empty() {
        s.push_str("\nNOT ASSESSED\n");
        for o in &r.omissions {
            let _ = writeln!(s, "- {o}");
        }
    }
    s
}

fn organ_block(s: &mut String, r: &StructuredReport, organ: Organ, title: &str, parts: &[&str]) {
    let findings: Vec<&TumorFinding> = r.findings_for(organ).collect();
    let assessments: Vec<&OrganAssessment> = parts.iter().filter_map(|p| r.assessment(p)).collect();
    let flagged = assessments
        .iter()
        .any(|a| a.size_class != SizeClass::Normal || a.fatty_liver == Some(true) || a.fatty_pancreas == Some(true));
    if findings.is_empty() && !flagged {
        let _ = writeln!(s, "{title}: unremarkable.");
    } else {
        let _ = writeln!(s, "{title}:");
    }
    for a in &assessments {
        let _ = writeln!(s, "{}", capitalize(&format!("{} {}", a.organ, organ_line(a))));
    }
    for f in findings {
        let _ = writeln!(s, "{}", finding_sentence(f));
    }
}

fn organ_line(a: &OrganAssessment) -> String {
    let mut line = format!("volume {:.3} cm3, mean HU {:.2}", a.volume_cm3, a.hu_mean);
    match a.size_class {
        SizeClass::Normal => line.push_str(", normal size"),
        SizeClass::Large => line.push_str(", enlarged"),
        SizeClass::Massive => line.push_str(", massively enlarged"),
    }
    if a.fatty_liver == Some(true) {
        line.push_str(", consistent with fatty liver");
    }
    if a.fatty_pancreas == Some(true) {
        line.push_str(", consistent with fatty pancreas");
    }
    line.push('.');
    line
}

fn label(organ: Organ) -> String {
    match organ {
        Organ::Pancreas => "PDAC".into(),
        o => capitalize(&format!("{} {}", o.name(), o.tumor_term())),
    }
}

/// e.g. "PDAC 1: Pancreatic body/tail. Hypoattenuating pancreas PDAC
/// measuring 6.0 x 3.4 cm (centered on slice 356). Its mean HU value is
/// 39.17 +/- 29.65, and its volume is 27.519 cm3."
pub(crate) fn finding_sentence(f: &TumorFinding) -> String {
    let m = &f.measurement;
    let mut s = format!("{} {}: ", label(f.organ), f.instance_id);
    if let Some(loc) = location_phrase(f) {
        let _ = write!(s, "{loc}. ");
    }
    let noun = format!("{} {}", f.organ.name(), f.organ.tumor_term());
    match f.attenuation_class {
        Some(c) => {
            let _ = write!(s, "{} {noun}", c.word());
        }
        None => s.push_str(&capitalize(&noun)),
    }
    let _ = write!(
        s,
        " measuring {:.1} x {:.1} cm (centered on slice {}). Its mean HU value is {:.2} +/- {:.2}, and its volume is {:.3} cm3.",
        m.long_axis_cm, m.short_axis_cm, m.slice_index, m.hu_mean, m.hu_std, m.volume_cm3
    );
    s
}

fn location_phrase(f: &TumorFinding) -> Option<String> {
    let top = f.locations.first()?;
    let mut kept: Vec<&str> = f
        .locations
        .iter()
        .filter(|l| l.fraction >= LOCATION_MIN_FRACTION)
        .map(|l| l.segment.as_str())
        .collect();
    if kept.is_empty() {
        kept.push(&top.segment);
    }
    match f.organ {
        Organ::Pancreas => {
            let order = ["head", "body", "tail"];
            kept.sort_by_key(|s| order.iter().position(|o| o == s).unwrap_or(order.len()));
            Some(format!("Pancreatic {}", kept.join("/")))
        }
        Organ::Liver => {
            let mut nums: Vec<&str> = kept.iter().map(|s| s.trim_start_matches("segment ")).collect();
            nums.sort_by_key(|n| n.parse::<u32>().unwrap_or(u32::MAX));
            let noun = if nums.len() == 1 { "segment" } else { "segments" };
            Some(format!("Liver {noun} {}", nums.join("/")))
        }
        Organ::Kidney => Some(capitalize(&kept.join("/"))),
    }
}

fn impression(r: &StructuredReport) -> Vec<String> {
    let mut out = Vec::new();
    for organ in Organ::ALL {
        let f: Vec<&TumorFinding> = r.findings_for(organ).collect();
        if f.is_empty() {
            continue;
        }
        let largest = f[0].measurement.long_axis_cm;
        let noun = match organ {
            Organ::Liver => "liver lesion",
            Organ::Pancreas => "pancreatic tumor",
            Organ::Kidney => "kidney lesion",
        };
        let plural = if f.len() == 1 { "" } else { "s" };
        let mut line = format!("{} {noun}{plural}, largest {largest:.1} cm", f.len());
        if organ == Organ::Pancreas {
            if let Some(st) = &r.pdac_stage {
                let _ = write!(line, ", stage {}", st.stage);
            }
        }
        line.push('.');
        out.push(line);
    }
    for a in &r.organs {
        match a.size_class {
            SizeClass::Large => out.push(format!("Enlarged {}.", a.organ)),
            SizeClass::Massive => out.push(format!("Massively enlarged {}.", a.organ)),
            SizeClass::Normal => {}
        }
        if a.fatty_liver == Some(true) {
            out.push("Fatty liver.".into());
        }
        if a.fatty_pancreas == Some(true) {
            out.push("Fatty pancreas.".into());
        }
    }
    if out.is_empty() {
        out.push("No tumor detected.".into());
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}
