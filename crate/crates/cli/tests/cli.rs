use segreport::measurement::split_instances;
use segreport::organ::Organ;
use segreport::phantom::{generate, scenario};
use segreport::report::{build_report, to_json, CaseInputs, ReportOptions};
use segreport::volume::{load_mask, save_mask, Dims, Mask, Spacing};
use serde_json::Value;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_segreport"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn make_phantom(name: &str, dir: &Path) -> PathBuf {
    let out = dir.join(name);
    let o = run(&["phantom", name, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn mm() -> Spacing {
    Spacing::isotropic(1.0)
}

#[test]
fn t4_phantom_report_is_t4() {
    let dir = tempfile::tempdir().unwrap();
    let case = make_phantom("t4_encasement", dir.path());
    let out = dir.path().join("out");
    let o = run(&["report", s(&case), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["failed"], 0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(out.join("t4_encasement.report.json")).unwrap()).unwrap();
    assert_eq!(r["pdac_stage"]["stage"], "T4");
    let txt = std::fs::read_to_string(out.join("t4_encasement.report.txt")).unwrap();
    assert!(txt.contains("Stage T4"));
}

#[test]
fn control_report_is_unremarkable() {
    let dir = tempfile::tempdir().unwrap();
    let case = make_phantom("control", dir.path());
    let out = dir.path().join("out");
    let o = run(&["report", s(&case.join("manifest.json")), "--out", s(&out), "--mode", "automated"]);
    assert_eq!(code(&o), 0);
    let txt = std::fs::read_to_string(out.join("control.report.txt")).unwrap();
    for organ in ["Liver", "Pancreas", "Kidneys"] {
        assert!(txt.contains(&format!("{organ}: unremarkable.")), "{organ} line in:\n{txt}");
    }
    let r: Value = serde_json::from_str(&std::fs::read_to_string(out.join("control.report.json")).unwrap()).unwrap();
    assert!(r["findings"].as_array().unwrap().is_empty());
    assert!(r["pdac_stage"].is_null());
}

#[test]
fn missing_mask_file_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let case = make_phantom("liver_small", dir.path());
    let gone = case.join("masks").join("spleen.nii.gz");
    std::fs::remove_file(&gone).unwrap();
    let o = run(&["report", s(&case), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(s(&gone)), "stderr: {err}");
}

#[test]
fn batch_continues_past_a_bad_case() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch");
    make_phantom("liver_small", &batch);
    let bad = make_phantom("kidney_small", &batch);
    std::fs::remove_file(bad.join("ct.nii.gz")).unwrap();
    let out = dir.path().join("out");
    let o = run(&["report", s(&batch), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert_eq!(stdout_json(&o)["failed"], 1);
    assert!(out.join("liver_small.report.json").is_file());
}

#[test]
fn batch_output_does_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch");
    for n in ["pancreas_head", "liver_small", "kidney_large", "noisy_segmentation"] {
        make_phantom(n, &batch);
    }
    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("out{jobs}"));
        let o = run(&["report", s(&batch), "--out", s(&out), "--jobs", jobs, "--mode", "automated"]);
        assert_eq!(code(&o), 0);
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        assert_eq!(files.len(), 8);
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "jobs = 0\n").unwrap();
    let o = run(&["--config", s(&cfg), "phantom", "--list"]);
    assert_eq!(code(&o), 0, "--list ignores the config");
    let o = run(&["--config", s(&cfg), "measure", "x.nii"]);
    assert_eq!(code(&o), 2);
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = run(&["--config", s(&cfg), "measure", "x.nii"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn phantom_list_names_scenarios() {
    let o = run(&["phantom", "--list"]);
    let v = stdout_json(&o);
    let names: Vec<&str> = v["scenarios"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(names.contains(&"t4_encasement") && names.contains(&"desk_256"));
    assert_eq!(code(&run(&["phantom", "nope"])), 2);
}

#[test]
fn measure_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let m = Mask::from_fn(Dims::new(40, 40, 40), mm(), "t", |x, y, z| {
        (x as f64 - 20.0).powi(2) + (y as f64 - 20.0).powi(2) + (z as f64 - 20.0).powi(2) <= 100.0
    });
    let p = dir.path().join("sphere.nii.gz");
    save_mask(&m, &p).unwrap();
    let o = run(&["measure", s(&p)]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let inst = &v["instances"][0];
    assert_eq!(inst["D_cm"], 2.0);
    assert_eq!(inst["d_cm"], 2.0);
    assert!(inst.get("hu_mean").is_none());
}

#[test]
fn denoise_salt_mask_is_subset() {
    let dir = tempfile::tempdir().unwrap();
    let case = make_phantom("noisy_segmentation", dir.path());
    let input = case.join("masks").join("liver_tumor.nii.gz");
    let out = dir.path().join("clean.nii.gz");
    let o = run(&["denoise", s(&input), "--organ", "liver", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["subset"], true);
    assert_eq!(v["present"], true);
    assert!(v["output_voxels"].as_u64() < v["input_voxels"].as_u64());
    let a = load_mask(&input, "a").unwrap();
    let b = load_mask(&out, "b").unwrap();
    assert!(b.is_subset_of(&a));
    assert_eq!(split_instances(&b, Organ::Liver).len(), 1);
}

#[test]
fn subsegment_straight_pancreas_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let d = Dims::new(120, 100, 40);
    let p = Mask::from_fn(d, mm(), "p", |x, y, z| {
        (15..=105).contains(&x) && (y as f64 - 60.0).powi(2) + (z as f64 - 20.0).powi(2) <= 36.0
    });
    let sma = Mask::from_fn(d, mm(), "s", |x, y, z| {
        (x as f64 - 45.0).powi(2) + (y as f64 - 68.0).powi(2) <= 6.25 && z >= 5
    });
    let (pp, sp) = (dir.path().join("p.nii.gz"), dir.path().join("s.nii.gz"));
    save_mask(&p, &pp).unwrap();
    save_mask(&sma, &sp).unwrap();
    let out = dir.path().join("parts");
    let o = run(&["subsegment", s(&pp), s(&sp), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let parts: Vec<Mask> = ["head", "body", "tail"]
        .iter()
        .map(|n| load_mask(out.join(format!("pancreas_{n}.nii.gz")), *n).unwrap())
        .collect();
    let union = parts[0].or(&parts[1]).or(&parts[2]);
    assert_eq!(union.bits(), p.bits());
    assert_eq!(parts.iter().map(Mask::count).sum::<usize>(), p.count());
}

#[test]
fn stage_subcommand_reports_encasement() {
    let dir = tempfile::tempdir().unwrap();
    let case = make_phantom("t4_encasement", dir.path());
    let m = |n: &str| case.join("masks").join(format!("{n}.nii.gz"));
    let o = run(&["stage", s(&m("pancreas_tumor")), "--sma", s(&m("SMA")), "--ca", s(&m("CA"))]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["stage"], "T4");
    assert!(v["contacts"][0]["max_angle_deg"].as_f64().unwrap() >= 350.0);
}

// ---- evaluation

/// (case id, truth labels, largest truth size, predicted labels)
type EvalRow<'a> = (String, [&'a str; 3], Option<f64>, [&'a str; 3]);

fn write_eval(dir: &Path, rows: &[EvalRow]) -> (PathBuf, PathBuf) {
    let truth = dir.join("truth.csv");
    let pred = dir.join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    let mut csv = String::from("case_id,liver,kidney,pancreas,liver_cm,kidney_cm,pancreas_cm\n");
    for (id, t, size, p) in rows {
        let sz = size.map(|v| v.to_string()).unwrap_or_default();
        csv.push_str(&format!("{id},{},{},{},{sz},,\n", t[0], t[1], t[2]));
        std::fs::write(
            pred.join(format!("{id}.labels.txt")),
            format!("liver tumor presence={}; kidney tumor presence={}; pancreas tumor presence={}.", p[0], p[1], p[2]),
        )
        .unwrap();
    }
    std::fs::write(&truth, csv).unwrap();
    (truth, pred)
}

#[test]
fn evaluate_reproduces_detection_counts() {
    // liver column: 269/301 large, 113/142 small, 179/244 negatives
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    for (hit, total, size) in [(269, 301, 3.0), (113, 142, 1.0)] {
        for i in 0..total {
            let p = if i < hit { "yes" } else { "no" };
            rows.push((format!("p{size}_{i}"), ["yes", "no", "no"], Some(size), [p, "no", "no"]));
        }
    }
    for i in 0..244 {
        let p = if i < 179 { "no" } else { "yes" };
        rows.push((format!("n{i}"), ["no", "no", "no"], None, [p, "no", "no"]));
    }
    let (truth, pred) = write_eval(dir.path(), &rows);
    let out = dir.path().join("m");
    let o = run(&["evaluate", "--truth", s(&truth), "--pred", s(&pred), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(std::fs::read_to_string(out.join("metrics.csv")).unwrap(), table);
    let line = |organ: &str, stratum: &str| {
        table
            .lines()
            .find(|l| l.starts_with(&format!("{organ},{stratum},")))
            .unwrap_or_else(|| panic!("{organ}/{stratum} missing in\n{table}"))
            .split(',')
            .map(str::to_string)
            .collect::<Vec<_>>()
    };
    let large = line("liver", "large");
    assert_eq!((large[6].as_str(), large[7].as_str()), ("89.4", "73.4"));
    assert_eq!(line("liver", "small")[6], "79.6");
    // no kidney positives at all
    let k = line("kidney", "all");
    assert_eq!(k[6], "NA");
    assert_eq!(k[7], "100.0");
}

#[test]
fn evaluate_misaligned_or_empty_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![
        ("a".to_string(), ["yes", "no", "no"], Some(1.0), ["yes", "no", "no"]),
        ("b".to_string(), ["no", "no", "no"], None, ["no", "no", "no"]),
    ];
    let (truth, pred) = write_eval(dir.path(), &rows);
    std::fs::remove_file(pred.join("b.labels.txt")).unwrap();
    let o = run(&["evaluate", "--truth", s(&truth), "--pred", s(&pred)]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"b\""));
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = run(&["evaluate", "--truth", s(&truth), "--pred", s(&empty)]);
    assert_eq!(code(&o), 5);
}

#[test]
fn evaluate_reads_report_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let case = make_phantom("pancreas_small", dir.path());
    let pred = dir.path().join("pred");
    let o = run(&["report", s(&case), "--out", s(&pred)]);
    assert_eq!(code(&o), 0);
    let truth = dir.path().join("t.csv");
    std::fs::write(&truth, "case_id,liver,kidney,pancreas\npancreas_small,no,no,yes\n").unwrap();
    let o = run(&["evaluate", "--truth", s(&truth), "--pred", s(&pred)]);
    assert_eq!(code(&o), 0);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("pancreas,all,1,0,0,0,100.0,NA,100.0"), "{table}");
}

// ---- narrative and fusion against a mock chat server

/// Serves chat completions: label prompts (those with a system message)
/// get `labels`, everything else gets `writer`.
fn mock_chat(writer: &'static str, labels: &'static str) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { return };
            h.fetch_add(1, Ordering::SeqCst);
            std::thread::spawn(move || {
                let mut r = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    if r.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                r.read_exact(&mut body).unwrap();
                let req: Value = serde_json::from_slice(&body).unwrap();
                let content = if req["messages"][0]["role"] == "system" { labels } else { writer };
                let resp = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}",
                    resp.len()
                );
            });
        }
    });
    (format!("http://{addr}/v1"), hits)
}

struct ChatFixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    report: PathBuf,
    examples: PathBuf,
}

fn chat_fixture(url: &str, example_labels: &str) -> ChatFixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("c.toml");
    std::fs::write(
        &config,
        format!("[chat]\nbase_url = \"{url}\"\nmodel = \"mock\"\ntimeout_secs = 5.0\nmax_retries = 0\n"),
    )
    .unwrap();
    let p = generate(&scenario("pancreas_small").unwrap()).unwrap();
    let inputs = CaseInputs {
        case_id: "case7".into(),
        volume: p.volume,
        masks: p.masks,
        contrast_phase: None,
    };
    let report = root.join("case7.report.json");
    std::fs::write(&report, to_json(&build_report(&inputs, &ReportOptions::default()).unwrap())).unwrap();
    let examples = root.join("examples");
    std::fs::create_dir(&examples).unwrap();
    std::fs::write(examples.join("labels.csv"), format!("id,liver,kidney,pancreas\nex1,{example_labels}\nex2,yes,no,no\n")).unwrap();
    std::fs::write(examples.join("ex1.txt"), "IMPRESSION: Hypodense mass in the pancreatic tail.").unwrap();
    std::fs::write(examples.join("ex2.txt"), "IMPRESSION: Liver lesion.").unwrap();
    ChatFixture {
        _dir: dir,
        root,
        config,
        report,
        examples,
    }
}

const NARRATIVE: &str = "#start\nFINDINGS: 1.6 cm hypoattenuating mass in the pancreatic tail.\n#end\nJustification: from PDAC 1.";
const PANCREAS_ONLY: &str = "liver tumor presence=no; kidney tumor presence=no; pancreas tumor presence=yes";

#[test]
fn narrative_written_when_consistent() {
    let (url, hits) = mock_chat(NARRATIVE, PANCREAS_ONLY);
    let f = chat_fixture(&url, "no,no,yes");
    let out = f.root.join("out");
    let o = run(&["--config", s(&f.config), "narrative", s(&f.report), "--examples", s(&f.examples), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["reprompts"], 0);
    assert_eq!(v["examples"], serde_json::json!(["ex1"]));
    let text = std::fs::read_to_string(out.join("case7.narrative.txt")).unwrap();
    assert_eq!(text, "FINDINGS: 1.6 cm hypoattenuating mass in the pancreatic tail.\n");
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn narrative_without_examples_exits_4() {
    let (url, hits) = mock_chat(NARRATIVE, PANCREAS_ONLY);
    let f = chat_fixture(&url, "no,yes,no");
    let o = run(&["--config", s(&f.config), "narrative", s(&f.report), "--examples", s(&f.examples), "--out", s(&f.root)]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no style examples for label set"));
    assert_eq!(hits.load(Ordering::SeqCst), 0);
}

#[test]
fn narrative_inconsistent_twice_exits_3() {
    let (url, hits) = mock_chat(NARRATIVE, "liver tumor presence=no; kidney tumor presence=no; pancreas tumor presence=no");
    let f = chat_fixture(&url, "no,no,yes");
    let o = run(&["--config", s(&f.config), "narrative", s(&f.report), "--examples", s(&f.examples), "--out", s(&f.root)]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("pancreas: report yes, narrative no"), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 4);
    assert!(!f.root.join("case7.narrative.txt").exists());
}

#[test]
fn unreachable_endpoint_exits_6() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);
    let f = chat_fixture(&url, "no,no,yes");
    let o = run(&["--config", s(&f.config), "narrative", s(&f.report), "--examples", s(&f.examples), "--out", s(&f.root)]);
    assert_eq!(code(&o), 6);
}

#[test]
fn fuse_writes_merged_report() {
    let (url, _) = mock_chat("#start\nMerged report with cirrhosis noted.\n#end", PANCREAS_ONLY);
    let f = chat_fixture(&url, "no,no,yes");
    let notes = f.root.join("notes.txt");
    std::fs::write(&notes, "Cirrhotic liver.").unwrap();
    let o = run(&["--config", s(&f.config), "fuse", s(&f.report), "--notes", s(&notes), "--out", s(&f.root)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(f.root.join("case7.fused.txt")).unwrap(),
        "Merged report with cirrhosis noted.\n"
    );
}
