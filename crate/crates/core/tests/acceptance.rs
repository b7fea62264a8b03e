//! Acceptance checks, one line per criterion.
//!
//! Runs without the test harness so the lines always show:
//! `cargo test -p segreport --test acceptance`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segreport::diagnostics::*;
use segreport::evaluation::*;
use segreport::measurement::{measure_who, slice_diameters, split_instances, TumorInstance};
use segreport::organ::Organ;
use segreport::phantom::{generate, scenario, Shape, SCENARIOS};
use segreport::postprocess::{denoise, tumor_present, OrganThresholds};
use segreport::report::{build_report, from_json, to_json, CaseInputs, GenerationMode, ReportOptions};
use segreport::staging::{size_stage, stage_pdac, TStage, Vessel, VesselContact};
use segreport::subsegment::{subsegment_pancreas, PancreasSubsegments};
use segreport::textgen::{build_fusion_prompt, build_label_prompt, build_style_prompt};
use segreport::volume::{jaccard, load_mask, load_volume, save_mask, save_volume, Dims, Mask, Spacing};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Relative tolerance on D and d against analytic sizes.
const SIZE_TOL: f64 = 0.07;
/// Border-voxel count up to which the O(n²) oracle is run per slice.
const ORACLE_MAX_BORDER: usize = 400;
const MEASURE_BUDGET: Duration = Duration::from_secs(2);
const T4_MIN_ANGLE: f64 = 350.0;
const PLANE_TOL_VOXELS: i64 = 1;
const ROTATION_MIN_JACCARD: f64 = 0.95;
const RANDOM_MASKS: usize = 1000;
const METRIC_TOL_PP: f64 = 0.1;
const REPORT_BUDGET: Duration = Duration::from_secs(30);

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mm() -> Spacing {
    Spacing::isotropic(1.0)
}

fn case(name: &str) -> CaseInputs {
    let p = generate(&scenario(name).expect("scenario")).expect("phantom");
    CaseInputs {
        case_id: name.into(),
        volume: p.volume,
        masks: p.masks,
        contrast_phase: None,
    }
}

fn shape_mask(shape: &Shape, dims: Dims) -> Mask {
    Mask::from_fn(dims, mm(), "tumor", |x, y, z| shape.contains([x as f64, y as f64, z as f64]))
}

/// Slice border by definition: foreground pixels with a background (or
/// off-grid) pixel among their eight neighbors.
fn oracle_border(m: &Mask, z: usize) -> Vec<[i64; 2]> {
    let d = m.dims();
    let fg = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < d.nx && (y as usize) < d.ny && m.get(x as usize, y as usize, z);
    let mut out = Vec::new();
    for y in 0..d.ny as i64 {
        for x in 0..d.nx as i64 {
            if fg(x, y) && (-1..=1).any(|dy| (-1..=1).any(|dx| !fg(x + dx, y + dy))) {
                out.push([x, y]);
            }
        }
    }
    out
}

fn oracle_max_d2(pts: &[[i64; 2]]) -> i64 {
    let mut best = 0;
    for a in pts {
        for b in pts {
            best = best.max((a[0] - b[0]).pow(2) + (a[1] - b[1]).pow(2));
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let mut shapes: Vec<(String, [f64; 3], f64)> = [5.0, 10.0, 20.0, 30.0]
        .iter()
        .map(|r| (format!("sphere r={r}"), [*r; 3], 0.0))
        .collect();
    for axes in [[15.0, 5.0, 8.0], [24.0, 8.0, 12.0], [20.0, 10.0, 10.0], [12.0, 8.0, 8.0]] {
        for rot in [0.0, 30.0, 60.0] {
            shapes.push((format!("ellipsoid {axes:?} rot {rot}"), axes, rot));
        }
    }
    let mut worst: f64 = 0.0;
    let mut slices_checked = 0;
    for (name, axes, rot) in &shapes {
        let ext = axes[0].max(axes[1]).max(axes[2]).ceil() as usize;
        let n = 2 * ext + 9;
        let c = (n / 2) as f64;
        let shape = Shape::Ellipsoid {
            center: [c; 3],
            semi_axes: *axes,
            rotation_z_deg: *rot,
        };
        let m = shape_mask(&shape, Dims::new(n, n, n));
        let inst = TumorInstance::from_mask(&m, Organ::Liver, 1);
        let who = measure_who(&inst, mm()).map_err(|e| format!("{name}: {e}"))?;
        let (d_true, s_true) = (2.0 * axes[0].max(axes[1]), 2.0 * axes[0].min(axes[1]));
        let e_long = (who.long_axis_mm - d_true).abs() / d_true;
        let e_short = (who.short_axis_mm - s_true).abs() / s_true;
        worst = worst.max(e_long).max(e_short);
        ensure(e_long <= SIZE_TOL && e_short <= SIZE_TOL, || {
            format!(
                "{name}: D {:.2} vs {d_true}, d {:.2} vs {s_true}",
                who.long_axis_mm, who.short_axis_mm
            )
        })?;
        for s in slice_diameters(&inst, mm()) {
            let border = oracle_border(&m, s.k);
            if border.len() > ORACLE_MAX_BORDER {
                continue;
            }
            ensure(border.len() == s.border_points, || format!("{name} slice {}: border size differs", s.k))?;
            let d2 = oracle_max_d2(&border);
            ensure(d2 == s.diameter_sq, || {
                format!("{name} slice {}: diameter² {} vs oracle {d2}", s.k, s.diameter_sq)
            })?;
            slices_checked += 1;
        }
    }
    // runtime on a 256³ grid
    let big = shape_mask(&Shape::ellipsoid([128.0; 3], [30.0, 20.0, 25.0]), Dims::new(256, 256, 256));
    let t = Instant::now();
    let inst = split_instances(&big, Organ::Liver).remove(0);
    let who = measure_who(&inst, mm()).map_err(|e| e.to_string())?;
    let el = t.elapsed();
    ensure(el < MEASURE_BUDGET, || format!("256³ instance took {el:?}"))?;
    ensure((who.long_axis_mm - 60.0).abs() / 60.0 <= SIZE_TOL, || format!("256³ D {}", who.long_axis_mm))?;
    Ok(format!(
        "{} shapes within {:.1}% (worst {:.2}%), {slices_checked} slices equal to brute force, 256³ instance in {:.0} ms",
        shapes.len(),
        SIZE_TOL * 100.0,
        worst * 100.0,
        el.as_secs_f64() * 1000.0
    ))
}

fn expected_stage(tenths: i64, angle: i64, critical: bool) -> TStage {
    if critical && angle >= 180 {
        return TStage::T4;
    }
    match tenths {
        ..=5 => TStage::T1a,
        6..=10 => TStage::T1b,
        11..=20 => TStage::T1c,
        21..=40 => TStage::T2,
        _ => TStage::T3,
    }
}

fn criterion_2() -> Outcome {
    let mut checked = 0;
    for tenths in 1..=80i64 {
        let d = tenths as f64 / 10.0;
        let meas = segreport::measurement::TumorMeasurement {
            long_axis_cm: d,
            short_axis_cm: d / 2.0,
            long_axis_mm: d * 10.0,
            short_axis_mm: d * 5.0,
            slice_index: 0,
            volume_cm3: 1.0,
            hu_mean: 40.0,
            hu_std: 10.0,
            voxels: 1,
        };
        ensure(size_stage(d) == expected_stage(tenths, 0, false), || format!("size_stage({d})"))?;
        for angle in 0..=360i64 {
            for vessel in [Vessel::Sma, Vessel::Ca, Vessel::Cha, Vessel::Sa] {
                let contact = if angle == 0 {
                    VesselContact::none(vessel)
                } else {
                    VesselContact::with_angle(vessel, angle as f64)
                };
                let got = stage_pdac(Some(&meas), &[contact]).map_err(|e| e.to_string())?.stage;
                let want = expected_stage(tenths, angle, vessel.is_critical());
                ensure(got == want, || format!("D {d} cm, {vessel} {angle}°: {got} vs {want}"))?;
                checked += 1;
            }
        }
    }
    let opts = ReportOptions::default();
    let r = build_report(&case("t4_encasement"), &opts).map_err(|e| e.to_string())?;
    let st = r.pdac_stage.ok_or("t4_encasement has no stage")?;
    let angle = st
        .contacts
        .iter()
        .filter(|c| c.vessel.is_critical())
        .filter_map(|c| c.max_angle_deg)
        .fold(0.0, f64::max);
    ensure(st.stage == TStage::T4 && angle >= T4_MIN_ANGLE, || format!("t4_encasement: {} at {angle}°", st.stage))?;
    let mut buckets = Vec::new();
    for name in ["t1a", "t1b", "t1c", "t2", "t3"] {
        let p = generate(&scenario(name).unwrap()).unwrap();
        let want = p.truth.expected_stage.ok_or("no expected stage")?;
        let c = CaseInputs {
            case_id: name.into(),
            volume: p.volume,
            masks: p.masks,
            contrast_phase: None,
        };
        let r = build_report(&c, &opts).map_err(|e| e.to_string())?;
        let got = r.pdac_stage.ok_or(format!("{name}: no stage"))?;
        ensure(got.stage == want, || format!("{name}: {} vs expected {want} ({})", got.stage, got.justification))?;
        ensure(got.contacts.iter().all(|c| !c.contact), || format!("{name}: unexpected vessel contact"))?;
        buckets.push(format!("{name}={}", got.stage));
    }
    Ok(format!(
        "{checked} (size, angle, vessel) cases match; t4_encasement T4 at {angle:.0}°; {}",
        buckets.join(" ")
    ))
}

fn assert_partition(s: &PancreasSubsegments, p: &Mask, what: &str) -> Result<(), String> {
    let u = s.head.or(&s.body).or(&s.tail);
    ensure(u.bits() == p.bits(), || format!("{what}: union differs from pancreas"))?;
    let overlap = s.head.intersection_count(&s.body) + s.head.intersection_count(&s.tail) + s.body.intersection_count(&s.tail);
    ensure(overlap == 0, || format!("{what}: {overlap} shared voxels"))
}

/// Straight pancreas tube along x over [15, 105] mm with the SMA at x = 45,
/// optionally rotated in-plane about (60, 60).
fn straight(dims: Dims, rot_deg: f64) -> (Mask, Mask) {
    let (sn, cs) = rot_deg.to_radians().sin_cos();
    let unrot = |x: usize, y: usize| {
        let (px, py) = (x as f64 - 60.0, y as f64 - 60.0);
        (cs * px + sn * py + 60.0, -sn * px + cs * py + 60.0)
    };
    let pancreas = Mask::from_fn(dims, mm(), "pancreas", |x, y, z| {
        let (u, v) = unrot(x, y);
        (15.0..=105.0).contains(&(u + 1e-9)) && (v - 60.0).powi(2) + (z as f64 - 20.0).powi(2) <= 36.0
    });
    let sma = Mask::from_fn(dims, mm(), "SMA", |x, y, z| {
        let (u, v) = unrot(x, y);
        (u - 45.0).powi(2) + (v - 68.0).powi(2) <= 6.25 && z >= 5
    });
    (pancreas, sma)
}

fn criterion_3() -> Outcome {
    let mut n = 0;
    for name in SCENARIOS {
        let p = generate(&scenario(name).unwrap()).unwrap();
        let s = subsegment_pancreas(&p.masks["pancreas"], &p.masks["SMA"]).map_err(|e| format!("{name}: {e}"))?;
        assert_partition(&s, &p.masks["pancreas"], name)?;
        n += 1;
    }
    // axis-aligned planes: head/body at the SMA, body/tail halfway to the tail tip
    let mut planes = Vec::new();
    let (p, sma) = straight(Dims::new(120, 100, 40), 0.0);
    let s = subsegment_pancreas(&p, &sma).map_err(|e| e.to_string())?;
    let hi_x = |m: &Mask| m.bounding_box().map(|b| b.1[0] as i64).unwrap_or(-1);
    planes.push(("straight", hi_x(&s.head), 45, hi_x(&s.body), 75));
    let ctl = generate(&scenario("control").unwrap()).unwrap();
    let s = subsegment_pancreas(&ctl.masks["pancreas"], &ctl.masks["SMA"]).map_err(|e| e.to_string())?;
    // pancreas spans x in [68, 158]; SMA axis at x = 100
    planes.push(("control", hi_x(&s.head), 100, hi_x(&s.body), 129));
    for (what, head, head_want, body, body_want) in &planes {
        ensure((head - head_want).abs() <= PLANE_TOL_VOXELS && (body - body_want).abs() <= PLANE_TOL_VOXELS, || {
            format!("{what}: head ends at {head} (want {head_want}), body at {body} (want {body_want})")
        })?;
    }
    // rotation equivariance at 45°
    let dims = Dims::new(120, 120, 40);
    let (p0, s0) = straight(dims, 0.0);
    let (p45, s45) = straight(dims, 45.0);
    let a = subsegment_pancreas(&p0, &s0).map_err(|e| e.to_string())?;
    let b = subsegment_pancreas(&p45, &s45).map_err(|e| e.to_string())?;
    assert_partition(&b, &p45, "rotated")?;
    let (sn, cs) = 45f64.to_radians().sin_cos();
    let segs = [&a.head, &a.body, &a.tail];
    let mut carried = [p45.empty_like("h"), p45.empty_like("b"), p45.empty_like("t")];
    for i in p45.indices() {
        let [x, y, z] = dims.coords(i);
        let (px, py) = (x as f64 - 60.0, y as f64 - 60.0);
        let (ux, uy) = (cs * px + sn * py + 60.0, -sn * px + cs * py + 60.0);
        let mut best: Option<(f64, usize)> = None;
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let (cx, cy) = (ux.round() as i64 + dx, uy.round() as i64 + dy);
                let Some(j) = dims.checked_index(cx, cy, z as i64) else { continue };
                if let Some(l) = segs.iter().position(|m| m.bits()[j]) {
                    let d2 = (cx as f64 - ux).powi(2) + (cy as f64 - uy).powi(2);
                    if best.is_none_or(|(bd, _)| d2 < bd) {
                        best = Some((d2, l));
                    }
                }
            }
        }
        let (_, l) = best.ok_or("rotated voxel has no unrotated neighbor")?;
        carried[l].set(x, y, z, true);
    }
    let js: Vec<f64> = carried.iter().zip([&b.head, &b.body, &b.tail]).map(|(c, m)| jaccard(c, m)).collect();
    ensure(js.iter().all(|j| *j >= ROTATION_MIN_JACCARD), || format!("45° Jaccard {js:?}"))?;
    Ok(format!(
        "{n} phantoms partition exactly; planes {}; 45° Jaccard head/body/tail {:.3}/{:.3}/{:.3}",
        planes
            .iter()
            .map(|(w, h, hw, b, bw)| format!("{w} {h}/{hw} {b}/{bw}"))
            .collect::<Vec<_>>()
            .join(", "),
        js[0],
        js[1],
        js[2]
    ))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..RANDOM_MASKS {
        let d = Dims::new(rng.random_range(4..14), rng.random_range(4..14), rng.random_range(4..14));
        let p: f64 = rng.random_range(0.05..0.95);
        let bits: Vec<bool> = (0..d.len()).map(|_| rng.random_bool(p)).collect();
        let m = Mask::new(d, mm(), bits, "r").unwrap();
        ensure(denoise(&m).is_subset_of(&m), || format!("random mask {k} not a subset"))?;
    }
    // cubes with isolated voxels and 2³ clusters scattered around them
    for k in 0..50 {
        let d = Dims::new(40, 40, 40);
        let o = [rng.random_range(1..29), rng.random_range(1..29), rng.random_range(1..29)];
        let cube = Mask::from_fn(d, mm(), "c", |x, y, z| [x, y, z].iter().zip(o).all(|(c, lo)| (lo..lo + 10).contains(c)));
        let mut noisy = cube.clone();
        let mut taken = cube.clone();
        let mut placed = 0;
        while placed < 12 {
            let size = if placed % 2 == 0 { 1 } else { 2 };
            let p = [rng.random_range(0..39), rng.random_range(0..39), rng.random_range(0..39)];
            // keep a two-voxel gap to everything placed so far
            let near = (0..size + 4).any(|dz| {
                (0..size + 4).any(|dy| {
                    (0..size + 4).any(|dx| {
                        d.checked_index(p[0] as i64 + dx as i64 - 2, p[1] as i64 + dy as i64 - 2, p[2] as i64 + dz as i64 - 2)
                            .is_some_and(|j| taken.bits()[j])
                    })
                })
            });
            if near || p.iter().any(|c| c + size > 40) {
                continue;
            }
            for dz in 0..size {
                for dy in 0..size {
                    for dx in 0..size {
                        noisy.set(p[0] + dx, p[1] + dy, p[2] + dz, true);
                        taken.set(p[0] + dx, p[1] + dy, p[2] + dz, true);
                    }
                }
            }
            placed += 1;
        }
        ensure(cube.count() == 1000, || format!("case {k}: cube has {} voxels", cube.count()))?;
        ensure(denoise(&noisy) == cube, || format!("case {k}: denoise did not return the cube"))?;
    }
    let th = OrganThresholds::default();
    let line = |n: usize| Mask::from_fn(Dims::new(20, 20, 1), mm(), "t", move |x, y, _| x + 20 * y < n);
    let gate = |n: usize, organ: &str| tumor_present(&line(n), organ, &th).unwrap();
    let checks = [
        (gate(2, "pancreas"), true, "2 mm³ pancreas"),
        (gate(1, "pancreas"), false, "1 mm³ pancreas"),
        (gate(100, "kidney"), false, "100 mm³ kidney"),
        (gate(150, "kidney"), false, "150 mm³ kidney"),
        (gate(151, "kidney"), true, "151 mm³ kidney"),
        (gate(100, "liver"), false, "100 mm³ liver"),
        (gate(101, "liver"), true, "101 mm³ liver"),
        (gate(50, "metastases"), false, "50 mm³ metastases"),
        (gate(51, "metastases"), true, "51 mm³ metastases"),
    ];
    for (got, want, what) in checks {
        ensure(got == want, || format!("{what}: present={got}"))?;
    }
    Ok(format!(
        "{RANDOM_MASKS} random masks anti-extensive; 50 noisy 10³ cubes restored exactly; {} threshold cases",
        checks.len()
    ))
}

/// (column, sensitivity large, sensitivity small, specificity) as printed.
const DETECTION_COUNTS: [(&str, (u64, u64, f64), (u64, u64, f64), (u64, u64, f64)); 4] = [
    ("liver", (269, 301, 89.4), (113, 142, 79.6), (179, 244, 73.4)),
    ("kidney", (213, 219, 97.3), (46, 50, 92.0), (191, 244, 78.3)),
    ("pancreas", (96, 105, 91.4), (296, 385, 76.9), (187, 244, 76.6)),
    ("metastases", (58, 58, 100.0), (21, 21, 100.0), (111, 158, 70.3)),
];

fn criterion_5() -> Outcome {
    let mut cells = 0;
    for (col, large, small, spec) in DETECTION_COUNTS {
        // synthetic cohort: positives carry a size, negatives none
        let y = TumorLabels::new(Label::Yes, Label::No, Label::No);
        let n = TumorLabels::new(Label::No, Label::No, Label::No);
        let (mut pred, mut truth, mut size) = (Vec::new(), Vec::new(), Vec::new());
        for (hit, total, d) in [(large.0, large.1, 3.0), (small.0, small.1, 1.5)] {
            for i in 0..total {
                truth.push(y);
                pred.push(if i < hit { y } else { n });
                size.push(Some(d));
            }
        }
        for i in 0..spec.1 {
            truth.push(n);
            pred.push(if i < spec.0 { n } else { y });
            size.push(None);
        }
        let rows = evaluate_organ(&pred, &truth, &size, Organ::Liver, UncertainPolicy::Drop, 2.0).map_err(|e| e.to_string())?;
        let get = |s: Stratum| rows.iter().find(|r| r.stratum == s).unwrap().scores;
        for (stratum, (num, den, printed)) in [(Stratum::Large, large), (Stratum::Small, small)] {
            let sc = get(stratum);
            ensure(sc.matrix.tp == num && sc.matrix.tp + sc.matrix.fn_ == den, || format!("{col} {stratum:?} counts"))?;
            let got = percent(sc.sensitivity.ok_or("undefined sensitivity")?);
            ensure((got - printed).abs() <= METRIC_TOL_PP, || format!("{col} {stratum:?} sensitivity {got} vs {printed}"))?;
            let sp = percent(sc.specificity.ok_or("undefined specificity")?);
            ensure((sp - spec.2).abs() <= METRIC_TOL_PP, || format!("{col} {stratum:?} specificity {sp} vs {}", spec.2))?;
            cells += 2;
        }
    }
    Ok(format!("{cells} sensitivity/specificity cells reproduced within {METRIC_TOL_PP} pp"))
}

fn criterion_6() -> Outcome {
    let th = DiagnosticThresholds::default();
    let up = |x: f64| f64::from_bits(x.to_bits() + 1);
    let down = |x: f64| f64::from_bits(x.to_bits() - 1);
    let mut n = 0;
    let mut check = |cond: bool, what: &str| -> Result<(), String> {
        n += 1;
        ensure(cond, || what.to_string())
    };
    check(assess_fatty_liver(down(40.0), &th), "39.99.. HU fatty")?;
    check(!assess_fatty_liver(40.0, &th), "40 HU not fatty")?;
    check(!assess_fatty_liver(up(40.0), &th), "40.0..1 HU not fatty")?;
    let fp = |p: f64, s: f64| assess_fatty_pancreas(p, Some(s), &th).unwrap();
    check(fp(35.0 - 1e-9, 50.0), "ratio just under 0.7 fatty")?;
    check(!fp(35.0, 50.0), "ratio 0.7 not fatty")?;
    check(!fp(35.0 + 1e-9, 50.0), "ratio above 0.7 not fatty")?;
    check(fp(30.0, 50.0), "ratio 0.6 fatty")?;
    check(assess_fatty_pancreas(30.0, Some(0.0), &th).is_err(), "zero spleen errors")?;
    let size = |o: &str, v: f64| classify_organ_size(o, v, &th).unwrap();
    for (organ, limit, above) in [
        ("spleen", 314.5, SizeClass::Large),
        ("spleen", 430.8, SizeClass::Massive),
        ("kidney", 415.2 / 2.0, SizeClass::Large),
        ("liver", 3000.0, SizeClass::Large),
        ("pancreas", 83.0, SizeClass::Large),
    ] {
        let below = if above == SizeClass::Massive { SizeClass::Large } else { SizeClass::Normal };
        check(size(organ, down(limit)) == below, &format!("{organ} just below {limit}"))?;
        check(size(organ, limit) == below, &format!("{organ} at {limit}"))?;
        check(size(organ, up(limit)) == above, &format!("{organ} just above {limit}"))?;
    }
    Ok(format!("{n} boundary checks on both sides of every threshold"))
}

fn criterion_7() -> Outcome {
    let opts = ReportOptions::default();
    let names = ["t4_encasement", "liver_24", "pancreas_head", "kidney_large"];
    let cases: Vec<CaseInputs> = names.iter().map(|n| case(n)).collect();
    let serial: Vec<String> = cases
        .iter()
        .map(|c| to_json(&build_report(c, &opts).expect("report")))
        .collect();
    let again: Vec<String> = cases
        .iter()
        .map(|c| to_json(&build_report(c, &opts).expect("report")))
        .collect();
    ensure(serial == again, || "two serial runs differ".into())?;
    let parallel: Vec<String> = std::thread::scope(|s| {
        let hs: Vec<_> = cases
            .iter()
            .map(|c| s.spawn(|| to_json(&build_report(c, &opts).expect("report"))))
            .collect();
        hs.into_iter().map(|h| h.join().expect("thread")).collect()
    });
    ensure(serial == parallel, || "parallel run differs from serial".into())?;
    for (n, j) in names.iter().zip(&serial) {
        let back = from_json(j).map_err(|e| format!("{n}: {e}"))?;
        ensure(&to_json(&back) == j, || format!("{n}: JSON round trip changed bytes"))?;
    }
    // NIfTI round trip
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let c = &cases[0];
    for ext in ["nii", "nii.gz"] {
        let vp = dir.path().join(format!("ct.{ext}"));
        save_volume(&c.volume, &vp).map_err(|e| e.to_string())?;
        let v = load_volume(&vp).map_err(|e| e.to_string())?;
        ensure(v.data() == c.volume.data() && v.dims() == c.volume.dims() && v.spacing() == c.volume.spacing(), || {
            format!("volume .{ext} round trip differs")
        })?;
        let mp = dir.path().join(format!("m.{ext}"));
        save_mask(&c.masks["pancreas_tumor"], &mp).map_err(|e| e.to_string())?;
        let m = load_mask(&mp, "pancreas_tumor").map_err(|e| e.to_string())?;
        ensure(m.bits() == c.masks["pancreas_tumor"].bits(), || format!("mask .{ext} round trip differs"))?;
    }
    // golden prompts
    let golden = |name: &str| std::fs::read_to_string(format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR")));
    let structured = "PDAC 1: Pancreatic body/tail. Hypoattenuating pancreas PDAC measuring 6.0 x 3.4 cm (centered on slice 356). Its mean HU value is 39.17 +/- 29.65, and its volume is 27.519 cm3.";
    let style = build_style_prompt(structured, &["FINDINGS: Liver normal.", "IMPRESSION: Pancreatic mass."]).unwrap().user;
    let fusion = build_fusion_prompt("Cirrhotic liver morphology.", structured).unwrap().user;
    let label = build_label_prompt(structured).unwrap().system.unwrap();
    for (file, got) in [("style_prompt.txt", &style), ("fusion_prompt.txt", &fusion), ("label_prompt.txt", &label)] {
        let want = golden(file).map_err(|e| format!("{file}: {e}"))?;
        ensure(&want == got, || format!("{file} differs from the assembled prompt"))?;
    }
    Ok(format!(
        "{} reports identical across runs and threads, JSON and NIfTI round trips exact, 3 golden prompts byte-equal",
        names.len()
    ))
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let big = case("desk_256");
    let gen = t.elapsed();
    let opts = ReportOptions {
        mode: GenerationMode::Automated,
        ..Default::default()
    };
    let t = Instant::now();
    let r = build_report(&big, &opts).map_err(|e| e.to_string())?;
    let _ = segreport::report::render_text(&r);
    let el = t.elapsed();
    ensure(el < REPORT_BUDGET, || format!("256³ report took {el:?}"))?;
    let big_liver = r.findings_for(Organ::Liver).count();
    ensure(big_liver == 24, || format!("256³ phantom: {big_liver} liver findings"))?;

    let spec = scenario("liver_24").unwrap();
    let p = generate(&spec).unwrap();
    let c = CaseInputs {
        case_id: "liver_24".into(),
        volume: p.volume,
        masks: p.masks,
        contrast_phase: None,
    };
    let r = build_report(&c, &ReportOptions::default()).map_err(|e| e.to_string())?;
    let found: Vec<_> = r.findings_for(Organ::Liver).collect();
    ensure(found.len() == 24, || format!("liver_24: {} findings", found.len()))?;
    let inst = split_instances(&c.masks["liver_tumor"], Organ::Liver);
    let mut worst: f64 = 0.0;
    // pair each truth lesion with the instance containing its center
    for t in &p.truth.tumors {
        let [x, y, z] = t.center.map(|v| v.round() as usize);
        let j = c.volume.dims().index(x, y, z);
        let k = inst
            .iter()
            .position(|i| i.grid_indices().any(|g| g == j))
            .ok_or("truth lesion without an instance")?;
        let m = measure_who(&inst[k], mm()).map_err(|e| e.to_string())?;
        let (dt, st) = (t.long_axis_cm * 10.0, t.short_axis_cm * 10.0);
        let e = ((m.long_axis_mm - dt).abs() / dt).max((m.short_axis_mm - st).abs() / st);
        worst = worst.max(e);
        ensure(e <= SIZE_TOL, || format!("lesion at {:?}: D {} d {} vs {dt} {st}", t.center, m.long_axis_mm, m.short_axis_mm))?;
    }
    Ok(format!(
        "256³ report in {:.1} s (phantom built in {:.1} s) with 24 liver findings; liver_24 sizes within {:.1}% (worst {:.2}%)",
        el.as_secs_f64(),
        gen.as_secs_f64(),
        SIZE_TOL * 100.0,
        worst * 100.0
    ))
}

fn criterion_9() -> Outcome {
    let combos: Vec<TumorLabels> = TumorLabels::all().collect();
    ensure(combos.len() == 27, || "expected 27 combinations".into())?;
    for l in &combos {
        let back = parse_labels(&format_labels(l)).map_err(|e| e.to_string())?;
        ensure(back == *l, || format!("{} did not round trip", format_labels(l)))?;
    }
    let th = OrganThresholds::default();
    let mut cases = 0;
    for name in SCENARIOS.iter().filter(|n| **n != "desk_256") {
        let c = case(name);
        for mode in [GenerationMode::GroundTruthMasks, GenerationMode::Automated] {
            let opts = ReportOptions {
                mode,
                ..Default::default()
            };
            let r = build_report(&c, &opts).map_err(|e| format!("{name}: {e}"))?;
            let labels = rule_label_structured(&r);
            for organ in Organ::ALL {
                let m = &c.masks[organ.tumor_mask_name()];
                let gate = match mode {
                    GenerationMode::Automated => tumor_present(&denoise(m), organ.name(), &th).unwrap(),
                    GenerationMode::GroundTruthMasks => !m.is_empty(),
                };
                let want = if gate { Label::Yes } else { Label::No };
                ensure(labels.get(organ) == want, || format!("{name} {mode:?} {organ}: {:?} vs gate {want:?}", labels.get(organ)))?;
            }
            cases += 1;
        }
    }
    Ok(format!("27 label combinations round-trip; rule labels match the presence gate on {cases} phantom runs"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "WHO measurement accuracy", criterion_1),
        (2, "staging decision table", criterion_2),
        (3, "pancreas sub-segmentation", criterion_3),
        (4, "noise reduction", criterion_4),
        (5, "metrics reproduce the detection table", criterion_5),
        (6, "diagnostic thresholds", criterion_6),
        (7, "determinism and round trips", criterion_7),
        (8, "end-to-end desk scale", criterion_8),
        (9, "labeler plumbing", criterion_9),
    ];
    let mut failed = Vec::new();
    for (n, title, f) in criteria {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("criterion {n} PASS ({title}, {secs:.1} s): {detail}"),
            Err(why) => {
                println!("criterion {n} FAIL ({title}, {secs:.1} s): {why}");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
