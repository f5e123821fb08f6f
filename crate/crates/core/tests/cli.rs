use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wiremark::signal::{read_results_csv, Signal};
use wiremark::synth::{generate, make_pair, SynthSpec};
use wiremark::x3p::{write_x3p, X3pMeta};
use wiremark::SurfaceMatrix;

fn wiremark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wiremark")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        h: 240,
        w: 180,
        angle_deg: 3.0,
        ..SynthSpec::default()
    }
}

fn write_scan(dir: &Path, name: &str, s: &SurfaceMatrix) -> PathBuf {
    let path = dir.join(format!("{name}.x3p"));
    write_x3p(s, &X3pMeta::for_surface(s), &path).unwrap();
    path
}

#[test]
fn process_writes_signal_report_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = generate(&small_spec(1)).unwrap();
    let scan = write_scan(dir.path(), "T1AW-LI-R1", &s);
    let out = dir.path().join("sig.csv");
    let dumps = dir.path().join("stages");
    let o = wiremark(&["process", p(&scan), "-o", p(&out), "--dump-stages", p(&dumps)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sig.report.json")).unwrap()).unwrap();
    let sig = Signal::load(&out).unwrap();
    assert_eq!(sig.len() as u64, report["orient"]["rotated_cols"].as_u64().unwrap());
    assert_eq!(report["input_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(report["params"]["margin_px"], 16);
    for key in ["boundary", "despike", "trend", "impute", "orient", "dewarp", "signal"] {
        assert!(!report[key].is_null(), "{key}");
    }
    let stage_files = fs::read_dir(&dumps)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with('0'))
        .count();
    assert_eq!(stage_files, 7);
}

#[test]
fn process_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = generate(&small_spec(2)).unwrap();
    let scan = write_scan(dir.path(), "scan", &s);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(wiremark(&["process", p(&scan), "-o", p(&a)]).status.success());
    assert!(wiremark(&["process", p(&scan), "-o", p(&b)]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.report.json")).unwrap(),
        fs::read(dir.path().join("b.report.json")).unwrap()
    );
}

#[test]
fn flags_override_the_params_file() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = generate(&small_spec(3)).unwrap();
    let scan = write_scan(dir.path(), "scan", &s);
    let params = dir.path().join("params.json");
    fs::write(&params, r#"{"margin_px": 10, "delta": 20}"#).unwrap();
    let out = dir.path().join("sig.csv");
    let o = wiremark(&["process", p(&scan), "-o", p(&out), "--params", p(&params), "--delta", "30"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sig.report.json")).unwrap()).unwrap();
    assert_eq!(report["params"]["margin_px"], 10);
    assert_eq!(report["params"]["delta"], 30);

    fs::write(&params, r#"{"margn_px": 10}"#).unwrap();
    let o = wiremark(&["process", p(&scan), "-o", p(&out), "--params", p(&params)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupt_input_exits_2_and_pipeline_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.x3p");
    fs::write(&bad, b"this is not a zip archive").unwrap();
    let o = wiremark(&["process", p(&bad), "-o", p(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.x3p"));

    let empty = SurfaceMatrix::missing(30, 30, 0.645, 0.645).unwrap();
    let scan = write_scan(dir.path(), "empty", &empty);
    let o = wiremark(&["process", p(&scan), "-o", p(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("boundary stage"));
}

#[test]
fn compare_self_and_shifted_copy() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<Option<f64>> = (0..300).map(|j| Some(((j * j) % 97) as f64 * 0.01)).collect();
    let a = Signal::new(0.0, 0.645, values.clone(), "a");
    let shifted: Vec<Option<f64>> = (0..300).map(|j| if j >= 12 { values[j - 12] } else { None }).collect();
    let b = Signal::new(0.0, 0.645, shifted, "b");
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    a.save(&pa).unwrap();
    b.save(&pb).unwrap();

    let o = wiremark(&["compare", p(&pa), p(&pa)]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ccf_max"], 1.0);
    assert_eq!(v["lag_um"], 0.0);

    let o = wiremark(&["compare", p(&pa), p(&pb)]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["ccf_max"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["lag_um"].as_f64().unwrap() - 12.0 * 0.645).abs() < 1e-9);
}

#[test]
fn batch_and_roc() {
    let dir = tempfile::tempdir().unwrap();
    let scans = dir.path().join("scans");
    fs::create_dir(&scans).unwrap();
    for tool in 1..=2u64 {
        let ((a, _), (b, _)) = make_pair(&small_spec(10 + tool), true).unwrap();
        write_scan(&scans, &format!("T{tool}AW-LI-R1"), &a);
        write_scan(&scans, &format!("T{tool}AW-LI-R2"), &b);
    }
    let results = dir.path().join("results.csv");
    let signals = dir.path().join("signals");
    let o = wiremark(&["batch", p(&scans), "-o", p(&results), "--signals-dir", p(&signals), "--jobs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_results_csv(fs::File::open(&results).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(fs::read_dir(&signals).unwrap().count(), 4);

    // signal CSVs are accepted as batch input too
    let from_csv = dir.path().join("from_csv.csv");
    assert!(wiremark(&["batch", p(&signals), "-o", p(&from_csv)]).status.success());
    assert_eq!(fs::read(&results).unwrap(), fs::read(&from_csv).unwrap());

    let roc = dir.path().join("roc.csv");
    let o = wiremark(&["roc", p(&results), "-o", p(&roc)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["auc"], 1.0);
    assert_eq!(v["positives"], 2);
    assert!(fs::read_to_string(&roc).unwrap().starts_with("threshold,fpr,fnr,tpr\ninf,0,1,0\n"));
}

#[test]
fn batch_on_an_empty_directory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = wiremark(&["batch", p(dir.path()), "-o", p(&dir.path().join("r.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"h": 80, "w": 60, "angle_deg": 5.0}"#).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = wiremark(&["synth", p(&spec), "-o", p(out), "--seed", "9", "--pair", "same"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["synth_1.x3p", "synth_2.x3p", "synth_1.truth.json", "synth_2.truth.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("synth_1.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["seed"], 9);
    assert_eq!(truth["angle_deg"], 5.0);
}

#[test]
fn inspect_reports_study_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let s = SurfaceMatrix::from_fn(2385, 1717, 0.645, 0.645, |i, j| ((i + j) % 7 != 0).then_some(1.0)).unwrap();
    let scan = write_scan(dir.path(), "study", &s);
    let o = wiremark(&["inspect", p(&scan)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("2385 × 1717 @ 0.645 µm\n"), "{text}");
    assert!(text.contains("missing fraction: 0.14"));
}
