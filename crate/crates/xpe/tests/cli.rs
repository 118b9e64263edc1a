use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use tempfile::TempDir;
use xpe::csv_io::{read_dataset, Labels};
use xpe::model_io::load_model;
use xpe::report::Report;
use xpe_core::{ModelKind, TrainConfig, TrainedModel};

fn xpe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xpe")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = xpe(args);
    assert!(out.status.success(), "xpe {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap_or(Value::Null)
}

fn fails(args: &[&str], code: i32) -> String {
    let out = xpe(args);
    assert_eq!(out.status.code(), Some(code), "xpe {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Work(TempDir);

impl Work {
    fn new() -> Self {
        Work(tempfile::tempdir().unwrap())
    }

    fn p(&self, name: &str) -> String {
        self.0.path().join(name).display().to_string()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    /// Blobs with Gaussian noise on a few features plus a trained model.
    fn noisy(&self, model: &str) -> &Self {
        ok(&[
            "generate",
            "--kind",
            "blobs",
            "--corruption",
            "gaussian-noise",
            "--n",
            "120",
            "--d",
            "6",
            "--sigma",
            "3",
            "--out",
            &self.p("sc"),
            "--seed",
            "4",
        ]);
        ok(&["train", "--data", &self.p("sc/source.csv"), "--model", model, "--out", &self.p("m.json"), "--seed", "4"]);
        self
    }
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn null_brightness_scenario_has_identical_source_and_target() {
    let w = Work::new();
    ok(&["generate", "--kind", "blobs", "--corruption", "brightness", "--b", "0.0", "--n", "50", "--d", "4", "--out", &w.p("sc")]);
    assert_eq!(read(w.path("sc/source.csv")), read(w.path("sc/target.csv")));
    assert_eq!(read(w.path("sc/source.csv")), read(w.path("sc/pre_shift.csv")));
    let meta: Value = serde_json::from_slice(&read(w.path("sc/scenario.json"))).unwrap();
    assert_eq!(meta["label_preserving"], "exact_zero");
    assert_eq!(meta["corruption"], "brightness");
}

#[test]
fn missing_kind_is_a_usage_error() {
    let w = Work::new();
    let err = fails(&["generate", "--out", &w.p("sc")], 2);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn unknown_flags_are_rejected() {
    let w = Work::new();
    fails(&["generate", "--kind", "blobs", "--corruption", "brightness", "--out", &w.p("sc"), "--bogus", "1"], 2);
}

#[test]
fn blobs_without_corruption_is_a_usage_error() {
    let w = Work::new();
    let err = fails(&["generate", "--kind", "blobs", "--out", &w.p("sc")], 2);
    assert!(err.contains("--corruption"), "{err}");
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let w = Work::new();
    for dir in ["a", "b"] {
        ok(&[
            "generate",
            "--kind",
            "blobs",
            "--corruption",
            "impulse",
            "--p",
            "0.2",
            "--n",
            "60",
            "--d",
            "5",
            "--fraction",
            "0.4",
            "--seed",
            "9",
            "--out",
            &w.p(dir),
        ]);
    }
    for f in ["source.csv", "target.csv", "pre_shift.csv", "scenario.json"] {
        assert_eq!(read(w.path("a").join(f)), read(w.path("b").join(f)), "{f} differs");
    }
}

#[test]
fn group_signal_writes_three_targets() {
    let w = Work::new();
    ok(&["generate", "--kind", "group-signal", "--n", "200", "--d", "6", "--band", "0,1", "--delta", "2", "--out", &w.p("g")]);
    for name in ["none", "medium", "strong"] {
        assert!(w.path(&format!("g/target_{name}.csv")).exists());
    }
    assert!(!w.path("g/pre_shift.csv").exists());
    let scenario = xpe::scenario_io::read_scenario(w.path("g")).unwrap();
    assert_eq!(scenario.extra.len(), 3);
    assert_eq!(scenario.meta.features, vec![0, 1]);
    assert!(scenario.shift_scenario().is_err());
}

#[test]
fn training_separable_blobs_reaches_high_accuracy() {
    let w = Work::new();
    ok(&["generate", "--kind", "blobs", "--corruption", "brightness", "--n", "200", "--d", "5", "--out", &w.p("sc"), "--seed", "2"]);
    let summary = ok(&["train", "--data", &w.p("sc/source.csv"), "--model", "logreg", "--out", &w.p("m.json")]);
    assert!(summary["train_accuracy"].as_f64().unwrap() >= 0.99);
    assert!(summary["train_loss"].as_f64().is_some());
    assert!(summary["validation_loss"].as_f64().is_some());
}

#[test]
fn zero_epochs_saves_the_initial_model() {
    let w = Work::new();
    ok(&["generate", "--kind", "blobs", "--corruption", "brightness", "--n", "40", "--d", "3", "--classes", "2", "--out", &w.p("sc")]);
    let summary = ok(&[
        "train",
        "--data",
        &w.p("sc/source.csv"),
        "--model",
        "mlp",
        "--hidden",
        "5",
        "--epochs",
        "0",
        "--out",
        &w.p("m.json"),
        "--seed",
        "6",
    ]);
    assert_eq!(summary["epochs_run"], 0);
    let saved = load_model(w.path("m.json")).unwrap();
    let fresh = TrainedModel::initialize(ModelKind::Mlp1Hidden, 3, 2, &TrainConfig { hidden_units: 5, seed: 6, ..TrainConfig::default() });
    assert_eq!(saved.layers, fresh.layers);
}

#[test]
fn training_errors_exit_with_one() {
    let w = Work::new();
    fails(&["train", "--data", &w.p("nope.csv"), "--model", "logreg", "--out", &w.p("m.json")], 1);
    std::fs::write(w.path("u.csv"), "a,b\n1,2\n3,4\n").unwrap();
    let err = fails(&["train", "--data", &w.p("u.csv"), "--model", "logreg", "--out", &w.p("m.json")], 1);
    assert!(err.contains("label"), "{err}");
}

#[test]
fn monitoring_the_source_against_itself_is_an_identity() {
    let w = Work::new();
    w.noisy("mlp");
    let src = w.p("sc/source.csv");
    ok(&["monitor", "--model", &w.p("m.json"), "--source", &src, "--target", &src, "--out", &w.p("r.json"), "--threads", "2"]);
    let report = Report::load(w.path("r.json")).unwrap();
    let (est, src_loss) = (report.performance.estimated_target_loss.unwrap(), report.performance.source_loss.unwrap());
    assert!((est - src_loss).abs() < 1e-9);
    assert_eq!(report.performance.label_transport_accuracy, Some(1.0));
    assert!(report.instances.iter().all(|i| i.attribution.values.iter().all(|&v| v == 0.0)));
    assert!(report.drift.mask.iter().all(|&m| !m));
}

#[test]
fn report_has_the_published_keys() {
    let w = Work::new();
    w.noisy("logreg");
    let text = xpe(&["monitor", "--model", &w.p("m.json"), "--source", &w.p("sc/source.csv"), "--target", &w.p("sc/target.csv")]).stdout;
    let v: Value = serde_json::from_slice(&text).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["version", "seed", "config", "transport", "performance", "drift", "instances", "metrics", "warnings"] {
        assert!(keys.contains(&k), "missing {k}");
    }
    assert_eq!(v["version"], "1");
    assert!(v["config"].get("threads").is_none());
    assert!(v["transport"]["matched_source_index"].is_array());
    let inst = &v["instances"][0];
    for k in ["index", "estimated_label", "attribution"] {
        assert!(inst.get(k).is_some(), "missing instance key {k}");
    }
    for k in ["method", "players", "values", "v_empty", "v_full"] {
        assert!(inst["attribution"].get(k).is_some(), "missing attribution key {k}");
    }
    for k in ["statistic", "p_value", "mask"] {
        assert_eq!(v["drift"][k].as_array().unwrap().len(), 6);
    }
}

#[test]
fn xppe_runs_on_an_unlabeled_target() {
    let w = Work::new();
    w.noisy("logreg");
    let target = read_dataset(w.path("sc/target.csv"), Labels::None).unwrap();
    let text = xpe::csv_io::render_dataset(&target);
    let label_free: String = text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_owned() + "\n").collect();
    std::fs::write(w.path("t.csv"), label_free).unwrap();
    ok(&[
        "monitor",
        "--model",
        &w.p("m.json"),
        "--source",
        &w.p("sc/source.csv"),
        "--target",
        &w.p("t.csv"),
        "--method",
        "xppe",
        "--out",
        &w.p("r.json"),
    ]);
    let report = Report::load(w.path("r.json")).unwrap();
    assert!(report.performance.estimated_target_loss.is_some());
    assert!(report.performance.label_transport_accuracy.is_none());
    assert!(report.instances.iter().all(|i| i.estimated_label.is_some()));
}

#[test]
fn thread_count_does_not_change_the_report() {
    let w = Work::new();
    w.noisy("mlp");
    for (t, out) in [("1", "r1.json"), ("8", "r8.json")] {
        ok(&[
            "monitor",
            "--model",
            &w.p("m.json"),
            "--source",
            &w.p("sc/source.csv"),
            "--target",
            &w.p("sc/target.csv"),
            "--method",
            "lad",
            "--background",
            "marginal",
            "--seed",
            "3",
            "--threads",
            t,
            "--out",
            &w.p(out),
        ]);
    }
    assert_eq!(read(w.path("r1.json")), read(w.path("r8.json")));
}

#[test]
fn shape_mismatch_is_named() {
    let w = Work::new();
    w.noisy("logreg");
    std::fs::write(w.path("narrow.csv"), "a,b,label\n1,2,0\n3,4,1\n").unwrap();
    let err = fails(&["monitor", "--model", &w.p("m.json"), "--source", &w.p("sc/source.csv"), "--target", &w.p("narrow.csv")], 1);
    assert!(err.contains("features"), "{err}");
}

#[test]
fn exports_are_written() {
    let w = Work::new();
    w.noisy("logreg");
    ok(&[
        "monitor",
        "--model",
        &w.p("m.json"),
        "--source",
        &w.p("sc/source.csv"),
        "--target",
        &w.p("sc/target.csv"),
        "--out",
        &w.p("r.json"),
        "--attributions-csv",
        &w.p("a.csv"),
        "--coupling-json",
        &w.p("c.json"),
        "--heatmap-dir",
        &w.p("maps"),
        "--grid",
        "2x3",
    ]);
    let csv = String::from_utf8(read(w.path("a.csv"))).unwrap();
    assert!(csv.starts_with("instance_index,player_id,value,method,v_empty,v_full\n"));
    assert_eq!(csv.lines().count(), 1 + 120 * 6);
    let coupling: Value = serde_json::from_slice(&read(w.path("c.json"))).unwrap();
    assert_eq!(coupling["forward"].as_array().unwrap().len(), 120);
    let pgm = read(w.path("maps/instance_0.pgm"));
    assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
    assert_eq!(pgm.len(), 11 + 6);
    fails(
        &[
            "monitor",
            "--model",
            &w.p("m.json"),
            "--source",
            &w.p("sc/source.csv"),
            "--target",
            &w.p("sc/target.csv"),
            "--heatmap-dir",
            &w.p("x"),
        ],
        2,
    );
}

fn write_report(w: &Work, values: Vec<Vec<f64>>) -> String {
    let instances: Vec<Value> = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| serde_json::json!({"index": i, "estimated_label": 0, "attribution": {"method": "xpe", "players": "features", "values": v, "v_empty": 0.0, "v_full": 1.0}}))
        .collect();
    let report = serde_json::json!({
        "version": "1", "seed": 0,
        "config": {"method": "xpe", "model": "", "source": "", "target": "", "grouping": "identity", "loss": "cross-entropy", "alpha": 0.05, "exact_cap": 12, "budget": 3000, "background": "zeros"},
        "transport": {"objective": 0.0, "matched_source_index": []},
        "performance": {"estimated_target_loss": null, "source_loss": null},
        "drift": {"statistic": [], "p_value": [], "mask": []},
        "instances": instances, "metrics": {}, "warnings": []
    });
    let path = w.p("r.json");
    std::fs::write(&path, report.to_string()).unwrap();
    path
}

#[test]
fn complexity_of_one_hot_attributions_is_zero() {
    let w = Work::new();
    let report = write_report(&w, vec![vec![0.0, 2.0, 0.0], vec![-1.0, 0.0, 0.0]]);
    let m = ok(&["evaluate", "--report", &report, "--metrics", "cpx"]);
    assert_eq!(m["complexity"]["mean"], 0.0);
    let saved = Report::load(&report).unwrap();
    assert!(saved.metrics.contains_key("complexity"));
}

#[test]
fn ratio_over_all_groups_is_one() {
    let w = Work::new();
    let report = write_report(&w, vec![vec![0.5, -2.0, 0.1], vec![-1.0, 0.3, 0.0]]);
    let m = ok(&["evaluate", "--report", &report, "--metrics", "ratio", "--designated", "0,1,2"]);
    assert_eq!(m["group_ratio"]["value"], 1.0);
    fails(&["evaluate", "--report", &report, "--metrics", "ratio"], 2);
}

/// Scenario with positive features, all labels 0, small paired shifts.
fn additive_scenario(w: &Work) {
    let dir = w.path("add");
    let (n, d) = (8, 3);
    let mut pre = Vec::new();
    let mut target = Vec::new();
    for i in 0..n {
        let row: Vec<f64> = (0..d).map(|j| 1.0 + 3.0 * i as f64 + 0.5 * j as f64).collect();
        let shifted: Vec<f64> = row.iter().enumerate().map(|(j, x)| x + 0.05 * ((i + 2 * j) % 5) as f64 + 0.01).collect();
        pre.push(row);
        target.push(shifted);
    }
    let ds = |rows: &[Vec<f64>]| xpe_core::Dataset::from_rows(rows).unwrap().with_labels(vec![0; n]).unwrap();
    let scenario = xpe::scenario_io::ScenarioDir {
        source: ds(&pre),
        target: ds(&target),
        pre_shift: Some(ds(&pre)),
        extra: Vec::new(),
        meta: xpe::scenario_io::ScenarioMeta {
            kind: "custom".into(),
            corruption: None,
            parameters: Default::default(),
            features: vec![0, 1, 2],
            seed: 0,
            label_preserving: xpe_core::metrics::LabelPreservation::ExactZero,
            n_train: None,
            extra_targets: Vec::new(),
            flags: Default::default(),
        },
    };
    xpe::scenario_io::write_scenario(&dir, &scenario).unwrap();
}

/// `p0 = exp(-a.x)`: cross-entropy on label 0 is additive in the features.
const ADDITIVE_MODEL: &str = r#"awk -F, '{ s = 0.02*$1 + 0.05*$2 + 0.03*$3; p = exp(-s); printf "%.17g,%.17g\n", p, 1 - p }'"#;

#[test]
fn sfaith_of_an_additive_model_is_one() {
    let w = Work::new();
    additive_scenario(&w);
    ok(&[
        "monitor",
        "--model-cmd",
        ADDITIVE_MODEL,
        "--source",
        &w.p("add/source.csv"),
        "--target",
        &w.p("add/target.csv"),
        "--out",
        &w.p("r.json"),
    ]);
    let m = ok(&["evaluate", "--report", &w.p("r.json"), "--scenario", &w.p("add"), "--metrics", "sfaith,cpx,ratio"]);
    let mean = m["s_faith"]["mean"].as_f64().unwrap();
    assert!((mean - 1.0).abs() < 1e-9, "mean S-Faith {mean}");
    assert_eq!(m["group_ratio"]["value"], 1.0);
}

#[test]
fn sfaith_needs_pre_shift() {
    let w = Work::new();
    additive_scenario(&w);
    ok(&[
        "monitor",
        "--model-cmd",
        ADDITIVE_MODEL,
        "--source",
        &w.p("add/source.csv"),
        "--target",
        &w.p("add/target.csv"),
        "--out",
        &w.p("r.json"),
    ]);
    std::fs::remove_file(w.path("add/pre_shift.csv")).unwrap();
    let err = fails(&["evaluate", "--report", &w.p("r.json"), "--scenario", &w.p("add"), "--metrics", "sfaith"], 1);
    assert!(err.contains("pre_shift"), "{err}");
}

#[test]
fn gpc_is_reported_per_corrupted_feature() {
    let w = Work::new();
    ok(&[
        "generate",
        "--kind",
        "blobs",
        "--corruption",
        "missing",
        "--q",
        "0.25",
        "--features",
        "1",
        "--n",
        "80",
        "--d",
        "4",
        "--out",
        &w.p("sc"),
        "--seed",
        "2",
    ]);
    ok(&["train", "--data", &w.p("sc/pre_shift.csv"), "--model", "logreg", "--out", &w.p("m.json")]);
    let out = xpe(&[
        "monitor",
        "--model",
        &w.p("m.json"),
        "--source",
        &w.p("sc/source.csv"),
        "--target",
        &w.p("sc/target.csv"),
        "--out",
        &w.p("r.json"),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("imputed"));
    let m = ok(&["evaluate", "--report", &w.p("r.json"), "--scenario", &w.p("sc"), "--metrics", "gpc"]);
    let gpc = m["gpc"].as_array().unwrap();
    assert_eq!(gpc.len(), 1);
    assert_eq!(gpc[0]["feature"], 1);
    let r = gpc[0]["value"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&r));
}

#[test]
fn roars_on_a_null_shift_fails() {
    let w = Work::new();
    ok(&["generate", "--kind", "blobs", "--corruption", "contrast", "--gamma", "1", "--n", "60", "--d", "4", "--out", &w.p("sc")]);
    let err = fails(&["roars", "--scenario", &w.p("sc"), "--model-kind", "logreg", "--epochs", "5"], 1);
    assert!(err.contains("shift has no measurable effect"), "{err}");
}

#[test]
fn roars_is_repeatable_and_keyed() {
    let w = Work::new();
    ok(&[
        "generate",
        "--kind",
        "blobs",
        "--corruption",
        "gaussian-noise",
        "--sigma",
        "4",
        "--separation",
        "4",
        "--n",
        "120",
        "--d",
        "8",
        "--fraction",
        "0.5",
        "--out",
        &w.p("sc"),
        "--seed",
        "1",
    ]);
    let args = ["roars", "--scenario", &w.p("sc"), "--model-kind", "logreg", "--removal", "0.25", "--seed", "2", "--epochs", "30"];
    let a = xpe(&args);
    let b = xpe(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    for k in ["roar_s", "L_s", "L_t", "L_s_tilde", "L_t_tilde"] {
        assert!(v[k].is_number(), "missing {k}");
    }
    let none = ok(&["roars", "--scenario", &w.p("sc"), "--model-kind", "logreg", "--removal", "0", "--seed", "2", "--epochs", "30"]);
    assert!((none["roar_s"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn predict_round_trips_through_the_bridge_bit_exactly() {
    let w = Work::new();
    w.noisy("mlp");
    let bin = env!("CARGO_BIN_EXE_xpe");
    let cmd = format!("'{bin}' predict --model '{}'", w.p("m.json"));
    let (src, tgt) = (w.p("sc/source.csv"), w.p("sc/target.csv"));
    ok(&["monitor", "--model", &w.p("m.json"), "--source", &src, "--target", &tgt, "--out", &w.p("a.json"), "--threads", "1"]);
    ok(&["monitor", "--model-cmd", &cmd, "--source", &src, "--target", &tgt, "--out", &w.p("b.json"), "--threads", "1"]);
    let (a, b) = (Report::load(w.path("a.json")).unwrap(), Report::load(w.path("b.json")).unwrap());
    assert_eq!(a.instances, b.instances);
    assert_eq!(a.performance, b.performance);
    assert_eq!(a.transport, b.transport);
}

#[test]
fn predict_reads_stdin() {
    let w = Work::new();
    w.noisy("logreg");
    let mut child = Command::new(env!("CARGO_BIN_EXE_xpe"))
        .args(["predict", "--model", &w.p("m.json")])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(b"0,0,0,0,0,0\n1,2,3,4,5,6\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    for line in text.lines() {
        let sum: f64 = line.split(',').map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
}

#[test]
fn non_simplex_bridge_output_is_rejected() {
    let w = Work::new();
    w.noisy("logreg");
    let err = fails(&["monitor", "--model-cmd", "echo 0.7,0.4", "--source", &w.p("sc/source.csv"), "--target", &w.p("sc/target.csv")], 1);
    assert!(err.contains("row 1"), "{err}");
    let err =
        fails(&["monitor", "--model-cmd", "cat > /dev/null", "--source", &w.p("sc/source.csv"), "--target", &w.p("sc/target.csv")], 1);
    assert!(err.contains("no output"), "{err}");
}
