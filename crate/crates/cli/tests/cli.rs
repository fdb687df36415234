use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gcnn_core::model::Checkpoint;
use gcnn_core::tsdata::{grouped_ar, write_csv, GroupedArSpec};
use serde_json::Value;
use tempfile::TempDir;

const BASE: &str = r#"seed = 3
out = "out"

[data]
path = "data.csv"
target = "g1s1"
window = 16

[model]
k = 3
channels = [2, 2]
pools = [1, 4]
dense = [8]

[train]
epochs = 3
batch_size = 8
learning_rate = 0.01
"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(len: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = GroupedArSpec {
            len,
            seed: 11,
            ..GroupedArSpec::default()
        };
        let (data, _) = grouped_ar(&spec).unwrap();
        write_csv(fs::File::create(dir.path().join("data.csv")).unwrap(), &data).unwrap();
        fs::write(dir.path().join("run.toml"), BASE).unwrap();
        Workspace { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_gcnn"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn json(&self, rel: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.path(rel)).unwrap()).unwrap()
    }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn ingest_reports_no_drops_on_clean_data() {
    let ws = Workspace::new(120);
    let stdout = ws.ok(&["ingest", "run.toml"]);
    assert!(stdout.contains("12 of 12 series kept, 0 dropped"), "{stdout}");
    let manifest = ws.json("out/manifest.json");
    assert_eq!(manifest["kept_series"].as_array().unwrap().len(), 12);
    let header = fs::read_to_string(ws.path("out/dataset.csv")).unwrap();
    assert!(header.starts_with("# config_hash="));
}

#[test]
fn ingest_is_byte_identical_on_rerun() {
    let ws = Workspace::new(120);
    ws.ok(&["ingest", "run.toml"]);
    let first = (fs::read(ws.path("out/manifest.json")).unwrap(), fs::read(ws.path("out/dataset.csv")).unwrap());
    ws.ok(&["ingest", "run.toml"]);
    let second = (fs::read(ws.path("out/manifest.json")).unwrap(), fs::read(ws.path("out/dataset.csv")).unwrap());
    assert_eq!(first, second);
}

#[test]
fn ingest_names_a_series_dropped_for_a_long_gap() {
    let ws = Workspace::new(120);
    let mut text = String::from("t,a,b,gappy\n");
    for t in 0..120 {
        let gappy = if (10..80).contains(&t) { String::new() } else { format!("{}", t % 7) };
        text.push_str(&format!("{t},{},{},{gappy}\n", (t as f64 * 0.3).sin(), (t as f64 * 0.2).cos()));
    }
    fs::write(ws.path("gaps.csv"), text).unwrap();
    let stdout = ws.ok(&["ingest", "run.toml", "--override", "data.path=\"gaps.csv\"", "--override", "data.target=\"a\""]);
    assert!(stdout.contains("dropped gappy: LongGap"), "{stdout}");
    let manifest = ws.json("out/manifest.json");
    assert_eq!(manifest["repair"]["drops"][0]["series"], "gappy");
    assert_eq!(manifest["repair"]["drops"][0]["reason"]["long_gap"]["len"], 70);
}

#[test]
fn cluster_recovers_latent_groups() {
    let ws = Workspace::new(300);
    let stdout = ws.ok(&["cluster", "run.toml", "--override", "model.grouping=\"explicit\""]);
    assert!(stdout.contains("k=3"), "{stdout}");
    let report = ws.json("out/cluster.json");
    let mut groups: Vec<Vec<String>> = report["groups"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect())
        .collect();
    groups.sort();
    let want: Vec<Vec<String>> = [
        vec!["g1s2", "g1s3", "g1s4"],
        vec!["g2s1", "g2s2", "g2s3", "g2s4"],
        vec!["g3s1", "g3s2", "g3s3", "g3s4"],
    ]
    .iter()
    .map(|g| g.iter().map(|s| s.to_string()).collect())
    .collect();
    assert_eq!(groups, want);
    assert_eq!(csv_rows(&ws.path("out/assignment.csv")).len(), 11);
}

#[test]
fn cluster_rejects_single_group() {
    let ws = Workspace::new(120);
    let out = ws.run(&["cluster", "run.toml", "--override", "model.grouping=\"explicit\"", "--override", "model.k=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.k"));
}

#[test]
fn coeff_training_writes_coefficients() {
    let ws = Workspace::new(120);
    let stdout = ws.ok(&["train", "run.toml", "--override", "model.grouping=\"coeff\""]);
    assert!(stdout.contains("param_count:"), "{stdout}");
    let rows = csv_rows(&ws.path("out/coefficients.csv"));
    assert_eq!(rows.len(), 11);
    for row in rows {
        let sum: f64 = row[1..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
    assert_eq!(csv_rows(&ws.path("out/history.csv")).len(), 3);
}

#[test]
fn water_preset_plan_matches_published_layout() {
    let ws = Workspace::new(120);
    let preset = ["--override", "model.preset=\"water\"", "--override", "data.window=64"];
    let stdout = ws.ok(&[&["param-count", "run.toml"][..], &preset].concat());
    assert!(stdout.contains("widths=[64, 16, 4, 1] channels=[500, 500, 500, 500]"), "{stdout}");
    assert!(stdout.contains("dense=[100, 1]"), "{stdout}");
    let grouped = ws.ok(&[&["param-count", "run.toml", "--override", "model.grouping=\"explicit\""][..], &preset].concat());
    assert!(grouped.contains("groups=5"), "{grouped}");
    assert!(grouped.contains(" < vanilla "), "{grouped}");
}

#[test]
fn eval_reproduces_selected_validation_score() {
    let ws = Workspace::new(160);
    ws.ok(&["train", "run.toml", "--override", "model.grouping=\"explicit\""]);
    let report = ws.json("out/train_report.json");
    ws.ok(&["eval", "run.toml", "--override", "model.grouping=\"explicit\"", "--split", "validation"]);
    let eval = ws.json("out/eval_report_validation.json");
    let (a, b) = (report["best_val_srmse"].as_f64().unwrap(), eval["srmse"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");

    ws.ok(&["eval", "run.toml", "--override", "model.grouping=\"explicit\""]);
    let eval = ws.json("out/eval_report.json");
    let (a, b) = (report["test_srmse"].as_f64().unwrap(), eval["srmse"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
}

#[test]
fn prediction_rows_match_test_samples() {
    let ws = Workspace::new(160);
    ws.ok(&["ingest", "run.toml"]);
    let n_test = ws.json("out/manifest.json")["windows"]["n_test"].as_u64().unwrap() as usize;
    ws.ok(&["train", "run.toml"]);
    ws.ok(&["eval", "run.toml"]);
    let rows = csv_rows(&ws.path("out/predictions.csv"));
    assert_eq!(rows.len(), n_test);
    assert_eq!(ws.json("out/eval_report.json")["samples"], n_test);
}

#[test]
fn mean_predictor_checkpoint_scores_one() {
    let ws = Workspace::new(160);
    ws.ok(&["train", "run.toml"]);
    ws.ok(&["eval", "run.toml"]);
    let targets: Vec<f64> = csv_rows(&ws.path("out/predictions.csv"))
        .iter()
        .map(|r| r[1].parse().unwrap())
        .collect();
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;

    let mut ck = Checkpoint::read(fs::File::open(ws.path("out/checkpoint.json")).unwrap()).unwrap();
    for p in ck.params.iter_mut().filter(|p| p.name.starts_with("output.")) {
        let fill = if p.name.ends_with("bias") { mean } else { 0.0 };
        p.values.iter_mut().for_each(|v| *v = fill);
    }
    let mut f = fs::File::create(ws.path("mean.json")).unwrap();
    ck.write(&mut f).unwrap();
    ws.ok(&["eval", "run.toml", "--checkpoint", "mean.json"]);
    assert_eq!(ws.json("out/eval_report.json")["srmse"].as_f64(), Some(1.0));
}

#[test]
fn compare_is_deterministic() {
    let ws = Workspace::new(300);
    let args = [
        "compare",
        "run.toml",
        "--override",
        "compare.repeats=2",
        "--override",
        "compare.networks=[\"cnn\", \"cnn-coeff\"]",
    ];
    let first = ws.ok(&args);
    let a = fs::read(ws.path("out/compare.csv")).unwrap();
    let runs = csv_rows(&ws.path("out/compare_runs.csv"));
    assert_eq!(runs.len(), 2 * 4);
    let second = ws.ok(&args);
    assert_eq!(first, second);
    assert_eq!(a, fs::read(ws.path("out/compare.csv")).unwrap());
    assert_eq!(runs, csv_rows(&ws.path("out/compare_runs.csv")));
}

#[test]
fn seed_and_out_flags_override_the_config() {
    let ws = Workspace::new(120);
    ws.ok(&["train", "run.toml", "--seed", "5", "--out", "elsewhere"]);
    let hash = ws.json("elsewhere/train_report.json")["config_hash"].clone();
    ws.ok(&["train", "run.toml", "--out", "default_seed"]);
    assert_ne!(hash, ws.json("default_seed/train_report.json")["config_hash"]);
    ws.ok(&["train", "run.toml", "--seed", "5", "--out", "again"]);
    assert_eq!(hash, ws.json("again/train_report.json")["config_hash"]);
}

#[test]
fn exit_codes_separate_config_data_and_numerical_failures() {
    let ws = Workspace::new(120);
    let code = |args: &[&str]| ws.run(args).status.code();
    assert_eq!(code(&["train", "run.toml", "--override", "model.colour=\"red\""]), Some(2));
    assert_eq!(code(&["train", "missing.toml"]), Some(2));
    assert_eq!(code(&["train", "run.toml", "--override", "data.target=\"nope\""]), Some(3));
    fs::write(ws.path("bad.csv"), "t,a,b\n0,1,x\n1,2,3\n").unwrap();
    assert_eq!(code(&["ingest", "run.toml", "--override", "data.path=\"bad.csv\""]), Some(3));
    let diverge = ["train", "run.toml", "--override", "train.learning_rate=1e30", "--override", "train.clip_norm=0"];
    assert_eq!(code(&diverge), Some(4));
}

#[test]
fn linear_baseline_beats_ridge_on_a_linear_target() {
    let ws = Workspace::new(400);
    let (data, _) = grouped_ar(&GroupedArSpec { len: 400, seed: 2, ..GroupedArSpec::default() }).unwrap();
    let mut text = String::from("t,a,b,c,y\n");
    for t in 0..400 {
        let (a, b, c) = (data.series(0)[t], data.series(4)[t], data.series(8)[t]);
        text.push_str(&format!("{t},{a},{b},{c},{}\n", 0.5 * a - 1.2 * b + 0.3 * c));
    }
    fs::write(ws.path("linear.csv"), text).unwrap();
    ws.ok(&[
        "compare",
        "run.toml",
        "--override",
        "data.path=\"linear.csv\"",
        "--override",
        "data.window=4",
        "--override",
        "compare.targets=[\"y\"]",
        "--override",
        "compare.repeats=1",
        "--override",
        "compare.networks=[]",
        "--override",
        "compare.ridge_lambdas=[0.0, 1.0]",
    ]);
    let rows = csv_rows(&ws.path("out/compare.csv"));
    let score = |m: &str| rows.iter().find(|r| r[0] == m).unwrap()[1].parse::<f64>().unwrap();
    assert!(score("linear") <= score("ridge(1)"), "{rows:?}");
    assert!(score("linear") < 1e-6);
}
