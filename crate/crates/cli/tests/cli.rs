use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hiddenpop::eval::experiment::{read_summary, ExperimentSpec};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hiddenpop"));
    c.env_remove("HIDDENPOP_OUTPUT_DIR").env_remove("HIDDENPOP_JOBS");
    c
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn toy_config(dir: &Path, samplers: &[&str]) -> PathBuf {
    let root = repo().join("data/toy");
    let mut text = format!(
        "name = \"toy\"\nbudgets = [1, 3]\nreplicates = 4\nseed = 9\n\n[dataset]\npath = \"{}\"\ndeclaration = \"{}\"\n\n[api]\npage_size = 2\npaging_mode = \"without-replacement-per-call\"\n",
        root.join("toy.csv").display(),
        root.join("toy.toml").display()
    );
    for s in samplers {
        text.push_str(&format!("\n[[samplers]]\nkind = \"{s}\"\n"));
    }
    let path = dir.join("toy.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), &["dt-tmp", "uni"]);
    let out = dir.path().join("out");
    let o = run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("sampler\tbudget\tmetric"));
    let raw = fs::read(out.join("raw.jsonl")).unwrap();
    let summary = fs::read(out.join("summary.tsv")).unwrap();
    let again = run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "1"]);
    assert!(again.status.success());
    assert_eq!(fs::read(out.join("raw.jsonl")).unwrap(), raw);
    assert_eq!(fs::read(out.join("summary.tsv")).unwrap(), summary);
}

#[test]
fn missing_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), &["uni"]);
    let text = fs::read_to_string(&cfg).unwrap();
    let missing = dir.path().join("absent.csv");
    let bad = text.replace(&repo().join("data/toy/toy.csv").display().to_string(), &missing.display().to_string());
    fs::write(&cfg, bad).unwrap();
    let o = run(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[config]:") && err.contains("absent.csv"), "{err}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), &["uni"]);
    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, format!("surprise = true\n{text}")).unwrap();
    let o = run(&["run", cfg.to_str().unwrap(), "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dry_run_prints_a_plan_that_reparses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), &["dt-tmp", "cb"]);
    let out = dir.path().join("never");
    let o = run(&["run", cfg.to_str().unwrap(), "--dry-run", "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!out.exists());
    let plan = ExperimentSpec::from_toml(&stdout(&o)).unwrap();
    assert_eq!(plan.seed, 5);
    assert_eq!(plan.output_dir.as_deref(), Some(out.as_path()));
    assert_eq!(ExperimentSpec::from_toml(&plan.to_toml()).unwrap(), plan);
    let replay = dir.path().join("plan.toml");
    fs::write(&replay, stdout(&o)).unwrap();
    let o2 = run(&["run", replay.to_str().unwrap(), "--dry-run"]);
    assert_eq!(stdout(&o2), stdout(&o));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), &["uni"]);
    let out = dir.path().join("env-out");
    let o = bin().args(["run", cfg.to_str().unwrap()]).env("HIDDENPOP_OUTPUT_DIR", &out).env("HIDDENPOP_JOBS", "2").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("summary.tsv").is_file());
}

#[test]
fn ablate_page_size_reports_recall_change() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), &["uni"]);
    let out = dir.path().join("ab");
    let o = run(&["ablate", cfg.to_str().unwrap(), "--axis", "page-size", "--values", "1,2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("sampler\tbudget\tfrom\tto\trecall_from\trecall_to\tdelta_r_pct"));
    assert_eq!(text.lines().count(), 1 + 2);
    for v in ["1", "2"] {
        assert!(out.join("page-size").join(v).join("summary.tsv").is_file());
    }
    assert!(out.join("page-size/combined.tsv").is_file());
}

#[test]
fn ablate_shuffle_fans_out_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), &["dt-tmp", "uni"]);
    let out = dir.path().join("ab");
    let o = run(&["ablate", cfg.to_str().unwrap(), "--axis", "shuffle", "--values", "0,0.5,1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let combined = fs::read_to_string(out.join("shuffle/combined.tsv")).unwrap();
    for sampler in ["DT-TMP", "UNI"] {
        let rows = combined
            .lines()
            .filter(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                f[2] == sampler && f[3] == "3" && f[4] == "recall"
            })
            .count();
        assert_eq!(rows, 3);
    }
}

#[test]
fn ablate_rejects_bad_axis_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), &["uni"]);
    let o = run(&["ablate", cfg.to_str().unwrap(), "--axis", "cardinality", "--values", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["ablate", cfg.to_str().unwrap(), "--axis", "depth", "--values", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["ablate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_synth_toy_family_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "gen-synth".to_string(),
            "--cards".into(),
            "2,2".into(),
            "--records".into(),
            "8".into(),
            "--target-fraction".into(),
            "0.5".into(),
            "--correlation".into(),
            "1".into(),
            "--hot-cell".into(),
            "0,1".into(),
            "--balanced".into(),
            "--seed".into(),
            "3".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(bin().args(args(&a)).output().unwrap().status.success());
    assert!(bin().args(args(&b)).output().unwrap().status.success());
    let csv = fs::read_to_string(a.join("synth.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(b.join("synth.csv")).unwrap());
    assert_eq!(fs::read(a.join("synth.toml")).unwrap(), fs::read(b.join("synth.toml")).unwrap());
    assert_eq!(csv.lines().count(), 9);
    let v = run(&["validate-dataset", a.join("synth.csv").to_str().unwrap(), a.join("synth.toml").to_str().unwrap()]);
    assert!(v.status.success(), "{}", stderr(&v));
    let text = stdout(&v);
    assert!(text.contains("records\t8\n") && text.contains("targets\t4\n") && text.contains("nonempty_queries\t9\n"));
}

#[test]
fn gen_synth_rejects_infeasible_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen-synth", "--cards", "2", "--records", "10", "--target-fraction", "1.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_prints_improvements_and_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), &["dt-tmp", "uni"]);
    let out = dir.path().join("res");
    assert!(run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let o = run(&["report", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_summary(&out.join("summary.tsv")).unwrap();
    let mean = |s: &str| {
        summary.iter().find(|a| a.sampler == s && a.budget == 3 && a.metric.name() == "recall").unwrap().interval.mean
    };
    let pct = 100.0 * (mean("DT-TMP") - mean("UNI")) / mean("UNI");
    assert!(stdout(&o).contains(&format!("DT-TMP over UNI\trecall\t{pct:+.2}%")), "{}", stdout(&o));
    let bundle = out.join("bundle");
    let manifest = fs::read(bundle.join("manifest.json")).unwrap();
    let series = fs::read_to_string(bundle.join("series_recall.tsv")).unwrap();
    assert!(series.starts_with("sampler\tbudget\tmean\tci_low\tci_high\n"));
    assert!(run(&["report", out.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(bundle.join("manifest.json")).unwrap(), manifest);
    assert_eq!(fs::read_to_string(bundle.join("series_recall.tsv")).unwrap(), series);
}

#[test]
fn report_on_empty_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["report", dir.path().join("nothing").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_dataset_reports_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    fs::write(&csv, "id,A1,A2,label\n1,a,x,yes\n2,c,x,no\n").unwrap();
    let decl = repo().join("data/toy/toy.toml");
    let o = run(&["validate-dataset", csv.to_str().unwrap(), decl.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row"), "{}", stderr(&o));
}
