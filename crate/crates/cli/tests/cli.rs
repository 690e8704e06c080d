use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nodedistill(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nodedistill"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "exit {:?}: {stderr}", out.status);
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &str = r#"{
    "dataset": {"sbm": {"classes": 3, "nodes_per_class": 40, "p_in": 0.15, "p_out": 0.01, "feature_dim": 16}},
    "split": {"resample": true, "per_class_train": 5, "val_size": 20, "test_size": null},
    "distill": {"outer_iterations": 8, "patience": 4, "hidden_dim": 16},
    "repeat": 2
}"#;

/// Shrinks every teacher through wildcard overrides.
const FAST_TEACHERS: [&str; 3] = ["--teachers.*.max_epochs=15", "--teachers.*.hidden_dim=8", "--teachers.*.attention_heads=2"];

#[test]
fn prepare_pretrain_distill_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("small.json"), SMALL).unwrap();

    let stdout = ok(&nodedistill(&["prepare", "--config", "small.json", "--seed", "1", "--out", "data"], dir));
    assert!(stdout.contains("120 nodes"), "{stdout}");
    for f in ["meta.json", "edges.csv", "features.csv", "labels.csv", "splits.json"] {
        assert!(dir.join("data").join(f).is_file(), "missing {f}");
    }

    // The prepared directory replaces the generator from here on.
    let dataset = ["--dataset.path=data", "--split.resample=false"];
    let mut args = vec!["pretrain", "--config", "small.json", "--seed", "1", "--out", "teachers"];
    args.extend(dataset);
    args.extend(FAST_TEACHERS);
    ok(&nodedistill(&args, dir));
    assert!(dir.join("teachers/teachers.json").is_file());

    let mut args = vec!["distill", "--config", "small.json", "--seed", "1", "--out", "run", "--teacher_dir=teachers"];
    args.extend(dataset);
    args.extend(FAST_TEACHERS);
    let stdout = ok(&nodedistill(&args, dir));
    assert!(stdout.starts_with("e2gnn"), "{stdout}");
    for f in ["report.json", "curves.csv", "groups.csv", "actions.csv", "timing.csv", "config.json"] {
        assert!(dir.join("run").join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["repeat"], 2);
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("run/config.json")).unwrap()).unwrap();
    assert_eq!(config["teachers"][3]["max_epochs"], 15);
    assert_eq!(config["seed"], 1);

    let mut args = vec!["analyze", "--config", "small.json", "--seed", "1", "--out", "analysis", "--teacher_dir=teachers"];
    args.extend(dataset);
    args.extend(FAST_TEACHERS);
    ok(&nodedistill(&args, dir));
    let analysis: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("analysis/analysis.json")).unwrap()).unwrap();
    let ratios: f64 = analysis["groups"].as_array().unwrap().iter().map(|g| g["ratio"].as_f64().unwrap()).sum();
    assert!((ratios - 1.0).abs() < 1e-9);
    assert!(dir.join("analysis/certainty.csv").is_file());
}

#[test]
fn eval_perturb_and_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("small.json"), SMALL).unwrap();

    let mut args = vec!["eval", "--config", "small.json", "--seed", "3", "--out", "eval", "--methods", "glnn,gnne,ekd_u"];
    args.extend(FAST_TEACHERS);
    let stdout = ok(&nodedistill(&args, dir));
    assert_eq!(stdout.lines().count(), 3, "{stdout}");
    let summary = fs::read_to_string(dir.join("eval/summary.csv")).unwrap();
    assert!(summary.starts_with("method,mean,std,best_teacher_mean\nglnn,"));
    assert!(dir.join("eval/gnne/report.json").is_file());

    let mut args = vec![
        "perturb", "--config", "small.json", "--seed", "3", "--out", "sweep", "--lambdas", "0,0.5", "--methods", "ekd_u",
        "--repeat=1",
    ];
    args.extend(FAST_TEACHERS);
    ok(&nodedistill(&args, dir));
    let sweep = fs::read_to_string(dir.join("sweep/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3, "{sweep}");
    assert!(sweep.lines().nth(2).unwrap().starts_with("edge_drop,0.5,ekd_u,"));

    ok(&nodedistill(&["bench", "--config", "small.json", "--seed", "3", "--out", "bench", "--repetitions", "2"], dir));
    let bench: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("bench/bench.json")).unwrap()).unwrap();
    assert_eq!(bench["num_nodes"], 120);
    assert_eq!(bench["teacher_ms"].as_array().unwrap().len(), 5);
}

#[test]
fn usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // --seed and --out are mandatory.
    assert!(!nodedistill(&["distill", "--out", "x"], dir).status.success());
    assert!(!nodedistill(&["distill", "--seed", "1"], dir).status.success());

    let out = nodedistill(&["distill", "--seed", "1", "--out", "x", "--distill.alpha=2"], dir);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let out = nodedistill(&["distill", "--seed", "1", "--out", "x", "--teachers.9.layers=2"], dir);
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));

    let out = nodedistill(&["eval", "--seed", "1", "--out", "x", "--methods", "bogus"], dir);
    assert!(!out.status.success());
}
