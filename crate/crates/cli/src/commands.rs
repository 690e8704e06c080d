use std::fs;
use std::io::Write;
use std::path::Path;

use log::info;
use nodedistill_core::graph::{import_linqs, load_dataset, save_dataset, PerturbConfig, PerturbKind};
use nodedistill_core::nn::derive_seed;
use nodedistill_core::pipeline::{
    certainty_scores, inference_benchmark, mean_std, prepare_runs, run_methods, save_prepared, sbm_for_run,
    split_for_run, DatasetSource, ExperimentConfig, GroupDecision, Method, RunReport,
};
use nodedistill_core::student::StudentModel;
use nodedistill_core::teachers::GnnModel;
use serde_json::json;

use crate::overrides::load_config;
use crate::Common;

type CmdResult = Result<(), Box<dyn std::error::Error>>;

fn config(common: &Common, overrides: &[(String, String)]) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let cfg = load_config(common.config.as_deref(), overrides, common.seed)?;
    fs::create_dir_all(&common.out).map_err(|e| format!("{}: {e}", common.out.display()))?;
    fs::write(common.out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn parse_methods(names: &[String], fallback: Method) -> Result<Vec<Method>, Box<dyn std::error::Error>> {
    if names.is_empty() {
        return Ok(vec![fallback]);
    }
    Ok(names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?)
}

fn summary_line(r: &RunReport) -> String {
    format!(
        "{:<20} {:.2} ± {:.2}   (best teacher {:.2})",
        r.method.name(),
        100.0 * r.mean,
        100.0 * r.std,
        100.0 * r.best_teacher_mean
    )
}

pub fn prepare(
    common: &Common,
    overrides: &[(String, String)],
    linqs: Option<&Path>,
    name: &str,
    normalize: bool,
) -> CmdResult {
    let cfg = config(common, overrides)?;
    let graph = match (linqs, &cfg.dataset) {
        (Some(dir), _) => import_linqs(dir, name, normalize)?,
        (None, DatasetSource::Sbm(sbm)) => sbm_for_run(&cfg, sbm, 0)?,
        (None, DatasetSource::Path(_)) => {
            return Err("prepare needs --linqs <dir> or a block-model dataset in the configuration".into())
        }
    };
    // Same graph and split as the first repeat of an experiment.
    let split = split_for_run(&cfg, &graph, 0)?;
    save_dataset(&common.out, &graph, &split)?;
    println!(
        "{}: {} nodes, {} edges, {} features, {} classes; train {}, val {}, test {}",
        graph.name,
        graph.num_nodes(),
        graph.num_edges(),
        graph.num_features(),
        graph.num_classes(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

pub fn pretrain(common: &Common, overrides: &[(String, String)]) -> CmdResult {
    let cfg = config(common, overrides)?;
    let preps = prepare_runs(&cfg)?;
    let mut runs = Vec::new();
    let mut timing = String::from("run,phase,name,millis\n");
    for p in &preps {
        save_prepared(&common.out, p)?;
        runs.push(json!({
            "run": p.run,
            "seed": p.seed,
            "teachers": p.teachers.iter().map(|t| t.arch()).collect::<Vec<_>>(),
            "val_accuracy": p.bank.val_accuracy(),
            "test_accuracy": p.teacher_test_accuracy,
        }));
        for t in &p.timings {
            timing += &format!("{},{},{},{}\n", t.run, t.phase, t.name, t.millis);
        }
        info!("run {}: teacher test accuracy {:?}", p.run, p.teacher_test_accuracy);
    }
    write_text(&common.out.join("teachers.json"), &(serde_json::to_string_pretty(&runs)? + "\n"))?;
    write_text(&common.out.join("timing.csv"), &timing)?;
    println!("saved teachers of {} runs to {}", preps.len(), common.out.display());
    Ok(())
}

pub fn distill(common: &Common, overrides: &[(String, String)]) -> CmdResult {
    let cfg = config(common, overrides)?;
    let preps = prepare_runs(&cfg)?;
    let report = run_methods(&cfg, &preps, &[cfg.method])?.remove(0);
    report.write(&common.out)?;
    println!("{}", summary_line(&report));
    Ok(())
}

fn write_reports(dir: &Path, reports: &[RunReport]) -> CmdResult {
    let mut csv = String::from("method,mean,std,best_teacher_mean\n");
    for r in reports {
        r.write(dir.join(r.method.name()))?;
        csv += &format!("{},{},{},{}\n", r.method.name(), r.mean, r.std, r.best_teacher_mean);
        println!("{}", summary_line(r));
    }
    write_text(&dir.join("summary.csv"), &csv)
}

pub fn eval(common: &Common, overrides: &[(String, String)], methods: &[String]) -> CmdResult {
    let cfg = config(common, overrides)?;
    let methods = if methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        parse_methods(methods, cfg.method)?
    };
    let preps = prepare_runs(&cfg)?;
    let reports = run_methods(&cfg, &preps, &methods)?;
    write_reports(&common.out, &reports)
}

pub fn perturb(
    common: &Common,
    overrides: &[(String, String)],
    kind: &str,
    lambdas: &[f64],
    methods: &[String],
) -> CmdResult {
    let cfg = config(common, overrides)?;
    let kind: PerturbKind = serde_json::from_value(serde_json::Value::String(kind.to_string()))
        .map_err(|_| format!("unknown perturbation '{kind}' (expected edge_drop or feature_mask)"))?;
    let methods = parse_methods(methods, cfg.method)?;
    let mut csv = String::from("kind,lambda,method,mean,std,teacher_mean,best_teacher_mean\n");
    for &lambda in lambdas {
        let mut c = cfg.clone();
        c.perturb = Some(PerturbConfig {
            kind,
            lambda,
            seed: cfg.perturb.map_or(0, |p| p.seed),
        });
        // Teachers learn from the perturbed graph.
        c.teacher_dir = None;
        c.validate()?;
        let preps = prepare_runs(&c)?;
        let reports = run_methods(&c, &preps, &methods)?;
        println!("lambda {lambda}");
        let dir = common.out.join(format!("lambda_{lambda}"));
        write_reports(&dir, &reports)?;
        for r in &reports {
            let teacher_mean = r.teacher_mean.iter().sum::<f64>() / r.teacher_mean.len() as f64;
            csv += &format!(
                "{},{lambda},{},{},{},{teacher_mean},{}\n",
                serde_json::to_value(kind)?.as_str().unwrap_or_default(),
                r.method.name(),
                r.mean,
                r.std,
                r.best_teacher_mean
            );
        }
    }
    write_text(&common.out.join("sweep.csv"), &csv)
}

pub fn analyze(common: &Common, overrides: &[(String, String)]) -> CmdResult {
    let cfg = config(common, overrides)?;
    let preps = prepare_runs(&cfg)?;
    let report = run_methods(&cfg, &preps, &[cfg.method])?.remove(0);
    report.write(&common.out)?;

    let k = preps[0].bank.num_teachers();
    let mut certainty = fs::File::create(common.out.join("certainty.csv"))?;
    writeln!(certainty, "run,node_id,teacher,certainty,correct")?;
    let mut by_teacher = vec![(Vec::new(), Vec::new()); k];
    for p in &preps {
        for t in 0..k {
            let soft = p.eval_bank.soft_labels(t);
            let scores = certainty_scores(soft)?;
            let preds = soft.argmax_rows();
            for &v in p.test_idx() {
                let correct = preds[v] == p.labels()[v];
                writeln!(certainty, "{},{v},{t},{},{}", p.run, scores[v], u8::from(correct))?;
                let bucket = &mut by_teacher[t];
                if correct { &mut bucket.0 } else { &mut bucket.1 }.push(scores[v]);
            }
        }
    }

    let mut counts = vec![0usize; k + 1];
    let mut decisions: Vec<(usize, usize)> = vec![(0, 0); k + 1];
    for r in &report.runs {
        r.groups.counts.iter().enumerate().for_each(|(g, c)| counts[g] += c);
        for d in r.decisions.iter().flatten() {
            decisions[d.group].0 += d.count;
            decisions[d.group].1 += d.good;
        }
    }
    let total = counts.iter().sum::<usize>().max(1) as f64;
    let has_decisions = report.runs.iter().any(|r| r.decisions.is_some());
    let groups: Vec<_> = (0..=k)
        .map(|g| {
            let decision = has_decisions.then(|| {
                let (count, good) = decisions[g];
                let ratio = (count > 0).then(|| good as f64 / count as f64);
                GroupDecision {
                    group: g,
                    count,
                    good,
                    ratio,
                    optimal: (count > 0).then_some(1.0),
                    delta: ratio.map(|r| 1.0 - r),
                }
            });
            json!({"group": g, "count": counts[g], "ratio": counts[g] as f64 / total, "decision": decision})
        })
        .collect();
    let certainty: Vec<_> = by_teacher
        .iter()
        .enumerate()
        .map(|(t, (right, wrong))| {
            json!({
                "teacher": t,
                "arch": preps[0].teachers[t].arch(),
                "mean_certainty_correct": mean_std(right).0,
                "mean_certainty_wrong": mean_std(wrong).0,
            })
        })
        .collect();
    let analysis = json!({"method": cfg.method, "groups": groups, "certainty": certainty});
    write_text(&common.out.join("analysis.json"), &(serde_json::to_string_pretty(&analysis)? + "\n"))?;
    for g in &groups {
        println!("{g}");
    }
    println!("{}", summary_line(&report));
    Ok(())
}

pub fn bench(common: &Common, overrides: &[(String, String)], repetitions: usize) -> CmdResult {
    let cfg = config(common, overrides)?;
    let graph = match &cfg.dataset {
        DatasetSource::Sbm(sbm) => sbm_for_run(&cfg, sbm, 0)?,
        DatasetSource::Path(p) => load_dataset(p)?.0,
    };
    let (f, c) = (graph.num_features(), graph.num_classes());
    let teachers = cfg
        .teachers
        .iter()
        .enumerate()
        .map(|(k, t)| GnnModel::new(t.clone().with_seed(derive_seed(cfg.seed, 100 + k as u64)), f, c))
        .collect::<Result<Vec<_>, _>>()?;
    let student = StudentModel::new(cfg.distill.clone(), f, c)?;
    let result = inference_benchmark(&teachers, &student, &graph, repetitions)?;
    write_text(&common.out.join("bench.json"), &(serde_json::to_string_pretty(&result)? + "\n"))?;
    println!("{} nodes, {} edges", result.num_nodes, result.num_edges);
    for (arch, ms) in &result.teacher_ms {
        println!("{:<10} {ms:>10.3} ms", arch.name());
    }
    println!("{:<10} {:>10.3} ms", "ensemble", result.ensemble_ms);
    println!("{:<10} {:>10.3} ms", "student", result.student_ms);
    println!("speedup    {:>10.1}x", result.ensemble_ms / result.student_ms);
    Ok(())
}
