use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::checkpoint::{load_teacher, save_teacher};
use crate::ensemble::{glnn_targets, majority_vote, soft_average_targets, weighted_targets};
use crate::error::{Error, Result};
use crate::graph::{
    generate_sbm, load_dataset, make_inductive_split, make_transductive_splits, perturb, Graph,
    PerturbConfig, SbmConfig, SplitSpec,
};
use crate::nn::{derive_seed, SeededRng};
use crate::pipeline::analysis::{evaluate_accuracy, group_statistics, mean_std, policy_decision_report};
use crate::pipeline::config::{DatasetSource, ExperimentConfig, Method, Protocol};
use crate::pipeline::report::{
    ActionRecord, IterationRecord, RunRecord, RunReport, TimingRecord,
};
use crate::policy::{
    compute_rewards, policy_forward, policy_gradient_step, sample_actions, select_distill_targets,
    targets_from_actions, MetaPolicy,
};
use crate::student::{train_student_epoch, DistillTargets, EpochData, StudentModel};
use crate::teachers::{pretrain_teacher, soft_labels_of, GnnModel, GraphOps, TeacherBank};
use crate::tensor::ops::{cross_entropy, row_softmax};
use crate::tensor::AdamState;

const STREAM_GRAPH: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_STUDENT: u64 = 3;
const STREAM_POLICY: u64 = 4;
const STREAM_TRAINING: u64 = 5;
const STREAM_PERTURB: u64 = 6;
const STREAM_TEACHER: u64 = 100;

/// Seed of repeat `run` under base seed `base`.
pub fn run_seed(base: u64, run: usize) -> u64 {
    derive_seed(base, run as u64)
}

/// Data, split and frozen teachers for one repeat, shared by every method.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub run: usize,
    pub seed: u64,
    /// The complete (possibly perturbed) graph.
    pub graph: Graph,
    /// The graph visible during training: the full graph, or the observed
    /// graph in the inductive protocol.
    pub train_graph: Graph,
    pub split: SplitSpec,
    pub protocol: Protocol,
    pub teachers: Vec<GnnModel>,
    /// Soft labels on the training graph; distillation reads these.
    pub bank: TeacherBank,
    /// Soft labels on the full graph; used for test-time evaluation.
    pub eval_bank: TeacherBank,
    pub teacher_test_accuracy: Vec<f64>,
    pub timings: Vec<TimingRecord>,
}

impl PreparedRun {
    /// Test nodes: the held-out inductive set, or the split's test set.
    pub fn test_idx(&self) -> &[usize] {
        match (&self.protocol, &self.split.inductive) {
            (Protocol::Inductive, Some(ind)) => ind,
            _ => &self.split.test,
        }
    }

    /// Nodes the student is distilled on: every node, minus the inductive
    /// set in the inductive protocol.
    pub fn kd_idx(&self) -> Vec<usize> {
        let n = self.graph.num_nodes();
        match (&self.protocol, &self.split.inductive) {
            (Protocol::Inductive, Some(ind)) => {
                let mut hidden = vec![false; n];
                ind.iter().for_each(|&v| hidden[v] = true);
                (0..n).filter(|&v| !hidden[v]).collect()
            }
            _ => (0..n).collect(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        self.graph.labels()
    }
}

/// A dataset directory loaded once and reused across repeats.
pub struct LoadedSource {
    base: Option<(Graph, SplitSpec)>,
}

impl LoadedSource {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let base = match &cfg.dataset {
            DatasetSource::Path(p) => Some(load_dataset(p)?),
            DatasetSource::Sbm(_) => None,
        };
        Ok(Self { base })
    }
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Block-model graph of repeat `run`.
pub fn sbm_for_run(cfg: &ExperimentConfig, sbm: &SbmConfig, run: usize) -> Result<Graph> {
    sbm_for_seed(sbm, run_seed(cfg.seed, run))
}

fn sbm_for_seed(sbm: &SbmConfig, seed: u64) -> Result<Graph> {
    generate_sbm(&SbmConfig {
        seed: derive_seed(sbm.seed, derive_seed(seed, STREAM_GRAPH)),
        ..sbm.clone()
    })
}

/// Freshly drawn split of repeat `run`, including the inductive partition
/// under the inductive protocol.
pub fn split_for_run(cfg: &ExperimentConfig, graph: &Graph, run: usize) -> Result<SplitSpec> {
    let seed = run_seed(cfg.seed, run);
    let split = fresh_split(cfg, graph, seed)?;
    Ok(apply_protocol(cfg, graph, split, seed)?.0)
}

fn fresh_split(cfg: &ExperimentConfig, graph: &Graph, seed: u64) -> Result<SplitSpec> {
    make_transductive_splits(
        graph,
        cfg.split.per_class_train,
        cfg.split.val_size,
        cfg.split.test_size,
        derive_seed(seed, STREAM_SPLIT),
    )
}

fn run_graph_and_split(
    cfg: &ExperimentConfig,
    source: &LoadedSource,
    seed: u64,
) -> Result<(Graph, SplitSpec)> {
    let (mut graph, stored) = match (&cfg.dataset, &source.base) {
        (DatasetSource::Sbm(sbm), _) => (sbm_for_seed(sbm, seed)?, None),
        (DatasetSource::Path(_), Some((g, s))) => (g.clone(), Some(s.clone())),
        (DatasetSource::Path(p), None) => {
            return Err(Error::invalid(format!("dataset {} was not loaded", p.display())))
        }
    };
    if let Some(p) = &cfg.perturb {
        let p = PerturbConfig {
            seed: derive_seed(p.seed, derive_seed(seed, STREAM_PERTURB)),
            ..*p
        };
        graph = perturb(&graph, &p)?;
    }
    let base = match stored {
        Some(s) if !cfg.split.resample => s,
        _ => fresh_split(cfg, &graph, seed)?,
    };
    Ok((graph, base))
}

fn apply_protocol(
    cfg: &ExperimentConfig,
    graph: &Graph,
    split: SplitSpec,
    seed: u64,
) -> Result<(SplitSpec, Graph)> {
    match cfg.protocol {
        Protocol::Transductive => Ok((
            SplitSpec {
                inductive: None,
                observed: None,
                ..split
            },
            graph.clone(),
        )),
        Protocol::Inductive if split.is_inductive() => {
            let hidden: HashSet<usize> = split.inductive.iter().flatten().copied().collect();
            let kept: Vec<_> = graph
                .edges()
                .into_iter()
                .filter(|(u, v)| !hidden.contains(u) && !hidden.contains(v))
                .collect();
            let observed = graph.with_edges(&kept)?;
            Ok((split, observed))
        }
        Protocol::Inductive => make_inductive_split(
            graph,
            &split,
            cfg.split.inductive_fraction,
            derive_seed(seed, STREAM_SPLIT + 1000),
        ),
    }
}

fn teacher_stem(dir: &Path, run: usize, k: usize) -> std::path::PathBuf {
    dir.join(format!("run{run}")).join(format!("teacher{k}"))
}

/// Builds the graph, split and teacher bank of repeat `run`.
pub fn prepare_run(cfg: &ExperimentConfig, source: &LoadedSource, run: usize) -> Result<PreparedRun> {
    let seed = run_seed(cfg.seed, run);
    let (graph, base) = run_graph_and_split(cfg, source, seed)?;
    let mut timings = Vec::new();

    let (split, teachers, val_acc) = match &cfg.teacher_dir {
        Some(dir) => {
            let split_path = dir.join(format!("run{run}")).join("split.json");
            let text = std::fs::read_to_string(&split_path).map_err(|e| Error::io(&split_path, e))?;
            let split: SplitSpec = serde_json::from_str(&text)?;
            split.validate(graph.num_nodes())?;
            let mut teachers = Vec::new();
            let mut acc = Vec::new();
            for k in 0.. {
                let stem = teacher_stem(dir, run, k);
                if !stem.with_extension("json").exists() {
                    break;
                }
                let (m, a) = load_teacher(&stem)?;
                teachers.push(m);
                acc.push(a);
            }
            if teachers.is_empty() {
                return Err(Error::invalid(format!("no teachers found under {}", dir.display())));
            }
            (split, teachers, acc)
        }
        None => {
            let (split, train_graph) = apply_protocol(cfg, &graph, base, seed)?;
            let mut teachers = Vec::new();
            let mut acc = Vec::new();
            for (k, tc) in cfg.teachers.iter().enumerate() {
                let tc = tc.clone().with_seed(derive_seed(seed, STREAM_TEACHER + k as u64));
                let start = Instant::now();
                let t = pretrain_teacher(&train_graph, &split, &tc)?;
                timings.push(TimingRecord {
                    run,
                    phase: "pretrain".into(),
                    name: format!("teacher{k}_{}", tc.arch),
                    millis: millis(start),
                });
                info!("run {run}: {} teacher val acc {:.4}", tc.arch, t.val_accuracy);
                acc.push(t.val_accuracy);
                teachers.push(t.model);
            }
            (split, teachers, acc)
        }
    };
    let train_graph = match (cfg.protocol, &split.inductive) {
        (Protocol::Inductive, Some(_)) => apply_protocol(cfg, &graph, split.clone(), seed)?.1,
        _ => graph.clone(),
    };
    if cfg.protocol == Protocol::Inductive && !split.is_inductive() {
        return Err(Error::invalid("inductive protocol needs an inductive split"));
    }

    let refs: Vec<&GnnModel> = teachers.iter().collect();
    let configs: Vec<_> = teachers.iter().map(|t| t.config.clone()).collect();
    let bank = TeacherBank::new(soft_labels_of(&refs, &train_graph)?, val_acc.clone(), configs.clone())?;
    let eval_bank = if cfg.protocol == Protocol::Inductive {
        TeacherBank::new(soft_labels_of(&refs, &graph)?, val_acc, configs)?
    } else {
        bank.clone()
    };
    let mut prep = PreparedRun {
        run,
        seed,
        graph,
        train_graph,
        split,
        protocol: cfg.protocol,
        teachers,
        bank,
        eval_bank,
        teacher_test_accuracy: Vec::new(),
        timings,
    };
    prep.teacher_test_accuracy = prep
        .eval_bank
        .predictions()
        .iter()
        .map(|p| evaluate_accuracy(p, prep.labels(), prep.test_idx()))
        .collect::<Result<_>>()?;
    Ok(prep)
}

/// Writes the teachers and split of a prepared run so a later
/// experiment can reuse them through `teacher_dir`.
pub fn save_prepared(dir: &Path, prep: &PreparedRun) -> Result<()> {
    let run_dir = dir.join(format!("run{}", prep.run));
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let split_path = run_dir.join("split.json");
    std::fs::write(&split_path, serde_json::to_string(&prep.split)?).map_err(|e| Error::io(&split_path, e))?;
    for (k, m) in prep.teachers.iter().enumerate() {
        save_teacher(teacher_stem(dir, prep.run, k), m, prep.bank.val_accuracy()[k])?;
    }
    crate::checkpoint::save_bank(run_dir.join("bank"), &prep.bank)
}

/// Result of one method on one prepared run.
#[derive(Clone, Debug)]
pub struct MethodOutcome {
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub best_iteration: Option<usize>,
    pub chosen_teacher: Option<usize>,
    pub curve: Vec<IterationRecord>,
    pub actions: Vec<ActionRecord>,
    /// Greedy actions of the selected policy on the test nodes.
    pub test_actions: Option<Vec<usize>>,
    pub student: Option<StudentModel>,
    pub policy: Option<MetaPolicy>,
    pub timings: Vec<TimingRecord>,
}

/// Runs `method` on a prepared repeat.
pub fn run_method(cfg: &ExperimentConfig, prep: &PreparedRun, method: Method) -> Result<MethodOutcome> {
    let labels = prep.labels();
    match method {
        Method::Gnne | Method::Majority => {
            let preds = if method == Method::Gnne {
                soft_average_targets(&prep.eval_bank).argmax_rows()
            } else {
                majority_vote(&prep.eval_bank)
            };
            let val_preds = if method == Method::Gnne {
                soft_average_targets(&prep.bank).argmax_rows()
            } else {
                majority_vote(&prep.bank)
            };
            Ok(MethodOutcome {
                test_accuracy: evaluate_accuracy(&preds, labels, prep.test_idx())?,
                val_accuracy: evaluate_accuracy(&val_preds, labels, &prep.split.val)?,
                best_iteration: None,
                chosen_teacher: None,
                curve: Vec::new(),
                actions: Vec::new(),
                test_actions: None,
                student: None,
                policy: None,
                timings: Vec::new(),
            })
        }
        _ => run_e2gnn(cfg, prep, method),
    }
}

/// Alternating optimisation of student and meta-policy, or plain
/// distillation on fixed targets for the non-policy methods.
///
/// Each outer iteration takes the student's hidden states, runs one
/// policy-gradient pass over the validation nodes in minibatches, rebuilds
/// the greedy targets and trains the student for one epoch. The student
/// with the best validation accuracy is kept; training stops after
/// `patience` iterations without improvement.
pub fn run_e2gnn(cfg: &ExperimentConfig, prep: &PreparedRun, method: Method) -> Result<MethodOutcome> {
    if !method.distills() {
        return Err(Error::invalid(format!("{method} does not train a student")));
    }
    let dcfg = cfg.distill.clone();
    let bank = &prep.bank;
    let labels = prep.labels();
    let kd_idx = prep.kd_idx();
    let val = &prep.split.val;
    let test = prep.test_idx();
    if val.is_empty() {
        return Err(Error::invalid("distillation needs a validation set"));
    }
    let features = prep.train_graph.features();
    let train_ops = (dcfg.backbone == crate::student::Backbone::Gcn).then(|| GraphOps::new(&prep.train_graph));
    let eval_ops = (dcfg.backbone == crate::student::Backbone::Gcn).then(|| GraphOps::new(&prep.graph));

    let mut student = StudentModel::new(
        crate::student::DistillConfig {
            seed: derive_seed(prep.seed, STREAM_STUDENT),
            ..dcfg.clone()
        },
        prep.graph.num_features(),
        prep.graph.num_classes(),
    )?;
    let mut adam = AdamState::new(&student.params, dcfg.learning_rate, dcfg.weight_decay);
    let mut rng = SeededRng::seed_from_u64(derive_seed(prep.seed, STREAM_TRAINING));
    let pcfg = cfg.policy_config(method);
    let mut policy = if method.uses_policy() {
        Some(MetaPolicy::new(
            student.hidden_dim(),
            bank.num_teachers(),
            &pcfg,
            derive_seed(prep.seed, STREAM_POLICY),
        )?)
    } else {
        None
    };
    let mut policy_adam = policy
        .as_ref()
        .map(|p| AdamState::new(&p.params, cfg.policy_learning_rate(), pcfg.weight_decay));

    let (fixed, chosen_teacher) = match method {
        Method::Glnn => {
            let (t, k) = glnn_targets(bank);
            (Some(DistillTargets::from_matrix(&t, &kd_idx)?), Some(k))
        }
        Method::EkdU => (Some(DistillTargets::from_matrix(&soft_average_targets(bank), &kd_idx)?), None),
        Method::EkdW => (Some(DistillTargets::from_matrix(&weighted_targets(bank), &kd_idx)?), None),
        _ => (None, None),
    };

    let val_labels: Vec<usize> = val.iter().map(|&v| labels[v]).collect();
    let data = EpochData {
        features,
        graph: train_ops.as_ref(),
        labels,
        train_idx: &prep.split.train,
        kd_idx: &kd_idx,
    };
    let mut best: Option<(f64, f64)> = None;
    let mut best_student = student.clone();
    let mut best_policy = policy.clone();
    let mut best_iteration = 0;
    let mut best_actions = Vec::new();
    let mut stale = 0;
    let mut curve = Vec::new();
    let start = Instant::now();

    for it in 0..dcfg.outer_iterations {
        let mut mean_reward = None;
        let mut greedy = None;
        let targets = match (&fixed, method) {
            (Some(t), _) => t.clone(),
            (None, Method::E2gnnRandomPolicy) => {
                let k = bank.num_teachers();
                let actions: Vec<usize> = kd_idx.iter().map(|_| rng.random_range(0..=k)).collect();
                let t = targets_from_actions(bank, &kd_idx, &actions)?;
                greedy = Some((actions, vec![-((k + 1) as f64).ln(); kd_idx.len()]));
                t
            }
            (None, _) => {
                let p = policy.as_mut().expect("policy methods own a policy");
                let opt = policy_adam.as_mut().expect("policy optimiser");
                let (hidden, logits) = student.evaluate(features, train_ops.as_ref())?;
                let probs = row_softmax(&logits);
                let mut order = val.clone();
                order.shuffle(&mut rng);
                let mut reward_sum = 0.0;
                for batch in order.chunks(pcfg.batch_size) {
                    let states = hidden.select_rows(batch);
                    let dist = policy_forward(p, &states)?;
                    let sampled = sample_actions(&dist, &mut rng, false)?;
                    let rewards = compute_rewards(batch, &sampled.actions, bank, &probs, labels, dcfg.penalty_e)?;
                    let b = policy_gradient_step(p, &states, &sampled.actions, &rewards, opt)?;
                    reward_sum += b * batch.len() as f64;
                }
                mean_reward = Some(reward_sum / val.len() as f64);
                let (t, assignment) = select_distill_targets(p, &hidden, bank, &kd_idx)?;
                greedy = Some((assignment.actions, assignment.log_probs));
                t
            }
        };
        let loss = train_student_epoch(&mut student, &data, &targets, &mut adam, &mut rng)?;

        let logits = student.logits(prep.graph.features(), eval_ops.as_ref())?;
        let preds = logits.argmax_rows();
        let val_accuracy = evaluate_accuracy(&preds, labels, val)?;
        let val_loss = cross_entropy(&logits.select_rows(val), &val_labels)?;
        let test_accuracy = evaluate_accuracy(&preds, labels, test)?;
        let null_rate = greedy
            .as_ref()
            .map(|(a, _)| a.iter().filter(|&&x| x == 0).count() as f64 / a.len().max(1) as f64);
        curve.push(IterationRecord {
            run: prep.run,
            iteration: it,
            loss,
            val_accuracy,
            test_accuracy,
            mean_reward,
            null_rate,
        });
        let improved = match best {
            None => true,
            Some((acc, vl)) => val_accuracy > acc || (val_accuracy == acc && val_loss < vl),
        };
        if improved {
            best = Some((val_accuracy, val_loss));
            best_student = student.clone();
            best_policy = policy.clone();
            best_iteration = it;
            best_actions = greedy.map(|(a, l)| (a, l, targets.clone())).into_iter().collect();
            stale = 0;
        } else {
            stale += 1;
            if stale >= dcfg.patience {
                break;
            }
        }
    }
    let distill_ms = millis(start);

    let logits = best_student.logits(prep.graph.features(), eval_ops.as_ref())?;
    let preds = logits.argmax_rows();
    let test_accuracy = evaluate_accuracy(&preds, labels, test)?;
    let val_accuracy = best.map_or(0.0, |b| b.0);

    let mut actions = Vec::new();
    if let Some((acts, logps, _)) = best_actions.into_iter().next() {
        let probs = row_softmax(&best_student.logits(features, train_ops.as_ref())?);
        let mut is_val = vec![false; prep.graph.num_nodes()];
        val.iter().for_each(|&v| is_val[v] = true);
        for ((&v, &a), &lp) in kd_idx.iter().zip(&acts).zip(&logps) {
            let reward = if is_val[v] {
                Some(compute_rewards(&[v], &[a], bank, &probs, labels, dcfg.penalty_e)?[0])
            } else {
                None
            };
            actions.push(ActionRecord {
                run: prep.run,
                node_id: v,
                action: a,
                logprob: lp,
                reward,
            });
        }
    }
    let test_actions = match &best_policy {
        Some(p) => {
            let (hidden, _) = best_student.evaluate(prep.graph.features(), eval_ops.as_ref())?;
            let dist = policy_forward(p, &hidden.select_rows(test))?;
            Some(sample_actions(&dist, &mut SeededRng::seed_from_u64(0), true)?.actions)
        }
        None => None,
    };
    Ok(MethodOutcome {
        test_accuracy,
        val_accuracy,
        best_iteration: Some(best_iteration),
        chosen_teacher,
        curve,
        actions,
        test_actions,
        student: Some(best_student),
        policy: best_policy,
        timings: vec![TimingRecord {
            run: prep.run,
            phase: "distill".into(),
            name: method.name().into(),
            millis: distill_ms,
        }],
    })
}

fn record(prep: &PreparedRun, outcome: &MethodOutcome) -> Result<RunRecord> {
    let groups = group_statistics(&prep.eval_bank, prep.labels(), prep.test_idx());
    let decisions = match &outcome.test_actions {
        Some(a) => Some(policy_decision_report(a, &prep.eval_bank, prep.labels(), prep.test_idx())?),
        None => None,
    };
    let action_histogram = (!outcome.actions.is_empty()).then(|| {
        let mut h = vec![0; prep.bank.num_teachers() + 1];
        outcome.actions.iter().for_each(|a| h[a.action] += 1);
        h
    });
    Ok(RunRecord {
        run: prep.run,
        seed: prep.seed,
        test_accuracy: outcome.test_accuracy,
        val_accuracy: outcome.val_accuracy,
        best_iteration: outcome.best_iteration,
        chosen_teacher: outcome.chosen_teacher,
        teacher_val_accuracy: prep.bank.val_accuracy().to_vec(),
        teacher_test_accuracy: prep.teacher_test_accuracy.clone(),
        groups,
        decisions,
        action_histogram,
    })
}

/// Assembles the report of one method from per-run outcomes.
pub fn build_report(
    cfg: &ExperimentConfig,
    method: Method,
    preps: &[PreparedRun],
    outcomes: &[MethodOutcome],
) -> Result<RunReport> {
    let runs = preps
        .iter()
        .zip(outcomes)
        .map(|(p, o)| record(p, o))
        .collect::<Result<Vec<_>>>()?;
    let test_accuracy: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let (mean, std) = mean_std(&test_accuracy);
    let k = preps.first().map_or(0, |p| p.teacher_test_accuracy.len());
    let (teacher_mean, teacher_std): (Vec<f64>, Vec<f64>) = (0..k)
        .map(|t| mean_std(&runs.iter().map(|r| r.teacher_test_accuracy[t]).collect::<Vec<_>>()))
        .unzip();
    let mut timings: Vec<TimingRecord> = preps.iter().flat_map(|p| p.timings.clone()).collect();
    timings.extend(outcomes.iter().flat_map(|o| o.timings.clone()));
    Ok(RunReport {
        method,
        protocol: cfg.protocol,
        dataset: preps.first().map(|p| p.graph.name.clone()).unwrap_or_default(),
        repeat: runs.len(),
        base_seed: cfg.seed,
        teachers: preps
            .first()
            .map(|p| p.teachers.iter().map(|t| t.arch()).collect())
            .unwrap_or_default(),
        best_teacher_mean: teacher_mean.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        teacher_mean,
        teacher_std,
        test_accuracy,
        mean,
        std,
        runs,
        config: ExperimentConfig {
            method,
            ..cfg.clone()
        },
        curves: outcomes.iter().flat_map(|o| o.curve.clone()).collect(),
        actions: outcomes.iter().flat_map(|o| o.actions.clone()).collect(),
        timings,
    })
}

/// Prepares every repeat once.
pub fn prepare_runs(cfg: &ExperimentConfig) -> Result<Vec<PreparedRun>> {
    cfg.validate()?;
    let source = LoadedSource::load(cfg)?;
    let runs: Vec<usize> = (0..cfg.repeat).collect();
    concurrent_map(&runs, |&r| prepare_run(cfg, &source, r)).into_iter().collect()
}

/// Applies `f` to every item on up to `available_parallelism` scoped
/// threads, keeping the input order.
fn concurrent_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let f = &f;
    let mut slots: Vec<Option<R>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..items.len())
                        .step_by(workers)
                        .map(|i| (i, f(&items[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
        for h in handles {
            for (i, r) in h.join().expect("repeat worker panicked") {
                slots[i] = Some(r);
            }
        }
        slots
    });
    slots.iter_mut().map(|r| r.take().expect("every repeat ran")).collect()
}

/// Runs several methods on the same prepared repeats.
pub fn run_methods(cfg: &ExperimentConfig, preps: &[PreparedRun], methods: &[Method]) -> Result<Vec<RunReport>> {
    methods
        .iter()
        .map(|&m| {
            let outcomes = concurrent_map(preps, |p| run_method(cfg, p, m))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            build_report(cfg, m, preps, &outcomes)
        })
        .collect()
}

/// Prepares the repeats and runs `cfg.method` on each.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let preps = prepare_runs(cfg)?;
    Ok(run_methods(cfg, &preps, &[cfg.method])?.remove(0))
}
