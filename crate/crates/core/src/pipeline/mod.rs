//! Experiment orchestration: data preparation, teacher pretraining, the
//! alternating student/policy optimisation, baselines, analysis and
//! report files.

mod analysis;
mod bench;
mod config;
mod report;
mod run;

pub use analysis::{
    certainty_scores, correct_teacher_counts, evaluate_accuracy, group_statistics, mean_std,
    policy_decision_report, GroupDecision, GroupStats,
};
pub use bench::{inference_benchmark, median_millis, BenchmarkResult};
pub use config::{DatasetSource, ExperimentConfig, Method, Protocol, SplitConfig};
pub use report::{ActionRecord, IterationRecord, RunRecord, RunReport, TimingRecord};
pub use run::{
    build_report, prepare_run, prepare_runs, run_e2gnn, run_experiment, run_method, run_methods,
    run_seed, save_prepared, sbm_for_run, split_for_run, LoadedSource, MethodOutcome, PreparedRun,
};
