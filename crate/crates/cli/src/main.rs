//! `nodedistill`: dataset preparation, teacher pretraining, distillation,
//! evaluation, perturbation sweeps, analysis and latency benchmarks.
//!
//! Every subcommand reads an experiment configuration (`--config file.json`
//! or the defaults) and accepts `--key=value` overrides of any field, with
//! dotted paths for nested fields, e.g. `--distill.alpha=0.3` or
//! `--teachers.*.max_epochs=100`.

mod commands;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "nodedistill", version, about = "Distil a set of GNN teachers into an MLP student")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment configuration in JSON; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed; every repeat derives its own seeds from it.
    #[arg(long)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a dataset directory: a converted LINQS dataset or a generated
    /// block-model graph, together with a split.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Directory holding `<name>.content` and `<name>.cites`.
        #[arg(long)]
        linqs: Option<PathBuf>,
        #[arg(long, default_value = "cora")]
        name: String,
        /// Keep raw LINQS attributes instead of row-normalising them.
        #[arg(long)]
        raw_features: bool,
    },
    /// Train the teachers of every repeat and save them for reuse through
    /// `--teacher_dir`.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured method and write its report.
    Distill {
        #[command(flatten)]
        common: Common,
    },
    /// Run several methods on shared teachers and splits and compare them.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods; all methods when omitted.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// Sweep a perturbation strength, retraining the teachers at each level.
    Perturb {
        #[command(flatten)]
        common: Common,
        /// `edge_drop` or `feature_mask`.
        #[arg(long, default_value = "edge_drop")]
        kind: String,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.3, 0.5, 0.7, 0.9])]
        lambdas: Vec<f64>,
        /// Comma-separated methods; the configured method when omitted.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// Group statistics, policy decisions and teacher certainty.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Full-graph inference latency of the teachers and the student.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, overrides) = overrides::extract_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    let result = match cli.command {
        Command::Prepare {
            common,
            linqs,
            name,
            raw_features,
        } => commands::prepare(&common, &overrides, linqs.as_deref(), &name, !raw_features),
        Command::Pretrain { common } => commands::pretrain(&common, &overrides),
        Command::Distill { common } => commands::distill(&common, &overrides),
        Command::Eval { common, methods } => commands::eval(&common, &overrides, &methods),
        Command::Perturb {
            common,
            kind,
            lambdas,
            methods,
        } => commands::perturb(&common, &overrides, &kind, &lambdas, &methods),
        Command::Analyze { common } => commands::analyze(&common, &overrides),
        Command::Bench { common, repetitions } => commands::bench(&common, &overrides, repetitions),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
