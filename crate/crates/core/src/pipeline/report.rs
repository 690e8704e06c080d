use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::analysis::{GroupDecision, GroupStats};
use crate::pipeline::config::{ExperimentConfig, Method, Protocol};
use crate::teachers::Arch;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub run: usize,
    pub iteration: usize,
    pub loss: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub mean_reward: Option<f64>,
    pub null_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub run: usize,
    pub node_id: usize,
    pub action: usize,
    pub logprob: f64,
    /// Present for validation nodes, the only ones with a reward.
    pub reward: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub run: usize,
    pub phase: String,
    pub name: String,
    pub millis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub best_iteration: Option<usize>,
    /// Teacher distilled by the single-teacher method.
    pub chosen_teacher: Option<usize>,
    pub teacher_val_accuracy: Vec<f64>,
    pub teacher_test_accuracy: Vec<f64>,
    /// Test nodes grouped by the number of correct teachers.
    pub groups: GroupStats,
    /// Quality of the selected policy's decisions on the test nodes.
    pub decisions: Option<Vec<GroupDecision>>,
    /// Count of each action over the distillation nodes at the selected
    /// iteration.
    pub action_histogram: Option<Vec<usize>>,
}

/// Results of one method over all repeats. Curves, actions and timings
/// go to CSV files rather than `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub protocol: Protocol,
    pub dataset: String,
    pub repeat: usize,
    pub base_seed: u64,
    pub teachers: Vec<Arch>,
    pub test_accuracy: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over the repeats.
    pub std: f64,
    pub teacher_mean: Vec<f64>,
    pub teacher_std: Vec<f64>,
    pub best_teacher_mean: f64,
    pub runs: Vec<RunRecord>,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub curves: Vec<IterationRecord>,
    #[serde(skip)]
    pub actions: Vec<ActionRecord>,
    #[serde(skip)]
    pub timings: Vec<TimingRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub(crate) fn write_csv(
    path: &Path,
    header: &str,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{header}")
        .and_then(|_| body(&mut w))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

impl RunReport {
    /// Writes `report.json`, `curves.csv`, `groups.csv`, `actions.csv` and
    /// `timing.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&json, e))?;
        write_csv(
            &dir.join("curves.csv"),
            "run,iteration,loss,val_accuracy,test_accuracy,mean_reward,null_rate",
            |w| {
                for c in &self.curves {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        c.run,
                        c.iteration,
                        c.loss,
                        c.val_accuracy,
                        c.test_accuracy,
                        opt(c.mean_reward),
                        opt(c.null_rate)
                    )?;
                }
                Ok(())
            },
        )?;
        write_csv(
            &dir.join("groups.csv"),
            "run,group,count,ratio,decision_good,decision_ratio,decision_delta",
            |w| {
                for r in &self.runs {
                    for (g, (&count, &ratio)) in r.groups.counts.iter().zip(&r.groups.ratios).enumerate() {
                        let d = r.decisions.as_ref().map(|d| &d[g]);
                        writeln!(
                            w,
                            "{},{g},{count},{ratio},{},{},{}",
                            r.run,
                            d.map(|d| d.good.to_string()).unwrap_or_default(),
                            opt(d.and_then(|d| d.ratio)),
                            opt(d.and_then(|d| d.delta)),
                        )?;
                    }
                }
                Ok(())
            },
        )?;
        write_csv(&dir.join("actions.csv"), "run,node_id,action,logprob,reward", |w| {
            for a in &self.actions {
                writeln!(w, "{},{},{},{},{}", a.run, a.node_id, a.action, a.logprob, opt(a.reward))?;
            }
            Ok(())
        })?;
        write_csv(&dir.join("timing.csv"), "run,phase,name,millis", |w| {
            for t in &self.timings {
                writeln!(w, "{},{},{},{}", t.run, t.phase, t.name, t.millis)?;
            }
            Ok(())
        })
    }
}
