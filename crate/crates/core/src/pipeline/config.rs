use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{PerturbConfig, SbmConfig};
use crate::policy::PolicyConfig;
use crate::student::DistillConfig;
use crate::teachers::{Arch, TeacherConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Transductive,
    Inductive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    E2gnn,
    E2gnnNullOff,
    E2gnnRandomPolicy,
    Glnn,
    Gnne,
    EkdU,
    EkdW,
    Majority,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::E2gnn,
        Method::E2gnnNullOff,
        Method::E2gnnRandomPolicy,
        Method::Glnn,
        Method::Gnne,
        Method::EkdU,
        Method::EkdW,
        Method::Majority,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::E2gnn => "e2gnn",
            Method::E2gnnNullOff => "e2gnn_null_off",
            Method::E2gnnRandomPolicy => "e2gnn_random_policy",
            Method::Glnn => "glnn",
            Method::Gnne => "gnne",
            Method::EkdU => "ekd_u",
            Method::EkdW => "ekd_w",
            Method::Majority => "majority",
        }
    }

    /// Whether the method trains a student.
    pub fn distills(self) -> bool {
        !matches!(self, Method::Gnne | Method::Majority)
    }

    /// Whether the method learns a meta-policy.
    pub fn uses_policy(self) -> bool {
        matches!(self, Method::E2gnn | Method::E2gnnNullOff)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// Where the graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// A dataset directory in the canonical format.
    Path(PathBuf),
    /// A stochastic block model, regenerated for every repeat.
    Sbm(SbmConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Draw a fresh stratified split per repeat instead of using the
    /// dataset's stored split. Generated graphs always resample.
    pub resample: bool,
    pub per_class_train: usize,
    pub val_size: usize,
    /// Remainder of the nodes when unset.
    pub test_size: Option<usize>,
    /// Share of the unlabeled pool held out in the inductive protocol.
    pub inductive_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            resample: false,
            per_class_train: 20,
            val_size: 500,
            test_size: Some(1000),
            inductive_fraction: 0.2,
        }
    }
}

/// One experiment: a dataset, a protocol, a method and its settings,
/// repeated with derived seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub protocol: Protocol,
    pub method: Method,
    pub teachers: Vec<TeacherConfig>,
    pub distill: DistillConfig,
    pub policy: PolicyConfig,
    pub split: SplitConfig,
    pub perturb: Option<PerturbConfig>,
    /// Directory written by the pretraining step; teachers are trained
    /// inline when unset.
    pub teacher_dir: Option<PathBuf>,
    pub repeat: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Path(PathBuf::from("data/cora")),
            protocol: Protocol::Transductive,
            method: Method::E2gnn,
            teachers: Arch::ALL.into_iter().map(TeacherConfig::small).collect(),
            distill: DistillConfig::default(),
            policy: PolicyConfig::default(),
            split: SplitConfig::default(),
            perturb: None,
            teacher_dir: None,
            repeat: 10,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeat == 0 {
            return Err(Error::invalid("repeat must be at least 1"));
        }
        if self.teachers.is_empty() && self.teacher_dir.is_none() {
            return Err(Error::invalid("at least one teacher is required"));
        }
        for t in &self.teachers {
            t.validate()?;
        }
        self.distill.validate()?;
        if self.policy.batch_size == 0 {
            return Err(Error::invalid("policy batch_size must be positive"));
        }
        if let Some(p) = &self.perturb {
            p.validate()?;
        }
        if !(self.split.inductive_fraction > 0.0 && self.split.inductive_fraction < 1.0) {
            return Err(Error::invalid("inductive_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Policy settings for `method`, with the null action switched off for
    /// the `e2gnn_null_off` variant; every other field is left as configured.
    pub fn policy_config(&self, method: Method) -> PolicyConfig {
        let mut p = self.policy.clone();
        if method == Method::E2gnnNullOff {
            p.null_action = false;
        }
        p
    }

    pub fn policy_learning_rate(&self) -> f64 {
        self.policy.learning_rate.unwrap_or(self.distill.learning_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"method":"glnn","dataset":{"path":"x"},"repeat":3}"#).unwrap();
        assert_eq!(cfg.method, Method::Glnn);
        assert_eq!(cfg.repeat, 3);
        assert_eq!(cfg.teachers.len(), 5);
        assert_eq!(cfg.distill.penalty_e, 5.0);
        cfg.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn null_off_only_changes_the_action_space() {
        let cfg = ExperimentConfig::default();
        let (a, b) = (cfg.policy_config(Method::E2gnn), cfg.policy_config(Method::E2gnnNullOff));
        assert!(a.null_action && !b.null_action);
        assert_eq!(PolicyConfig { null_action: true, ..b }, a);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ExperimentConfig {
            repeat: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.repeat = 1;
        cfg.teachers.clear();
        assert!(cfg.validate().is_err());
    }
}
