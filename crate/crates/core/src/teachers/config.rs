use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Sage,
    Gat,
    Appnp,
    Sgc,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::Sage, Arch::Gcn, Arch::Gat, Arch::Appnp, Arch::Sgc];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Sage => "sage",
            Arch::Gat => "gat",
            Arch::Appnp => "appnp",
            Arch::Sgc => "sgc",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown architecture '{s}'")))
    }
}

/// Architecture and optimisation settings of one teacher.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    pub arch: Arch,
    pub layers: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Heads on hidden attention layers; the output layer uses one head.
    pub attention_heads: usize,
    pub power_iterations: usize,
    pub teleport: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self::small(Arch::Gcn)
    }
}

impl TeacherConfig {
    /// Settings used for the small and medium benchmark graphs.
    pub fn small(arch: Arch) -> Self {
        let (weight_decay, dropout) = match arch {
            Arch::Sage => (1e-3, 0.5),
            Arch::Gcn | Arch::Gat => (5e-4, 0.5),
            Arch::Appnp => (5e-4, 0.0),
            Arch::Sgc => (1e-3, 0.0),
        };
        Self {
            arch,
            layers: 2,
            hidden_dim: 128,
            learning_rate: 0.01,
            weight_decay,
            dropout,
            attention_heads: 8,
            power_iterations: 10,
            teleport: 0.1,
            max_epochs: 300,
            patience: 50,
            seed: 0,
        }
    }

    /// Settings used for the ogbn-arxiv scale graph.
    pub fn large(arch: Arch) -> Self {
        Self {
            layers: 3,
            hidden_dim: 256,
            weight_decay: 0.0,
            dropout: 0.5,
            ..Self::small(arch)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::invalid("teacher needs at least one layer"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.arch == Arch::Gat && self.layers > 1 {
            if self.attention_heads == 0 || self.hidden_dim % self.attention_heads != 0 {
                return Err(Error::invalid(format!(
                    "hidden_dim {} not divisible by {} attention heads",
                    self.hidden_dim, self.attention_heads
                )));
            }
        }
        if self.arch == Arch::Appnp {
            if self.power_iterations == 0 {
                return Err(Error::invalid("APPNP needs at least one power iteration"));
            }
            if !(0.0..=1.0).contains(&self.teleport) {
                return Err(Error::invalid(format!("teleport {} outside [0, 1]", self.teleport)));
            }
        }
        Ok(())
    }
}
