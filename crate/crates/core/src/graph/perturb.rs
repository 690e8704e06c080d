use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    FeatureMask,
    EdgeDrop,
}

/// Bernoulli corruption of features or edges with probability `lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    pub kind: PerturbKind,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            kind: PerturbKind::EdgeDrop,
            lambda: 0.0,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("perturbation lambda {} outside [0, 1]", self.lambda)));
        }
        Ok(())
    }
}

/// Zeroes each feature entry independently with probability `lambda`.
pub fn mask_features(g: &Graph, cfg: &PerturbConfig) -> Result<Graph> {
    cfg.validate()?;
    if cfg.kind != PerturbKind::FeatureMask {
        return Err(Error::invalid("mask_features needs a feature_mask config"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = g.features().clone();
    for v in x.data_mut() {
        if rng.random::<f64>() < cfg.lambda {
            *v = 0.0;
        }
    }
    g.with_features(x)
}

/// Drops each undirected edge independently with probability `lambda`.
pub fn perturb_edges(g: &Graph, cfg: &PerturbConfig) -> Result<Graph> {
    cfg.validate()?;
    if cfg.kind != PerturbKind::EdgeDrop {
        return Err(Error::invalid("perturb_edges needs an edge_drop config"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let kept: Vec<_> = g
        .edges()
        .into_iter()
        .filter(|_| rng.random::<f64>() >= cfg.lambda)
        .collect();
    g.with_edges(&kept)
}

pub fn perturb(g: &Graph, cfg: &PerturbConfig) -> Result<Graph> {
    match cfg.kind {
        PerturbKind::FeatureMask => mask_features(g, cfg),
        PerturbKind::EdgeDrop => perturb_edges(g, cfg),
    }
}
