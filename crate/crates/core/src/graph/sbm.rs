use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{adjacency_from_pairs, Graph};
use crate::tensor::DenseMatrix;

/// Stochastic block model with Gaussian class-conditional features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbmConfig {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    /// Three blocks of 200 nodes with `p_in = 0.05` and `p_out = 0.005`.
    fn default() -> Self {
        Self {
            classes: 3,
            nodes_per_class: 200,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 128,
            feature_noise: 1.0,
            seed: 0,
        }
    }
}

/// Nodes `[c * nodes_per_class, (c + 1) * nodes_per_class)` form block `c`.
/// Each pair is connected with probability `p_in` inside a block and
/// `p_out` across blocks. Node features are the one-hot class mean
/// `e_c` plus isotropic Gaussian noise with standard deviation
/// `feature_noise`.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    for (name, p) in [("p_in", cfg.p_in), ("p_out", cfg.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("{name} = {p} is not a probability")));
        }
    }
    if cfg.feature_noise < 0.0 || !cfg.feature_noise.is_finite() {
        return Err(Error::invalid("feature_noise must be a nonnegative number"));
    }
    if cfg.classes == 0 || cfg.feature_dim < cfg.classes {
        return Err(Error::invalid(format!(
            "need at least one class and feature_dim >= classes ({} < {})",
            cfg.feature_dim, cfg.classes
        )));
    }
    let n = cfg.classes * cfg.nodes_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels: Vec<usize> = (0..n).map(|v| v / cfg.nodes_per_class).collect();

    let mut pairs = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if p > 0.0 && rng.random::<f64>() < p {
                pairs.push((u, v));
            }
        }
    }
    let adjacency = adjacency_from_pairs(n, pairs.into_iter())?;

    let noise = Normal::new(0.0, cfg.feature_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let features = DenseMatrix::from_fn(n, cfg.feature_dim, |r, c| {
        let mean = if c == labels[r] { 1.0 } else { 0.0 };
        if cfg.feature_noise == 0.0 {
            mean
        } else {
            mean + noise.sample(&mut rng)
        }
    });
    Graph::new("sbm", adjacency, features, labels, cfg.classes)
}
