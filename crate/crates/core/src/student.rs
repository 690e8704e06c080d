//! The graph-free student and the agent-guided distillation objective.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{affine, glorot, Mode, SeededRng};
use crate::teachers::GraphOps;
use crate::tensor::{AdamState, DenseMatrix, Reduce, SparseMatrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    /// Feature-only multilayer perceptron.
    Mlp,
    /// Graph convolutional student; needs the normalised adjacency.
    Gcn,
}

/// Student architecture, optimiser and distillation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    /// Weight of the supervised term; `1 - alpha` weighs distillation.
    pub alpha: f64,
    /// Reward assigned to a selection whose prediction is wrong, negated.
    pub penalty_e: f64,
    pub backbone: Backbone,
    pub layers: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub outer_iterations: usize,
    pub patience: usize,
    /// Full batch when `None`.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self::preset("cora").expect("built-in preset")
    }
}

impl DistillConfig {
    /// Student settings tuned per benchmark dataset. Unknown names yield
    /// `None`.
    pub fn preset(dataset: &str) -> Option<Self> {
        let (layers, hidden_dim, learning_rate, weight_decay, dropout) =
            match dataset.to_ascii_lowercase().as_str() {
                "cora" => (2, 128, 0.008, 0.005, 0.5),
                "citeseer" => (2, 128, 0.001, 0.01, 0.6),
                "pubmed" => (2, 128, 0.001, 0.005, 0.3),
                "wikics" => (2, 128, 0.008, 0.0, 0.5),
                "computer" => (2, 128, 0.005, 0.001, 0.5),
                "photo" => (2, 128, 0.01, 0.0, 0.5),
                "cs" => (2, 128, 0.008, 0.01, 0.5),
                "arxiv" | "ogbn-arxiv" => (3, 1024, 0.001, 0.001, 0.5),
                _ => return None,
            };
        Some(Self {
            alpha: 0.0,
            penalty_e: 5.0,
            backbone: Backbone::Mlp,
            layers,
            hidden_dim,
            learning_rate,
            weight_decay,
            dropout,
            outer_iterations: 100,
            patience: 20,
            batch_size: None,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.penalty_e > 0.0) {
            return Err(Error::invalid(format!("penalty e must be positive, got {}", self.penalty_e)));
        }
        if self.layers == 0 {
            return Err(Error::invalid("student needs at least one layer"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.outer_iterations == 0 {
            return Err(Error::invalid("outer_iterations must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.batch_size.is_some() && self.backbone == Backbone::Gcn {
            return Err(Error::invalid("minibatch training needs the graph-free student"));
        }
        Ok(())
    }
}

/// `[W, b]` per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentModel {
    pub config: DistillConfig,
    pub in_dim: usize,
    pub num_classes: usize,
    pub params: Vec<DenseMatrix>,
}

/// Handles to the penultimate activations and the logits.
#[derive(Clone, Copy, Debug)]
pub struct StudentOutput {
    pub hidden: Var,
    pub logits: Var,
}

impl StudentModel {
    pub fn new(config: DistillConfig, in_dim: usize, num_classes: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::seed_from_u64(config.seed);
        let mut params = Vec::with_capacity(2 * config.layers);
        for l in 0..config.layers {
            let i = if l == 0 { in_dim } else { config.hidden_dim };
            let o = if l + 1 == config.layers { num_classes } else { config.hidden_dim };
            params.push(glorot(i, o, &mut rng));
            params.push(DenseMatrix::zeros(1, o));
        }
        Ok(Self {
            config,
            in_dim,
            num_classes,
            params,
        })
    }

    pub fn from_params(
        config: DistillConfig,
        in_dim: usize,
        num_classes: usize,
        params: Vec<DenseMatrix>,
    ) -> Result<Self> {
        let template = Self::new(config, in_dim, num_classes)?;
        if template.params.len() != params.len()
            || template.params.iter().zip(&params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::shape(
                "StudentModel::from_params",
                format!("{} tensors", template.params.len()),
                format!("{} tensors", params.len()),
            ));
        }
        Ok(Self { params, ..template })
    }

    /// Width of [`StudentOutput::hidden`].
    pub fn hidden_dim(&self) -> usize {
        if self.config.layers == 1 {
            self.in_dim
        } else {
            self.config.hidden_dim
        }
    }

    /// Linear, ReLU, dropout blocks followed by a linear output layer.
    /// `graph` is consulted only by the GCN backbone.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
        graph: Option<&Arc<SparseMatrix>>,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<StudentOutput> {
        let (_, f) = tape.shape(x);
        if f != self.in_dim {
            return Err(Error::shape("student forward", self.in_dim, f));
        }
        let adj = match (self.config.backbone, graph) {
            (Backbone::Mlp, _) => None,
            (Backbone::Gcn, Some(a)) => Some(a),
            (Backbone::Gcn, None) => return Err(Error::invalid("GCN student needs a graph")),
        };
        let layers = self.config.layers;
        let mut h = x;
        let mut hidden = x;
        for l in 0..layers {
            h = match adj {
                None => affine(tape, h, params[2 * l], params[2 * l + 1])?,
                Some(a) => {
                    let hw = tape.matmul(h, params[2 * l])?;
                    let p = tape.spmm(a, hw)?;
                    tape.add_row(p, params[2 * l + 1])?
                }
            };
            if l + 1 < layers {
                h = tape.relu(h);
                hidden = h;
                h = tape.dropout(h, self.config.dropout, mode.is_train(), rng)?;
            }
        }
        Ok(StudentOutput { hidden, logits: h })
    }

    /// Eval-mode `(hidden, logits)` for every row of `features`.
    pub fn evaluate(
        &self,
        features: &DenseMatrix,
        graph: Option<&GraphOps>,
    ) -> Result<(DenseMatrix, DenseMatrix)> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let x = tape.constant(features.clone());
        let mut rng = SeededRng::seed_from_u64(0);
        let out = self.forward(&mut tape, &params, x, graph.map(|g| &g.gcn), Mode::Eval, &mut rng)?;
        Ok((tape.value(out.hidden).clone(), tape.value(out.logits).clone()))
    }

    pub fn logits(&self, features: &DenseMatrix, graph: Option<&GraphOps>) -> Result<DenseMatrix> {
        Ok(self.evaluate(features, graph)?.1)
    }
}

/// Where a node's distillation target comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetSource {
    /// Not part of the distillation set.
    Unassigned,
    /// Self target: contributes nothing to the KL term.
    Null,
    /// Soft labels of teacher `k` (0-based).
    Teacher(usize),
    /// A combined target such as an ensemble average.
    Soft,
}

/// Per-node distillation targets. Rows of null or unassigned nodes are
/// zero and never read.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillTargets {
    targets: Arc<DenseMatrix>,
    sources: Vec<TargetSource>,
}

impl DistillTargets {
    pub fn new(targets: DenseMatrix, sources: Vec<TargetSource>) -> Result<Self> {
        if sources.len() != targets.rows() {
            return Err(Error::shape("DistillTargets::new", targets.rows(), sources.len()));
        }
        for (v, s) in sources.iter().enumerate() {
            if matches!(s, TargetSource::Teacher(_) | TargetSource::Soft) {
                let row = targets.row(v);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                    return Err(Error::invalid(format!("target row {v} is not a distribution")));
                }
            }
        }
        Ok(Self {
            targets: Arc::new(targets),
            sources,
        })
    }

    /// The same soft target for every node in `idx`.
    pub fn from_matrix(m: &DenseMatrix, idx: &[usize]) -> Result<Self> {
        let mut targets = DenseMatrix::zeros(m.rows(), m.cols());
        let mut sources = vec![TargetSource::Unassigned; m.rows()];
        for &v in idx {
            targets.row_mut(v).copy_from_slice(m.row(v));
            sources[v] = TargetSource::Soft;
        }
        Self::new(targets, sources)
    }

    pub fn targets(&self) -> &DenseMatrix {
        &self.targets
    }

    pub fn sources(&self) -> &[TargetSource] {
        &self.sources
    }

    pub fn source(&self, v: usize) -> TargetSource {
        self.sources[v]
    }

    pub fn num_nodes(&self) -> usize {
        self.sources.len()
    }

    pub(crate) fn target_arc(&self) -> &Arc<DenseMatrix> {
        &self.targets
    }
}

/// `alpha * CE(train) + (1 - alpha) * sum_{v in kd} KL(target_v || p_v) / |kd|`
/// on the tape. Null nodes add exactly zero to the sum but still count in
/// the denominator. `logits` rows are aligned with node ids in
/// `targets`, `labels`, `train_idx` and `kd_idx`.
pub fn student_distill_loss(
    tape: &mut Tape,
    logits: Var,
    targets: &DistillTargets,
    labels: &[usize],
    train_idx: &[usize],
    kd_idx: &[usize],
    alpha: f64,
) -> Result<Var> {
    let n = tape.shape(logits).0;
    if targets.num_nodes() != n {
        return Err(Error::shape("student_distill_loss targets", n, targets.num_nodes()));
    }
    let ce = if alpha > 0.0 {
        let y: Vec<usize> = train_idx.iter().map(|&v| labels[v]).collect();
        Some(tape.cross_entropy(logits, train_idx, &y)?)
    } else {
        None
    };
    if alpha == 1.0 {
        return Ok(ce.expect("alpha > 0"));
    }
    if kd_idx.is_empty() {
        return Err(Error::invalid("distillation set is empty"));
    }
    let mut rows = Vec::with_capacity(kd_idx.len());
    for &v in kd_idx {
        match targets.sources.get(v) {
            None => {
                return Err(Error::IndexOutOfRange {
                    context: "distillation node".into(),
                    index: v,
                    bound: n,
                })
            }
            Some(TargetSource::Unassigned) => {
                return Err(Error::invalid(format!("node {v} has no distillation target")))
            }
            Some(TargetSource::Null) => {}
            Some(_) => rows.push(v),
        }
    }
    let probs = tape.softmax(logits);
    let kl = tape.kl_rows(targets.target_arc(), probs, &rows, Reduce::Sum)?;
    let kd = tape.scale(kl, (1.0 - alpha) / kd_idx.len() as f64);
    match ce {
        Some(ce) => {
            let ce = tape.scale(ce, alpha);
            tape.add(ce, kd)
        }
        None => Ok(kd),
    }
}

/// Data a student epoch reads; all index sets use node ids.
#[derive(Clone, Copy, Debug)]
pub struct EpochData<'a> {
    pub features: &'a DenseMatrix,
    pub graph: Option<&'a GraphOps>,
    pub labels: &'a [usize],
    pub train_idx: &'a [usize],
    pub kd_idx: &'a [usize],
}

/// One pass of Adam over the distillation objective with fixed targets:
/// a single full-batch step, or one sweep over shuffled minibatches when
/// `batch_size` is set. Returns the mean loss.
pub fn train_student_epoch(
    model: &mut StudentModel,
    data: &EpochData<'_>,
    targets: &DistillTargets,
    adam: &mut AdamState,
    rng: &mut SeededRng,
) -> Result<f64> {
    let alpha = model.config.alpha;
    match model.config.batch_size {
        None => {
            let mut tape = Tape::new();
            let params = tape.params(&model.params);
            let x = tape.constant(data.features.clone());
            let out = model.forward(&mut tape, &params, x, data.graph.map(|g| &g.gcn), Mode::Train, rng)?;
            let loss = student_distill_loss(
                &mut tape,
                out.logits,
                targets,
                data.labels,
                data.train_idx,
                data.kd_idx,
                alpha,
            )?;
            apply_step(model, &tape, &params, loss, adam)
        }
        Some(batch) => {
            let mut nodes: Vec<usize> = data.kd_idx.to_vec();
            nodes.extend(data.train_idx.iter().filter(|v| !data.kd_idx.contains(v)));
            nodes.shuffle(rng);
            let in_train: std::collections::HashSet<usize> = data.train_idx.iter().copied().collect();
            let in_kd: std::collections::HashSet<usize> = data.kd_idx.iter().copied().collect();
            let mut total = 0.0;
            let mut steps = 0;
            for chunk in nodes.chunks(batch) {
                let local_train: Vec<usize> = (0..chunk.len()).filter(|&i| in_train.contains(&chunk[i])).collect();
                let local_kd: Vec<usize> = (0..chunk.len()).filter(|&i| in_kd.contains(&chunk[i])).collect();
                if (alpha > 0.0 && local_train.is_empty()) || (alpha < 1.0 && local_kd.is_empty()) {
                    continue;
                }
                let local_targets = DistillTargets {
                    targets: Arc::new(targets.targets.select_rows(chunk)),
                    sources: chunk.iter().map(|&v| targets.sources[v]).collect(),
                };
                let local_labels: Vec<usize> = chunk.iter().map(|&v| data.labels[v]).collect();
                let mut tape = Tape::new();
                let params = tape.params(&model.params);
                let x = tape.constant(data.features.select_rows(chunk));
                let out = model.forward(&mut tape, &params, x, None, Mode::Train, rng)?;
                let loss = student_distill_loss(
                    &mut tape,
                    out.logits,
                    &local_targets,
                    &local_labels,
                    &local_train,
                    &local_kd,
                    alpha,
                )?;
                total += apply_step(model, &tape, &params, loss, adam)?;
                steps += 1;
            }
            if steps == 0 {
                return Err(Error::invalid("no minibatch contained both loss terms"));
            }
            Ok(total / steps as f64)
        }
    }
}

fn apply_step(
    model: &mut StudentModel,
    tape: &Tape,
    params: &[Var],
    loss: Var,
    adam: &mut AdamState,
) -> Result<f64> {
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: format!("student loss after {} optimiser steps", adam.step_count()),
        });
    }
    let grads = tape.backward(loss)?;
    let g: Vec<DenseMatrix> = params.iter().map(|&p| grads.wrt(p)).collect();
    adam.step(&mut model.params, &g)?;
    Ok(value)
}
