//! Node-level teacher selection: the meta-policy, its reward and the
//! baseline-subtracted policy gradient.
//!
//! Action `0` is the null action (no distillation for the node); action
//! `k >= 1` selects teacher `k - 1` of the bank.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{affine, glorot, SeededRng};
use crate::student::{DistillTargets, TargetSource};
use crate::teachers::TeacherBank;
use crate::tensor::ops::{kl_row, row_softmax};
use crate::tensor::{argmax, AdamState, DenseMatrix, Tape, Var};

pub const NULL_ACTION: usize = 0;

/// Logit added to a disabled null action; its probability underflows to
/// exactly zero.
const MASKED_LOGIT: f64 = -1e30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub hidden_dim: usize,
    /// Falls back to the student learning rate when unset.
    pub learning_rate: Option<f64>,
    pub weight_decay: f64,
    /// Validation nodes per policy-gradient step.
    pub batch_size: usize,
    pub null_action: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            learning_rate: None,
            weight_decay: 0.0,
            batch_size: 256,
            null_action: true,
        }
    }
}

/// Two-layer perceptron from student hidden states to `K + 1` action
/// probabilities. Parameters are `[W1, b1, W2, b2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaPolicy {
    pub params: Vec<DenseMatrix>,
    state_dim: usize,
    num_teachers: usize,
    null_action: bool,
}

impl MetaPolicy {
    /// Glorot hidden layer and a zero output layer, so the initial policy
    /// is uniform over the available actions.
    pub fn new(state_dim: usize, num_teachers: usize, cfg: &PolicyConfig, seed: u64) -> Result<Self> {
        if num_teachers == 0 {
            return Err(Error::invalid("meta-policy needs at least one teacher"));
        }
        if cfg.hidden_dim == 0 {
            return Err(Error::invalid("meta-policy hidden_dim must be positive"));
        }
        let mut rng = SeededRng::seed_from_u64(seed);
        let actions = num_teachers + 1;
        Ok(Self {
            params: vec![
                glorot(state_dim, cfg.hidden_dim, &mut rng),
                DenseMatrix::zeros(1, cfg.hidden_dim),
                DenseMatrix::zeros(cfg.hidden_dim, actions),
                DenseMatrix::zeros(1, actions),
            ],
            state_dim,
            num_teachers,
            null_action: cfg.null_action,
        })
    }

    pub fn from_params(
        params: Vec<DenseMatrix>,
        num_teachers: usize,
        null_action: bool,
    ) -> Result<Self> {
        if params.len() != 4 {
            return Err(Error::shape("MetaPolicy::from_params", 4, params.len()));
        }
        let (state_dim, hidden) = params[0].shape();
        let actions = num_teachers + 1;
        if params[1].shape() != (1, hidden)
            || params[2].shape() != (hidden, actions)
            || params[3].shape() != (1, actions)
        {
            return Err(Error::shape(
                "MetaPolicy::from_params",
                format!("layers {state_dim}x{hidden}x{actions}"),
                format!("{:?}", params.iter().map(DenseMatrix::shape).collect::<Vec<_>>()),
            ));
        }
        Ok(Self {
            params,
            state_dim,
            num_teachers,
            null_action,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_teachers(&self) -> usize {
        self.num_teachers
    }

    pub fn num_actions(&self) -> usize {
        self.num_teachers + 1
    }

    pub fn null_action(&self) -> bool {
        self.null_action
    }

    /// Records the action logits for `states` on the tape.
    pub fn logits_on_tape(&self, tape: &mut Tape, params: &[Var], states: Var) -> Result<Var> {
        let (_, d) = tape.shape(states);
        if d != self.state_dim {
            return Err(Error::shape("policy forward", self.state_dim, d));
        }
        let h = affine(tape, states, params[0], params[1])?;
        let h = tape.relu(h);
        let logits = affine(tape, h, params[2], params[3])?;
        if self.null_action {
            Ok(logits)
        } else {
            let mut mask = DenseMatrix::zeros(1, self.num_actions());
            mask.set(0, NULL_ACTION, MASKED_LOGIT);
            let mask = tape.constant(mask);
            tape.add_row(logits, mask)
        }
    }
}

/// Action distribution `N x (K + 1)` for each state row.
pub fn policy_forward(policy: &MetaPolicy, states: &DenseMatrix) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let params: Vec<Var> = policy.params.iter().map(|p| tape.constant(p.clone())).collect();
    let s = tape.constant(states.clone());
    let logits = policy.logits_on_tape(&mut tape, &params, s)?;
    Ok(row_softmax(tape.value(logits)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Sampled,
    Greedy,
}

/// Actions chosen for the rows of a distribution, with their
/// log-probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionAssignment {
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub mode: SelectionMode,
}

/// Greedy (argmax, lowest index on ties) or categorical selection per row.
pub fn sample_actions<R: Rng + ?Sized>(
    dist: &DenseMatrix,
    rng: &mut R,
    greedy: bool,
) -> Result<ActionAssignment> {
    let mut actions = Vec::with_capacity(dist.rows());
    let mut log_probs = Vec::with_capacity(dist.rows());
    for r in 0..dist.rows() {
        let row = dist.row(r);
        if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::NonFinite {
                context: format!("action distribution row {r}: {row:?}"),
            });
        }
        let a = if greedy {
            argmax(row)
        } else {
            let total: f64 = row.iter().sum();
            let u = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = None;
            for (k, &p) in row.iter().enumerate() {
                cum += p;
                if u < cum {
                    chosen = Some(k);
                    break;
                }
            }
            // Rounding can leave u just above the final partial sum.
            chosen.unwrap_or_else(|| row.iter().rposition(|&p| p > 0.0).unwrap_or(0))
        };
        actions.push(a);
        log_probs.push(row[a].ln());
    }
    Ok(ActionAssignment {
        actions,
        log_probs,
        mode: if greedy {
            SelectionMode::Greedy
        } else {
            SelectionMode::Sampled
        },
    })
}

/// Distribution the action points at for node `v`: the student's own
/// prediction for the null action, otherwise the teacher's soft label.
pub fn action_source<'a>(
    action: usize,
    bank: &'a TeacherBank,
    student_probs: &'a DenseMatrix,
    v: usize,
) -> &'a [f64] {
    if action == NULL_ACTION {
        student_probs.row(v)
    } else {
        bank.soft_labels(action - 1).row(v)
    }
}

/// `-KL(source || student)` when the source predicts `label`, else
/// `-penalty_e`. The null action's source is the student itself, so it
/// earns 0 when the student is right.
pub fn compute_reward(
    action: usize,
    bank: &TeacherBank,
    student_probs: &DenseMatrix,
    v: usize,
    label: usize,
    penalty_e: f64,
) -> Result<f64> {
    if action > bank.num_teachers() {
        return Err(Error::IndexOutOfRange {
            context: "action".into(),
            index: action,
            bound: bank.num_teachers() + 1,
        });
    }
    if label >= student_probs.cols() {
        return Err(Error::IndexOutOfRange {
            context: "reward label".into(),
            index: label,
            bound: student_probs.cols(),
        });
    }
    let source = action_source(action, bank, student_probs, v);
    if argmax(source) == label {
        Ok(-kl_row(source, student_probs.row(v)))
    } else {
        Ok(-penalty_e)
    }
}

/// Rewards for `nodes[i]` taking `actions[i]`.
pub fn compute_rewards(
    nodes: &[usize],
    actions: &[usize],
    bank: &TeacherBank,
    student_probs: &DenseMatrix,
    labels: &[usize],
    penalty_e: f64,
) -> Result<Vec<f64>> {
    if nodes.len() != actions.len() {
        return Err(Error::shape("compute_rewards", nodes.len(), actions.len()));
    }
    nodes
        .iter()
        .zip(actions)
        .map(|(&v, &a)| compute_reward(a, bank, student_probs, v, labels[v], penalty_e))
        .collect()
}

/// Surrogate loss `-sum_i (r_i - B) log pi(a_i | s_i)` on the tape, with
/// `B` the mean reward. Returns the loss handle and `B`.
pub fn policy_gradient_loss(
    policy: &MetaPolicy,
    tape: &mut Tape,
    params: &[Var],
    states: &DenseMatrix,
    actions: &[usize],
    rewards: &[f64],
) -> Result<(Var, f64)> {
    let n = states.rows();
    if n == 0 {
        return Err(Error::invalid("policy gradient over an empty validation set"));
    }
    if actions.len() != n || rewards.len() != n {
        return Err(Error::shape("policy_gradient_loss", n, actions.len().min(rewards.len())));
    }
    let baseline = rewards.iter().sum::<f64>() / n as f64;
    let s = tape.constant(states.clone());
    let logits = policy.logits_on_tape(tape, params, s)?;
    let logp = tape.log_softmax(logits);
    let rows: Vec<usize> = (0..n).collect();
    let weights: Vec<f64> = rewards.iter().map(|r| -(r - baseline)).collect();
    let loss = tape.pick_sum(logp, &rows, actions, &weights)?;
    Ok((loss, baseline))
}

/// One Adam step ascending the baseline-subtracted policy gradient over
/// the given rows. Returns the baseline `B`.
pub fn policy_gradient_step(
    policy: &mut MetaPolicy,
    states: &DenseMatrix,
    actions: &[usize],
    rewards: &[f64],
    adam: &mut AdamState,
) -> Result<f64> {
    let mut tape = Tape::new();
    let params = tape.params(&policy.params);
    let (loss, baseline) = policy_gradient_loss(policy, &mut tape, &params, states, actions, rewards)?;
    if !tape.value(loss).item().is_finite() {
        return Err(Error::NonFinite {
            context: "policy-gradient surrogate loss".into(),
        });
    }
    let grads = tape.backward(loss)?;
    let g: Vec<DenseMatrix> = params.iter().map(|&p| grads.wrt(p)).collect();
    adam.step(&mut policy.params, &g)?;
    Ok(baseline)
}

/// Greedy actions on `kd_idx` and the matching distillation targets.
pub fn select_distill_targets(
    policy: &MetaPolicy,
    student_hidden: &DenseMatrix,
    bank: &TeacherBank,
    kd_idx: &[usize],
) -> Result<(DistillTargets, ActionAssignment)> {
    if policy.num_teachers() != bank.num_teachers() {
        return Err(Error::shape("select_distill_targets", policy.num_teachers(), bank.num_teachers()));
    }
    let states = student_hidden.select_rows(kd_idx);
    let dist = policy_forward(policy, &states)?;
    let mut rng = SeededRng::seed_from_u64(0);
    let assignment = sample_actions(&dist, &mut rng, true)?;
    let targets = targets_from_actions(bank, kd_idx, &assignment.actions)?;
    Ok((targets, assignment))
}

/// Builds targets from one action per node in `kd_idx`.
pub fn targets_from_actions(
    bank: &TeacherBank,
    kd_idx: &[usize],
    actions: &[usize],
) -> Result<DistillTargets> {
    if kd_idx.len() != actions.len() {
        return Err(Error::shape("targets_from_actions", kd_idx.len(), actions.len()));
    }
    let mut targets = DenseMatrix::zeros(bank.num_nodes(), bank.num_classes());
    let mut sources = vec![TargetSource::Unassigned; bank.num_nodes()];
    for (&v, &a) in kd_idx.iter().zip(actions) {
        if a == NULL_ACTION {
            sources[v] = TargetSource::Null;
        } else if a <= bank.num_teachers() {
            targets.row_mut(v).copy_from_slice(bank.soft_labels(a - 1).row(v));
            sources[v] = TargetSource::Teacher(a - 1);
        } else {
            return Err(Error::IndexOutOfRange {
                context: "action".into(),
                index: a,
                bound: bank.num_teachers() + 1,
            });
        }
    }
    DistillTargets::new(targets, sources)
}
