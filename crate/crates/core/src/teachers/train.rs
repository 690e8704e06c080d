use log::debug;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SplitSpec};
use crate::nn::{accuracy, derive_seed, Mode, SeededRng};
use crate::teachers::config::TeacherConfig;
use crate::teachers::model::{GnnModel, GraphOps};
use crate::tensor::{ops, AdamState, Tape};

/// Per-epoch training trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// A pretrained teacher: the best-validation weights and their score.
#[derive(Clone, Debug)]
pub struct TrainedTeacher {
    pub model: GnnModel,
    pub val_accuracy: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Supervised full-batch training on `split.train` with early stopping on
/// validation accuracy (ties broken by lower validation loss).
///
/// `g` is the graph the teacher sees during training; in the inductive
/// protocol this is the observed graph.
pub fn pretrain_teacher(g: &Graph, split: &SplitSpec, cfg: &TeacherConfig) -> Result<TrainedTeacher> {
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::invalid("teacher pretraining needs nonempty train and val sets"));
    }
    split.validate(g.num_nodes())?;
    let ops_ = GraphOps::new(g);
    let mut model = GnnModel::new(cfg.clone(), g.num_features(), g.num_classes())?;
    let mut adam = AdamState::new(&model.params, cfg.learning_rate, cfg.weight_decay);
    let mut rng = SeededRng::seed_from_u64(derive_seed(cfg.seed, 0x7ea));
    let train_labels: Vec<usize> = split.train.iter().map(|&v| g.labels()[v]).collect();
    let val_labels: Vec<usize> = split.val.iter().map(|&v| g.labels()[v]).collect();

    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best_params = model.params.clone();
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut stale = 0;
    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let params = tape.params(&model.params);
        let x = tape.constant(g.features().clone());
        let logits = model.forward(&mut tape, &params, &ops_, x, Mode::Train, &mut rng)?;
        let loss = tape.cross_entropy(logits, &split.train, &train_labels)?;
        let train_loss = tape.value(loss).item();
        if !train_loss.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{} teacher loss at epoch {epoch} (lr {})", cfg.arch, cfg.learning_rate),
            });
        }
        let grads = tape.backward(loss)?;
        let g_params: Vec<_> = params.iter().map(|&p| grads.wrt(p)).collect();
        adam.step(&mut model.params, &g_params)?;

        let eval = model.logits(&ops_, g.features())?;
        let val_loss = ops::cross_entropy(&eval.select_rows(&split.val), &val_labels)?;
        let val_accuracy = accuracy(&eval.argmax_rows(), g.labels(), &split.val).unwrap_or(0.0);
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        if val_accuracy > best.0 || (val_accuracy == best.0 && val_loss < best.1) {
            best = (val_accuracy, val_loss);
            best_params = model.params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    debug!(
        "{} teacher: best val acc {:.4} at epoch {best_epoch} of {}",
        cfg.arch,
        best.0,
        history.len()
    );
    model.params = best_params;
    Ok(TrainedTeacher {
        model,
        val_accuracy: best.0.max(0.0),
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, make_transductive_splits, SbmConfig};
    use crate::teachers::Arch;

    fn separable() -> (Graph, SplitSpec) {
        let g = generate_sbm(&SbmConfig {
            classes: 3,
            nodes_per_class: 40,
            p_in: 0.1,
            p_out: 0.0,
            feature_dim: 6,
            feature_noise: 0.0,
            seed: 3,
        })
        .unwrap();
        let s = make_transductive_splits(&g, 5, 30, None, 1).unwrap();
        (g, s)
    }

    #[test]
    fn separable_graph_reaches_perfect_validation() {
        let (g, s) = separable();
        for arch in Arch::ALL {
            let cfg = TeacherConfig {
                hidden_dim: 16,
                attention_heads: 4,
                max_epochs: 50,
                ..TeacherConfig::small(arch)
            };
            let t = pretrain_teacher(&g, &s, &cfg).unwrap();
            assert_eq!(t.val_accuracy, 1.0, "{arch}");
            let ops = GraphOps::new(&g);
            let preds = t.model.logits(&ops, g.features()).unwrap().argmax_rows();
            assert_eq!(accuracy(&preds, g.labels(), &s.val), Some(t.val_accuracy));
        }
    }

    #[test]
    fn best_epoch_dominates_history() {
        let (g, s) = separable();
        let cfg = TeacherConfig {
            hidden_dim: 8,
            max_epochs: 30,
            ..TeacherConfig::small(Arch::Gcn)
        };
        let t = pretrain_teacher(&g, &s, &cfg).unwrap();
        assert!(t.history.iter().all(|r| r.val_accuracy <= t.val_accuracy));
        assert_eq!(t.history[t.best_epoch].val_accuracy, t.val_accuracy);
    }

    #[test]
    fn exploding_learning_rate_is_reported() {
        let (g, s) = separable();
        let cfg = TeacherConfig {
            hidden_dim: 8,
            learning_rate: 1e300,
            max_epochs: 20,
            patience: 100,
            ..TeacherConfig::small(Arch::Sgc)
        };
        let err = pretrain_teacher(&g, &s, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
    }

    #[test]
    fn empty_validation_is_rejected() {
        let (g, mut s) = separable();
        s.val.clear();
        assert!(pretrain_teacher(&g, &s, &TeacherConfig::small(Arch::Gcn)).is_err());
    }
}
