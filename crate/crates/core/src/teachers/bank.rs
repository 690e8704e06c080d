use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::teachers::config::TeacherConfig;
use crate::teachers::model::{GnnModel, GraphOps};
use crate::teachers::train::TrainedTeacher;
use crate::tensor::ops::{ensure_simplex_rows, row_softmax};
use crate::tensor::DenseMatrix;

/// Frozen soft labels of `K` teachers over all `N` nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherBank {
    soft_labels: Vec<DenseMatrix>,
    val_accuracy: Vec<f64>,
    configs: Vec<TeacherConfig>,
}

pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

impl TeacherBank {
    pub fn new(
        soft_labels: Vec<DenseMatrix>,
        val_accuracy: Vec<f64>,
        configs: Vec<TeacherConfig>,
    ) -> Result<Self> {
        let k = soft_labels.len();
        if k == 0 {
            return Err(Error::invalid("teacher bank needs at least one teacher"));
        }
        if val_accuracy.len() != k || configs.len() != k {
            return Err(Error::shape(
                "TeacherBank::new",
                format!("{k} accuracies and configs"),
                format!("{} and {}", val_accuracy.len(), configs.len()),
            ));
        }
        let shape = soft_labels[0].shape();
        for (i, s) in soft_labels.iter().enumerate() {
            if s.shape() != shape {
                return Err(Error::shape(
                    "TeacherBank::new",
                    format!("{shape:?}"),
                    format!("teacher {i}: {:?}", s.shape()),
                ));
            }
            ensure_simplex_rows(s, SIMPLEX_TOLERANCE, &format!("teacher {i} soft labels"))?;
        }
        Ok(Self {
            soft_labels,
            val_accuracy,
            configs,
        })
    }

    pub fn num_teachers(&self) -> usize {
        self.soft_labels.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.soft_labels[0].rows()
    }

    pub fn num_classes(&self) -> usize {
        self.soft_labels[0].cols()
    }

    /// Soft labels of teacher `k` (0-based).
    pub fn soft_labels(&self, k: usize) -> &DenseMatrix {
        &self.soft_labels[k]
    }

    pub fn all_soft_labels(&self) -> &[DenseMatrix] {
        &self.soft_labels
    }

    pub fn val_accuracy(&self) -> &[f64] {
        &self.val_accuracy
    }

    pub fn configs(&self) -> &[TeacherConfig] {
        &self.configs
    }

    /// Argmax class of every teacher for every node, indexed `[k][v]`.
    pub fn predictions(&self) -> Vec<Vec<usize>> {
        self.soft_labels.iter().map(DenseMatrix::argmax_rows).collect()
    }

    /// Keeps only the listed teachers, in the given order.
    pub fn subset(&self, teachers: &[usize]) -> Result<Self> {
        if let Some(&k) = teachers.iter().find(|&&k| k >= self.num_teachers()) {
            return Err(Error::IndexOutOfRange {
                context: "teacher subset".into(),
                index: k,
                bound: self.num_teachers(),
            });
        }
        Self::new(
            teachers.iter().map(|&k| self.soft_labels[k].clone()).collect(),
            teachers.iter().map(|&k| self.val_accuracy[k]).collect(),
            teachers.iter().map(|&k| self.configs[k].clone()).collect(),
        )
    }
}

/// Eval-mode softmax outputs of every model on `g`.
pub fn soft_labels_of(models: &[&GnnModel], g: &Graph) -> Result<Vec<DenseMatrix>> {
    let ops = GraphOps::new(g);
    models
        .iter()
        .map(|m| Ok(row_softmax(&m.logits(&ops, g.features())?)))
        .collect()
}

/// Freezes the teachers' predictions on `g` (the full graph in the
/// transductive protocol, the observed graph in the inductive one).
pub fn compute_soft_labels(teachers: &[TrainedTeacher], g: &Graph) -> Result<TeacherBank> {
    let models: Vec<&GnnModel> = teachers.iter().map(|t| &t.model).collect();
    TeacherBank::new(
        soft_labels_of(&models, g)?,
        teachers.iter().map(|t| t.val_accuracy).collect(),
        teachers.iter().map(|t| t.model.config.clone()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teachers::Arch;

    #[test]
    fn soft_labels_are_simplex_and_preserve_argmax() {
        let x = DenseMatrix::from_fn(5, 3, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let g = Graph::from_edges("toy", 5, &[(0, 1), (1, 2), (3, 4)], x, vec![0, 1, 0, 1, 0], 2)
            .unwrap();
        let ops = GraphOps::new(&g);
        let models: Vec<GnnModel> = Arch::ALL
            .into_iter()
            .map(|a| {
                let cfg = TeacherConfig {
                    hidden_dim: 4,
                    attention_heads: 2,
                    ..TeacherConfig::small(a)
                };
                GnnModel::new(cfg, 3, 2).unwrap()
            })
            .collect();
        let refs: Vec<&GnnModel> = models.iter().collect();
        let soft = soft_labels_of(&refs, &g).unwrap();
        for (m, s) in models.iter().zip(&soft) {
            ensure_simplex_rows(s, 1e-12, "test").unwrap();
            assert_eq!(s.argmax_rows(), m.logits(&ops, g.features()).unwrap().argmax_rows());
        }
        let bank = TeacherBank::new(soft, vec![0.5; 5], models.iter().map(|m| m.config.clone()).collect())
            .unwrap();
        assert_eq!(bank.num_teachers(), 5);
        let sub = bank.subset(&[3]).unwrap();
        assert_eq!(sub.soft_labels(0), bank.soft_labels(3));
        assert!(bank.subset(&[5]).is_err());
    }

    #[test]
    fn rejects_inconsistent_banks() {
        let cfg = TeacherConfig::small(Arch::Gcn);
        let a = DenseMatrix::from_rows(&[[0.5, 0.5]]);
        assert!(TeacherBank::new(vec![], vec![], vec![]).is_err());
        assert!(TeacherBank::new(vec![a.clone()], vec![], vec![cfg.clone()]).is_err());
        let b = DenseMatrix::from_rows(&[[0.5, 0.5], [1.0, 0.0]]);
        assert!(TeacherBank::new(vec![a.clone(), b], vec![0.0; 2], vec![cfg.clone(); 2]).is_err());
        let off = DenseMatrix::from_rows(&[[0.6, 0.5]]);
        assert!(TeacherBank::new(vec![off], vec![0.0], vec![cfg]).is_err());
    }
}
