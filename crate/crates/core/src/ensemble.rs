//! Fixed ensembling rules over a teacher bank, used as comparison methods
//! and as alternative distillation targets.

use crate::teachers::TeacherBank;
use crate::tensor::ops::{negative_entropy, softmax_in_place};
use crate::tensor::{argmax, DenseMatrix};

/// Most frequent teacher prediction per node, lowest class on ties.
pub fn majority_vote(bank: &TeacherBank) -> Vec<usize> {
    let preds = bank.predictions();
    let mut counts = vec![0usize; bank.num_classes()];
    (0..bank.num_nodes())
        .map(|v| {
            counts.iter_mut().for_each(|c| *c = 0);
            for p in &preds {
                counts[p[v]] += 1;
            }
            let mut best = 0;
            for (c, &n) in counts.iter().enumerate() {
                if n > counts[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Equal-weight mean of the teachers' soft labels.
pub fn soft_average_targets(bank: &TeacherBank) -> DenseMatrix {
    let k = bank.num_teachers() as f64;
    let mut out = DenseMatrix::zeros(bank.num_nodes(), bank.num_classes());
    for s in bank.all_soft_labels() {
        out.add_scaled(s, 1.0);
    }
    out.scale_in_place(1.0 / k);
    out
}

/// Per-node confidence weighting: teacher `k` gets weight
/// `softmax_k(sum_c p^k_c ln p^k_c)` and the target is the weighted mean.
pub fn weighted_targets(bank: &TeacherBank) -> DenseMatrix {
    let (n, c) = (bank.num_nodes(), bank.num_classes());
    let mut out = DenseMatrix::zeros(n, c);
    let mut w = vec![0.0; bank.num_teachers()];
    for v in 0..n {
        for (k, s) in bank.all_soft_labels().iter().enumerate() {
            w[k] = negative_entropy(s.row(v));
        }
        softmax_in_place(&mut w);
        let row = out.row_mut(v);
        for (k, s) in bank.all_soft_labels().iter().enumerate() {
            for (o, p) in row.iter_mut().zip(s.row(v)) {
                *o += w[k] * p;
            }
        }
    }
    out
}

/// Soft labels of the teacher with the best validation accuracy (lowest
/// index on ties) and that index.
pub fn glnn_targets(bank: &TeacherBank) -> (DenseMatrix, usize) {
    let k = argmax(bank.val_accuracy());
    (bank.soft_labels(k).clone(), k)
}
