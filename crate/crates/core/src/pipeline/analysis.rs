use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::NULL_ACTION;
use crate::teachers::TeacherBank;
use crate::tensor::ops::negative_entropy;
use crate::tensor::DenseMatrix;

/// Exact-match fraction over `idx`.
pub fn evaluate_accuracy(predictions: &[usize], labels: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::invalid("accuracy over an empty node set"));
    }
    let mut hits = 0usize;
    for &v in idx {
        if v >= predictions.len() || v >= labels.len() {
            return Err(Error::IndexOutOfRange {
                context: "accuracy node".into(),
                index: v,
                bound: predictions.len().min(labels.len()),
            });
        }
        hits += usize::from(predictions[v] == labels[v]);
    }
    Ok(hits as f64 / idx.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Nodes of `idx` grouped by how many teachers predict them correctly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    /// `counts[g]`: nodes correct for exactly `g` teachers, `g = 0..=K`.
    pub counts: Vec<usize>,
    pub ratios: Vec<f64>,
}

/// Number of teachers whose argmax equals the label, per node of `idx`.
pub fn correct_teacher_counts(bank: &TeacherBank, labels: &[usize], idx: &[usize]) -> Vec<usize> {
    let preds = bank.predictions();
    idx.iter()
        .map(|&v| preds.iter().filter(|p| p[v] == labels[v]).count())
        .collect()
}

pub fn group_statistics(bank: &TeacherBank, labels: &[usize], idx: &[usize]) -> GroupStats {
    let mut counts = vec![0; bank.num_teachers() + 1];
    for g in correct_teacher_counts(bank, labels, idx) {
        counts[g] += 1;
    }
    let total = idx.len().max(1) as f64;
    let ratios = counts.iter().map(|&c| c as f64 / total).collect();
    GroupStats { counts, ratios }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDecision {
    pub group: usize,
    pub count: usize,
    pub good: usize,
    /// `good / count`; absent for empty groups.
    pub ratio: Option<f64>,
    /// Ratio an oracle policy achieves: always 1 for nonempty groups.
    pub optimal: Option<f64>,
    /// `optimal - ratio`.
    pub delta: Option<f64>,
}

/// How often the policy makes the right call per group. In group 0 no
/// teacher is right and the good call is the null action; in groups
/// `1..=K` it is choosing a teacher that predicts the label.
/// `actions[i]` is the action taken for `idx[i]`.
pub fn policy_decision_report(
    actions: &[usize],
    bank: &TeacherBank,
    labels: &[usize],
    idx: &[usize],
) -> Result<Vec<GroupDecision>> {
    if actions.len() != idx.len() {
        return Err(Error::shape("policy_decision_report", idx.len(), actions.len()));
    }
    let k = bank.num_teachers();
    let preds = bank.predictions();
    let groups = correct_teacher_counts(bank, labels, idx);
    let mut count = vec![0usize; k + 1];
    let mut good = vec![0usize; k + 1];
    for ((&v, &a), &g) in idx.iter().zip(actions).zip(&groups) {
        if a > k {
            return Err(Error::IndexOutOfRange {
                context: "action".into(),
                index: a,
                bound: k + 1,
            });
        }
        count[g] += 1;
        let ok = if g == 0 {
            a == NULL_ACTION
        } else {
            a != NULL_ACTION && preds[a - 1][v] == labels[v]
        };
        good[g] += usize::from(ok);
    }
    Ok((0..=k)
        .map(|g| {
            let ratio = (count[g] > 0).then(|| good[g] as f64 / count[g] as f64);
            let optimal = (count[g] > 0).then_some(1.0);
            GroupDecision {
                group: g,
                count: count[g],
                good: good[g],
                ratio,
                optimal,
                delta: ratio.zip(optimal).map(|(r, o)| o - r),
            }
        })
        .collect())
}

/// `sum_c p_c ln p_c` per row; rows must be distributions within 1e-6.
pub fn certainty_scores(probs: &DenseMatrix) -> Result<Vec<f64>> {
    crate::tensor::ops::ensure_simplex_rows(probs, 1e-6, "certainty_scores")?;
    Ok((0..probs.rows()).map(|r| negative_entropy(probs.row(r))).collect())
}
