//! Brute-force recomputation of the ensemble and analysis outputs on
//! random banks.

use nodedistill_core::ensemble::majority_vote;
use nodedistill_core::nn::SeededRng;
use nodedistill_core::pipeline::{group_statistics, policy_decision_report};
use nodedistill_core::teachers::{Arch, TeacherBank, TeacherConfig};
use nodedistill_core::DenseMatrix;
use rand::{Rng, SeedableRng};

pub const K: usize = 3;
pub const C: usize = 3;
pub const N: usize = 50;

pub struct Instance {
    pub bank: TeacherBank,
    pub labels: Vec<usize>,
    pub idx: Vec<usize>,
    pub actions: Vec<usize>,
}

/// Random soft labels (often with exact ties), labels, node subset and
/// actions.
pub fn instance(seed: u64) -> Instance {
    let mut r = SeededRng::seed_from_u64(seed);
    let soft = (0..K)
        .map(|_| {
            let mut m = DenseMatrix::from_fn(N, C, |_, _| f64::from(r.random_range(0..4u8)));
            for v in 0..N {
                let s: f64 = m.row(v).iter().sum();
                for x in m.row_mut(v) {
                    *x = if s == 0.0 { 1.0 / C as f64 } else { *x / s };
                }
            }
            m
        })
        .collect();
    let labels = (0..N).map(|_| r.random_range(0..C)).collect();
    let idx: Vec<usize> = (0..N).filter(|_| r.random_bool(0.7)).collect();
    let actions = idx.iter().map(|_| r.random_range(0..=K)).collect();
    let configs = vec![TeacherConfig::small(Arch::Gcn); K];
    let bank = TeacherBank::new(soft, vec![0.5; K], configs).expect("valid bank");
    Instance {
        bank,
        labels,
        idx,
        actions,
    }
}

fn first_max(row: &[f64]) -> usize {
    let mut best = 0;
    for c in 1..row.len() {
        if row[c] > row[best] {
            best = c;
        }
    }
    best
}

fn prediction(bank: &TeacherBank, k: usize, v: usize) -> usize {
    first_max(bank.soft_labels(k).row(v))
}

/// Returns a description of the first disagreement, if any.
pub fn check(seed: u64) -> Option<String> {
    let inst = instance(seed);
    let (bank, labels, idx) = (&inst.bank, &inst.labels, &inst.idx);

    let votes = majority_vote(bank);
    for v in 0..N {
        let mut count = [0usize; C];
        for k in 0..K {
            count[prediction(bank, k, v)] += 1;
        }
        let mut best = 0;
        for c in 0..C {
            if count[c] > count[best] {
                best = c;
            }
        }
        if votes[v] != best {
            return Some(format!("majority vote of node {v}: {} vs {best}", votes[v]));
        }
    }

    let stats = group_statistics(bank, labels, idx);
    let mut counts = vec![0usize; K + 1];
    for &v in idx {
        let correct = (0..K).filter(|&k| prediction(bank, k, v) == labels[v]).count();
        counts[correct] += 1;
    }
    if stats.counts != counts {
        return Some(format!("group counts {:?} vs {counts:?}", stats.counts));
    }
    for g in 0..=K {
        let ratio = counts[g] as f64 / idx.len().max(1) as f64;
        if (stats.ratios[g] - ratio).abs() > 1e-12 {
            return Some(format!("group {g} ratio {} vs {ratio}", stats.ratios[g]));
        }
    }

    let report = policy_decision_report(&inst.actions, bank, labels, idx).expect("valid report");
    for g in 0..=K {
        let (mut count, mut good) = (0usize, 0usize);
        for (i, &v) in idx.iter().enumerate() {
            let correct: Vec<bool> = (0..K).map(|k| prediction(bank, k, v) == labels[v]).collect();
            if correct.iter().filter(|&&b| b).count() != g {
                continue;
            }
            count += 1;
            let a = inst.actions[i];
            let ok = if g == 0 { a == 0 } else { a > 0 && correct[a - 1] };
            good += usize::from(ok);
        }
        let d = &report[g];
        let ratio = (count > 0).then(|| good as f64 / count as f64);
        if d.count != count || d.good != good || d.ratio != ratio || d.delta != ratio.map(|r| 1.0 - r) {
            return Some(format!("decisions of group {g}: {d:?} vs count {count}, good {good}"));
        }
    }
    None
}
