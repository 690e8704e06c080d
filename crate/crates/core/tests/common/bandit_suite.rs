//! Synthetic teacher-selection bandits with a known best action.

use nodedistill_core::nn::SeededRng;
use nodedistill_core::policy::{
    compute_rewards, policy_forward, policy_gradient_step, sample_actions, MetaPolicy, PolicyConfig, NULL_ACTION,
};
use nodedistill_core::student::DistillConfig;
use nodedistill_core::teachers::{Arch, TeacherBank, TeacherConfig};
use nodedistill_core::tensor::AdamState;
use nodedistill_core::{DenseMatrix, Result};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

pub const MAX_STEPS: usize = 500;
const NODES: usize = 200;
const CLASSES: usize = 3;
const TEACHERS: usize = 5;
const STATE_DIM: usize = 16;

/// Row `v` puts 0.8 on class `pick(v)` and splits the rest evenly.
fn peaked(labels: &[usize], pick: impl Fn(usize) -> usize) -> DenseMatrix {
    let rest = 0.2 / (CLASSES - 1) as f64;
    DenseMatrix::from_fn(labels.len(), CLASSES, |v, c| if c == pick(labels[v]) { 0.8 } else { rest })
}

pub struct BanditResult {
    /// Share of nodes whose greedy action is the target before training.
    pub initial_rate: f64,
    /// Share of nodes whose greedy action is the target action.
    pub rate: f64,
    /// Policy steps taken before the rate first exceeded 0.9, if it did.
    pub steps_to_90: Option<usize>,
}

/// Trains a randomly initialised policy on `NODES` validation nodes with random states
/// for up to `MAX_STEPS` steps, tracking how often the greedy action is
/// `target`.
fn run(seed: u64, bank: &TeacherBank, student: &DenseMatrix, labels: &[usize], target: usize) -> Result<BanditResult> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let states = DenseMatrix::from_fn(NODES, STATE_DIM, |_, _| StandardNormal.sample(&mut rng));
    let cfg = PolicyConfig::default();
    let mut policy = MetaPolicy::new(STATE_DIM, TEACHERS, &cfg, seed)?;
    // A random output layer, so the greedy action starts far from the
    // target instead of at the uniform tie.
    let last = policy.params.len();
    for p in &mut policy.params[last - 2..] {
        *p = DenseMatrix::from_fn(p.rows(), p.cols(), |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    }
    let lr = cfg.learning_rate.unwrap_or(DistillConfig::default().learning_rate);
    let mut adam = AdamState::new(&policy.params, lr, cfg.weight_decay);
    let nodes: Vec<usize> = (0..NODES).collect();
    let greedy_rate = |p: &MetaPolicy| -> Result<f64> {
        let g = sample_actions(&policy_forward(p, &states)?, &mut SeededRng::seed_from_u64(0), true)?;
        Ok(g.actions.iter().filter(|&&a| a == target).count() as f64 / NODES as f64)
    };
    let initial_rate = greedy_rate(&policy)?;
    let mut steps_to_90 = None;
    for step in 1..=MAX_STEPS {
        let dist = policy_forward(&policy, &states)?;
        let sampled = sample_actions(&dist, &mut rng, false)?;
        let rewards = compute_rewards(&nodes, &sampled.actions, bank, student, labels, 5.0)?;
        policy_gradient_step(&mut policy, &states, &sampled.actions, &rewards, &mut adam)?;
        if steps_to_90.is_none() && greedy_rate(&policy)? > 0.9 {
            steps_to_90 = Some(step);
        }
    }
    Ok(BanditResult {
        initial_rate,
        rate: greedy_rate(&policy)?,
        steps_to_90,
    })
}

fn labels(seed: u64) -> Vec<usize> {
    let mut rng = SeededRng::seed_from_u64(seed ^ 0x1abe1);
    (0..NODES).map(|_| rng.random_range(0..CLASSES)).collect()
}

fn bank(soft: Vec<DenseMatrix>) -> TeacherBank {
    let configs = vec![TeacherConfig::small(Arch::Gcn); soft.len()];
    TeacherBank::new(soft, vec![0.0; TEACHERS], configs).expect("valid bank")
}

/// Exactly one teacher (index `seed % 5`) is always right, the others
/// always wrong, and the student is wrong everywhere, so the right
/// teacher is the only action with a reward above `-e`.
pub fn one_correct_teacher(seed: u64) -> Result<(usize, BanditResult)> {
    let y = labels(seed);
    let good = (seed % TEACHERS as u64) as usize;
    let soft = (0..TEACHERS)
        .map(|k| {
            if k == good {
                peaked(&y, |l| l)
            } else {
                peaked(&y, |l| (l + 1) % CLASSES)
            }
        })
        .collect();
    let student = peaked(&y, |l| (l + 2) % CLASSES);
    let action = good + 1;
    Ok((action, run(seed, &bank(soft), &student, &y, action)?))
}

/// Every teacher is wrong everywhere while the student is right, so only
/// the null action avoids the penalty.
pub fn no_correct_teacher(seed: u64) -> Result<BanditResult> {
    let y = labels(seed);
    let soft = (0..TEACHERS)
        .map(|k| peaked(&y, |l| (l + 1 + k % (CLASSES - 1)) % CLASSES))
        .collect();
    let student = peaked(&y, |l| l);
    run(seed, &bank(soft), &student, &y, NULL_ACTION)
}
