//! Closed-form values and the null-action invariant, as named checks.

use std::f64::consts::LN_2;

use nodedistill_core::nn::{Mode, SeededRng};
use nodedistill_core::pipeline::{ExperimentConfig, Method};
use nodedistill_core::policy::{
    compute_reward, policy_forward, policy_gradient_loss, sample_actions, targets_from_actions, MetaPolicy,
    PolicyConfig, NULL_ACTION,
};
use nodedistill_core::student::{student_distill_loss, DistillConfig, StudentModel};
use nodedistill_core::teachers::{Arch, TeacherBank, TeacherConfig};
use nodedistill_core::tensor::ops::{cross_entropy, kl_row};
use nodedistill_core::tensor::Tape;
use nodedistill_core::DenseMatrix;
use rand::SeedableRng;

pub type Check = (&'static str, Result<(), String>);

fn close(got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("got {got}, want {want}"))
    }
}

fn exact(got: f64, want: f64) -> Result<(), String> {
    close(got, want, 0.0)
}

fn bank(rows: &[&[[f64; 2]]]) -> TeacherBank {
    let soft = rows.iter().map(|r| DenseMatrix::from_rows(r)).collect();
    TeacherBank::new(soft, vec![0.5; rows.len()], vec![TeacherConfig::small(Arch::Gcn); rows.len()])
        .expect("valid bank")
}

/// Baseline, surrogate loss and output-bias gradient for a fresh policy,
/// which is uniform over {null, teacher} on three nodes.
fn policy_gradient_example() -> Result<(), String> {
    let cfg = PolicyConfig {
        hidden_dim: 2,
        ..PolicyConfig::default()
    };
    let policy = MetaPolicy::new(1, 1, &cfg, 0).map_err(|e| e.to_string())?;
    let states = DenseMatrix::filled(3, 1, 1.0);
    let actions = [0, 1, 1];
    let rewards = [0.0, -5.0, -1.0];
    let mut tape = Tape::new();
    let params = tape.params(&policy.params);
    let (loss, baseline) =
        policy_gradient_loss(&policy, &mut tape, &params, &states, &actions, &rewards).map_err(|e| e.to_string())?;
    close(baseline, -2.0, 1e-9)?;
    // Loss = -sum_i (r_i - B) ln pi(a_i) with pi = 1/2 everywhere:
    // advantages 2, -3, 1 sum to 0, so the loss is 0.
    close(tape.value(loss).item(), 0.0, 1e-9)?;
    // d loss / d b2 = -sum_i A_i (onehot(a_i) - pi)
    //   = [-1, 1] + [-1.5, 1.5] + [0.5, -0.5] = [-2, 2].
    let g = tape.backward(loss).map_err(|e| e.to_string())?.wrt(params[3]);
    close(g.get(0, 0), -2.0, 1e-9)?;
    close(g.get(0, 1), 2.0, 1e-9)
}

pub fn analytic_units() -> Vec<Check> {
    let p = [0.2, 0.3, 0.5];
    let b = bank(&[&[[1.0, 0.0]], &[[0.0, 1.0]]]);
    let uniform = DenseMatrix::from_rows(&[[0.5, 0.5]]);
    let confident = DenseMatrix::from_rows(&[[1.0, 0.0]]);
    vec![
        ("KL(p||p) = 0", exact(kl_row(&p, &p), 0.0)),
        ("KL([1,0]||[.5,.5]) = ln 2", close(kl_row(&[1.0, 0.0], &[0.5, 0.5]), LN_2, 1e-9)),
        (
            "uniform-logit CE = ln C",
            cross_entropy(&DenseMatrix::zeros(4, 7), &[0, 3, 6, 2])
                .map_err(|e| e.to_string())
                .and_then(|ce| close(ce, 7f64.ln(), 1e-9)),
        ),
        (
            "reward 0: source equals a correct student",
            compute_reward(1, &b, &confident, 0, 0, 5.0)
                .map_err(|e| e.to_string())
                .and_then(|r| exact(r, 0.0)),
        ),
        (
            "reward -e: wrong source",
            compute_reward(2, &b, &uniform, 0, 0, 5.0)
                .map_err(|e| e.to_string())
                .and_then(|r| exact(r, -5.0)),
        ),
        (
            "reward -ln 2: one-hot teacher, uniform student",
            compute_reward(1, &b, &uniform, 0, 0, 5.0)
                .map_err(|e| e.to_string())
                .and_then(|r| close(r, -LN_2, 1e-9)),
        ),
        ("baseline and policy gradient example", policy_gradient_example()),
    ]
}

fn null_gradient_is_zero() -> Result<(), String> {
    let cfg = DistillConfig {
        hidden_dim: 8,
        dropout: 0.5,
        ..DistillConfig::default()
    };
    let (n, f, c) = (12, 5, 3);
    let student = StudentModel::new(cfg, f, c).map_err(|e| e.to_string())?;
    let soft = (0..2)
        .map(|k| DenseMatrix::from_fn(n, c, |v, j| if (v + k) % c == j { 0.6 } else { 0.2 }))
        .collect();
    let bank = TeacherBank::new(soft, vec![0.5; 2], vec![TeacherConfig::small(Arch::Sage); 2]).map_err(|e| e.to_string())?;
    let kd: Vec<usize> = (0..n).collect();
    let targets = targets_from_actions(&bank, &kd, &vec![NULL_ACTION; n]).map_err(|e| e.to_string())?;
    let labels: Vec<usize> = (0..n).map(|v| v % c).collect();
    let x = DenseMatrix::from_fn(n, f, |v, j| ((v * 7 + j * 3) % 5) as f64 - 2.0);
    let mut tape = Tape::new();
    let params = tape.params(&student.params);
    let xv = tape.constant(x);
    let mut rng = SeededRng::seed_from_u64(9);
    let out = student
        .forward(&mut tape, &params, xv, None, Mode::Train, &mut rng)
        .map_err(|e| e.to_string())?;
    let loss = student_distill_loss(&mut tape, out.logits, &targets, &labels, &[0, 1, 2], &kd, 0.0)
        .map_err(|e| e.to_string())?;
    exact(tape.value(loss).item(), 0.0)?;
    let grads = tape.backward(loss).map_err(|e| e.to_string())?;
    for (i, &p) in params.iter().enumerate() {
        if let Some(g) = grads.wrt(p).data().iter().find(|g| **g != 0.0) {
            return Err(format!("parameter {i} has gradient {g}"));
        }
    }
    Ok(())
}

fn null_off_config_diff() -> Result<(), String> {
    let cfg = ExperimentConfig::default();
    let full = serde_json::to_value(cfg.policy_config(Method::E2gnn)).map_err(|e| e.to_string())?;
    let off = serde_json::to_value(cfg.policy_config(Method::E2gnnNullOff)).map_err(|e| e.to_string())?;
    let (full, off) = (full.as_object().expect("object"), off.as_object().expect("object"));
    let differing: Vec<&String> = full.keys().filter(|k| full[*k] != off[*k]).collect();
    if differing != ["null_action"] || full["null_action"] != true || off["null_action"] != false {
        return Err(format!("policy configs differ in {differing:?}"));
    }
    let a = serde_json::to_value(ExperimentConfig { method: Method::E2gnn, ..cfg.clone() }).map_err(|e| e.to_string())?;
    let b = serde_json::to_value(ExperimentConfig { method: Method::E2gnnNullOff, ..cfg }).map_err(|e| e.to_string())?;
    let (a, b) = (a.as_object().expect("object"), b.as_object().expect("object"));
    let differing: Vec<&String> = a.keys().filter(|k| a[*k] != b[*k]).collect();
    if differing != ["method"] {
        return Err(format!("experiment configs differ in {differing:?}"));
    }
    Ok(())
}

fn null_off_never_picks_null() -> Result<(), String> {
    let cfg = PolicyConfig {
        null_action: false,
        ..PolicyConfig::default()
    };
    let mut policy = MetaPolicy::new(4, 3, &cfg, 1).map_err(|e| e.to_string())?;
    // Favour the null logit heavily; it must still never be chosen.
    let last = policy.params.len() - 1;
    policy.params[last].set(0, 0, 50.0);
    let states = DenseMatrix::from_fn(2000, 4, |r, c| ((r * 13 + c * 7) % 17) as f64 / 8.0 - 1.0);
    let dist = policy_forward(&policy, &states).map_err(|e| e.to_string())?;
    let mut rng = SeededRng::seed_from_u64(3);
    for greedy in [true, false] {
        let a = sample_actions(&dist, &mut rng, greedy).map_err(|e| e.to_string())?;
        if a.actions.contains(&NULL_ACTION) {
            return Err(format!("null action chosen with greedy = {greedy}"));
        }
    }
    Ok(())
}

pub fn null_action() -> Vec<Check> {
    vec![
        ("all-null targets with alpha 0 give zero gradient", null_gradient_is_zero()),
        ("null_off changes only the action space", null_off_config_diff()),
        ("null_off policy never selects null", null_off_never_picks_null()),
    ]
}
