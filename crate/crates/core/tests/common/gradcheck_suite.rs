//! Finite-difference checks of every differentiable primitive and every
//! composed model. Shared by the core tests and the acceptance target.

use std::sync::Arc;

use nodedistill_core::graph::Graph;
use nodedistill_core::nn::{Mode, SeededRng};
use nodedistill_core::policy::{policy_gradient_loss, MetaPolicy, PolicyConfig};
use nodedistill_core::student::{student_distill_loss, DistillConfig, DistillTargets, StudentModel, TargetSource};
use nodedistill_core::teachers::{Arch, GnnModel, GraphOps, TeacherConfig};
use nodedistill_core::tensor::ops::row_softmax;
use nodedistill_core::tensor::{finite_difference_check, Reduce, Tape, Var, FD_STEP};
use nodedistill_core::{DenseMatrix, Result, SparseMatrix};
use rand::{Rng, SeedableRng};

pub const TOLERANCE: f64 = 1e-4;

pub type Check = fn(u64) -> Result<f64>;

fn rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

fn random(r: &mut SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// Fixed random weighting of every entry, turning a matrix into a scalar.
fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Result<Var> {
    let (n, m) = tape.shape(x);
    let mut r = rng(seed ^ 0x5eed);
    let rows: Vec<usize> = (0..n * m).map(|i| i / m).collect();
    let cols: Vec<usize> = (0..n * m).map(|i| i % m).collect();
    let w: Vec<f64> = (0..n * m).map(|_| r.random_range(-1.0..1.0)).collect();
    tape.pick_sum(x, &rows, &cols, &w)
}

/// Random undirected graph on `n` nodes where every node has at least one
/// neighbour.
pub fn random_graph(seed: u64, n: usize, f: usize, c: usize) -> Graph {
    let mut r = rng(seed);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (r.random_range(0..v), v)).collect();
    for _ in 0..n {
        let (u, v) = (r.random_range(0..n), r.random_range(0..n));
        edges.push((u, v));
    }
    let features = random(&mut r, n, f);
    let labels = (0..n).map(|_| r.random_range(0..c)).collect();
    Graph::from_edges("gradcheck", n, &edges, features, labels, c).expect("valid graph")
}

fn sparse(seed: u64, n: usize) -> Arc<SparseMatrix> {
    let mut r = rng(seed);
    let mut trip = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if r.random_bool(0.4) {
                trip.push((i, j, r.random_range(-1.0..1.0)));
            }
        }
    }
    Arc::new(SparseMatrix::from_triplets(n, n, trip).expect("valid triplets"))
}

fn unary(seed: u64, op: impl Fn(&mut Tape, Var) -> Result<Var>) -> Result<f64> {
    let mut r = rng(seed);
    let x = random(&mut r, 4, 3);
    finite_difference_check(
        |t, v| {
            let y = op(t, v[0])?;
            weighted_sum(t, y, seed)
        },
        &[x],
        FD_STEP,
    )
}

fn check_matmul(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let (a, b) = (random(&mut r, 4, 3), random(&mut r, 3, 5));
    finite_difference_check(
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            weighted_sum(t, y, seed)
        },
        &[a, b],
        FD_STEP,
    )
}

fn check_spmm(seed: u64) -> Result<f64> {
    let s = sparse(seed, 5);
    let x = random(&mut rng(seed + 1), 5, 3);
    finite_difference_check(
        |t, v| {
            let y = t.spmm(&s, v[0])?;
            weighted_sum(t, y, seed)
        },
        &[x],
        FD_STEP,
    )
}

fn check_add(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let (a, b, bias) = (random(&mut r, 4, 3), random(&mut r, 4, 3), random(&mut r, 1, 3));
    finite_difference_check(
        |t, v| {
            let s = t.add(v[0], v[1])?;
            let y = t.add_row(s, v[2])?;
            weighted_sum(t, y, seed)
        },
        &[a, b, bias],
        FD_STEP,
    )
}

fn check_scale(seed: u64) -> Result<f64> {
    unary(seed, |t, x| Ok(t.scale(x, -1.7)))
}

fn check_relu(seed: u64) -> Result<f64> {
    unary(seed, |t, x| Ok(t.relu(x)))
}

fn check_leaky_relu(seed: u64) -> Result<f64> {
    unary(seed, |t, x| Ok(t.leaky_relu(x, 0.2)))
}

fn check_dropout(seed: u64) -> Result<f64> {
    // A fresh stream per evaluation keeps the mask fixed.
    unary(seed, |t, x| t.dropout(x, 0.4, true, &mut rng(seed + 7)))
}

fn check_softmax(seed: u64) -> Result<f64> {
    unary(seed, |t, x| Ok(t.softmax(x)))
}

fn check_log_softmax(seed: u64) -> Result<f64> {
    unary(seed, |t, x| Ok(t.log_softmax(x)))
}

fn check_cross_entropy(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let x = random(&mut r, 6, 4);
    let rows = vec![0, 2, 3, 5];
    let labels: Vec<usize> = rows.iter().map(|_| r.random_range(0..4)).collect();
    finite_difference_check(|t, v| t.cross_entropy(v[0], &rows, &labels), &[x], FD_STEP)
}

fn check_kl_rows(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let x = random(&mut r, 5, 3);
    let target = Arc::new(row_softmax(&random(&mut r, 5, 3).map(|v| 2.0 * v)));
    let rows = vec![0, 1, 3, 4];
    let mut worst: f64 = 0.0;
    for reduce in [Reduce::Sum, Reduce::Mean, Reduce::PerRow] {
        let err = finite_difference_check(
            |t, v| {
                let q = t.softmax(v[0]);
                let kl = t.kl_rows(&target, q, &rows, reduce)?;
                match reduce {
                    Reduce::PerRow => weighted_sum(t, kl, seed),
                    _ => Ok(kl),
                }
            },
            std::slice::from_ref(&x),
            FD_STEP,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn check_pick_sum(seed: u64) -> Result<f64> {
    unary(seed, |t, x| {
        let s = t.pick_sum(x, &[0, 3, 3, 1], &[2, 0, 0, 1], &[0.5, -1.0, 2.0, 0.25])?;
        Ok(t.scale(s, 1.0))
    })
}

fn check_gat_attention(seed: u64) -> Result<f64> {
    let g = random_graph(seed, 6, 2, 2);
    let ops = GraphOps::new(&g);
    let mut r = rng(seed + 3);
    let (heads, d) = (2, 3);
    let wh = random(&mut r, 6, heads * d);
    let (src, dst) = (random(&mut r, 1, heads * d), random(&mut r, 1, heads * d));
    let mut worst: f64 = 0.0;
    for concat in [true, false] {
        let err = finite_difference_check(
            |t, v| {
                let y = t.gat_attention(v[0], v[1], v[2], &ops.attention, heads, concat, 0.2)?;
                weighted_sum(t, y, seed)
            },
            &[wh.clone(), src.clone(), dst.clone()],
            FD_STEP,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Primitive name and check.
pub fn primitives() -> Vec<(&'static str, Check)> {
    vec![
        ("matmul", check_matmul as Check),
        ("spmm", check_spmm),
        ("add/add_row", check_add),
        ("scale", check_scale),
        ("relu", check_relu),
        ("leaky_relu", check_leaky_relu),
        ("dropout", check_dropout),
        ("softmax", check_softmax),
        ("log_softmax", check_log_softmax),
        ("cross_entropy", check_cross_entropy),
        ("kl_rows", check_kl_rows),
        ("pick_sum", check_pick_sum),
        ("gat_attention", check_gat_attention),
    ]
}

/// Random values in the shapes of `params`. Zero-initialised biases would
/// put pre-activations exactly on the ReLU kink when dropout clears a row.
fn randomized(params: &[DenseMatrix], seed: u64) -> Vec<DenseMatrix> {
    let mut r = rng(seed ^ 0xb1a5);
    params.iter().map(|p| random(&mut r, p.rows(), p.cols())).collect()
}

fn check_teacher(arch: Arch, seed: u64) -> Result<f64> {
    let (n, f, c) = (7, 4, 3);
    let g = random_graph(seed, n, f, c);
    let ops = GraphOps::new(&g);
    let cfg = TeacherConfig {
        hidden_dim: 4,
        attention_heads: 2,
        power_iterations: 3,
        dropout: 0.3,
        ..TeacherConfig::small(arch)
    }
    .with_seed(seed);
    let model = GnnModel::new(cfg, f, c)?;
    let rows: Vec<usize> = (0..n).collect();
    let labels = g.labels().to_vec();
    let mut point = randomized(&model.params, seed);
    point.push(g.features().clone());
    let last = point.len() - 1;
    finite_difference_check(
        |t, v| {
            let logits = model.forward(t, &v[..last], &ops, v[last], Mode::Train, &mut rng(seed + 11))?;
            t.cross_entropy(logits, &rows, &labels)
        },
        &point,
        FD_STEP,
    )
}

fn check_gcn(seed: u64) -> Result<f64> {
    check_teacher(Arch::Gcn, seed)
}

fn check_sage(seed: u64) -> Result<f64> {
    check_teacher(Arch::Sage, seed)
}

fn check_gat(seed: u64) -> Result<f64> {
    check_teacher(Arch::Gat, seed)
}

fn check_appnp(seed: u64) -> Result<f64> {
    check_teacher(Arch::Appnp, seed)
}

fn check_sgc(seed: u64) -> Result<f64> {
    check_teacher(Arch::Sgc, seed)
}

fn check_mlp(seed: u64) -> Result<f64> {
    let (n, f, c) = (8, 5, 3);
    let g = random_graph(seed, n, f, c);
    let model = StudentModel::new(
        DistillConfig {
            hidden_dim: 6,
            dropout: 0.3,
            alpha: 0.3,
            seed,
            ..DistillConfig::default()
        },
        f,
        c,
    )?;
    let mut r = rng(seed + 5);
    let soft = row_softmax(&random(&mut r, n, c).map(|v| 3.0 * v));
    let sources: Vec<TargetSource> = (0..n)
        .map(|v| match v % 3 {
            0 => TargetSource::Null,
            1 => TargetSource::Teacher(v % 2),
            _ => TargetSource::Soft,
        })
        .collect();
    let targets = DistillTargets::new(soft, sources)?;
    let kd: Vec<usize> = (0..n).collect();
    let train = vec![1, 4, 6];
    let labels = g.labels().to_vec();
    let mut point = randomized(&model.params, seed);
    point.push(g.features().clone());
    let last = point.len() - 1;
    finite_difference_check(
        |t, v| {
            let out = model.forward(t, &v[..last], v[last], None, Mode::Train, &mut rng(seed + 13))?;
            student_distill_loss(t, out.logits, &targets, &labels, &train, &kd, 0.3)
        },
        &point,
        FD_STEP,
    )
}

fn check_policy(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let (n, d, k, hidden) = (9, 5, 4, 16);
    let cfg = PolicyConfig {
        hidden_dim: hidden,
        ..PolicyConfig::default()
    };
    let mut policy = MetaPolicy::new(d, k, &cfg, seed)?;
    // The output layer starts at zero; perturb it so every path is active.
    policy.params[2] = random(&mut r, hidden, k + 1);
    policy.params[3] = random(&mut r, 1, k + 1);
    // Finite differences are meaningless across a ReLU kink: redraw the
    // states until every hidden pre-activation is clear of zero.
    let states = loop {
        let s = random(&mut r, n, d);
        let pre = s.matmul(&policy.params[0])?;
        if pre.data().iter().all(|x| x.abs() > 1e-2) {
            break s;
        }
    };
    let actions: Vec<usize> = (0..n).map(|_| r.random_range(0..=k)).collect();
    let rewards: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..0.0)).collect();
    finite_difference_check(
        |t, v| Ok(policy_gradient_loss(&policy, t, v, &states, &actions, &rewards)?.0),
        &policy.params,
        FD_STEP,
    )
}

/// Composed model name and check.
pub fn models() -> Vec<(&'static str, Check)> {
    vec![
        ("gcn", check_gcn as Check),
        ("sage", check_sage),
        ("gat", check_gat),
        ("appnp", check_appnp),
        ("sgc", check_sgc),
        ("mlp_student", check_mlp),
        ("policy", check_policy),
    ]
}

/// Worst relative error of `check` over `seeds`.
pub fn worst_over_seeds(check: Check, seeds: std::ops::Range<u64>) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in seeds {
        worst = worst.max(check(s)?);
    }
    Ok(worst)
}
