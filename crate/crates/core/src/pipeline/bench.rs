use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::Graph;
use crate::student::{Backbone, StudentModel};
use crate::teachers::{Arch, GnnModel, GraphOps};

/// Median full-graph inference times in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub repetitions: usize,
    pub teacher_ms: Vec<(Arch, f64)>,
    /// Sum of the teacher times: an ensemble must run every member.
    pub ensemble_ms: f64,
    pub student_ms: f64,
    /// Student time on the same nodes with every edge removed.
    pub student_edge_free_ms: f64,
}

/// Median wall time of `f` over `repetitions` runs after one warm-up.
pub fn median_millis(repetitions: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut times = Vec::with_capacity(repetitions.max(1));
    for _ in 0..repetitions.max(1) {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    Ok(if n % 2 == 1 {
        times[n / 2]
    } else {
        (times[n / 2 - 1] + times[n / 2]) / 2.0
    })
}

/// Eval-mode forward timings. Propagation operators are built before
/// timing starts; the forward passes themselves are measured.
pub fn inference_benchmark(
    teachers: &[GnnModel],
    student: &StudentModel,
    g: &Graph,
    repetitions: usize,
) -> Result<BenchmarkResult> {
    let ops = GraphOps::new(g);
    let mut teacher_ms = Vec::with_capacity(teachers.len());
    for t in teachers {
        let ms = median_millis(repetitions, || t.logits(&ops, g.features()).map(drop))?;
        teacher_ms.push((t.arch(), ms));
    }
    let empty = g.without_edges();
    let (student_ops, empty_ops) = match student.config.backbone {
        Backbone::Mlp => (None, None),
        Backbone::Gcn => (Some(ops.clone()), Some(GraphOps::new(&empty))),
    };
    let student_ms = median_millis(repetitions, || {
        student.logits(g.features(), student_ops.as_ref()).map(drop)
    })?;
    let student_edge_free_ms = median_millis(repetitions, || {
        student.logits(empty.features(), empty_ops.as_ref()).map(drop)
    })?;
    Ok(BenchmarkResult {
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        repetitions,
        ensemble_ms: teacher_ms.iter().map(|t| t.1).sum(),
        teacher_ms,
        student_ms,
        student_edge_free_ms,
    })
}
