use std::sync::Arc;

use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::graph::{attention_structure, mean_aggregation, symmetric_normalize, Graph};
use crate::nn::{affine, glorot, Mode, SeededRng};
use crate::teachers::config::{Arch, TeacherConfig};
use crate::tensor::{DenseMatrix, SparseMatrix, Tape, Var};

pub const GAT_NEGATIVE_SLOPE: f64 = 0.2;

/// Propagation operators derived once from a graph.
#[derive(Clone, Debug)]
pub struct GraphOps {
    /// `D^{-1/2}(A + I)D^{-1/2}`.
    pub gcn: Arc<SparseMatrix>,
    /// Neighbour mean without self.
    pub mean: Arc<SparseMatrix>,
    /// Unit-weight `A + I`.
    pub attention: Arc<SparseMatrix>,
}

impl GraphOps {
    pub fn new(g: &Graph) -> Self {
        Self {
            gcn: Arc::new(symmetric_normalize(g, true)),
            mean: Arc::new(mean_aggregation(g)),
            attention: Arc::new(attention_structure(g)),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.gcn.rows()
    }
}

/// A graph neural network with its parameters. The parameter layout is
/// fixed by the architecture:
///
/// * GCN, APPNP: `[W, b]` per layer
/// * SGC: `[W, b]`
/// * SAGE: `[W_self, W_neigh, b]` per layer
/// * GAT: `[W, a_src, a_dst, b]` per layer
#[derive(Clone, Debug)]
pub struct GnnModel {
    pub config: TeacherConfig,
    pub in_dim: usize,
    pub num_classes: usize,
    pub params: Vec<DenseMatrix>,
}

fn layer_dims(in_dim: usize, hidden: usize, out: usize, layers: usize) -> Vec<(usize, usize)> {
    (0..layers)
        .map(|l| {
            let i = if l == 0 { in_dim } else { hidden };
            let o = if l + 1 == layers { out } else { hidden };
            (i, o)
        })
        .collect()
}

impl GnnModel {
    pub fn new(config: TeacherConfig, in_dim: usize, num_classes: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::seed_from_u64(config.seed);
        let dims = layer_dims(in_dim, config.hidden_dim, num_classes, config.layers);
        let mut params = Vec::new();
        match config.arch {
            Arch::Gcn | Arch::Appnp => {
                for &(i, o) in &dims {
                    params.push(glorot(i, o, &mut rng));
                    params.push(DenseMatrix::zeros(1, o));
                }
            }
            Arch::Sgc => {
                params.push(glorot(in_dim, num_classes, &mut rng));
                params.push(DenseMatrix::zeros(1, num_classes));
            }
            Arch::Sage => {
                for &(i, o) in &dims {
                    params.push(glorot(i, o, &mut rng));
                    params.push(glorot(i, o, &mut rng));
                    params.push(DenseMatrix::zeros(1, o));
                }
            }
            Arch::Gat => {
                for (l, &(i, o)) in dims.iter().enumerate() {
                    let heads = gat_heads(&config, l);
                    let d = o / heads;
                    params.push(glorot(i, o, &mut rng));
                    params.push(attention_vector(heads, d, &mut rng));
                    params.push(attention_vector(heads, d, &mut rng));
                    params.push(DenseMatrix::zeros(1, o));
                }
            }
        }
        Ok(Self {
            config,
            in_dim,
            num_classes,
            params,
        })
    }

    pub fn from_params(
        config: TeacherConfig,
        in_dim: usize,
        num_classes: usize,
        params: Vec<DenseMatrix>,
    ) -> Result<Self> {
        let template = Self::new(config, in_dim, num_classes)?;
        if template.params.len() != params.len()
            || template.params.iter().zip(&params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::shape(
                "GnnModel::from_params",
                format!("{} tensors shaped for {}", template.params.len(), template.config.arch),
                format!("{} tensors", params.len()),
            ));
        }
        Ok(Self { params, ..template })
    }

    pub fn arch(&self) -> Arch {
        self.config.arch
    }

    /// Records a forward pass and returns the `N x C` logits.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        ops: &GraphOps,
        features: Var,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<Var> {
        let (n, f) = tape.shape(features);
        if f != self.in_dim || n != ops.num_nodes() {
            return Err(Error::shape(
                "gnn forward",
                format!("{}x{}", ops.num_nodes(), self.in_dim),
                format!("{n}x{f}"),
            ));
        }
        if params.len() != self.params.len() {
            return Err(Error::shape("gnn forward params", self.params.len(), params.len()));
        }
        match self.config.arch {
            Arch::Gcn => gcn_forward(tape, params, &ops.gcn, features, &self.config, mode, rng),
            Arch::Sgc => sgc_forward(tape, params, &ops.gcn, features, self.config.layers),
            Arch::Sage => sage_forward(tape, params, &ops.mean, features, &self.config, mode, rng),
            Arch::Gat => gat_forward(tape, params, &ops.attention, features, &self.config, mode, rng),
            Arch::Appnp => appnp_forward(tape, params, &ops.gcn, features, &self.config, mode, rng),
        }
    }

    /// Eval-mode logits for every node.
    pub fn logits(&self, ops: &GraphOps, features: &DenseMatrix) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let x = tape.constant(features.clone());
        // Eval mode never draws from the stream.
        let mut rng = SeededRng::seed_from_u64(0);
        let out = self.forward(&mut tape, &params, ops, x, Mode::Eval, &mut rng)?;
        Ok(tape.value(out).clone())
    }
}

fn gat_heads(cfg: &TeacherConfig, layer: usize) -> usize {
    if layer + 1 == cfg.layers {
        1
    } else {
        cfg.attention_heads
    }
}

fn attention_vector(heads: usize, d: usize, rng: &mut SeededRng) -> DenseMatrix {
    let m = glorot(heads, d, rng);
    DenseMatrix::from_vec(1, heads * d, m.into_vec()).expect("same length")
}

/// `H' = Â H W + b`, ReLU and dropout between layers, linear output.
pub fn gcn_forward(
    tape: &mut Tape,
    params: &[Var],
    adj: &Arc<SparseMatrix>,
    x: Var,
    cfg: &TeacherConfig,
    mode: Mode,
    rng: &mut SeededRng,
) -> Result<Var> {
    let mut h = x;
    for l in 0..cfg.layers {
        h = tape.dropout(h, cfg.dropout, mode.is_train(), rng)?;
        let hw = tape.matmul(h, params[2 * l])?;
        let prop = tape.spmm(adj, hw)?;
        h = tape.add_row(prop, params[2 * l + 1])?;
        if l + 1 < cfg.layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// `(Â^k X) W + b` with no nonlinearity.
pub fn sgc_forward(
    tape: &mut Tape,
    params: &[Var],
    adj: &Arc<SparseMatrix>,
    x: Var,
    hops: usize,
) -> Result<Var> {
    let mut z = x;
    for _ in 0..hops {
        z = tape.spmm(adj, z)?;
    }
    affine(tape, z, params[0], params[1])
}

/// `h'_v = W_self h_v + W_neigh mean_{u in N(v)} h_u + b`.
pub fn sage_forward(
    tape: &mut Tape,
    params: &[Var],
    mean: &Arc<SparseMatrix>,
    x: Var,
    cfg: &TeacherConfig,
    mode: Mode,
    rng: &mut SeededRng,
) -> Result<Var> {
    let mut h = x;
    for l in 0..cfg.layers {
        h = tape.dropout(h, cfg.dropout, mode.is_train(), rng)?;
        let own = tape.matmul(h, params[3 * l])?;
        let nw = tape.matmul(h, params[3 * l + 1])?;
        let neigh = tape.spmm(mean, nw)?;
        let sum = tape.add(own, neigh)?;
        h = tape.add_row(sum, params[3 * l + 2])?;
        if l + 1 < cfg.layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Multi-head attention layers; hidden heads are concatenated and the
/// single output head is averaged.
pub fn gat_forward(
    tape: &mut Tape,
    params: &[Var],
    structure: &Arc<SparseMatrix>,
    x: Var,
    cfg: &TeacherConfig,
    mode: Mode,
    rng: &mut SeededRng,
) -> Result<Var> {
    let mut h = x;
    for l in 0..cfg.layers {
        let last = l + 1 == cfg.layers;
        let heads = gat_heads(cfg, l);
        h = tape.dropout(h, cfg.dropout, mode.is_train(), rng)?;
        let wh = tape.matmul(h, params[4 * l])?;
        let agg = tape.gat_attention(
            wh,
            params[4 * l + 1],
            params[4 * l + 2],
            structure,
            heads,
            !last,
            GAT_NEGATIVE_SLOPE,
        )?;
        h = tape.add_row(agg, params[4 * l + 3])?;
        if !last {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// MLP prediction followed by personalised-PageRank propagation
/// `Z <- (1 - τ) Â Z + τ H`.
pub fn appnp_forward(
    tape: &mut Tape,
    params: &[Var],
    adj: &Arc<SparseMatrix>,
    x: Var,
    cfg: &TeacherConfig,
    mode: Mode,
    rng: &mut SeededRng,
) -> Result<Var> {
    let mut h = x;
    for l in 0..cfg.layers {
        h = tape.dropout(h, cfg.dropout, mode.is_train(), rng)?;
        h = affine(tape, h, params[2 * l], params[2 * l + 1])?;
        if l + 1 < cfg.layers {
            h = tape.relu(h);
        }
    }
    propagate_ppr(tape, adj, h, cfg.power_iterations, cfg.teleport)
}

pub fn propagate_ppr(
    tape: &mut Tape,
    adj: &Arc<SparseMatrix>,
    h: Var,
    iterations: usize,
    teleport: f64,
) -> Result<Var> {
    let restart = tape.scale(h, teleport);
    let mut z = h;
    for _ in 0..iterations {
        let p = tape.spmm(adj, z)?;
        let p = tape.scale(p, 1.0 - teleport);
        z = tape.add(p, restart)?;
    }
    Ok(z)
}
