//! Graphs, splits, the on-disk dataset format and synthetic data.

mod io;
mod normalize;
mod perturb;
mod sbm;
mod splits;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, SparseMatrix};

pub use io::{import_linqs, load_dataset, save_dataset, DatasetMeta, SplitsFile};
pub use normalize::{attention_structure, mean_aggregation, symmetric_normalize};
pub use perturb::{mask_features, perturb, perturb_edges, PerturbConfig, PerturbKind};
pub use sbm::{generate_sbm, SbmConfig};
pub use splits::{make_inductive_split, make_transductive_splits, unlabeled_pool};

/// Undirected attributed graph with one class label per node.
///
/// The adjacency is stored symmetrically with unit weights and without
/// self loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub name: String,
    adjacency: SparseMatrix,
    features: DenseMatrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Graph {
    /// Builds a graph from undirected edges. Pairs are symmetrised and
    /// deduplicated; self loops are dropped.
    pub fn from_edges(
        name: impl Into<String>,
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: DenseMatrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let mut pairs = BTreeSet::new();
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= num_nodes {
                    return Err(Error::IndexOutOfRange {
                        context: "edge endpoint".into(),
                        index: x,
                        bound: num_nodes,
                    });
                }
            }
            if u != v {
                pairs.insert((u.min(v), u.max(v)));
            }
        }
        let adjacency = adjacency_from_pairs(num_nodes, pairs.iter().copied())?;
        Self::new(name, adjacency, features, labels, num_classes)
    }

    pub fn new(
        name: impl Into<String>,
        adjacency: SparseMatrix,
        features: DenseMatrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = adjacency.rows();
        if adjacency.cols() != n {
            return Err(Error::shape("Graph::new", "square adjacency", format!("{}x{}", n, adjacency.cols())));
        }
        if features.rows() != n {
            return Err(Error::shape("Graph::new", format!("{n} feature rows"), features.rows()));
        }
        if labels.len() != n {
            return Err(Error::shape("Graph::new", format!("{n} labels"), labels.len()));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::IndexOutOfRange {
                context: format!("label of node {i}"),
                index: y,
                bound: num_classes,
            });
        }
        if (0..n).any(|r| adjacency.get(r, r) != 0.0) {
            return Err(Error::invalid("adjacency must not store self loops"));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::invalid("adjacency must be symmetric"));
        }
        Ok(Self {
            name: name.into(),
            adjacency,
            features,
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency.row_nnz(v)
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.adjacency.row(v).0
    }

    /// Undirected edges as `(u, v)` with `u < v`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes() {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn with_features(&self, features: DenseMatrix) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.adjacency.clone(),
            features,
            self.labels.clone(),
            self.num_classes,
        )
    }

    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Self> {
        Self::from_edges(
            self.name.clone(),
            self.num_nodes(),
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
        )
    }

    /// Same nodes, features and labels with every edge removed.
    pub fn without_edges(&self) -> Self {
        self.with_edges(&[]).expect("edge-free graph is valid")
    }

    /// Relabels nodes so that old node `perm[i]` becomes new node `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::shape("Graph::permuted", n, perm.len()));
        }
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::invalid("permutation must be a bijection"));
            }
            inverse[old] = new;
        }
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .map(|(u, v)| (inverse[u], inverse[v]))
            .collect();
        let features = self.features.select_rows(perm);
        let labels = perm.iter().map(|&o| self.labels[o]).collect();
        Self::from_edges(self.name.clone(), n, &edges, features, labels, self.num_classes)
    }
}

pub(crate) fn adjacency_from_pairs(
    n: usize,
    pairs: impl Iterator<Item = (usize, usize)>,
) -> Result<SparseMatrix> {
    let mut trip = Vec::new();
    for (u, v) in pairs {
        trip.push((u, v, 1.0));
        trip.push((v, u, 1.0));
    }
    SparseMatrix::from_triplets(n, n, trip)
}

/// Labeled, validation and test node sets, plus the optional inductive
/// partition of the unlabeled pool.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inductive: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<Vec<usize>>,
}

impl SplitSpec {
    /// Checks bounds, pairwise disjointness and the inductive partition.
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut seen = vec![None::<&str>; num_nodes];
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &v in set {
                if v >= num_nodes {
                    return Err(Error::IndexOutOfRange {
                        context: format!("split '{name}'"),
                        index: v,
                        bound: num_nodes,
                    });
                }
                if let Some(prev) = seen[v] {
                    return Err(Error::invalid(format!(
                        "node {v} appears in both '{prev}' and '{name}'"
                    )));
                }
                seen[v] = Some(name);
            }
        }
        match (&self.inductive, &self.observed) {
            (None, None) => Ok(()),
            (Some(ind), Some(obs)) => {
                let mut part = vec![0u8; num_nodes];
                for (tag, set) in [(1u8, ind), (2u8, obs)] {
                    for &v in set {
                        if v >= num_nodes {
                            return Err(Error::IndexOutOfRange {
                                context: "inductive partition".into(),
                                index: v,
                                bound: num_nodes,
                            });
                        }
                        if part[v] != 0 {
                            return Err(Error::invalid(format!("node {v} is both inductive and observed")));
                        }
                        part[v] = tag;
                    }
                }
                for &v in self.train.iter().chain(&self.val) {
                    if part[v] == 1 {
                        return Err(Error::invalid(format!("labeled node {v} is marked inductive")));
                    }
                }
                let labeled: BTreeSet<_> = self.train.iter().chain(&self.val).copied().collect();
                for v in 0..num_nodes {
                    if !labeled.contains(&v) && part[v] == 0 {
                        return Err(Error::invalid(format!(
                            "unlabeled node {v} is neither inductive nor observed"
                        )));
                    }
                }
                Ok(())
            }
            _ => Err(Error::invalid("inductive and observed sets must be given together")),
        }
    }

    pub fn is_inductive(&self) -> bool {
        self.inductive.is_some()
    }
}
