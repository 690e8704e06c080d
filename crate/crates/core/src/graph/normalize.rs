use crate::graph::Graph;
use crate::tensor::SparseMatrix;

fn with_optional_self_loops(g: &Graph, self_loops: bool) -> SparseMatrix {
    let a = g.adjacency();
    if !self_loops {
        return a.clone();
    }
    let n = g.num_nodes();
    let mut trip = Vec::with_capacity(a.nnz() + n);
    for r in 0..n {
        let (cols, _) = a.row(r);
        trip.extend(cols.iter().map(|&c| (r, c, 1.0)));
        trip.push((r, r, 1.0));
    }
    SparseMatrix::from_triplets(n, n, trip).expect("adjacency plus identity is valid csr")
}

/// `D^{-1/2} (A [+ I]) D^{-1/2}` where `D` counts the self loop when added.
pub fn symmetric_normalize(g: &Graph, add_self_loops: bool) -> SparseMatrix {
    let a = with_optional_self_loops(g, add_self_loops);
    let degree: Vec<f64> = (0..a.rows()).map(|r| a.row_nnz(r) as f64).collect();
    let mut values = Vec::with_capacity(a.nnz());
    for r in 0..a.rows() {
        let (cols, _) = a.row(r);
        values.extend(cols.iter().map(|&c| 1.0 / (degree[r] * degree[c]).sqrt()));
    }
    a.with_values(values).expect("same sparsity pattern")
}

/// Row-normalised adjacency without self loops: row `v` averages the
/// neighbours of `v`. Isolated nodes get an empty row.
pub fn mean_aggregation(g: &Graph) -> SparseMatrix {
    let a = g.adjacency();
    let mut values = Vec::with_capacity(a.nnz());
    for r in 0..a.rows() {
        let d = a.row_nnz(r) as f64;
        values.extend(std::iter::repeat(1.0 / d).take(a.row_nnz(r)));
    }
    a.with_values(values).expect("same sparsity pattern")
}

/// Unit-weight `A + I`, the neighbourhoods attended over by graph attention.
pub fn attention_structure(g: &Graph) -> SparseMatrix {
    with_optional_self_loops(g, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseMatrix;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges("g", n, edges, DenseMatrix::zeros(n, 1), vec![0; n], 1).unwrap()
    }

    #[test]
    fn single_node_with_self_loop() {
        let a = symmetric_normalize(&graph(1, &[]), true);
        assert_eq!(a.to_dense(), DenseMatrix::from_rows(&[[1.0]]));
    }

    #[test]
    fn two_node_edge_is_all_half() {
        let a = symmetric_normalize(&graph(2, &[(0, 1)]), true);
        assert_eq!(a.to_dense(), DenseMatrix::filled(2, 2, 0.5));
    }

    #[test]
    fn isolated_node_without_self_loops_has_empty_row() {
        let a = symmetric_normalize(&graph(3, &[(0, 1)]), false);
        assert_eq!(a.row_nnz(2), 0);
        assert_eq!(a.get(0, 1), 1.0);
    }

    #[test]
    fn mean_rows_sum_to_one() {
        let m = mean_aggregation(&graph(4, &[(0, 1), (0, 2), (0, 3)]));
        assert!((m.to_dense().row_sums()[0] - 1.0).abs() < 1e-15);
        assert_eq!(m.get(1, 0), 1.0);
    }
}
