use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Compressed sparse row matrix.
///
/// Column indices within a row are strictly increasing, which rules out
/// duplicate `(row, col)` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_csr(
        rows: usize,
        cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if offsets.len() != rows + 1 || offsets[0] != 0 {
            return Err(Error::invalid(format!(
                "csr offsets must have length {} and start at 0",
                rows + 1
            )));
        }
        if *offsets.last().unwrap() != indices.len() || indices.len() != values.len() {
            return Err(Error::invalid(
                "csr offsets, indices and values disagree on nnz",
            ));
        }
        for r in 0..rows {
            if offsets[r] > offsets[r + 1] {
                return Err(Error::invalid("csr offsets must be nondecreasing"));
            }
            let row = &indices[offsets[r]..offsets[r + 1]];
            for (i, &c) in row.iter().enumerate() {
                if c >= cols {
                    return Err(Error::IndexOutOfRange {
                        context: format!("csr row {r}"),
                        index: c,
                        bound: cols,
                    });
                }
                if i > 0 && row[i - 1] >= c {
                    return Err(Error::invalid(format!(
                        "csr row {r}: column indices must be strictly increasing (duplicate or unsorted {c})"
                    )));
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets in any order. Duplicate
    /// coordinates are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut offsets = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for (i, &(r, c, v)) in triplets.iter().enumerate() {
            if r >= rows {
                return Err(Error::IndexOutOfRange {
                    context: "sparse triplet row".into(),
                    index: r,
                    bound: rows,
                });
            }
            if c >= cols {
                return Err(Error::IndexOutOfRange {
                    context: "sparse triplet col".into(),
                    index: c,
                    bound: cols,
                });
            }
            if i > 0 && triplets[i - 1].0 == r && triplets[i - 1].1 == c {
                return Err(Error::invalid(format!("duplicate sparse entry ({r}, {c})")));
            }
            offsets[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.offsets[r], self.offsets[r + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::shape("SparseMatrix::with_values", self.nnz(), values.len()));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                d.set(r, c, v);
            }
        }
        d
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.cols, self.rows, trip).expect("transpose of valid csr")
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    /// Sparse-dense product `self * d`.
    pub fn spmm(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != d.rows() {
            return Err(Error::shape(
                "spmm",
                format!("dense rows == sparse cols ({})", self.cols),
                d.rows(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, d.cols());
        self.spmm_into(d, &mut out);
        Ok(out)
    }

    pub(crate) fn spmm_into(&self, d: &DenseMatrix, out: &mut DenseMatrix) {
        let n = d.cols();
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let orow = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &x) in orow.iter_mut().zip(d.row(c)) {
                    *o += v * x;
                }
            }
        }
        debug_assert_eq!(out.cols(), n);
    }

    /// `out += self^T * d`, scattering row by row.
    pub(crate) fn spmm_transposed_into(&self, d: &DenseMatrix, out: &mut DenseMatrix) {
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let drow = d.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &x) in out.row_mut(c).iter_mut().zip(drow) {
                    *o += v * x;
                }
            }
        }
    }
}
