//! Sparse symmetric storage, a general sparse matrix for design matrices,
//! and the sparse Cholesky machinery used for every GMRF computation.
//!
//! Symmetric matrices keep only their lower triangle in compressed sparse
//! column form. Explicit zeros are retained when matrices are combined, so
//! the sparsity pattern of e.g. a precision matrix depends only on the
//! structure of its inputs and never on the hyperparameter values. That is
//! what lets a single symbolic analysis be reused across many
//! factorizations.

mod cholesky;
mod ordering;

pub use cholesky::{CholeskyFactor, SymbolicCholesky};
pub use ordering::{minimum_degree, Ordering};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower triangle (CSC, rows sorted within
/// each column, no duplicates).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    /// Builds a matrix from `(row, col, value)` triplets.
    ///
    /// Entries above the diagonal are reflected into the lower triangle and
    /// duplicate coordinates are summed, so callers may pass either
    /// triangle (but not both, unless they intend the sum).
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if dim == 0 {
            return Err(Error::InvalidParameters(
                "sparse matrix dimension must be at least 1".into(),
            ));
        }
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::IndexOutOfRange {
                    index: r.max(c),
                    dim,
                });
            }
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            entries.push((r, c, v));
        }
        Ok(Self::from_lower_entries(dim, entries))
    }

    fn from_lower_entries(dim: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0usize; dim + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
            last = Some((r, c));
        }
        for j in 0..dim {
            col_ptr[j + 1] += col_ptr[j];
        }
        Self {
            dim,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_triplets(diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored entries in the lower triangle.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row indices and values of the lower-triangular part of column `j`.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    /// Iterates over stored `(row, col, value)` entries with `row >= col`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |j| {
            let (rows, vals) = self.col(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let (rows, vals) = self.col(c);
        match rows.binary_search(&r) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|j| self.get(j, j)).collect()
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.dim == other.dim && self.col_ptr == other.col_ptr && self.row_idx == other.row_idx
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `Σ coef_k · M_k` over matrices of equal dimension. The result carries
    /// the union of the input patterns even where the numeric sum is zero.
    pub fn linear_combination(terms: &[(f64, &SparseSymmetric)]) -> Result<Self> {
        let dim = terms
            .first()
            .map(|t| t.1.dim)
            .ok_or_else(|| Error::InvalidParameters("empty linear combination".into()))?;
        if let Some(t) = terms.iter().find(|t| t.1.dim != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: t.1.dim,
            });
        }
        let mut entries = Vec::with_capacity(terms.iter().map(|t| t.1.nnz()).sum());
        for (a, m) in terms {
            entries.extend(m.entries().map(|(i, j, v)| (i, j, a * v)));
        }
        Ok(Self::from_lower_entries(dim, entries))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::linear_combination(&[(1.0, self), (1.0, other)])
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.dim];
        for (i, j, v) in self.entries() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        Ok(y)
    }

    /// `xᵀ M x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let y = self.matvec(x)?;
        Ok(x.iter().zip(&y).map(|(a, b)| a * b).sum())
    }

    /// Kronecker product `a ⊗ b`: block `(i, j)` equals `a[i, j] · b`.
    pub fn kron(a: &Self, b: &Self) -> Self {
        let nb = b.dim;
        let mut entries = Vec::with_capacity(a.nnz() * (2 * b.nnz()));
        for (ia, ja, va) in a.entries() {
            for (ib, jb, vb) in b.entries() {
                // Off-diagonal blocks need both triangles of b.
                entries.push((ia * nb + ib, ja * nb + jb, va * vb));
                if ia != ja && ib != jb {
                    entries.push((ia * nb + jb, ja * nb + ib, va * vb));
                }
            }
        }
        Self::from_lower_entries(a.dim * nb, entries)
    }

    /// Block-diagonal matrix with the given blocks in order.
    pub fn block_diagonal(blocks: &[&Self]) -> Result<Self> {
        let dim: usize = blocks.iter().map(|b| b.dim).sum();
        let mut entries = Vec::with_capacity(blocks.iter().map(|b| b.nnz()).sum());
        let mut offset = 0;
        for b in blocks {
            entries.extend(b.entries().map(|(i, j, v)| (i + offset, j + offset, v)));
            offset += b.dim;
        }
        if dim == 0 {
            return Err(Error::InvalidParameters("no blocks given".into()));
        }
        Ok(Self::from_lower_entries(dim, entries))
    }

    /// Principal submatrix on `range`.
    pub fn principal_block(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let entries = self
            .entries()
            .filter(|&(i, j, _)| range.contains(&i) && range.contains(&j))
            .map(|(i, j, v)| (i - range.start, j - range.start, v));
        Self::from_triplets(range.len(), entries)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.entries() {
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
        d
    }

    /// Pattern-only symmetric adjacency lists (diagonal excluded).
    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.dim];
        for (i, j, _) in self.entries() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        adj
    }
}

/// General sparse matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate coordinates are summed.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::IndexOutOfRange {
                    index: if r >= rows { r } else { c },
                    dim: if r >= rows { rows } else { cols },
                });
            }
            entries.push((r, c, v));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect())
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: y.len(),
            });
        }
        let mut x = vec![0.0; self.cols];
        for (i, j, v) in self.entries() {
            x[j] += v * y[i];
        }
        Ok(x)
    }

    /// `Aᵀ A` as a symmetric matrix. Every pair of entries sharing a row
    /// contributes to the pattern, zeros included.
    pub fn gram(&self) -> Result<SparseSymmetric> {
        let mut entries = Vec::new();
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for a in 0..cols.len() {
                for b in 0..=a {
                    entries.push((cols[a], cols[b], vals[a] * vals[b]));
                }
            }
        }
        SparseSymmetric::from_triplets(self.cols, entries)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.entries() {
            d[(i, j)] += v;
        }
        d
    }
}
