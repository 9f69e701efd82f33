//! Up-looking sparse Cholesky factorization `P Q Pᵀ = L Lᵀ`.
//!
//! The symbolic phase (ordering, elimination tree, column counts and the
//! scatter map from the input's storage into the permuted matrix) depends
//! only on the sparsity pattern and is shared between factorizations
//! through a cheap clone.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Ordering, SparseSymmetric};
use crate::error::{Error, Result};

#[derive(Debug)]
struct SymbolicInner {
    n: usize,
    /// `perm[k]` is the original index of pivot `k`.
    perm: Vec<usize>,
    /// Pattern of the analysed matrix, for reuse checks.
    a_col_ptr: Vec<usize>,
    a_row_idx: Vec<usize>,
    /// Upper triangle of `P A Pᵀ` in CSC, and for every stored entry of `A`
    /// the position it lands in.
    c_col_ptr: Vec<usize>,
    c_row_idx: Vec<usize>,
    c_from_a: Vec<usize>,
    parent: Vec<Option<usize>>,
    l_col_ptr: Vec<usize>,
}

/// Ordering and structure of a Cholesky factor, reusable for any matrix with
/// the same sparsity pattern.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky(Arc<SymbolicInner>);

impl SymbolicCholesky {
    pub fn analyze(a: &SparseSymmetric, ordering: &Ordering) -> Result<Self> {
        let n = a.dim();
        let perm = ordering.permutation(a);
        let mut iperm = vec![usize::MAX; n];
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: perm.len(),
            });
        }
        for (k, &i) in perm.iter().enumerate() {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, dim: n });
            }
            if iperm[i] != usize::MAX {
                return Err(Error::InvalidParameters(format!(
                    "ordering repeats index {i}"
                )));
            }
            iperm[i] = k;
        }

        // Upper triangle of C = P A Pᵀ: entry (i, j) of A goes to column
        // max(iperm i, iperm j).
        let mut counts = vec![0usize; n + 1];
        for (i, j, _) in a.entries() {
            counts[iperm[i].max(iperm[j]) + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let c_col_ptr = counts.clone();
        let mut next = counts;
        let mut c_row_idx = vec![0usize; a.nnz()];
        let mut c_from_a = vec![0usize; a.nnz()];
        for (p, (i, j, _)) in a.entries().enumerate() {
            let (pi, pj) = (iperm[i], iperm[j]);
            let col = pi.max(pj);
            let q = next[col];
            next[col] += 1;
            c_row_idx[q] = pi.min(pj);
            c_from_a[p] = q;
        }

        let parent = etree(n, &c_col_ptr, &c_row_idx);

        // Column counts by walking every row subtree once.
        let mut col_count = vec![1usize; n];
        let mut flag = vec![usize::MAX; n];
        let mut stack = Vec::new();
        for k in 0..n {
            ereach(k, &c_col_ptr, &c_row_idx, &parent, &mut flag, &mut stack);
            for &i in &stack {
                col_count[i] += 1;
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_col_ptr[k + 1] = l_col_ptr[k] + col_count[k];
        }

        Ok(Self(Arc::new(SymbolicInner {
            n,
            perm,
            a_col_ptr: a.col_ptr().to_vec(),
            a_row_idx: a.row_idx().to_vec(),
            c_col_ptr,
            c_row_idx,
            c_from_a,
            parent,
            l_col_ptr,
        })))
    }

    pub fn dim(&self) -> usize {
        self.0.n
    }

    /// `perm[k]` is the original index eliminated at step `k`.
    pub fn permutation(&self) -> &[usize] {
        &self.0.perm
    }

    /// Number of stored entries of `L`, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.0.l_col_ptr[self.0.n]
    }

    /// Numeric factorization of a matrix with the analysed pattern.
    pub fn factorize(&self, a: &SparseSymmetric) -> Result<CholeskyFactor> {
        let s = &*self.0;
        if a.dim() != s.n || a.col_ptr() != s.a_col_ptr || a.row_idx() != s.a_row_idx {
            return Err(Error::PatternMismatch);
        }
        let n = s.n;
        let mut c_values = vec![0.0; s.c_row_idx.len()];
        for (p, &v) in a.values().iter().enumerate() {
            c_values[s.c_from_a[p]] = v;
        }

        let nnz = s.l_col_ptr[n];
        let mut l_row = vec![0usize; nnz];
        let mut l_val = vec![0.0; nnz];
        let mut fill = s.l_col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut flag = vec![usize::MAX; n];
        let mut stack = Vec::new();

        for k in 0..n {
            ereach(k, &s.c_col_ptr, &s.c_row_idx, &s.parent, &mut flag, &mut stack);
            let mut d = 0.0;
            for q in s.c_col_ptr[k]..s.c_col_ptr[k + 1] {
                let i = s.c_row_idx[q];
                if i == k {
                    d += c_values[q];
                } else {
                    x[i] += c_values[q];
                }
            }
            for &i in &stack {
                let diag = l_val[s.l_col_ptr[i]];
                let lki = x[i] / diag;
                x[i] = 0.0;
                for q in s.l_col_ptr[i] + 1..fill[i] {
                    x[l_row[q]] -= l_val[q] * lki;
                }
                d -= lki * lki;
                let q = fill[i];
                fill[i] += 1;
                l_row[q] = k;
                l_val[q] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: s.perm[k],
                    value: d,
                });
            }
            let q = fill[k];
            fill[k] += 1;
            l_row[q] = k;
            l_val[q] = d.sqrt();
        }

        Ok(CholeskyFactor {
            symbolic: self.clone(),
            l_row,
            l_val,
        })
    }
}

/// Elimination tree of the matrix whose upper triangle is given in CSC.
fn etree(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<Option<usize>> {
    let mut parent = vec![None; n];
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        for &r in &row_idx[col_ptr[k]..col_ptr[k + 1]] {
            let mut i = r;
            while i < k {
                let next = ancestor[i];
                ancestor[i] = Some(k);
                match next {
                    None => {
                        parent[i] = Some(k);
                        break;
                    }
                    Some(nx) if nx == k => break,
                    Some(nx) => i = nx,
                }
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal) in
/// topological order, written into `out`.
fn ereach(
    k: usize,
    col_ptr: &[usize],
    row_idx: &[usize],
    parent: &[Option<usize>],
    flag: &mut [usize],
    out: &mut Vec<usize>,
) {
    out.clear();
    flag[k] = k;
    let mut path = Vec::new();
    let mut chunks: Vec<Vec<usize>> = Vec::new();
    for &r in &row_idx[col_ptr[k]..col_ptr[k + 1]] {
        if r >= k {
            continue;
        }
        path.clear();
        let mut i = r;
        while flag[i] != k {
            path.push(i);
            flag[i] = k;
            match parent[i] {
                Some(p) => i = p,
                None => break,
            }
        }
        if !path.is_empty() {
            chunks.push(path.clone());
        }
    }
    // Later paths end at nodes reached by earlier ones, so reversing the
    // chunk order yields a topological order.
    for c in chunks.into_iter().rev() {
        out.extend(c);
    }
}

/// Numeric Cholesky factor together with its symbolic structure.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: SymbolicCholesky,
    l_row: Vec<usize>,
    l_val: Vec<f64>,
}

impl CholeskyFactor {
    /// Analyses and factorizes in one go.
    pub fn new(a: &SparseSymmetric, ordering: &Ordering) -> Result<Self> {
        SymbolicCholesky::analyze(a, ordering)?.factorize(a)
    }

    pub fn symbolic(&self) -> &SymbolicCholesky {
        &self.symbolic
    }

    pub fn dim(&self) -> usize {
        self.symbolic.0.n
    }

    fn col(&self, k: usize) -> (&[usize], &[f64]) {
        let p = &self.symbolic.0.l_col_ptr;
        (&self.l_row[p[k]..p[k + 1]], &self.l_val[p[k]..p[k + 1]])
    }

    /// `log |Q|`.
    pub fn log_det(&self) -> f64 {
        let p = &self.symbolic.0.l_col_ptr;
        2.0 * (0..self.dim()).map(|k| self.l_val[p[k]].ln()).sum::<f64>()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    /// In place `y ← L⁻¹ y` (permuted coordinates).
    fn forward(&self, y: &mut [f64]) {
        for k in 0..self.dim() {
            let (rows, vals) = self.col(k);
            y[k] /= vals[0];
            let yk = y[k];
            for (&i, &v) in rows[1..].iter().zip(&vals[1..]) {
                y[i] -= v * yk;
            }
        }
    }

    /// In place `y ← L⁻ᵀ y` (permuted coordinates).
    fn backward(&self, y: &mut [f64]) {
        for k in (0..self.dim()).rev() {
            let (rows, vals) = self.col(k);
            let mut s = y[k];
            for (&i, &v) in rows[1..].iter().zip(&vals[1..]) {
                s -= v * y[i];
            }
            y[k] = s / vals[0];
        }
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        let perm = &self.symbolic.0.perm;
        let mut y: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
        self.forward(&mut y);
        self.backward(&mut y);
        let mut x = vec![0.0; y.len()];
        for (k, &i) in perm.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }

    /// `‖L⁻¹ P a‖²`, i.e. `aᵀ Q⁻¹ a`.
    pub fn inverse_quadratic_form(&self, a: &[f64]) -> Result<f64> {
        self.check_len(a.len())?;
        let mut y: Vec<f64> = self.symbolic.0.perm.iter().map(|&i| a[i]).collect();
        self.forward(&mut y);
        Ok(y.iter().map(|v| v * v).sum())
    }

    /// Maps a standard normal vector `z` to a draw from `N(0, Q⁻¹)` by
    /// solving `Lᵀ v = z` and undoing the permutation.
    pub fn transform_standard_normal(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len())?;
        let mut v = z.to_vec();
        self.backward(&mut v);
        let mut x = vec![0.0; v.len()];
        for (k, &i) in self.symbolic.0.perm.iter().enumerate() {
            x[i] = v[k];
        }
        Ok(x)
    }

    /// One draw from `N(0, Q⁻¹)` using the supplied generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.transform_standard_normal(&z)
            .expect("length matches by construction")
    }

    /// `count` draws from `N(0, Q⁻¹)`, reproducible for a given seed.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample_with(&mut rng)).collect()
    }

    /// Entries of `Q⁻¹` on the pattern of `L` (selected inversion), stored
    /// in permuted coordinates parallel to the factor.
    fn selected_inverse(&self) -> Vec<f64> {
        let n = self.dim();
        let ptr = &self.symbolic.0.l_col_ptr;
        let mut sigma = vec![0.0; self.l_val.len()];
        let lookup = |sigma: &[f64], i: usize, j: usize| -> f64 {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            let rows = &self.l_row[ptr[c]..ptr[c + 1]];
            let p = rows
                .binary_search(&r)
                .expect("selected inverse entry lies in the filled pattern");
            sigma[ptr[c] + p]
        };
        for k in (0..n).rev() {
            let (rows, vals) = self.col(k);
            let lkk = vals[0];
            let off = &rows[1..];
            let lo = &vals[1..];
            // Off-diagonal entries in decreasing row order.
            for a in (0..off.len()).rev() {
                let i = off[a];
                let s: f64 = off
                    .iter()
                    .zip(lo)
                    .map(|(&j, &l)| l * lookup(&sigma, j, i))
                    .sum();
                sigma[ptr[k] + 1 + a] = -s / lkk;
            }
            let s: f64 = lo
                .iter()
                .enumerate()
                .map(|(a, &l)| l * sigma[ptr[k] + 1 + a])
                .sum();
            sigma[ptr[k]] = 1.0 / (lkk * lkk) - s / lkk;
        }
        sigma
    }

    /// Diagonal of `Q⁻¹` in original coordinates.
    pub fn marginal_variances(&self) -> Vec<f64> {
        let sigma = self.selected_inverse();
        let ptr = &self.symbolic.0.l_col_ptr;
        let mut out = vec![0.0; self.dim()];
        for (k, &i) in self.symbolic.0.perm.iter().enumerate() {
            out[i] = sigma[ptr[k]];
        }
        out
    }

    /// Diagonal of `Q⁻¹` at the requested indices.
    pub fn marginal_variances_at(&self, indices: &[usize]) -> Result<Vec<f64>> {
        let n = self.dim();
        if let Some(&i) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: i, dim: n });
        }
        let all = self.marginal_variances();
        Ok(indices.iter().map(|&i| all[i]).collect())
    }

    /// Marginal precision `L_tt L_ttᵀ` of the last `t` pivots, which is the
    /// Schur complement of the leading block. With an ordering that pins
    /// chosen variables last, this is the precision of their marginal.
    pub fn trailing_precision(&self, t: usize) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if t > n {
            return Err(Error::IndexOutOfRange { index: t, dim: n });
        }
        let start = n - t;
        let mut l = DMatrix::zeros(t, t);
        for k in start..n {
            let (rows, vals) = self.col(k);
            for (&i, &v) in rows.iter().zip(vals) {
                l[(i - start, k - start)] = v;
            }
        }
        Ok(&l * l.transpose())
    }

    /// Dense `L` in permuted coordinates.
    pub fn factor_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut l = DMatrix::zeros(n, n);
        for k in 0..n {
            let (rows, vals) = self.col(k);
            for (&i, &v) in rows.iter().zip(vals) {
                l[(i, k)] = v;
            }
        }
        l
    }

    /// `Pᵀ L Lᵀ P` as a dense matrix in original coordinates.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let l = self.factor_dense();
        let llt = &l * l.transpose();
        let perm = &self.symbolic.0.perm;
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                out[(perm[a], perm[b])] = llt[(a, b)];
            }
        }
        out
    }
}
