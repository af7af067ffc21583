//! Sparse and dense matrix kernels used by the graph transforms.
//!
//! The crate deliberately keeps its own small CSR type instead of pulling in a
//! sparse-algebra dependency: the operations we need (sparse-times-dense,
//! transpose, symmetry checks) are a few dozen lines each, and owning them
//! keeps the per-step cost model transparent. Dense eigendecomposition is the
//! one exception; it is delegated to `nalgebra` and guarded by an entry cap so
//! it can only be invoked on desk-scale matrices.
//!
//! Conventions:
//! - `CsrMatrix` stores one entry per (row, col) pair, columns strictly
//!   ascending within each row, no explicit zeros required.
//! - `DenseMatrix` is row-major `Vec<f64>`.
//! - All sparse-dense products are deterministic: each output row is
//!   accumulated sequentially in ascending column order, regardless of how
//!   many worker threads rayon uses.

use rayon::prelude::*;

use crate::error::{Result, SevoError};

/// Default cap on `rows * cols` for dense materialization (16.7M entries,
/// ~128 MiB of f64). Exact solves and eigendecompositions refuse larger
/// inputs unless the caller raises the cap explicitly.
pub const DEFAULT_DENSE_CAP: usize = 4096 * 4096;

/// Tolerance used when an operation requires a symmetric matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Compressed sparse row matrix over `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from raw arrays, validating the structural
    /// invariants: `row_offsets` has length `n_rows + 1`, is non-decreasing,
    /// starts at 0 and ends at `nnz`; column indices are in range and
    /// strictly ascending within each row; all values are finite.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(SevoError::Validation(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(SevoError::Validation("row_offsets must start at 0".into()));
        }
        if *row_offsets.last().unwrap() != col_indices.len() {
            return Err(SevoError::Validation(format!(
                "row_offsets ends at {} but there are {} column indices",
                row_offsets.last().unwrap(),
                col_indices.len()
            )));
        }
        if col_indices.len() != values.len() {
            return Err(SevoError::Validation(format!(
                "{} column indices but {} values",
                col_indices.len(),
                values.len()
            )));
        }
        for i in 0..n_rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(SevoError::Validation(format!(
                    "row_offsets decreases at row {i}"
                )));
            }
            let mut prev: Option<usize> = None;
            for k in lo..hi {
                let j = col_indices[k];
                if j >= n_cols {
                    return Err(SevoError::Validation(format!(
                        "column index {j} out of range in row {i} (n_cols = {n_cols})"
                    )));
                }
                if let Some(p) = prev {
                    if j <= p {
                        return Err(SevoError::Validation(format!(
                            "column indices not strictly ascending in row {i}"
                        )));
                    }
                }
                prev = Some(j);
                if !values[k].is_finite() {
                    return Err(SevoError::Validation(format!(
                        "non-finite value at row {i}, col {j}"
                    )));
                }
            }
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Matrix with no stored entries.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from (row, col, value) triplets. Duplicate coordinates are
    /// summed; entries whose accumulated value is exactly zero are kept
    /// (callers that want them dropped should filter beforehand).
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        use std::collections::BTreeMap;
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(SevoError::Validation(format!(
                    "triplet ({i}, {j}) out of range for {n_rows}x{n_cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(SevoError::Validation(format!(
                    "non-finite triplet value at ({i}, {j})"
                )));
            }
            *acc.entry((i, j)).or_insert(0.0) += v;
        }
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(acc.len());
        let mut values = Vec::with_capacity(acc.len());
        for (&(i, j), &v) in &acc {
            row_offsets[i + 1] += 1;
            col_indices.push(j);
            values.push(v);
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Stored value at (i, j), or 0.0 when the entry is absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries as (row, col, value).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// Transpose, preserving the CSR invariants.
    pub fn transpose(&self) -> CsrMatrix {
        let mut row_offsets = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            row_offsets[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            row_offsets[j + 1] += row_offsets[j];
        }
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0f64; self.nnz()];
        let mut cursor = row_offsets.clone();
        for (i, j, v) in self.iter() {
            let k = cursor[j];
            col_indices[k] = i;
            values[k] = v;
            cursor[j] += 1;
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Largest absolute difference between the matrix and its transpose.
    /// Zero for exactly symmetric matrices; entries present on one side only
    /// contribute their absolute value.
    pub fn max_asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for (i, j, v) in self.iter() {
            let diff = (v - self.get(j, i)).abs();
            if diff > worst {
                worst = diff;
            }
        }
        worst
    }

    /// Whether the matrix is square and symmetric within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.n_rows == self.n_cols && self.max_asymmetry() <= tol
    }
}

/// Row-major dense matrix over `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Wraps a row-major buffer; `data.len()` must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SevoError::ShapeMismatch(format!(
                "buffer of length {} cannot back a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds from row slices, which must all share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(SevoError::ShapeMismatch(format!(
                    "row {i} has length {}, expected {n_cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Trace inner product `<X, Y> = sum_ij X_ij * Y_ij`.
    pub fn inner(&self, other: &DenseMatrix) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `self += s * other`, elementwise.
    pub fn axpy(&mut self, s: f64, other: &DenseMatrix) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(SevoError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// Sparse-times-dense product `A * X`.
///
/// Each output row is computed by exactly one worker and accumulated in
/// ascending column order, so the result is bitwise identical for any thread
/// count. Cost is O(nnz(A) * X.cols).
pub fn spmm(a: &CsrMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(a.n_rows, x.cols);
    spmm_into(a, x, &mut out)?;
    Ok(out)
}

/// In-place variant of [`spmm`]: overwrites `out` with `A * X`.
pub fn spmm_into(a: &CsrMatrix, x: &DenseMatrix, out: &mut DenseMatrix) -> Result<()> {
    if a.n_cols != x.rows {
        return Err(SevoError::ShapeMismatch(format!(
            "cannot multiply {}x{} sparse by {}x{} dense",
            a.n_rows, a.n_cols, x.rows, x.cols
        )));
    }
    if out.rows != a.n_rows || out.cols != x.cols {
        return Err(SevoError::ShapeMismatch(format!(
            "output is {}x{}, expected {}x{}",
            out.rows, out.cols, a.n_rows, x.cols
        )));
    }
    let cols = x.cols;
    let row_offsets = &a.row_offsets;
    let col_indices = &a.col_indices;
    let values = &a.values;
    let xdata = &x.data;
    out.data
        .par_chunks_mut(cols.max(1))
        .enumerate()
        .for_each(|(i, out_row)| {
            out_row.fill(0.0);
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            for k in lo..hi {
                let v = values[k];
                let src = &xdata[col_indices[k] * cols..col_indices[k] * cols + cols];
                for (o, s) in out_row.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        });
    Ok(())
}

/// Materializes a sparse matrix densely, refusing when `rows * cols` exceeds
/// [`DEFAULT_DENSE_CAP`].
pub fn to_dense(a: &CsrMatrix) -> Result<DenseMatrix> {
    to_dense_with_cap(a, DEFAULT_DENSE_CAP)
}

/// [`to_dense`] with an explicit entry cap.
pub fn to_dense_with_cap(a: &CsrMatrix, cap: usize) -> Result<DenseMatrix> {
    let entries = a.n_rows.checked_mul(a.n_cols).ok_or_else(|| {
        SevoError::Validation("dense entry count overflows usize".into())
    })?;
    if entries > cap {
        return Err(SevoError::DenseCapExceeded {
            rows: a.n_rows,
            cols: a.n_cols,
            cap,
        });
    }
    let mut out = DenseMatrix::zeros(a.n_rows, a.n_cols);
    for (i, j, v) in a.iter() {
        out.data[i * a.n_cols + j] = v;
    }
    Ok(out)
}

/// Smallest and largest eigenvalue of a symmetric sparse matrix, computed by
/// dense symmetric eigendecomposition (delegated to `nalgebra`). Intended for
/// verification at desk scale; the dense cap applies.
///
/// Errors: non-square or empty input, asymmetry beyond [`SYMMETRY_TOL`],
/// or a matrix larger than the cap.
pub fn symmetric_eigen_bounds(a: &CsrMatrix) -> Result<(f64, f64)> {
    if a.n_rows != a.n_cols {
        return Err(SevoError::ShapeMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.n_rows, a.n_cols
        )));
    }
    if a.n_rows == 0 {
        return Err(SevoError::Validation(
            "eigendecomposition of an empty matrix".into(),
        ));
    }
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(SevoError::Asymmetric { max_diff: asym });
    }
    let dense = to_dense(a)?;
    let m = nalgebra::DMatrix::from_row_slice(dense.rows, dense.cols, dense.data());
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &lambda in eig.eigenvalues.iter() {
        lo = lo.min(lambda);
        hi = hi.max(lambda);
    }
    Ok((lo, hi))
}

/// [`symmetric_eigen_bounds`] for an already-dense symmetric matrix.
pub fn symmetric_eigen_bounds_dense(m: &DenseMatrix) -> Result<(f64, f64)> {
    if m.rows() != m.cols() {
        return Err(SevoError::ShapeMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() == 0 {
        return Err(SevoError::Validation(
            "eigendecomposition of an empty matrix".into(),
        ));
    }
    let mut asym = 0.0f64;
    for i in 0..m.rows() {
        for j in (i + 1)..m.cols() {
            asym = asym.max((m.get(i, j) - m.get(j, i)).abs());
        }
    }
    if asym > SYMMETRY_TOL {
        return Err(SevoError::Asymmetric { max_diff: asym });
    }
    let dm = nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
    let eig = nalgebra::SymmetricEigen::new(dm);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &lambda in eig.eigenvalues.iter() {
        lo = lo.min(lambda);
        hi = hi.max(lambda);
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Reference product against a dense copy of A; the oracle shares no code
    /// with the CSR kernel.
    fn matmul_oracle(a: &CsrMatrix, x: &DenseMatrix) -> DenseMatrix {
        let mut ad = vec![vec![0.0f64; a.n_cols()]; a.n_rows()];
        for (i, j, v) in a.iter() {
            ad[i][j] += v;
        }
        let mut out = DenseMatrix::zeros(a.n_rows(), x.cols());
        for i in 0..a.n_rows() {
            for j in 0..x.cols() {
                let mut s = 0.0;
                for k in 0..a.n_cols() {
                    s += ad[i][k] * x.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn new_rejects_bad_offsets() {
        let err = CsrMatrix::new(2, 2, vec![0, 1], vec![0], vec![1.0]);
        assert!(matches!(err, Err(SevoError::Validation(_))));
        let err = CsrMatrix::new(2, 2, vec![1, 1, 1], vec![], vec![]);
        assert!(matches!(err, Err(SevoError::Validation(_))));
        let err = CsrMatrix::new(1, 1, vec![0, 2], vec![0], vec![1.0]);
        assert!(matches!(err, Err(SevoError::Validation(_))));
    }

    #[test]
    fn new_rejects_unsorted_columns() {
        let err = CsrMatrix::new(1, 3, vec![0, 2], vec![2, 0], vec![1.0, 2.0]);
        assert!(matches!(err, Err(SevoError::Validation(_))));
        let err = CsrMatrix::new(1, 3, vec![0, 2], vec![1, 1], vec![1.0, 2.0]);
        assert!(matches!(err, Err(SevoError::Validation(_))));
    }

    #[test]
    fn new_rejects_out_of_range_and_nonfinite() {
        let err = CsrMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]);
        assert!(matches!(err, Err(SevoError::Validation(_))));
        let err = CsrMatrix::new(1, 2, vec![0, 1], vec![0], vec![f64::NAN]);
        assert!(matches!(err, Err(SevoError::Validation(_))));
    }

    #[test]
    fn from_triplets_accumulates_duplicates() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_abs_diff_eq!(a.get(0, 1), 3.0);
        assert_abs_diff_eq!(a.get(1, 0), 4.0);
        assert_abs_diff_eq!(a.get(0, 0), 0.0);
    }

    #[test]
    fn identity_spmm_is_identity_map() {
        let x = DenseMatrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = spmm(&CsrMatrix::identity(3), &x).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn spmm_matches_hand_example() {
        // A = [[0, 2], [3, 0]], X = [[1, 1], [2, 0]] -> A X = [[4, 0], [3, 3]]
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 2.0), (1, 0, 3.0)]).unwrap();
        let x = DenseMatrix::from_vec(2, 2, vec![1.0, 1.0, 2.0, 0.0]).unwrap();
        let y = spmm(&a, &x).unwrap();
        assert_eq!(y.data(), &[4.0, 0.0, 3.0, 3.0]);
    }

    #[test]
    fn spmm_rejects_shape_mismatch() {
        let a = CsrMatrix::identity(3);
        let x = DenseMatrix::zeros(2, 2);
        assert!(matches!(spmm(&a, &x), Err(SevoError::ShapeMismatch(_))));
    }

    #[test]
    fn transpose_round_trip() {
        let a = CsrMatrix::from_triplets(3, 4, &[(0, 3, 1.5), (2, 0, -2.0), (2, 3, 0.5)]).unwrap();
        let t = a.transpose();
        assert_eq!(t.n_rows(), 4);
        assert_eq!(t.n_cols(), 3);
        assert_abs_diff_eq!(t.get(3, 0), 1.5);
        assert_eq!(t.transpose(), a);
    }

    #[test]
    fn asymmetry_is_detected() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(a.is_symmetric(0.0));
        let b = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        assert_abs_diff_eq!(b.max_asymmetry(), 1.0);
        assert!(!b.is_symmetric(SYMMETRY_TOL));
    }

    #[test]
    fn dense_cap_is_enforced() {
        let a = CsrMatrix::zeros(100, 100);
        assert!(to_dense_with_cap(&a, 9_999).is_err());
        assert!(to_dense_with_cap(&a, 10_000).is_ok());
    }

    #[test]
    fn eigen_bounds_on_known_matrix() {
        // [[0, 1], [1, 0]] has eigenvalues -1 and 1.
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let (lo, hi) = symmetric_eigen_bounds(&a).unwrap();
        assert_abs_diff_eq!(lo, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_bounds_rejects_asymmetric() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(
            symmetric_eigen_bounds(&a),
            Err(SevoError::Asymmetric { .. })
        ));
    }

    #[test]
    fn dense_helpers() {
        let mut x = DenseMatrix::from_vec(2, 2, vec![3.0, 0.0, 0.0, 4.0]).unwrap();
        assert_abs_diff_eq!(x.frobenius_norm(), 5.0);
        let y = DenseMatrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(x.inner(&y).unwrap(), 7.0);
        x.axpy(2.0, &y).unwrap();
        assert_eq!(x.data(), &[5.0, 2.0, 2.0, 6.0]);
        x.scale(0.5);
        assert_eq!(x.data(), &[2.5, 1.0, 1.0, 3.0]);
        assert!(x.all_finite());
        x.set(0, 0, f64::NAN);
        assert!(!x.all_finite());
    }

    prop_compose! {
        /// Random sparse matrix with bounded shape and entries.
        fn arb_csr()(n_rows in 1usize..8, n_cols in 1usize..8)
            (n_rows in Just(n_rows),
             n_cols in Just(n_cols),
             entries in proptest::collection::vec(
                 (0usize..n_rows, 0usize..n_cols, -5.0f64..5.0), 0..32))
            -> CsrMatrix
        {
            CsrMatrix::from_triplets(n_rows, n_cols, &entries).unwrap()
        }
    }

    proptest! {
        #[test]
        fn spmm_matches_dense_oracle(a in arb_csr(), seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cols = 3;
            let data: Vec<f64> = (0..a.n_cols() * cols)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let x = DenseMatrix::from_vec(a.n_cols(), cols, data).unwrap();
            let fast = spmm(&a, &x).unwrap();
            let slow = matmul_oracle(&a, &x);
            for (u, v) in fast.data().iter().zip(slow.data()) {
                prop_assert!((u - v).abs() <= 1e-12_f64.max(1e-12 * v.abs()));
            }
        }

        #[test]
        fn to_dense_round_trips_entries(a in arb_csr()) {
            let d = to_dense(&a).unwrap();
            for (i, j, v) in a.iter() {
                prop_assert_eq!(d.get(i, j), v);
            }
            let total_nnz: f64 = a.values().iter().map(|v| v.abs()).sum();
            let total_dense: f64 = d.data().iter().map(|v| v.abs()).sum();
            prop_assert!((total_nnz - total_dense).abs() < 1e-9);
        }

        #[test]
        fn transpose_involution(a in arb_csr()) {
            prop_assert_eq!(a.transpose().transpose(), a);
        }
    }
}
