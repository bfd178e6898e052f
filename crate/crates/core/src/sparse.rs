//! Compressed sparse storage for the constraint matrix.
//!
//! The matrix is kept twice: once row-major (for `A x`) and once column-major
//! (for `A^T y`). The column-major copy is stored as the row-major layout of
//! the transpose, so both products are plain row-by-row dot products and every
//! output entry is owned by exactly one row.

use std::ops::Range;

/// Row-major compressed storage (CSR). Column indices inside a row are sorted
/// and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedRows {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CompressedRows {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row_range(&self, row: usize) -> Range<usize> {
        self.indptr[row]..self.indptr[row + 1]
    }

    /// Iterates `(column, value)` over the stored entries of `row`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_range(row);
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Dot product of one row with a dense vector, accumulated in storage order.
    #[inline]
    pub fn row_dot(&self, row: usize, x: &[f64]) -> f64 {
        let range = self.row_range(row);
        let mut acc = 0.0;
        for (&j, &v) in self.indices[range.clone()].iter().zip(&self.values[range]) {
            acc += v * x[j];
        }
        acc
    }

    fn transpose(&self) -> CompressedRows {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for k in self.row_range(i) {
                let j = self.indices[k];
                let slot = next[j];
                indices[slot] = i;
                values[slot] = self.values[k];
                next[j] += 1;
            }
        }
        CompressedRows {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }
}

/// Sparse matrix with both row-major and column-major layouts materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: CompressedRows,
    cols: CompressedRows,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed; explicit zeros are kept.
    ///
    /// Panics if an index is out of range.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(i, j, _) in &sorted {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self::from_rows(CompressedRows {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Dense row-major input, mostly for tests and small fixtures.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged dense matrix");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &triplets)
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[])
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &triplets)
    }

    fn from_rows(rows: CompressedRows) -> Self {
        let cols = rows.transpose();
        Self { rows, cols }
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows
    }

    pub fn ncols(&self) -> usize {
        self.rows.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rows.nnz()
    }

    /// Row-major layout.
    pub fn rows(&self) -> &CompressedRows {
        &self.rows
    }

    /// Column-major layout, i.e. the row-major layout of the transpose.
    pub fn cols(&self) -> &CompressedRows {
        &self.cols
    }

    /// Returns the transpose. Cheap: the two layouts swap roles.
    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
        }
    }

    /// Returns `A_ij / (row_div_i * col_div_j)` for every stored entry.
    pub fn scaled_by_divisors(&self, row_div: &[f64], col_div: &[f64]) -> SparseMatrix {
        assert_eq!(row_div.len(), self.nrows());
        assert_eq!(col_div.len(), self.ncols());
        let mut rows = self.rows.clone();
        for i in 0..rows.nrows {
            for k in rows.row_range(i) {
                let j = rows.indices[k];
                rows.values[k] /= row_div[i] * col_div[j];
            }
        }
        let mut cols = self.cols.clone();
        for j in 0..cols.nrows {
            for k in cols.row_range(j) {
                let i = cols.indices[k];
                cols.values[k] /= row_div[i] * col_div[j];
            }
        }
        SparseMatrix { rows, cols }
    }

    /// Largest absolute stored value, 0 for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.rows.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Entry lookup by binary search within the row.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.rows.row_range(i);
        match self.rows.indices[range.clone()].binary_search(&j) {
            Ok(pos) => self.rows.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Dense copy, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.rows.row(i) {
                row[j] = v;
            }
        }
        out
    }

    /// Iterates all stored `(row, col, value)` entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows()).flat_map(move |i| self.rows.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Sequential `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        (0..self.nrows()).map(|i| self.rows.row_dot(i, x)).collect()
    }

    /// Sequential `A^T y`.
    pub fn mul_transpose_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows());
        (0..self.ncols()).map(|j| self.cols.row_dot(j, y)).collect()
    }

    /// Both layouts describe the same matrix.
    pub fn layouts_agree(&self) -> bool {
        self.rows.transpose() == self.cols
    }
}
