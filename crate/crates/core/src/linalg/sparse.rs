use serde::{Deserialize, Serialize};

use super::dense::{axpy, Matrix};
use crate::error::{Error, Result};

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 || row_offsets[0] != 0 {
            return Err(Error::Shape("row offsets do not match row count".into()));
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len() {
            return Err(Error::Shape("csr arrays have inconsistent lengths".into()));
        }
        for r in 0..nrows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return Err(Error::Shape(format!("row {r} has decreasing offsets")));
            }
            let cols = &col_indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Shape(format!(
                    "row {r}: column indices must be strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c >= ncols) {
                return Err(Error::Shape(format!("row {r}: column index out of range")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from per-row `(col, value)` lists; rows are sorted here and
    /// duplicate columns rejected.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let nrows = rows.len();
        let mut offsets = Vec::with_capacity(nrows + 1);
        offsets.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        Self::new(nrows, ncols, offsets, cols, vals)
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let mut offsets = Vec::with_capacity(m.rows() + 1);
        offsets.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        Self {
            nrows: m.rows(),
            ncols: m.cols(),
            row_offsets: offsets,
            col_indices: cols,
            values: vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
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

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    /// Multiplies row `i` by `factors[i]`.
    pub fn scale_rows(&self, factors: &[f64]) -> Result<CsrMatrix> {
        if factors.len() != self.nrows {
            return Err(Error::Shape("one scale factor per row required".into()));
        }
        let mut out = self.clone();
        for (i, &f) in factors.iter().enumerate() {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            for v in &mut out.values[lo..hi] {
                *v *= f;
            }
        }
        Ok(out)
    }

    /// `self * rhs`
    pub fn spmm(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.ncols != rhs.rows() {
            return Err(Error::Shape(format!(
                "spmm {}x{} by {}x{}",
                self.nrows,
                self.ncols,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let mut out = Matrix::zeros(self.nrows, rhs.cols());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let orow = out.row_mut(i);
            for (&j, &v) in cols.iter().zip(vals) {
                axpy(v, rhs.row(j), orow);
            }
        }
        Ok(out)
    }

    /// `self^T * rhs`
    pub fn t_spmm(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.nrows != rhs.rows() {
            return Err(Error::Shape(format!(
                "t_spmm {}x{} (transposed) by {}x{}",
                self.nrows,
                self.ncols,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let mut out = Matrix::zeros(self.ncols, rhs.cols());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let rrow = rhs.row(i);
            if rrow.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (&j, &v) in cols.iter().zip(vals) {
                axpy(v, rrow, out.row_mut(j));
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut cols = vec![0; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (rc, rv) = self.row(i);
            for (&j, &v) in rc.iter().zip(rv) {
                let slot = next[j];
                cols[slot] = i;
                vals[slot] = v;
                next[j] += 1;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets: offsets,
            col_indices: cols,
            values: vals,
        }
    }

    /// Submatrix on `rows` x `cols` (both given as index lists of `self`).
    /// Entries whose column is not listed are dropped; `cols` need not be
    /// sorted, output columns follow its order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<CsrMatrix> {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (local, &c) in cols.iter().enumerate() {
            if c >= self.ncols {
                return Err(Error::Shape(format!("column {c} out of range")));
            }
            col_map[c] = local;
        }
        let mut out_rows = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.nrows {
                return Err(Error::Shape(format!("row {r} out of range")));
            }
            let (rc, rv) = self.row(r);
            out_rows.push(
                rc.iter()
                    .zip(rv)
                    .filter(|(c, _)| col_map[**c] != usize::MAX)
                    .map(|(c, v)| (col_map[*c], *v))
                    .collect(),
            );
        }
        CsrMatrix::from_rows(cols.len(), out_rows)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_rows(
            3,
            vec![vec![(2, 1.0), (0, 2.0)], vec![], vec![(1, -1.0), (2, 0.5)]],
        )
        .unwrap()
    }

    #[test]
    fn products_match_dense() {
        let a = sample();
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let dense = a.to_dense();
        assert_eq!(a.spmm(&b).unwrap(), dense.matmul(&b).unwrap());
        assert_eq!(a.t_spmm(&b).unwrap(), dense.t_matmul(&b).unwrap());
        assert_eq!(a.transpose().to_dense(), dense.transpose());
    }

    #[test]
    fn rejects_unsorted_or_duplicate_columns() {
        assert!(CsrMatrix::new(1, 3, vec![0, 2], vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_rows(2, vec![vec![(0, 1.0), (0, 2.0)]]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
    }

    #[test]
    fn submatrix_remaps_columns() {
        let a = sample();
        let s = a.submatrix(&[2, 0], &[2, 0]).unwrap();
        assert_eq!(
            s.to_dense(),
            Matrix::from_rows(&[vec![0.5, 0.0], vec![1.0, 2.0]]).unwrap()
        );
    }
}
