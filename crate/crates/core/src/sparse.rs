//! Compressed sparse row storage, shared by real adjacencies and their
//! integer quantized forms.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Copy + AddAssign> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate coordinates are merged by summing their values.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::invalid(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        // stable sort keeps the summation order of duplicates deterministic
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }
}

impl<T: Copy> CsrMatrix<T> {
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        let m = CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.row_ptr.len() != self.n_rows + 1 || self.row_ptr[0] != 0 {
            return Err(Error::invalid(
                "row_ptr must have n_rows + 1 entries starting at 0",
            ));
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("row_ptr must be nondecreasing"));
        }
        let nnz = self.row_ptr[self.n_rows];
        if nnz != self.col_idx.len() || nnz != self.values.len() {
            return Err(Error::invalid("row_ptr[n_rows] must equal nnz"));
        }
        for i in 0..self.n_rows {
            let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
            if cols.iter().any(|&c| c >= self.n_cols) {
                return Err(Error::invalid(format!("row {i} has a column out of range")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "row {i} columns must be strictly increasing"
                )));
            }
        }
        Ok(())
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.n_rows).map(|i| self.row_nnz(i)).max().unwrap_or(0)
    }

    /// Row index of every stored entry, in storage order.
    pub fn entry_rows(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            rows.extend(std::iter::repeat_n(i, self.row_nnz(i)));
        }
        rows
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            out.extend(cols.iter().zip(vals).map(|(&c, &v)| (i, c, v)));
        }
        out
    }

    /// Same sparsity pattern with new values.
    pub fn with_values<U: Copy>(&self, values: Vec<U>) -> Result<CsrMatrix<U>> {
        if values.len() != self.nnz() {
            return Err(Error::dim(format!(
                "expected {} values, got {}",
                self.nnz(),
                values.len()
            )));
        }
        Ok(CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        })
    }

    pub fn map_values<U: Copy>(&self, f: impl Fn(T) -> U) -> CsrMatrix<U> {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl CsrMatrix<f64> {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.n_rows, self.n_cols]);
        let n_cols = self.n_cols;
        for (r, c, v) in self.to_triplets() {
            t.data_mut()[r * n_cols + c] = v;
        }
        t
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Exact real sparse-dense product `self · x`.
    pub fn spmm(&self, x: &Tensor) -> Result<Tensor> {
        spmm_values(self, &self.values, x)
    }
}

/// Sparse-dense product using `values` in place of the stored ones.
pub(crate) fn spmm_values<T: Copy>(
    pattern: &CsrMatrix<T>,
    values: &[f64],
    x: &Tensor,
) -> Result<Tensor> {
    if x.shape().len() != 2 || x.rows() != pattern.n_cols {
        return Err(Error::dim(format!(
            "spmm: matrix has {} columns, dense operand shape {:?}",
            pattern.n_cols,
            x.shape()
        )));
    }
    let f = x.cols();
    let mut out = vec![0.0; pattern.n_rows * f];
    for i in 0..pattern.n_rows {
        let row = &mut out[i * f..(i + 1) * f];
        for k in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
            let w = values[k];
            for (o, &xv) in row.iter_mut().zip(x.row(pattern.col_idx[k])) {
                *o += w * xv;
            }
        }
    }
    Tensor::new(vec![pattern.n_rows, f], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 2.0), (0, 1, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), Some(1.5));
        m.validate().unwrap();
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, [(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn from_parts_validates_order() {
        assert!(CsrMatrix::from_parts(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_parts(1, 3, vec![0, 2], vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_parts(1, 3, vec![0, 2], vec![0, 2], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn identity_spmm_is_noop() {
        let x = Tensor::from_rows(&[vec![1.0, -2.0], vec![3.5, 0.25]]).unwrap();
        assert_eq!(CsrMatrix::identity(2).spmm(&x).unwrap(), x);
    }

    #[test]
    fn complete_three_node_graph_sums_neighbours() {
        let edges = (0..3).flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j, 1.0)));
        let a = CsrMatrix::from_triplets(3, 3, edges).unwrap();
        let x = Tensor::ones(&[3, 1]);
        assert_eq!(a.spmm(&x).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    proptest! {
        #[test]
        fn coo_round_trip_preserves_entries(
            entries in proptest::collection::vec((0usize..6, 0usize..5, -3.0f64..3.0), 0..30)
        ) {
            let m = CsrMatrix::from_triplets(6, 5, entries.clone()).unwrap();
            m.validate().unwrap();
            let back = CsrMatrix::from_triplets(6, 5, m.to_triplets()).unwrap();
            prop_assert_eq!(&back, &m);
            // dense sums agree with the raw multiset
            let dense = m.to_dense();
            let mut expect = Tensor::zeros(&[6, 5]);
            for (r, c, v) in entries {
                expect.data_mut()[r * 5 + c] += v;
            }
            prop_assert!(dense.max_abs_diff(&expect) < 1e-12);
        }
    }
}
