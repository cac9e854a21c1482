//! Column-sparse dictionary `H` (`N × M`) with unit-norm columns.
//!
//! Each column keeps its own row pattern. Updates never add rows to a
//! column's pattern, so a shape-initialized basis keeps its placement
//! through training while a dense random basis stays dense.

use alloc::vec::Vec;

use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    rows: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Dictionary {
    pub fn empty(rows: usize) -> Self {
        Dictionary {
            rows,
            col_ptr: alloc::vec![0],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a dictionary from dense columns, keeping only nonzero entries.
    pub fn from_dense_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut d = Dictionary::empty(rows);
        for c in columns {
            if c.len() != rows {
                return Err(Error::shape(rows, c.len()));
            }
            d.push_column(
                c.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v)),
            );
        }
        Ok(d)
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        let mut d = Dictionary::empty(m.rows());
        for c in m.columns() {
            d.push_column(
                c.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v)),
            );
        }
        d
    }

    /// Appends a column given as `(row, value)` pairs in ascending row order.
    pub fn push_column(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (i, v) in entries {
            debug_assert!(i < self.rows);
            self.row_idx.push(i);
            self.values.push(v);
        }
        self.col_ptr.push(self.row_idx.len());
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[a..b], &self.values[a..b])
    }

    #[inline]
    pub(crate) fn column_range(&self, j: usize) -> core::ops::Range<usize> {
        self.col_ptr[j]..self.col_ptr[j + 1]
    }

    pub(crate) fn row_indices(&self) -> &[usize] {
        &self.row_idx
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_dense(&self, j: usize) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.rows];
        let (idx, vals) = self.column(j);
        for (&i, &v) in idx.iter().zip(vals) {
            out[i] = v;
        }
        out
    }

    pub fn to_matrix(&self) -> Matrix {
        let cols: Vec<Vec<f64>> = (0..self.cols()).map(|j| self.column_dense(j)).collect();
        Matrix::from_columns(self.rows, &cols).expect("columns have `rows` entries")
    }

    pub fn column_norm_sq(&self, j: usize) -> f64 {
        self.column(j).1.iter().map(|v| v * v).sum()
    }

    pub fn is_zero_column(&self, j: usize) -> bool {
        self.column(j).1.iter().all(|v| *v == 0.0)
    }

    pub fn zero_columns(&self) -> Vec<usize> {
        (0..self.cols())
            .filter(|&j| self.is_zero_column(j))
            .collect()
    }

    /// Scales every nonzero column to unit L2 norm.
    pub fn normalize_columns(&mut self) {
        for j in 0..self.cols() {
            let r = self.column_range(j);
            let norm = self.values[r.clone()]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                for v in &mut self.values[r] {
                    *v /= norm;
                }
            }
        }
    }

    /// Drops stored entries that are exactly zero from every column pattern.
    pub fn prune_zeros(&mut self) {
        let mut d = Dictionary::empty(self.rows);
        for j in 0..self.cols() {
            let (idx, vals) = self.column(j);
            d.push_column(
                idx.iter()
                    .zip(vals)
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (*i, *v)),
            );
        }
        *self = d;
    }

    /// `out = H x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let (idx, vals) = self.column(j);
            for (&i, &h) in idx.iter().zip(vals) {
                out[i] += h * xj;
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// Horizontal concatenation `[H1, H2, …]`.
    pub fn concat(parts: &[&Dictionary]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or(Error::EmptyInput("no dictionaries to concatenate"))?;
        let mut out = Dictionary::empty(first.rows);
        for p in parts {
            if p.rows != first.rows {
                return Err(Error::shape(first.rows, p.rows));
            }
            for j in 0..p.cols() {
                let (idx, vals) = p.column(j);
                out.push_column(idx.iter().copied().zip(vals.iter().copied()));
            }
        }
        Ok(out)
    }

    /// Columns `range` as a standalone dictionary.
    pub fn slice_columns(&self, range: core::ops::Range<usize>) -> Dictionary {
        let mut out = Dictionary::empty(self.rows);
        for j in range {
            let (idx, vals) = self.column(j);
            out.push_column(idx.iter().copied().zip(vals.iter().copied()));
        }
        out
    }

    /// Largest deviation of a nonzero column's norm from one.
    pub fn max_norm_deviation(&self) -> f64 {
        (0..self.cols())
            .filter(|&j| !self.is_zero_column(j))
            .map(|j| (self.column_norm_sq(j).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn dense_roundtrip_and_products() {
        let cols = vec![vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]];
        let d = Dictionary::from_dense_columns(3, &cols).unwrap();
        assert_eq!(d.nnz(), 3);
        assert_eq!(d.column_dense(0), cols[0]);
        assert_eq!(d.mul_vec(&[1.0, 2.0]), vec![1.0, 6.0, 2.0]);
        let m = d.to_matrix();
        assert_eq!(Dictionary::from_matrix(&m), d);
    }

    #[test]
    fn normalize_skips_zero_columns() {
        let mut d = Dictionary::from_dense_columns(2, &[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        d.normalize_columns();
        assert_eq!(d.column_dense(0), vec![0.6, 0.8]);
        assert!(d.is_zero_column(1));
        assert_eq!(d.zero_columns(), vec![1]);
        assert!(d.max_norm_deviation() < 1e-15);
    }

    #[test]
    fn concat_checks_rows() {
        let a = Dictionary::from_dense_columns(2, &[vec![1.0, 0.0]]).unwrap();
        let b = Dictionary::from_dense_columns(3, &[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(Dictionary::concat(&[&a, &b]).is_err());
        let c = Dictionary::concat(&[&a, &a]).unwrap();
        assert_eq!(c.cols(), 2);
        assert_eq!(c.slice_columns(1..2), a);
    }
}
