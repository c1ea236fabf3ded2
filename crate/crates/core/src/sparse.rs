//! Compressed sparse row storage and the block pattern of the bond graph.

use crate::horizon::HorizonTable;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Drops exact zeros from a dense row-major matrix.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in rows {
            for (c, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn row_abs_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A − Aᵀ|` over stored entries and their mirror positions.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// True when every stored position has a stored mirror.
    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.nrows).all(|r| {
            self.row(r)
                .0
                .iter()
                .all(|&c| c < self.nrows && self.row(c).0.binary_search(&r).is_ok())
        })
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        out
    }
}

/// Position of every bond block inside a CSR matrix over all DOFs.
///
/// Row `i·m + p` holds, for each particle `j` in `{i} ∪ H_i` sorted by id,
/// the `m` columns `j·m + q`.
#[derive(Debug, Clone)]
pub struct BlockPattern {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    /// Slot of particle `i` itself within its sorted column list.
    pub diag_slot: Vec<usize>,
    /// Slot of the neighbour of each directed bond entry.
    pub bond_slot: Vec<usize>,
}

impl BlockPattern {
    pub fn new(table: &HorizonTable, dim: usize) -> Self {
        let n = table.num_particles();
        let mut row_ptr = Vec::with_capacity(n * dim + 1);
        let mut col_idx = Vec::new();
        let mut diag_slot = Vec::with_capacity(n);
        let mut bond_slot = vec![0; table.neighbors.len()];
        row_ptr.push(0);
        for i in 0..n {
            let nbrs = &table.neighbors[table.range(i)];
            // Neighbour lists are sorted, so the diagonal slot is the count of smaller ids.
            let d = nbrs.partition_point(|&j| j < i);
            diag_slot.push(d);
            for (k, e) in table.range(i).enumerate() {
                bond_slot[e] = if k < d { k } else { k + 1 };
            }
            let mut particles: Vec<usize> = nbrs.to_vec();
            particles.insert(d, i);
            for _p in 0..dim {
                for &j in &particles {
                    for q in 0..dim {
                        col_idx.push(j * dim + q);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            diag_slot,
            bond_slot,
        }
    }

    /// Index into the value array of entry (row `i·m + p`, slot, column axis `q`).
    #[inline]
    pub fn index(&self, i: usize, p: usize, slot: usize, q: usize) -> usize {
        self.row_ptr[i * self.dim + p] + slot * self.dim + q
    }

    pub fn empty_matrix(&self) -> CsrMatrix {
        let n = self.row_ptr.len() - 1;
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: vec![0.0; self.col_idx.len()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_products() {
        let a = CsrMatrix::from_dense(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.0], vec![0.0, 0.0, 2.0]]);
        assert_eq!(a.nnz(), 5);
        assert_eq!(a.mul_vec(&[1.0, 2.0, 3.0]), vec![6.0, 7.0, 6.0]);
        assert_eq!(a.get(2, 1), 0.0);
        assert_eq!(a.max_asymmetry(), 0.0);
        assert!(a.is_structurally_symmetric());
        assert_eq!(a.row_sums(), vec![5.0, 4.0, 2.0]);
        assert_eq!(CsrMatrix::from_dense(&a.to_dense()), a);
    }

    #[test]
    fn asymmetry_is_detected() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert_eq!(a.max_asymmetry(), 2.0);
        assert!(!a.is_structurally_symmetric());
    }
}
