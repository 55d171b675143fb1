use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};

/// Symmetric sparse matrix in CSR form with both triangles stored and
/// column indices sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl SparseSymMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed. Only the
    /// given entries are stored, so callers supply both (i, j) and (j, i).
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { index: i.max(j), len: n });
            }
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            for &(j, v) in row.iter() {
                if indices.len() > *indptr.last().unwrap() && *indices.last().unwrap() == j {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        let m = Self {
            n,
            indptr,
            indices,
            data,
        };
        if !m.is_structurally_symmetric() {
            return Err(Error::dims("triplets do not describe a symmetric pattern"));
        }
        Ok(m)
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Stored entries of row `i` as (column, value) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.data[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| j == i || v == 0.0))
    }

    fn is_structurally_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            self.row(i).all(|(j, _)| {
                let r = self.indptr[j]..self.indptr[j + 1];
                self.indices[r].binary_search(&i).is_ok()
            })
        })
    }

    /// Largest |A_ij − A_ji| over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "dimension mismatch in mul_vec");
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn mul_dvec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.mul_vec(x.as_slice()))
    }

    /// A·X for a dense column block.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.n, "dimension mismatch in mul_dense");
        let mut out = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for i in 0..self.n {
                out[(i, c)] = self.row(i).map(|(j, v)| v * col[j]).sum();
            }
        }
        out
    }

    /// xᵀAx.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// self + alpha·other.
    pub fn add_scaled(&self, other: &Self, alpha: f64) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::dims(format!("{} vs {}", self.n, other.n)));
        }
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            t.extend(self.row(i).map(|(j, v)| (i, j, v)));
            t.extend(other.row(i).map(|(j, v)| (i, j, alpha * v)));
        }
        Self::from_triplets(self.n, &t)
    }

    /// diag(d)·A·diag(d).
    pub fn congruence_diag(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.data[p] *= d[i] * d[self.indices[p]];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[(i, j)] = v;
            }
        }
        out
    }

    pub(crate) fn to_sprs(&self) -> CsMat<f64> {
        let mut tri = TriMat::with_capacity((self.n, self.n), self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                tri.add_triplet(i, j, v);
            }
        }
        tri.to_csc()
    }

    /// MatrixMarket coordinate format, lower triangle, 1-based.
    pub fn to_matrix_market(&self) -> String {
        let lower: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|i| self.row(i).filter(move |&(j, _)| j <= i).map(move |(j, v)| (i, j, v)))
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "%%MatrixMarket matrix coordinate real symmetric");
        let _ = writeln!(out, "{} {} {}", self.n, self.n, lower.len());
        for (i, j, v) in lower {
            let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
        }
        out
    }

    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_matrix_market()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseSymMatrix {
        SparseSymMatrix::from_triplets(
            3,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 1, 1.0), (2, 2, 4.0)],
        )
        .unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let a = sample();
        assert_eq!(a.get(1, 1), 3.0);
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.nnz(), 5);
    }

    #[test]
    fn asymmetric_pattern_rejected() {
        assert!(SparseSymMatrix::from_triplets(2, &[(0, 1, 1.0)]).is_err());
    }

    #[test]
    fn products_match_dense() {
        let a = sample();
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -2.0, 1.0, 3.0, 0.0]);
        let dense = a.to_dense() * &x;
        assert_eq!(a.mul_dense(&x), dense);
        let v = [1.0, -2.0, 3.0];
        assert!((a.quad_form(&v) - 2.0 - 4.0 - 12.0 - 36.0).abs() < 1e-14);
    }

    #[test]
    fn add_scaled_and_congruence() {
        let a = sample();
        let b = SparseSymMatrix::identity(3);
        let c = a.add_scaled(&b, 0.5).unwrap();
        assert_eq!(c.diagonal(), vec![2.5, 3.5, 4.5]);
        let d = a.congruence_diag(&[1.0, 2.0, 0.5]);
        assert_eq!(d.get(0, 1), -2.0);
        assert_eq!(d.get(2, 2), 1.0);
    }

    #[test]
    fn matrix_market_lower_triangle() {
        let mm = sample().to_matrix_market();
        let lines: Vec<_> = mm.lines().collect();
        assert_eq!(lines[1], "3 3 4");
        assert_eq!(lines[3], "2 1 -1e0");
    }
}
