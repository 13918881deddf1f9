use nalgebra::DMatrix;
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};

/// Compressed sparse row matrix acting on coefficient vectors.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    mat: CsMat<f64>,
}

/// Triplet accumulator; duplicate entries are summed on conversion.
#[derive(Debug)]
pub struct Triplets {
    tri: TriMat<f64>,
}

impl Triplets {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { tri: TriMat::new((rows, cols)) }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.tri.add_triplet(i, j, v);
        }
    }

    pub fn build(self) -> SparseOperator {
        SparseOperator { mat: self.tri.to_csr() }
    }
}

impl SparseOperator {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { mat: CsMat::zero((rows, cols)) }
    }

    pub fn identity(n: usize) -> Self {
        Self { mat: CsMat::eye(n) }
    }

    pub fn from_dense(d: &DMatrix<f64>) -> Self {
        let mut t = Triplets::new(d.nrows(), d.ncols());
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                t.add(i, j, d[(i, j)]);
            }
        }
        t.build()
    }

    pub fn rows(&self) -> usize {
        self.mat.rows()
    }

    pub fn cols(&self) -> usize {
        self.mat.cols()
    }

    pub fn nnz(&self) -> usize {
        self.mat.nnz()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j).copied().unwrap_or(0.0)
    }

    /// Stored entries as `(row, col, value)` in row-major order.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for (i, row) in self.mat.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                out.push((i, j, v));
            }
        }
        out
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols(), "operator applied to a vector of the wrong length");
        self.mat
            .outer_iterator()
            .map(|row| row.iter().map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `A^T x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows());
        let mut y = vec![0.0; self.cols()];
        for (i, row) in self.mat.outer_iterator().enumerate() {
            for (j, v) in row.iter() {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        Self { mat: self.mat.transpose_view().to_csr() }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(Error::DimensionMismatch { expected: self.cols(), got: other.rows() });
        }
        Ok(Self { mat: &self.mat * &other.mat })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self { mat: &self.mat + &other.mat })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self { mat: &self.mat - &other.mat })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { mat: self.mat.map(|v| v * s) }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return Err(Error::DimensionMismatch { expected: self.rows() * self.cols(), got: other.rows() * other.cols() });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.data().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.data().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `sum_ij A_ij B_ij`.
    pub fn frobenius_dot(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for (i, row) in self.mat.outer_iterator().enumerate() {
            if let Some(orow) = other.mat.outer_view(i) {
                for (j, v) in row.iter() {
                    if let Some(w) = orow.get(j) {
                        s += v * w;
                    }
                }
            }
        }
        s
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows(), self.cols());
        for (i, j, v) in self.entries() {
            d[(i, j)] += v;
        }
        d
    }

    pub fn csr(&self) -> &CsMat<f64> {
        &self.mat
    }
}

/// `AB - BA`.
pub fn commutator(a: &SparseOperator, b: &SparseOperator) -> Result<SparseOperator> {
    if a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows() {
        return Err(Error::DimensionMismatch { expected: a.rows(), got: b.rows() });
    }
    a.matmul(b)?.sub(&b.matmul(a)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_and_transpose() {
        let mut t = Triplets::new(2, 2);
        t.add(0, 1, 2.0);
        t.add(1, 0, 3.0);
        t.add(1, 1, 1.0);
        t.add(1, 1, 1.0);
        let a = t.build();
        assert_eq!(a.get(1, 1), 2.0);
        assert_eq!(a.apply(&[1.0, 1.0]), vec![2.0, 5.0]);
        assert_eq!(a.apply_transpose(&[1.0, 1.0]), a.transpose().apply(&[1.0, 1.0]));
        let c = commutator(&a, &a).unwrap();
        assert_eq!(c.max_abs(), 0.0);
        let i = SparseOperator::identity(2);
        assert!(commutator(&a, &i).unwrap().max_abs() == 0.0);
        assert!((a.frobenius_dot(&a) - a.frobenius_norm().powi(2)).abs() < 1e-14);
    }
}
