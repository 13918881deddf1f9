//! Sparse LU factorization with reuse of the symbolic analysis.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use crate::error::{Error, Result};

#[derive(Default)]
pub(crate) struct LuCache {
    pattern: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
    lu: Option<Lu<usize, f64>>,
    n: usize,
}

impl LuCache {
    pub fn is_factored(&self) -> bool {
        self.lu.is_some()
    }

    /// Factor the `n x n` matrix given as triplets; duplicates are summed.
    pub fn factor(&mut self, n: usize, entries: &[(usize, usize, f64)]) -> Result<()> {
        let trips: Vec<Triplet<usize, usize, f64>> = entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
            .map_err(|e| Error::Singular(format!("cannot build sparse matrix: {e:?}")))?;
        let sym = a.symbolic();
        let same = matches!(&self.pattern, Some((cp, ri, _)) if cp.as_slice() == sym.col_ptr() && ri.as_slice() == sym.row_idx());
        if !same {
            let s = SymbolicLu::try_new(sym).map_err(|e| Error::Singular(format!("symbolic analysis failed: {e:?}")))?;
            self.pattern = Some((sym.col_ptr().to_vec(), sym.row_idx().to_vec(), s));
        }
        let s = self.pattern.as_ref().unwrap().2.clone();
        let lu = Lu::try_new_with_symbolic(s, a.as_ref()).map_err(|e| Error::Singular(format!("{e:?}")))?;
        self.lu = Some(lu);
        self.n = n;
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let lu = self.lu.as_ref().expect("matrix factored before solve");
        assert_eq!(b.len(), self.n);
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("factorization produced non-finite values".into()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_and_reuses_pattern() {
        let mut c = LuCache::default();
        c.factor(2, &[(0, 0, 3.0), (0, 1, 1.0), (1, 1, 3.0)]).unwrap();
        let x = c.solve(&[1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0 / 9.0).abs() < 1e-15 && (x[1] - 2.0 / 3.0).abs() < 1e-15);
        c.factor(2, &[(0, 0, 2.0), (0, 1, 0.0), (1, 1, 4.0)]).unwrap();
        let x = c.solve(&[2.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }
}
