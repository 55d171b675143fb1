use log::warn;
use nalgebra::DMatrix;
use sprs::FillInReduction;
use sprs_ldl::{Ldl, LdlNumeric};

use super::SparseSymMatrix;
use crate::error::{Error, Result};

pub const CG_TOLERANCE: f64 = 1e-10;

/// Linear solver for a symmetric positive definite sparse matrix: an
/// LDLᵀ factorization with reverse Cuthill–McKee ordering, falling back to
/// Jacobi-preconditioned conjugate gradients when factorization fails or its
/// answer does not meet the residual check.
pub struct SpdSolver {
    matrix: SparseSymMatrix,
    ldl: Option<LdlNumeric<f64, usize>>,
}

impl SpdSolver {
    pub fn new(matrix: SparseSymMatrix) -> Self {
        let csc = matrix.to_sprs();
        let ldl = Ldl::new()
            .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
            .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
            .numeric(csc.view());
        let ldl = match ldl {
            Ok(f) if f.d().iter().all(|&d| d > 0.0) => Some(f),
            Ok(_) => {
                warn!("LDL factorization has nonpositive pivots; using conjugate gradients");
                None
            }
            Err(e) => {
                warn!("LDL factorization failed ({e}); using conjugate gradients");
                None
            }
        };
        Self { matrix, ldl }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SparseSymMatrix {
        &self.matrix
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::dims(format!("rhs length {} for dimension {}", rhs.len(), self.dim())));
        }
        let scale = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if scale == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        if let Some(ldl) = &self.ldl {
            let x: Vec<f64> = ldl.solve(rhs);
            if self.residual(&x, rhs) <= 1e-8 * scale {
                return Ok(x);
            }
            warn!("direct solve failed its residual check; refining with conjugate gradients");
            return conjugate_gradient(&self.matrix, rhs, Some(x));
        }
        conjugate_gradient(&self.matrix, rhs, None)
    }

    /// Solve for every column of `rhs`.
    pub fn solve_dense(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for c in 0..rhs.ncols() {
            let x = self.solve(rhs.column(c).as_slice())?;
            out.column_mut(c).copy_from_slice(&x);
        }
        Ok(out)
    }

    fn residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let ax = self.matrix.mul_vec(x);
        ax.iter().zip(rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

/// Jacobi-preconditioned conjugate gradients to relative residual
/// [`CG_TOLERANCE`].
pub fn conjugate_gradient(a: &SparseSymMatrix, b: &[f64], x0: Option<Vec<f64>>) -> Result<Vec<f64>> {
    let n = a.dim();
    let diag = a.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::LinearSolveFailure("matrix has a nonpositive diagonal".into()));
    }
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = x0.unwrap_or_else(|| vec![0.0; n]);
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 10 * n + 100;
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= CG_TOLERANCE * bnorm {
            return Ok(x);
        }
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::LinearSolveFailure("matrix is not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolveFailure(format!(
        "conjugate gradients did not converge in {max_iter} iterations"
    )))
}
