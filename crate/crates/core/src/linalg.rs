//! Small dense helpers shared by the eigensolver and the LBBP solver.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::fem::SparseSymMatrix;

/// A symmetric linear operator applied to blocks of column vectors. Lets the
/// same solver code run on sparse full-resolution and dense reduced problems.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
}

impl SymOperator for SparseSymMatrix {
    fn dim(&self) -> usize {
        SparseSymMatrix::dim(self)
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.mul_dense(x)
    }
}

impl SymOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
}

/// Orthonormal factor of a thin QR decomposition, with columns signed so
/// that R has a nonnegative diagonal (making the factor unique).
pub fn thin_q(x: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = x.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// max |XᵀX − I| over entries.
pub fn orthonormality_defect(x: &DMatrix<f64>) -> f64 {
    let g = x.tr_mul(x);
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Largest principal angle (radians) between the column spans of two
/// matrices with orthonormal columns. Computed from sines so small angles
/// keep full precision.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = b - a * a.tr_mul(b);
    let s = residual.singular_values();
    s.max().min(1.0).asin()
}

/// Matrix of independent standard normal entries.
pub fn random_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// tr(AᵀB).
pub fn trace_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thin_q_is_orthonormal_with_positive_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_normal(20, 4, &mut rng);
        let q = thin_q(&x);
        assert_eq!(q.shape(), (20, 4));
        assert!(orthonormality_defect(&q) < 1e-14);
        let r = q.tr_mul(&x);
        for j in 0..4 {
            assert!(r[(j, j)] > 0.0);
        }
    }

    #[test]
    fn principal_angle_of_rotated_plane() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let t = 1e-6f64;
        let b = DMatrix::from_column_slice(3, 1, &[t.cos(), t.sin(), 0.0]);
        assert!((max_principal_angle(&a, &b) - t).abs() < 1e-15);
        assert!(max_principal_angle(&a, &a).abs() < 1e-15);
    }
}
