use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_defect, trace_dot, SymOperator};
use crate::optim::stiefel::{minimize, CurvilinearOptions, MinimizeOutcome};

/// tr(XᵀAX).
pub fn trace_energy(op: &impl SymOperator, x: &DMatrix<f64>) -> f64 {
    trace_dot(x, &op.apply(x))
}

/// Minimize tr(XᵀAX) over orthonormal n×k frames starting from `warm_start`.
/// The minimizers span the eigenspace of the k smallest eigenvalues of A.
/// The returned frame never has larger trace energy than the start.
pub fn eig_via_stiefel(
    op: &impl SymOperator,
    k: usize,
    warm_start: &DMatrix<f64>,
    max_iterations: usize,
    gradient_tolerance: f64,
    options: &CurvilinearOptions,
) -> Result<MinimizeOutcome> {
    if warm_start.shape() != (op.dim(), k) {
        return Err(Error::dims(format!(
            "warm start is {:?}, expected ({}, {k})",
            warm_start.shape(),
            op.dim()
        )));
    }
    if orthonormality_defect(warm_start) > 1e-8 {
        return Err(Error::dims("warm start columns are not orthonormal"));
    }
    minimize(
        warm_start,
        |x| {
            let ax = op.apply(x);
            Ok((trace_dot(x, &ax), ax * 2.0))
        },
        max_iterations,
        gradient_tolerance,
        options,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness};
    use crate::linalg::{max_principal_angle, random_normal, thin_q};
    use crate::mesh::shapes;
    use nalgebra::SymmetricEigen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// M^{-1/2} S M^{-1/2} on a 162-vertex sphere, plus its dense spectrum.
    fn problem() -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
        let mesh = shapes::icosphere(2, 1.0);
        let s = assemble_stiffness(&mesh);
        let d: Vec<f64> = assemble_mass(&mesh).diagonal().iter().map(|m| 1.0 / m.sqrt()).collect();
        let a = s.congruence_diag(&d).to_dense();
        let eig = SymmetricEigen::new(a.clone());
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = DMatrix::from_fn(d.len(), d.len(), |r, c| eig.eigenvectors[(r, order[c])]);
        (a, vals, vecs)
    }

    #[test]
    fn random_start_reaches_bottom_eigenspace() {
        let (a, vals, vecs) = problem();
        // k = 4 ends at the l = 1 cluster boundary, which has repeated eigenvalues.
        let k = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x0 = thin_q(&random_normal(a.nrows(), k, &mut rng));
        let out = eig_via_stiefel(&a, k, &x0, 20_000, 1e-9, &CurvilinearOptions::default()).unwrap();
        let sum: f64 = vals[..k].iter().sum();
        assert!((out.value - sum).abs() < 1e-6, "{} vs {sum}", out.value);
        let oracle = vecs.columns(0, k).into_owned();
        assert!(max_principal_angle(&oracle, &out.x) <= 1e-4);
        assert!(orthonormality_defect(&out.x) < 1e-8);
    }

    #[test]
    fn exact_minimizer_is_a_fixed_point() {
        let (a, _, vecs) = problem();
        let x0 = vecs.columns(0, 4).into_owned();
        let e0 = trace_energy(&a, &x0);
        let out = eig_via_stiefel(&a, 4, &x0, 100, 1e-9, &CurvilinearOptions::default()).unwrap();
        assert!((e0 - out.value).abs() < 1e-10);
        assert!(out.value <= e0);
    }

    #[test]
    fn rejects_bad_start() {
        let (a, _, _) = problem();
        let x0 = DMatrix::from_element(a.nrows(), 2, 1.0);
        assert!(eig_via_stiefel(&a, 2, &x0, 10, 1e-9, &CurvilinearOptions::default()).is_err());
        assert!(eig_via_stiefel(&a, 3, &x0, 10, 1e-9, &CurvilinearOptions::default()).is_err());
    }
}
