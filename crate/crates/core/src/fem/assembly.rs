use log::warn;

use super::SparseSymMatrix;
use crate::mesh::{geometry::cot_at, vertex_areas, TriangleMesh};

/// Lumped mass matrix: one third of the incident face areas on the diagonal.
pub fn assemble_mass(mesh: &TriangleMesh) -> SparseSymMatrix {
    SparseSymMatrix::from_diagonal(&vertex_areas(mesh))
}

/// Cotangent stiffness matrix, S_ij = −½(cot α_ij + cot β_ij) on edges and
/// S_ii = −Σ_j S_ij. Negative weights from obtuse triangles are kept.
pub fn assemble_stiffness(mesh: &TriangleMesh) -> SparseSymMatrix {
    let v = mesh.vertices();
    let mut triplets = Vec::with_capacity(mesh.num_faces() * 12);
    for &[a, b, c] in mesh.faces() {
        for (k, i, j) in [(a, b, c), (b, c, a), (c, a, b)] {
            let w = 0.5 * cot_at(v, k, i, j);
            triplets.extend_from_slice(&[(i, j, -w), (j, i, -w), (i, i, w), (j, j, w)]);
        }
    }
    let s = SparseSymMatrix::from_triplets(mesh.num_vertices(), &triplets)
        .expect("stiffness pattern is symmetric by construction");

    let negative = mesh
        .edges()
        .iter()
        .filter(|e| s.get(e.vertices[0], e.vertices[1]) > 0.0)
        .count();
    if negative * 5 > mesh.edges().len() {
        warn!(
            "{negative} of {} edges have negative cotangent weights",
            mesh.edges().len()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{shapes, MeshOptions, Point};
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn right_triangle() -> TriangleMesh {
        TriangleMesh::with_options(
            vec![Point::zeros(), Point::x(), Point::y()],
            vec![[0, 1, 2]],
            MeshOptions::allowing_boundary(),
        )
        .unwrap()
    }

    #[test]
    fn right_triangle_mass_and_stiffness() {
        let mesh = right_triangle();
        let m = assemble_mass(&mesh);
        for i in 0..3 {
            assert!((m.get(i, i) - 1.0 / 6.0).abs() < 1e-12);
        }
        assert!(m.is_diagonal());

        let s = assemble_stiffness(&mesh).to_dense();
        #[rustfmt::skip]
        let expected = nalgebra::DMatrix::from_row_slice(3, 3, &[
            1.0, -0.5, -0.5,
            -0.5, 0.5, 0.0,
            -0.5, 0.0, 0.5,
        ]);
        assert!((s - expected).amax() < 1e-12);
    }

    #[test]
    fn stiffness_is_psd_with_constant_kernel() {
        let mesh = shapes::icosphere(2, 1.0);
        let s = assemble_stiffness(&mesh);
        assert!(s.row_sums().iter().all(|r| r.abs() < 1e-10));
        assert!(s.asymmetry() < 1e-14);
        let eig = SymmetricEigen::new(s.to_dense());
        assert!(eig.eigenvalues.min() >= -1e-9);
    }

    #[test]
    fn mass_trace_and_scaling() {
        let mesh = shapes::icosphere(3, 1.0);
        let m = assemble_mass(&mesh);
        let trace: f64 = m.diagonal().iter().sum();
        assert!((trace - mesh.surface_area()).abs() < 1e-12 * trace);
        let m2 = assemble_mass(&mesh.scaled(2.0).unwrap());
        for (a, b) in m.diagonal().iter().zip(m2.diagonal()) {
            assert!((4.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_functions_are_harmonic_inside_a_grid() {
        let mesh = shapes::flat_grid(6, 5, 0.3);
        let s = assemble_stiffness(&mesh);
        let f: Vec<f64> = mesh.vertices().iter().map(|p| 2.0 * p.x - 0.7 * p.y + 1.0).collect();
        let sf = s.mul_vec(&f);
        for (i, p) in mesh.vertices().iter().enumerate() {
            let interior = p.x > 1e-9 && p.x < 1.8 - 1e-9 && p.y > 1e-9 && p.y < 1.5 - 1e-9;
            if interior {
                assert!(sf[i].abs() < 1e-9, "vertex {i}: {}", sf[i]);
            }
        }
        // Interior rows of a right-isoceles grid are the 5-point stencil.
        let i = 2 * 7 + 3;
        assert!((s.get(i, i) - 4.0).abs() < 1e-12);
        assert!((s.get(i, i + 1) + 1.0).abs() < 1e-12);
        assert!(s.get(i, i + 8).abs() < 1e-12);
    }

    /// Σ_faces area·|∇u|² using the per-triangle gradient of the linear
    /// interpolant.
    fn dirichlet_energy(mesh: &TriangleMesh, u: &[f64]) -> f64 {
        let v = mesh.vertices();
        mesh.faces()
            .iter()
            .map(|&[a, b, c]| {
                let n = (v[b] - v[a]).cross(&(v[c] - v[a]));
                let area2 = n.norm();
                let n = n / area2;
                let grad = (n.cross(&(v[c] - v[b])) * u[a]
                    + n.cross(&(v[a] - v[c])) * u[b]
                    + n.cross(&(v[b] - v[a])) * u[c])
                    / area2;
                0.5 * area2 * grad.norm_squared()
            })
            .sum()
    }

    #[test]
    fn quadratic_form_is_dirichlet_energy() {
        let mesh = shapes::radially_deformed(&shapes::icosphere(2, 1.0), |p| 1.0 + 0.3 * p.z * p.x).unwrap();
        let s = assemble_stiffness(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let u: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = s.quad_form(&u);
            let b = dirichlet_energy(&mesh, &u);
            assert!((a - b).abs() <= 1e-9 * b, "{a} vs {b}");
        }
    }
}
