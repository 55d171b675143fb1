use super::{SparseSymMatrix, SpdSolver};
use crate::error::{Error, Result};

/// Crank–Nicolson stepper for M_w u' = −S u with M_w = diag(weight)·M.
/// The left-hand matrix is factored once and reused.
pub struct HeatStepper {
    rhs_matrix: SparseSymMatrix,
    solver: SpdSolver,
    dt: f64,
}

impl HeatStepper {
    /// `weight` holds per-vertex w² values; `None` means the plain mass.
    pub fn new(m: &SparseSymMatrix, s: &SparseSymMatrix, dt: f64, weight: Option<&[f64]>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("heat step dt must be positive, got {dt}")));
        }
        if m.dim() != s.dim() {
            return Err(Error::dims(format!("mass {} vs stiffness {}", m.dim(), s.dim())));
        }
        let mw = weighted_mass(m, weight)?;
        let lhs = mw.add_scaled(s, 0.5 * dt)?;
        let rhs_matrix = mw.add_scaled(s, -0.5 * dt)?;
        Ok(Self {
            rhs_matrix,
            solver: SpdSolver::new(lhs),
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.rhs_matrix.dim() {
            return Err(Error::dims(format!("{} values for {} vertices", u.len(), self.rhs_matrix.dim())));
        }
        self.solver.solve(&self.rhs_matrix.mul_vec(u))
    }

    pub fn steps(&self, u: &[f64], count: usize) -> Result<Vec<f64>> {
        let mut cur = u.to_vec();
        for _ in 0..count {
            cur = self.step(&cur)?;
        }
        Ok(cur)
    }
}

/// diag(weight)·M, checking the weight is strictly positive.
pub fn weighted_mass(m: &SparseSymMatrix, weight: Option<&[f64]>) -> Result<SparseSymMatrix> {
    if !m.is_diagonal() {
        return Err(Error::dims("mass matrix must be diagonal"));
    }
    let mut d = m.diagonal();
    if let Some(w) = weight {
        if w.len() != d.len() {
            return Err(Error::dims(format!("{} weights for {} vertices", w.len(), d.len())));
        }
        if let Some(&bad) = w.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::NonpositiveConformalFactor(bad));
        }
        d.iter_mut().zip(w).for_each(|(a, b)| *a *= b);
    }
    Ok(SparseSymMatrix::from_diagonal(&d))
}

/// One Crank–Nicolson step: (M_w + dt/2·S)u⁺ = (M_w − dt/2·S)u.
pub fn heat_step(
    m: &SparseSymMatrix,
    s: &SparseSymMatrix,
    u: &[f64],
    dt: f64,
    weight: Option<&[f64]>,
) -> Result<Vec<f64>> {
    HeatStepper::new(m, s, dt, weight)?.step(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness};
    use crate::mesh::shapes;
    use nalgebra::{DMatrix, DVector};

    fn sphere() -> (SparseSymMatrix, SparseSymMatrix) {
        let mesh = shapes::icosphere(2, 1.0);
        (assemble_mass(&mesh), assemble_stiffness(&mesh))
    }

    #[test]
    fn constants_are_invariant() {
        let (m, s) = sphere();
        let u = vec![2.5; m.dim()];
        let next = heat_step(&m, &s, &u, 0.01, None).unwrap();
        for v in next {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_mass_is_conserved() {
        let (m, s) = sphere();
        let n = m.dim();
        let w: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (i as f64).sin().abs()).collect();
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let mw = weighted_mass(&m, Some(&w)).unwrap().diagonal();
        let before: f64 = mw.iter().zip(&u).map(|(a, b)| a * b).sum();
        let after_u = heat_step(&m, &s, &u, 0.02, Some(&w)).unwrap();
        let after: f64 = mw.iter().zip(&after_u).map(|(a, b)| a * b).sum();
        assert!((before - after).abs() <= 1e-10 * before.abs());
    }

    #[test]
    fn delta_diffusion_matches_dense_oracle() {
        let (m, s) = sphere();
        let n = m.dim();
        let dt = 1e-3;
        let mut u = vec![0.0; n];
        u[5] = 1.0;
        let stepper = HeatStepper::new(&m, &s, dt, None).unwrap();
        let got = stepper.steps(&u, 10).unwrap();

        let md = DMatrix::from_diagonal(&DVector::from_vec(m.diagonal()));
        let sd = s.to_dense();
        let lu = (&md + &sd * (0.5 * dt)).lu();
        let rhs = &md - &sd * (0.5 * dt);
        let mut x = DVector::from_vec(u.clone());
        for _ in 0..10 {
            x = lu.solve(&(&rhs * &x)).unwrap();
        }
        for (a, b) in got.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        let peak = u.iter().cloned().fold(0.0, f64::max);
        assert!(got.iter().all(|v| v.abs() <= peak + 1e-9));
    }

    #[test]
    fn rejects_bad_inputs() {
        let (m, s) = sphere();
        let u = vec![0.0; m.dim()];
        assert!(heat_step(&m, &s, &u, 0.0, None).is_err());
        let w = vec![0.0; m.dim()];
        assert!(matches!(
            heat_step(&m, &s, &u, 0.1, Some(&w)),
            Err(Error::NonpositiveConformalFactor(_))
        ));
    }
}
