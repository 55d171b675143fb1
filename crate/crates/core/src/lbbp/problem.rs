use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{trace_dot, SymOperator};

use super::config::LbbpConfig;

/// Fixed data of one registration problem. The unknowns live on the target
/// (M₂); the source only enters through C₁ = FᵀM₁Φ and its area A.
#[derive(Debug, Clone)]
pub struct LbbpInputs<S> {
    /// Lumped target mass, one entry per vertex.
    pub m2: Vec<f64>,
    /// Target stiffness.
    pub s2: S,
    /// Target features, n₂×ℓ.
    pub g: DMatrix<f64>,
    /// Source coefficients FᵀM₁Φ, ℓ×k.
    pub c1: DMatrix<f64>,
    /// Source area Σ m₁.
    pub area: f64,
    sqrt_m2: Vec<f64>,
    /// Rows of G with a nonzero entry; other rows never touch the coefficients.
    active: Vec<usize>,
    g_active: DMatrix<f64>,
}

impl<S: SymOperator> LbbpInputs<S> {
    /// `m1`/`m2` are lumped mass diagonals, `phi` the source basis (n₁×k),
    /// `f` and `g` the source and target features with matching columns.
    pub fn new(m1: &[f64], phi: &DMatrix<f64>, f: &DMatrix<f64>, m2: Vec<f64>, s2: S, g: DMatrix<f64>) -> Result<Self> {
        let n1 = m1.len();
        if phi.nrows() != n1 || f.nrows() != n1 {
            return Err(Error::dims(format!(
                "source mass has {n1} entries, basis {} rows, features {} rows",
                phi.nrows(),
                f.nrows()
            )));
        }
        let mphi = DMatrix::from_fn(n1, phi.ncols(), |i, j| m1[i] * phi[(i, j)]);
        let c1 = f.tr_mul(&mphi);
        Self::from_coefficients(c1, m1.iter().sum(), m2, s2, g)
    }

    pub fn from_coefficients(c1: DMatrix<f64>, area: f64, m2: Vec<f64>, s2: S, g: DMatrix<f64>) -> Result<Self> {
        let n2 = m2.len();
        if s2.dim() != n2 || g.nrows() != n2 {
            return Err(Error::dims(format!(
                "target mass has {n2} entries, stiffness dim {}, features {} rows",
                s2.dim(),
                g.nrows()
            )));
        }
        if g.ncols() != c1.nrows() {
            return Err(Error::dims(format!(
                "target has {} features, source coefficients {}",
                g.ncols(),
                c1.nrows()
            )));
        }
        if c1.ncols() > n2 {
            return Err(Error::InvalidK { k: c1.ncols(), n: n2 });
        }
        if let Some(&m) = m2.iter().find(|m| !(**m > 0.0)) {
            return Err(Error::dims(format!("target mass entries must be positive, found {m}")));
        }
        if !(area > 0.0) {
            return Err(Error::dims(format!("source area must be positive, got {area}")));
        }
        let sqrt_m2 = m2.iter().map(|m| m.sqrt()).collect();
        let active: Vec<usize> = (0..n2).filter(|&i| g.row(i).iter().any(|v| *v != 0.0)).collect();
        let g_active = g.select_rows(active.iter());
        Ok(Self {
            m2,
            s2,
            g,
            c1,
            area,
            sqrt_m2,
            active,
            g_active,
        })
    }

    pub fn n(&self) -> usize {
        self.m2.len()
    }

    pub fn k(&self) -> usize {
        self.c1.ncols()
    }

    pub fn sqrt_m2(&self) -> &[f64] {
        &self.sqrt_m2
    }

    /// Replace the target features, e.g. after recomputing them in the
    /// deformed metric.
    pub fn set_target_features(&mut self, g: DMatrix<f64>) -> Result<()> {
        if g.shape() != self.g.shape() {
            return Err(Error::dims(format!("features {:?}, expected {:?}", g.shape(), self.g.shape())));
        }
        self.active = (0..self.n()).filter(|&i| g.row(i).iter().any(|v| *v != 0.0)).collect();
        self.g_active = g.select_rows(self.active.iter());
        self.g = g;
        Ok(())
    }
}

/// Optimization variables plus the multiplier and the proximal anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct LbbpState {
    pub w: DVector<f64>,
    pub psibar: DMatrix<f64>,
    /// Scaled multiplier of the area constraint.
    pub b: f64,
    pub w_anchor: DVector<f64>,
    pub psibar_anchor: DMatrix<f64>,
}

impl LbbpState {
    /// State whose anchors coincide with the variables, so the proximal terms vanish.
    pub fn new(w: DVector<f64>, psibar: DMatrix<f64>, b: f64) -> Self {
        Self {
            w_anchor: w.clone(),
            psibar_anchor: psibar.clone(),
            w,
            psibar,
            b,
        }
    }
}

/// Unweighted energy terms; `total` applies the weights r1..r3 with the
/// usual factor one half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// ‖C₁ − C₂‖²_F.
    pub coeff_match: f64,
    /// tr(Ψ̄ᵀ S̄ Ψ̄).
    pub eigen: f64,
    /// wᵀS₂w.
    pub harmonic: f64,
    /// wᵀM₂w − A.
    pub area_residual: f64,
    pub total: f64,
}

/// Evaluates the energy and its gradients for given inputs and weights.
pub(crate) struct Objective<'a, S> {
    pub inputs: &'a LbbpInputs<S>,
    pub r: [f64; 4],
    pub inv_eta: f64,
}

impl<'a, S: SymOperator> Objective<'a, S> {
    pub fn new(inputs: &'a LbbpInputs<S>, config: &LbbpConfig) -> Self {
        Self {
            inputs,
            r: [config.r1, config.r2, config.r3, config.r4],
            inv_eta: config.inv_eta(),
        }
    }

    fn check(&self, w: &DVector<f64>, psibar: &DMatrix<f64>) -> Result<()> {
        let n = self.inputs.n();
        if w.len() != n || psibar.shape() != (n, self.inputs.k()) {
            return Err(Error::dims(format!(
                "w has {} entries and Ψ̄ is {:?}; expected {n} and ({n}, {})",
                w.len(),
                psibar.shape(),
                self.inputs.k()
            )));
        }
        if let Some(v) = w.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::NonpositiveConformalFactor(*v));
        }
        Ok(())
    }

    /// C₁ − Gᵀ diag(w) L Ψ̄, summed over the active feature rows only.
    pub fn residual(&self, w: &DVector<f64>, psibar: &DMatrix<f64>) -> DMatrix<f64> {
        let inp = self.inputs;
        let scaled = DMatrix::from_fn(inp.active.len(), psibar.ncols(), |a, c| {
            let i = inp.active[a];
            w[i] * inp.sqrt_m2[i] * psibar[(i, c)]
        });
        &inp.c1 - inp.g_active.tr_mul(&scaled)
    }

    /// Z = diag(w)⁻¹ L⁻¹ Ψ̄, the unbarred basis.
    pub fn unbar(&self, w: &DVector<f64>, psibar: &DMatrix<f64>) -> DMatrix<f64> {
        let sm = &self.inputs.sqrt_m2;
        DMatrix::from_fn(psibar.nrows(), psibar.ncols(), |i, c| psibar[(i, c)] / (w[i] * sm[i]))
    }

    pub fn area_residual(&self, w: &DVector<f64>) -> f64 {
        w.iter().zip(&self.inputs.m2).map(|(w, m)| m * w * w).sum::<f64>() - self.inputs.area
    }

    /// Products shared by the energy and both gradients.
    fn parts(&self, w: &DVector<f64>, psibar: &DMatrix<f64>) -> Result<Parts> {
        self.check(w, psibar)?;
        let residual = self.residual(w, psibar);
        let z = self.unbar(w, psibar);
        let sz = self.inputs.s2.apply(&z);
        let wm = DMatrix::from_column_slice(w.len(), 1, w.as_slice());
        let sw = self.inputs.s2.apply(&wm);
        let [r1, r2, r3, _] = self.r;
        let coeff_match = residual.norm_squared();
        let eigen = trace_dot(&z, &sz);
        let harmonic = trace_dot(&wm, &sw);
        let energy = EnergyBreakdown {
            coeff_match,
            eigen,
            harmonic,
            area_residual: self.area_residual(w),
            total: 0.5 * (r1 * coeff_match + r2 * eigen + r3 * harmonic),
        };
        Ok(Parts {
            residual,
            z,
            sz,
            sw,
            energy,
        })
    }

    pub fn breakdown(&self, w: &DVector<f64>, psibar: &DMatrix<f64>) -> Result<EnergyBreakdown> {
        Ok(self.parts(w, psibar)?.energy)
    }

    /// Total energy plus the augmented-Lagrangian term for multiplier `b`.
    pub fn augmented(&self, e: &EnergyBreakdown, b: f64) -> f64 {
        e.total + 0.5 * self.r[3] * (e.area_residual + b).powi(2)
    }

    /// Energy and its gradient in Ψ̄ (the augmented term does not depend on Ψ̄).
    pub fn with_grad_psibar(&self, w: &DVector<f64>, psibar: &DMatrix<f64>) -> Result<(EnergyBreakdown, DMatrix<f64>)> {
        let p = self.parts(w, psibar)?;
        let inp = self.inputs;
        let [r1, r2, _, _] = self.r;
        let mut g = DMatrix::from_fn(psibar.nrows(), psibar.ncols(), |i, c| {
            r2 * p.sz[(i, c)] / (w[i] * inp.sqrt_m2[i])
        });
        let gr = &inp.g_active * &p.residual;
        for (a, &i) in inp.active.iter().enumerate() {
            let f = r1 * w[i] * inp.sqrt_m2[i];
            for c in 0..psibar.ncols() {
                g[(i, c)] -= f * gr[(a, c)];
            }
        }
        Ok((p.energy, g))
    }

    /// Energy and the gradient in w of the augmented energy for multiplier `b`.
    pub fn with_grad_w(&self, w: &DVector<f64>, psibar: &DMatrix<f64>, b: f64) -> Result<(EnergyBreakdown, DVector<f64>)> {
        let p = self.parts(w, psibar)?;
        let inp = self.inputs;
        let [r1, r2, r3, r4] = self.r;
        let alm = 2.0 * r4 * (p.energy.area_residual + b);
        let mut g = DVector::from_fn(w.len(), |i, _| {
            let zsz: f64 = p.z.row(i).iter().zip(p.sz.row(i).iter()).map(|(a, b)| a * b).sum();
            -r2 * zsz / w[i] + r3 * p.sw[i] + alm * inp.m2[i] * w[i]
        });
        let gr = &inp.g_active * &p.residual;
        for (a, &i) in inp.active.iter().enumerate() {
            let dot: f64 = gr.row(a).iter().zip(psibar.row(i).iter()).map(|(x, y)| x * y).sum();
            g[i] -= r1 * inp.sqrt_m2[i] * dot;
        }
        Ok((p.energy, g))
    }
}

struct Parts {
    residual: DMatrix<f64>,
    z: DMatrix<f64>,
    sz: DMatrix<f64>,
    sw: DMatrix<f64>,
    energy: EnergyBreakdown,
}

/// Energy terms at the state's current variables.
pub fn energy<S: SymOperator>(state: &LbbpState, inputs: &LbbpInputs<S>, config: &LbbpConfig) -> Result<EnergyBreakdown> {
    Objective::new(inputs, config).breakdown(&state.w, &state.psibar)
}

/// Euclidean gradient in Ψ̄ of the energy plus the proximal term around
/// `state.psibar_anchor`.
pub fn grad_psibar<S: SymOperator>(state: &LbbpState, inputs: &LbbpInputs<S>, config: &LbbpConfig) -> Result<DMatrix<f64>> {
    let obj = Objective::new(inputs, config);
    let (_, g) = obj.with_grad_psibar(&state.w, &state.psibar)?;
    Ok(g + (&state.psibar - &state.psibar_anchor) * obj.inv_eta)
}

/// Gradient in w of the augmented energy (multiplier `state.b`) plus the
/// proximal term around `state.w_anchor`.
pub fn grad_w<S: SymOperator>(state: &LbbpState, inputs: &LbbpInputs<S>, config: &LbbpConfig) -> Result<DVector<f64>> {
    let obj = Objective::new(inputs, config);
    let (_, g) = obj.with_grad_w(&state.w, &state.psibar, state.b)?;
    Ok(g + (&state.w - &state.w_anchor) * obj.inv_eta)
}

/// Augmented energy plus both proximal terms; `grad_psibar` and `grad_w`
/// are its partial gradients.
pub fn proximal_objective<S: SymOperator>(state: &LbbpState, inputs: &LbbpInputs<S>, config: &LbbpConfig) -> Result<f64> {
    let obj = Objective::new(inputs, config);
    let e = obj.breakdown(&state.w, &state.psibar)?;
    let prox = (&state.w - &state.w_anchor).norm_squared() + (&state.psibar - &state.psibar_anchor).norm_squared();
    Ok(obj.augmented(&e, state.b) + 0.5 * obj.inv_eta * prox)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness, SparseSymMatrix};
    use crate::linalg::{random_normal, thin_q};
    use crate::mesh::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        inputs: LbbpInputs<SparseSymMatrix>,
        state: LbbpState,
        config: LbbpConfig,
        // Dense copies for the oracle.
        m1: Vec<f64>,
        phi: DMatrix<f64>,
        f: DMatrix<f64>,
        s2: DMatrix<f64>,
    }

    /// 42-vertex sphere as target, a 50-vertex random source, dense features.
    fn fixture(seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = shapes::icosphere(1, 1.0);
        let n2 = mesh.num_vertices();
        let (l, k, n1) = (6, 5, 50);
        let m2 = assemble_mass(&mesh).diagonal();
        let s2 = assemble_stiffness(&mesh);
        let m1: Vec<f64> = (0..n1).map(|_| rng.gen_range(0.05..0.4)).collect();
        let phi = random_normal(n1, k, &mut rng);
        let f = random_normal(n1, l, &mut rng);
        let mut g = random_normal(n2, l, &mut rng);
        // Leave some rows inactive to exercise the sparse path.
        for i in (0..n2).step_by(3) {
            g.row_mut(i).fill(0.0);
        }
        let inputs = LbbpInputs::new(&m1, &phi, &f, m2, s2.clone(), g).unwrap();
        let w = DVector::from_fn(n2, |_, _| rng.gen_range(0.6..1.6));
        let psibar = thin_q(&random_normal(n2, k, &mut rng));
        let mut state = LbbpState::new(w, psibar, 0.3);
        state.w_anchor = state.w.map(|v| v * 1.1);
        state.psibar_anchor = thin_q(&random_normal(n2, k, &mut rng));
        let config = LbbpConfig {
            k,
            r1: 1.3,
            r2: 0.7,
            r3: 0.4,
            r4: 0.9,
            eta: Some(2.0),
            ..Default::default()
        };
        Fixture {
            inputs,
            state,
            config,
            m1,
            phi,
            f,
            s2: s2.to_dense(),
        }
    }

    /// The energy written out with explicit dense diagonal matrices.
    fn dense_oracle(fx: &Fixture, w: &DVector<f64>, psibar: &DMatrix<f64>) -> f64 {
        let c = &fx.config;
        let inp = &fx.inputs;
        let m1 = DMatrix::from_diagonal(&DVector::from_vec(fx.m1.clone()));
        let lmat = DMatrix::from_diagonal(&DVector::from_iterator(inp.n(), inp.m2.iter().map(|m| m.sqrt())));
        let wmat = DMatrix::from_diagonal(w);
        let linv = lmat.clone().try_inverse().unwrap();
        let winv = wmat.clone().try_inverse().unwrap();
        let c1 = fx.f.transpose() * m1 * &fx.phi;
        let c2 = inp.g.transpose() * &wmat * &lmat * psibar;
        let sbar = &linv * &winv * &fx.s2 * &winv * &linv;
        let coeff = (c1 - c2).norm_squared();
        let eigen = (psibar.transpose() * sbar * psibar).trace();
        let harmonic = (w.transpose() * &fx.s2 * w)[0];
        let m2 = DMatrix::from_diagonal(&DVector::from_vec(inp.m2.clone()));
        let res = (w.transpose() * m2 * w)[0] - inp.area;
        let prox = (w - &fx.state.w_anchor).norm_squared() + (psibar - &fx.state.psibar_anchor).norm_squared();
        0.5 * (c.r1 * coeff + c.r2 * eigen + c.r3 * harmonic)
            + 0.5 * c.r4 * (res + fx.state.b).powi(2)
            + 0.5 / c.eta() * prox
    }

    #[test]
    fn objective_matches_dense_oracle() {
        let fx = fixture(3);
        let ours = proximal_objective(&fx.state, &fx.inputs, &fx.config).unwrap();
        let oracle = dense_oracle(&fx, &fx.state.w, &fx.state.psibar);
        assert!((ours - oracle).abs() <= 1e-12 * oracle.abs(), "{ours} vs {oracle}");
    }

    #[test]
    fn gradients_match_central_differences_of_oracle() {
        let fx = fixture(5);
        let gp = grad_psibar(&fx.state, &fx.inputs, &fx.config).unwrap();
        let gw = grad_w(&fx.state, &fx.inputs, &fx.config).unwrap();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..fx.inputs.n() {
            for c in 0..fx.config.k {
                let mut p = fx.state.psibar.clone();
                p[(i, c)] += h;
                let up = dense_oracle(&fx, &fx.state.w, &p);
                p[(i, c)] -= 2.0 * h;
                let down = dense_oracle(&fx, &fx.state.w, &p);
                let fd = (up - down) / (2.0 * h);
                worst = worst.max((fd - gp[(i, c)]).abs() / gp.amax());
            }
            let mut w = fx.state.w.clone();
            w[i] += h;
            let up = dense_oracle(&fx, &w, &fx.state.psibar);
            w[i] -= 2.0 * h;
            let down = dense_oracle(&fx, &w, &fx.state.psibar);
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - gw[i]).abs() / gw.amax());
        }
        assert!(worst < 1e-5, "relative gradient error {worst}");
    }

    #[test]
    fn coefficient_gradient_is_linear_in_r1() {
        let fx = fixture(7);
        let only = |r1: f64| LbbpConfig {
            r1,
            r2: 0.0,
            r3: 0.0,
            r4: 0.0,
            eta: Some(f64::INFINITY),
            ..fx.config.clone()
        };
        let g1 = grad_psibar(&fx.state, &fx.inputs, &only(1.0)).unwrap();
        let g3 = grad_psibar(&fx.state, &fx.inputs, &only(3.0)).unwrap();
        assert!((g3 - g1 * 3.0).amax() < 1e-13);
    }

    #[test]
    fn proximal_term_alone() {
        let fx = fixture(9);
        let config = LbbpConfig {
            r1: 0.0,
            r2: 0.0,
            r3: 0.0,
            r4: 0.0,
            eta: Some(0.25),
            ..fx.config.clone()
        };
        let gp = grad_psibar(&fx.state, &fx.inputs, &config).unwrap();
        let gw = grad_w(&fx.state, &fx.inputs, &config).unwrap();
        assert!((gp - (&fx.state.psibar - &fx.state.psibar_anchor) * 4.0).amax() < 1e-14);
        assert!((gw - (&fx.state.w - &fx.state.w_anchor) * 4.0).amax() < 1e-14);
    }

    #[test]
    fn eigen_gradient_satisfies_stationarity_at_eigenbasis() {
        // With only the eigen term and w constant, the weighted eigenbasis
        // Ψ̄ = L·w·Φ satisfies ∇Ψ̄ = Ψ̄·Λ (Lagrange condition on the Stiefel manifold).
        let mesh = shapes::icosphere(2, 1.0);
        let m = assemble_mass(&mesh);
        let s = assemble_stiffness(&mesh);
        let k = 4;
        let eig = crate::eigen::solve_eigs(&s, &m, k, &Default::default()).unwrap();
        let w0 = 1.7;
        let md = m.diagonal();
        let n = md.len();
        let g = DMatrix::zeros(n, 1);
        let c1 = DMatrix::zeros(1, k);
        let inputs = LbbpInputs::from_coefficients(c1, 1.0, md.clone(), s, g).unwrap();
        let config = LbbpConfig {
            k,
            r1: 0.0,
            r2: 2.0,
            r3: 0.0,
            r4: 0.0,
            eta: Some(f64::INFINITY),
            ..Default::default()
        };
        // Ψ = Φ/w is orthonormal in the metric w²M, so Ψ̄ = L·w·Ψ = LΦ.
        let psibar = DMatrix::from_fn(n, k, |i, c| md[i].sqrt() * eig.vectors[(i, c)]);
        let state = LbbpState::new(DVector::from_element(n, w0), psibar.clone(), 0.0);
        let gp = grad_psibar(&state, &inputs, &config).unwrap();
        // S̄ has eigenvalues λ/w², and the gradient of r2/2·tr is r2·S̄Ψ̄.
        let expected = DMatrix::from_fn(n, k, |i, c| 2.0 * eig.values[c] / (w0 * w0) * psibar[(i, c)]);
        assert!((&gp - &expected).amax() < 1e-7 * gp.amax(), "{}", (&gp - &expected).amax());
    }

    #[test]
    fn rejects_nonpositive_w_and_bad_shapes() {
        let mut fx = fixture(11);
        fx.state.w[4] = 0.0;
        assert!(matches!(
            energy(&fx.state, &fx.inputs, &fx.config),
            Err(Error::NonpositiveConformalFactor(_))
        ));
        let bad = LbbpState::new(DVector::from_element(3, 1.0), DMatrix::zeros(3, 5), 0.0);
        assert!(energy(&bad, &fx.inputs, &fx.config).is_err());
    }

    #[test]
    fn self_registration_has_zero_coefficient_residual() {
        let mesh = shapes::icosphere(2, 1.0);
        let m = assemble_mass(&mesh).diagonal();
        let s = assemble_stiffness(&mesh);
        let n = m.len();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = random_normal(n, 6, &mut rng);
        let f = random_normal(n, 3, &mut rng);
        let inputs = LbbpInputs::new(&m, &phi, &f, m.clone(), s, f.clone()).unwrap();
        let psibar = DMatrix::from_fn(n, 6, |i, c| m[i].sqrt() * phi[(i, c)]);
        let state = LbbpState::new(DVector::from_element(n, 1.0), psibar, 0.0);
        let e = energy(&state, &inputs, &LbbpConfig::default()).unwrap();
        assert!(e.coeff_match < 1e-20 * inputs.c1.norm_squared().max(1.0));
        assert!(e.area_residual.abs() < 1e-12);
    }
}
