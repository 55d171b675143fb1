//! Feasible descent on the Stiefel manifold {X : XᵀX = I} along Cayley
//! curves, with Barzilai–Borwein step sizes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_defect, trace_dot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurvilinearOptions {
    /// Step tried first when no Barzilai–Borwein estimate exists yet.
    pub initial_step: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Step shrink factor on each rejected trial.
    pub backtrack: f64,
    pub max_trials: usize,
    /// Window of past values for the nonmonotone reference.
    pub history: usize,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for CurvilinearOptions {
    fn default() -> Self {
        Self {
            initial_step: 1e-3,
            armijo: 1e-4,
            backtrack: 0.5,
            max_trials: 40,
            history: 5,
            min_step: 1e-20,
            max_step: 1e20,
        }
    }
}

/// Points X(τ) = (I + τ/2·A)⁻¹(I − τ/2·A)X with A = GXᵀ − XGᵀ, evaluated
/// through the Sherman–Morrison–Woodbury identity so that only a 2k×2k
/// system is solved.
pub struct CayleyCurve {
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    vtu: DMatrix<f64>,
    vtx: DMatrix<f64>,
    slope: f64,
}

impl CayleyCurve {
    pub fn new(x: &DMatrix<f64>, g: &DMatrix<f64>) -> Self {
        let (n, k) = x.shape();
        let mut u = DMatrix::zeros(n, 2 * k);
        u.columns_mut(0, k).copy_from(g);
        u.columns_mut(k, k).copy_from(x);
        let mut v = DMatrix::zeros(n, 2 * k);
        v.columns_mut(0, k).copy_from(x);
        v.columns_mut(k, k).copy_from(&(-g));
        let xtg = x.tr_mul(g);
        // f'(0) = −½‖A‖², ‖A‖² = 2‖G‖² − 2 tr((XᵀG)²) for orthonormal X.
        let a_norm2 = 2.0 * g.norm_squared() - 2.0 * trace_dot(&xtg.transpose(), &xtg);
        Self {
            x: x.clone(),
            vtu: v.tr_mul(&u),
            vtx: v.tr_mul(x),
            u,
            slope: -0.5 * a_norm2.max(0.0),
        }
    }

    /// Directional derivative of the objective at τ = 0.
    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn at(&self, tau: f64) -> Result<DMatrix<f64>> {
        let m = self.vtu.nrows();
        let system = DMatrix::identity(m, m) + &self.vtu * (0.5 * tau);
        let rhs = system
            .lu()
            .solve(&self.vtx)
            .ok_or_else(|| Error::LinearSolveFailure("singular Cayley system".into()))?;
        Ok(&self.x - &self.u * rhs * tau)
    }
}

/// Riemannian-style gradient G − X GᵀX used for Barzilai–Borwein steps.
pub fn projected_gradient(x: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    g - x * g.tr_mul(x)
}

/// Nearest matrix with orthonormal columns, X(XᵀX)^{-1/2}.
pub fn polar_orthonormalize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = x.tr_mul(x).symmetric_eigen();
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    x * (&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose())
}

/// Re-orthonormalize only when accumulated rounding exceeds `threshold`.
pub fn restore_orthonormality(x: DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    if orthonormality_defect(&x) > threshold {
        polar_orthonormalize(&x)
    } else {
        x
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x: DMatrix<f64>,
    pub value: f64,
    pub step: f64,
    pub trials: usize,
}

/// One backtracking search along the Cayley curve from `x`.
///
/// Accepts the first step τ (starting at `step`) with
/// f(X(τ)) ≤ reference + armijo·τ·f'(0). `reference` is at least f(x);
/// a larger value gives the nonmonotone variant. If the curve is flat
/// (x is stationary) the point is returned unchanged.
pub fn curvilinear_step<F>(
    x: &DMatrix<f64>,
    g: &DMatrix<f64>,
    value: f64,
    reference: f64,
    step: f64,
    options: &CurvilinearOptions,
    mut objective: F,
) -> Result<StepOutcome>
where
    F: FnMut(&DMatrix<f64>) -> Result<f64>,
{
    let curve = CayleyCurve::new(x, g);
    let slope = curve.slope();
    if slope >= -1e-300 || !slope.is_finite() {
        return Ok(StepOutcome {
            x: x.clone(),
            value,
            step: 0.0,
            trials: 0,
        });
    }
    let reference = reference.max(value);
    let mut tau = step.clamp(options.min_step, options.max_step);
    for trial in 1..=options.max_trials {
        let candidate = curve.at(tau)?;
        let f = objective(&candidate)?;
        if f.is_finite() && f <= reference + options.armijo * tau * slope {
            return Ok(StepOutcome {
                x: candidate,
                value: f,
                step: tau,
                trials: trial,
            });
        }
        tau *= options.backtrack;
    }
    Err(Error::LineSearchFailure(options.max_trials))
}

/// Barzilai–Borwein step from consecutive iterates and projected gradients;
/// alternates the two classic formulas by iteration parity.
pub fn bb_step(
    dx: &DMatrix<f64>,
    dg: &DMatrix<f64>,
    iteration: usize,
    options: &CurvilinearOptions,
) -> Option<f64> {
    let sy = trace_dot(dx, dg).abs();
    if sy == 0.0 {
        return None;
    }
    let step = if iteration % 2 == 0 {
        dx.norm_squared() / sy
    } else {
        sy / dg.norm_squared()
    };
    step.is_finite().then(|| step.clamp(options.min_step, options.max_step))
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub x: DMatrix<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize a smooth function over the Stiefel manifold from an orthonormal
/// start: BB steps, nonmonotone Armijo backtracking, and the best point seen
/// returned (so the result never exceeds the starting value).
pub fn minimize<F>(
    x0: &DMatrix<f64>,
    mut value_and_gradient: F,
    max_iterations: usize,
    gradient_tolerance: f64,
    options: &CurvilinearOptions,
) -> Result<MinimizeOutcome>
where
    F: FnMut(&DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>,
{
    let mut x = x0.clone();
    let (mut f, mut g) = value_and_gradient(&x)?;
    let mut best = (x.clone(), f);
    let mut recent = vec![f];
    let mut step = options.initial_step;
    let mut pg = projected_gradient(&x, &g);
    let mut iterations = 0;

    for iter in 0..max_iterations {
        iterations = iter;
        if pg.norm() <= gradient_tolerance {
            return Ok(MinimizeOutcome {
                x: best.0,
                value: best.1,
                iterations: iter,
                converged: true,
            });
        }
        let reference = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let outcome = match curvilinear_step(&x, &g, f, reference, step, options, |y| {
            value_and_gradient(y).map(|r| r.0)
        }) {
            Ok(o) => o,
            Err(Error::LineSearchFailure(_)) => break,
            Err(e) => return Err(e),
        };
        if outcome.trials == 0 {
            break;
        }
        let x_new = restore_orthonormality(outcome.x, 1e-11);
        let (f_new, g_new) = value_and_gradient(&x_new)?;
        let pg_new = projected_gradient(&x_new, &g_new);
        if let Some(s) = bb_step(&(&x_new - &x), &(&pg_new - &pg), iter, options) {
            step = s;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        pg = pg_new;
        if f < best.1 {
            best = (x.clone(), f);
        }
        recent.push(f);
        if recent.len() > options.history {
            recent.remove(0);
        }
        iterations = iter + 1;
    }
    let converged = pg.norm() <= gradient_tolerance;
    Ok(MinimizeOutcome {
        x: best.0,
        value: best.1,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_principal_angle, random_normal, thin_q};
    use nalgebra::SymmetricEigen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_stiefel(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        thin_q(&random_normal(n, k, &mut rng))
    }

    #[test]
    fn gradient_along_x_is_a_fixed_point() {
        let x = random_stiefel(10, 3, 1);
        let curve = CayleyCurve::new(&x, &x);
        assert!(curve.slope().abs() < 1e-14);
        assert!((curve.at(0.7).unwrap() - &x).amax() < 1e-14);
    }

    #[test]
    fn curve_stays_on_manifold() {
        let x = random_stiefel(40, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_normal(40, 4, &mut rng);
        let curve = CayleyCurve::new(&x, &g);
        for tau in [1e-6, 0.1, 1.0, 10.0, 1e3] {
            assert!(orthonormality_defect(&curve.at(tau).unwrap()) <= 1e-10, "tau {tau}");
        }
    }

    #[test]
    fn smw_form_matches_dense_cayley() {
        let x = random_stiefel(12, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_normal(12, 3, &mut rng);
        let a = &g * x.transpose() - &x * g.transpose();
        let tau = 0.37;
        let i = DMatrix::<f64>::identity(12, 12);
        let dense = (&i + &a * (tau / 2.0)).lu().solve(&((&i - &a * (tau / 2.0)) * &x)).unwrap();
        assert!((CayleyCurve::new(&x, &g).at(tau).unwrap() - dense).amax() < 1e-13);
    }

    #[test]
    fn slope_matches_finite_difference() {
        let n = 15;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = random_normal(n, n, &mut rng);
        let q = &c + c.transpose();
        let f = |x: &DMatrix<f64>| 0.5 * trace_dot(x, &(&q * x));
        let x = random_stiefel(n, 3, 7);
        let g = &q * &x;
        let curve = CayleyCurve::new(&x, &g);
        let h = 1e-6;
        let fd = (f(&curve.at(h).unwrap()) - f(&curve.at(-h).unwrap())) / (2.0 * h);
        assert!((fd - curve.slope()).abs() <= 1e-6 * curve.slope().abs());
    }

    #[test]
    fn trace_minimization_finds_the_bottom_eigenspace() {
        let n = 30;
        let k = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = random_normal(n, n, &mut rng);
        let q = (&c + c.transpose()) * 0.5;
        let objective = |x: &DMatrix<f64>| {
            let qx = &q * x;
            Ok((0.5 * trace_dot(x, &qx), qx))
        };
        let x0 = random_stiefel(n, k, 9);
        let out = minimize(&x0, objective, 5000, 1e-10, &CurvilinearOptions::default()).unwrap();
        assert!(out.converged);

        let eig = SymmetricEigen::new(q.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let oracle = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])]);
        assert!(max_principal_angle(&oracle, &out.x) < 1e-4);
        assert!(orthonormality_defect(&out.x) < 1e-10);
        let f0 = objective(&x0).unwrap().0;
        assert!(out.value <= f0);
    }

    #[test]
    fn polar_factor_is_orthonormal_and_close() {
        let x = random_stiefel(20, 4, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noisy = &x + random_normal(20, 4, &mut rng) * 1e-9;
        let fixed = polar_orthonormalize(&noisy);
        assert!(orthonormality_defect(&fixed) < 1e-14);
        assert!((fixed - x).amax() < 1e-8);
    }
}
