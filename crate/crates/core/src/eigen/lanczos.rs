use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{normalize_signs, Eigensystem, Weighting};
use crate::error::{Error, Result};
use crate::fem::{weighted_mass, SparseSymMatrix, SpdSolver};
use crate::linalg::random_normal;

#[derive(Debug, Clone, PartialEq)]
pub struct EigOptions {
    /// Converged when ‖Sφ − λBφ‖_{B⁻¹} ≤ tolerance·(1 + λ).
    pub tolerance: f64,
    /// Cap on restart cycles; defaults to 300.
    pub max_iterations: Option<usize>,
    /// Seed for the starting block.
    pub seed: u64,
    /// Extra Ritz vectors carried beyond the wanted ones; defaults to max(8, k/4).
    pub guard: Option<usize>,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: None,
            seed: 0,
            guard: None,
        }
    }
}

/// Eigenpairs of S φ = λ diag(w2)·M φ.
pub fn solve_weighted_eigs(
    s: &SparseSymMatrix,
    m: &SparseSymMatrix,
    w2: &[f64],
    k: usize,
    options: &EigOptions,
) -> Result<Eigensystem> {
    let b = weighted_mass(m, Some(w2))?;
    let mut e = solve_eigs(s, &b, k, options)?;
    e.weighting = Weighting::Conformal;
    Ok(e)
}

/// The k smallest eigenpairs of S φ = λ B φ, B positive diagonal, S
/// positive semidefinite with the constants in its kernel.
///
/// Works with y = B^{1/2}φ. The constant mode is known in closed form and
/// deflated; the rest come from restarted block Krylov iteration with full
/// reorthogonalization on the shift-inverted operator
/// T = B^{1/2}(S + τB)^{-1}B^{1/2}, whose largest eigenvalues 1/(λ + τ)
/// belong to the smallest λ. Each cycle expands the current Ritz block by a
/// few applications of T and restarts from the new leading Ritz vectors.
pub fn solve_eigs(s: &SparseSymMatrix, b: &SparseSymMatrix, k: usize, options: &EigOptions) -> Result<Eigensystem> {
    let n = s.dim();
    if b.dim() != n {
        return Err(Error::dims(format!("stiffness {n} vs mass {}", b.dim())));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidK { k, n });
    }
    if !b.is_diagonal() {
        return Err(Error::dims("B must be diagonal"));
    }
    let bd = b.diagonal();
    if let Some(&bad) = bd.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::NonpositiveConformalFactor(bad));
    }
    let sq: Vec<f64> = bd.iter().map(|x| x.sqrt()).collect();
    let total: f64 = bd.iter().sum();
    let y0 = DVector::from_iterator(n, sq.iter().map(|x| x / total.sqrt()));

    let wanted = k - 1;
    let ys = if wanted == 0 {
        DMatrix::zeros(n, 0)
    } else {
        let tau = 1.0 / total;
        let op = ShiftInvert {
            solver: SpdSolver::new(s.add_scaled(b, tau)?),
            sq: &sq,
        };
        let a = Scaled { s, sq: &sq };
        krylov(&op, &a, &y0, wanted, options)?
    };

    let mut y = DMatrix::zeros(n, k);
    y.set_column(0, &y0);
    y.columns_mut(1, wanted).copy_from(&ys);
    let mut vectors = y;
    for (i, mut row) in vectors.row_iter_mut().enumerate() {
        row /= sq[i];
    }
    normalize_signs(&mut vectors);
    let values: Vec<f64> = (0..k)
        .map(|c| s.quad_form(vectors.column(c).as_slice()))
        .collect();
    // Rayleigh quotients inside a degenerate cluster can invert at roundoff level.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    Ok(Eigensystem {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: vectors.select_columns(&order),
        weighting: Weighting::Mass,
    })
}

/// y ↦ B^{1/2}(S + τB)^{-1}B^{1/2} y.
struct ShiftInvert<'a> {
    solver: SpdSolver,
    sq: &'a [f64],
}

impl ShiftInvert<'_> {
    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = x.nrows();
        let cols: Vec<Vec<f64>> = (0..x.ncols())
            .into_par_iter()
            .map(|c| {
                let rhs: Vec<f64> = x.column(c).iter().zip(self.sq).map(|(v, s)| v * s).collect();
                self.solver
                    .solve(&rhs)
                    .map(|sol| sol.iter().zip(self.sq).map(|(v, s)| v * s).collect())
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(n, cols.len(), |i, c| cols[c][i]))
    }
}

/// y ↦ B^{-1/2} S B^{-1/2} y.
struct Scaled<'a> {
    s: &'a SparseSymMatrix,
    sq: &'a [f64],
}

impl Scaled<'_> {
    fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut phi = y.clone();
        for (i, mut row) in phi.row_iter_mut().enumerate() {
            row /= self.sq[i];
        }
        let mut out = self.s.mul_dense(&phi);
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row /= self.sq[i];
        }
        out
    }
}

fn krylov(
    op: &ShiftInvert,
    a: &Scaled,
    y0: &DVector<f64>,
    wanted: usize,
    options: &EigOptions,
) -> Result<DMatrix<f64>> {
    let n = y0.len();
    let room = n - 1;
    // Guard vectors resolve clusters straddling the last wanted eigenvalue
    // and speed up convergence; only the wanted ones are tested.
    let guard = options.guard.unwrap_or((wanted / 3).max(16));
    let mut p = (wanted + guard).min(room);
    let max_cycles = options.max_iterations.unwrap_or(300);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    // One application of T damps the high-frequency content of the random start.
    let mut v = orthonormalize(&op.apply(&random_normal(n, p, &mut rng))?, &DMatrix::zeros(n, 0), y0);
    let mut w = op.apply(&v)?;
    let mut worst = f64::INFINITY;
    let mut y = DMatrix::zeros(n, 0);

    for cycle in 0..max_cycles {
        // Expand span(V) by T-images of the newest block.
        let mut last = w.clone();
        for _ in 0..KRYLOV_STEPS {
            if v.ncols() >= room {
                break;
            }
            let mut next = orthonormalize(&last, &v, y0);
            if next.ncols() == 0 {
                // Invariant subspace reached; widen with fresh directions.
                let extra = (room - v.ncols()).min(p);
                next = orthonormalize(&random_normal(n, extra, &mut rng), &v, y0);
                if next.ncols() == 0 {
                    break;
                }
            }
            let wn = op.apply(&next)?;
            v = hcat(&v, &next);
            w = hcat(&w, &wn);
            last = wn;
        }

        let (q, _) = ritz(&v, &w, p);
        let (yq, lambda, res) = refine(a, &(&v * &q));
        worst = res[..wanted].iter().cloned().fold(0.0, f64::max);
        let converged = res[..wanted]
            .iter()
            .zip(&lambda)
            .all(|(r, l)| *r <= options.tolerance * (1.0 + l.abs()));
        debug!("eigen cycle {cycle}: basis {}, worst residual {worst:.3e}", v.ncols());
        y = yq.columns(0, wanted).into_owned();
        if converged || v.ncols() >= room {
            return Ok(y);
        }
        // A cluster wider than the guard stalls the last wanted vectors;
        // keep more Ritz vectors from here on.
        if (cycle + 1) % WIDEN_EVERY == 0 && p < room {
            p = (p + guard.max(8)).min(room);
            debug!("eigen cycle {cycle}: widening the restart block to {p}");
            let (q, _) = ritz(&v, &w, p);
            v = &v * &q;
            w = &w * &q;
            continue;
        }
        // Restart from the leading Ritz block, reusing its T-image.
        v = &v * &q;
        w = &w * &q;
    }
    if worst <= 1e-6 {
        warn!("eigensolver hit its cycle cap with residual {worst:.3e}; accepting");
        Ok(y)
    } else {
        Err(Error::ConvergenceFailure(format!(
            "eigensolver stopped after {max_cycles} restart cycles with residual {worst:.3e}"
        )))
    }
}

/// Block expansions per restart cycle.
const KRYLOV_STEPS: usize = 2;

/// Unconverged cycles between widenings of the restart block.
const WIDEN_EVERY: usize = 20;

/// Ritz vectors (coefficients in the basis) and values of T on span(V),
/// largest first.
fn ritz(v: &DMatrix<f64>, w: &DMatrix<f64>, count: usize) -> (DMatrix<f64>, Vec<f64>) {
    let h = v.tr_mul(w);
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let order = &order[..count.min(order.len())];
    let q = DMatrix::from_fn(v.ncols(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    let theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (q, theta)
}

/// Rayleigh–Ritz for A within span(Y): rotated vectors in ascending
/// eigenvalue order, the eigenvalues, and per-column residual norms.
fn refine(a: &Scaled, y: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let ay = a.apply(y);
    let h = y.tr_mul(&ay);
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let q = DMatrix::from_fn(y.ncols(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    let yq = y * &q;
    let ayq = ay * &q;
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let res = (0..yq.ncols())
        .map(|c| (ayq.column(c) - yq.column(c) * lambda[c]).norm())
        .collect();
    (yq, lambda, res)
}

/// Columns of `x` orthonormalized against y0, the basis `v` and each other
/// (two Gram–Schmidt passes); numerically dependent columns are dropped.
fn orthonormalize(x: &DMatrix<f64>, v: &DMatrix<f64>, y0: &DVector<f64>) -> DMatrix<f64> {
    let mut accepted: Vec<DVector<f64>> = Vec::new();
    for c in 0..x.ncols() {
        let mut col = x.column(c).into_owned();
        let original = col.norm();
        if original == 0.0 {
            continue;
        }
        for _ in 0..2 {
            col -= y0 * y0.dot(&col);
            if v.ncols() > 0 {
                col -= v * v.tr_mul(&col);
            }
            for u in &accepted {
                col -= u * u.dot(&col);
            }
        }
        let norm = col.norm();
        if norm > 1e-10 * original {
            accepted.push(col / norm);
        }
    }
    if accepted.is_empty() {
        DMatrix::zeros(x.nrows(), 0)
    } else {
        DMatrix::from_columns(&accepted)
    }
}

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}
