//! Coarse-to-fine initialization: solve the problem in the span of a
//! diffusion basis on the target, then lift the result to full resolution.
//!
//! With Ψ = UΨ_c and w = Ud the Dirichlet and harmonic terms are exact in
//! the reduced variables (S̄ = UᵀSU). Mass-weighted terms use the lumped
//! reduced mass M̄ = diag(Uᵀm), and the target features are replaced by their
//! mass-weighted averages Ḡ = M̄⁻¹UᵀMG. When U is a permutation the reduced
//! problem is the full problem with its vertices relabelled.

use log::info;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::DiffusionBasis;
use crate::linalg::{thin_q, SymOperator};

use super::config::{LbbpConfig, Recovery};
use super::problem::{LbbpInputs, LbbpState};
use super::solver::{align_rotation, recover_basis, solve, LbbpOutcome};

/// The reduced counterpart of `inputs` in the span of `basis`.
pub fn reduced_inputs<S: SymOperator>(inputs: &LbbpInputs<S>, basis: &DiffusionBasis) -> Result<LbbpInputs<DMatrix<f64>>> {
    let u = basis.matrix();
    let (n, nb) = u.shape();
    if n != inputs.n() {
        return Err(Error::dims(format!("basis over {n} vertices for a target with {}", inputs.n())));
    }
    if inputs.k() > nb {
        return Err(Error::InvalidLevelSpec(format!(
            "k = {} exceeds the {nb} functions of the warm-start basis",
            inputs.k()
        )));
    }
    let mu = DMatrix::from_fn(n, nb, |i, j| inputs.m2[i] * u[(i, j)]);
    let mbar: Vec<f64> = (0..nb).map(|j| mu.column(j).sum()).collect();
    let sbar = u.tr_mul(&inputs.s2.apply(u));
    let sbar = (&sbar + sbar.transpose()) * 0.5;
    let mut gbar = mu.tr_mul(&inputs.g);
    for (j, mut row) in gbar.row_iter_mut().enumerate() {
        row /= mbar[j];
    }
    LbbpInputs::from_coefficients(inputs.c1.clone(), inputs.area, mbar, sbar, gbar)
}

#[derive(Debug, Clone)]
pub struct WarmStart {
    /// Full-resolution starting state.
    pub state: LbbpState,
    /// The reduced solve, for diagnostics.
    pub reduced: LbbpOutcome,
}

/// Solve the reduced problem from the projection of `psi0` and lift the
/// result: Ψ = UΨ_c, w = Ud (clamped above the floor, then rescaled to meet
/// the area constraint), Ψ̄ = orthonormalized L·diag(w)·Ψ rotated to match
/// the source coefficients. With `reinit_after_lift`, Ψ̄ is then replaced by
/// the trace minimizer in the lifted metric, as at a reinitialization.
pub fn warm_start<S: SymOperator>(
    inputs: &LbbpInputs<S>,
    basis: &DiffusionBasis,
    psi0: &DMatrix<f64>,
    config: &LbbpConfig,
) -> Result<WarmStart> {
    let k = inputs.k();
    if psi0.nrows() != inputs.n() || psi0.ncols() < k {
        return Err(Error::dims(format!(
            "initial basis is {:?}, need {} rows and at least {k} columns",
            psi0.shape(),
            inputs.n()
        )));
    }
    let mut reduced = reduced_inputs(inputs, basis)?;
    let coarse_config = LbbpConfig {
        max_outer_iterations: config.warm_start.max_outer_iterations,
        max_reinits: config.warm_start.max_reinits,
        recovery: Recovery::Inverse,
        ..config.clone()
    };
    let psi_c = basis.project(&psi0.columns(0, k).into_owned())?;
    let coarse_start = super::solver::initial_state(&reduced, &psi_c, &coarse_config)?;
    let outcome = solve(&mut reduced, coarse_start, &coarse_config, None)?;
    info!(
        "warm start: {} reduced iterations, total energy {:.6e}",
        outcome.iterations, outcome.energy.total
    );

    let u = basis.matrix();
    let psi = u * &outcome.basis;
    let floor = 2.0 * config.w_floor;
    let w = (u * &outcome.state.w).map(|v| v.max(floor));
    // The lumped reduced mass does not measure the area of Ud exactly.
    let area: f64 = w.iter().zip(&inputs.m2).map(|(v, m)| m * v * v).sum();
    let w = w * (inputs.area / area).sqrt();
    let sm = inputs.sqrt_m2();
    let psibar = thin_q(&DMatrix::from_fn(psi.nrows(), k, |i, c| sm[i] * w[i] * psi[(i, c)]));
    let psibar = align_rotation(inputs, config, &w, psibar);
    let mut state = LbbpState::new(w, psibar, outcome.state.b);
    if config.warm_start.reinit_after_lift {
        super::solver::reinitialize(inputs, &mut state, config)?;
    }
    Ok(WarmStart {
        state,
        reduced: outcome,
    })
}

/// Lift a reduced state without solving; used to compare reduced and full energies.
pub fn lift(basis: &DiffusionBasis, reduced: &LbbpInputs<DMatrix<f64>>, state: &LbbpState, full_sqrt_m2: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let u = basis.matrix();
    let psi_c = recover_basis(&state.w, &state.psibar, reduced.sqrt_m2(), Recovery::Inverse);
    let psi = u * psi_c;
    let w = u * &state.w;
    let psibar = DMatrix::from_fn(psi.nrows(), psi.ncols(), |i, c| full_sqrt_m2[i] * w[i] * psi[(i, c)]);
    (w, psibar)
}
