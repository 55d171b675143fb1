use std::io::Write;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigen::eig_via_stiefel;
use crate::error::{Error, Result};
use crate::linalg::{orthonormality_defect, thin_q, trace_dot, SymOperator};
use crate::optim::stiefel::{bb_step, curvilinear_step, projected_gradient, restore_orthonormality};
use crate::optim::{lbfgs_minimize, LbfgsStatus};

use super::config::{LbbpConfig, Recovery};
use super::problem::{EnergyBreakdown, LbbpInputs, LbbpState, Objective};

/// One row per outer iteration; row 0 is the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub coeff_match: f64,
    pub eigen: f64,
    pub harmonic: f64,
    pub area_residual: f64,
    pub total: f64,
    /// New proximal-augmented value minus the old one, with the multiplier
    /// held at its value from the start of the iteration. Nonpositive up to
    /// rounding whenever one multiplier update is made per iteration.
    pub descent_gap: f64,
    /// ‖Δw‖² + ‖ΔΨ̄‖² over the iteration.
    pub step_sq: f64,
    /// Ψ̄ was reinitialized after this iteration.
    pub reinit: bool,
}

impl TraceRow {
    fn new(iteration: usize, e: &EnergyBreakdown, descent_gap: f64, step_sq: f64) -> Self {
        Self {
            iteration,
            coeff_match: e.coeff_match,
            eigen: e.eigen,
            harmonic: e.harmonic,
            area_residual: e.area_residual,
            total: e.total,
            descent_gap,
            step_sq,
            reinit: false,
        }
    }
}

pub const TRACE_HEADER: &str = "iter,coeff_match,eigen,harmonic,area_residual,total";

pub fn write_trace_csv(trace: &[TraceRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in trace {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.iteration, r.coeff_match, r.eigen, r.harmonic, r.area_residual, r.total
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReinitEvent {
    pub iteration: usize,
    pub energy_before: f64,
    pub energy_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LbbpOutcome {
    pub state: LbbpState,
    /// Recovered basis Ψ*, n₂×k.
    pub basis: DMatrix<f64>,
    pub energy: EnergyBreakdown,
    pub trace: Vec<TraceRow>,
    pub reinits: Vec<ReinitEvent>,
    pub iterations: usize,
    pub termination: Termination,
    pub max_orthonormality_defect: f64,
}

impl LbbpOutcome {
    /// Largest per-iteration descent gap. Each gap is measured from the
    /// state the iteration started at, so reinitializations do not count.
    pub fn max_descent_gap(&self) -> f64 {
        self.trace.iter().skip(1).map(|r| r.descent_gap).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Recomputes target features for a new conformal factor (the metric is w²M₂).
pub type FeatureRefresh<'a> = dyn FnMut(&DVector<f64>) -> Result<DMatrix<f64>> + 'a;

/// diag(d) A diag(d), never formed explicitly.
pub(crate) struct DiagCongruence<'a, S> {
    pub op: &'a S,
    pub d: Vec<f64>,
}

impl<S: SymOperator> SymOperator for DiagCongruence<'_, S> {
    fn dim(&self) -> usize {
        self.d.len()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let scale = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), m.ncols(), |i, c| self.d[i] * m[(i, c)]);
        scale(&self.op.apply(&scale(x)))
    }
}

/// Constant conformal factor meeting the area constraint, and
/// Ψ̄⁰ = orthonormalized L·diag(w)·Ψ⁰ with column signs chosen so the
/// target coefficients point the same way as the source coefficients.
pub fn initial_state<S: SymOperator>(inputs: &LbbpInputs<S>, psi0: &DMatrix<f64>, config: &LbbpConfig) -> Result<LbbpState> {
    let (n, k) = (inputs.n(), inputs.k());
    if psi0.nrows() != n || psi0.ncols() < k {
        return Err(Error::dims(format!(
            "initial basis is {:?}, need {n} rows and at least {k} columns",
            psi0.shape()
        )));
    }
    let target_area: f64 = inputs.m2.iter().sum();
    let w = DVector::from_element(n, (inputs.area / target_area).sqrt());
    let sm = inputs.sqrt_m2();
    let psibar = thin_q(&DMatrix::from_fn(n, k, |i, c| sm[i] * w[i] * psi0[(i, c)]));
    Ok(LbbpState::new(w.clone(), align_signs(inputs, config, &w, psibar), 0.0))
}

/// Flip columns of Ψ̄ whose target coefficients anticorrelate with C₁.
pub(crate) fn align_signs<S: SymOperator>(
    inputs: &LbbpInputs<S>,
    config: &LbbpConfig,
    w: &DVector<f64>,
    mut psibar: DMatrix<f64>,
) -> DMatrix<f64> {
    let obj = Objective::new(inputs, config);
    let c2 = &inputs.c1 - obj.residual(w, &psibar);
    for c in 0..psibar.ncols() {
        if inputs.c1.column(c).dot(&c2.column(c)) < 0.0 {
            psibar.column_mut(c).neg_mut();
        }
    }
    psibar
}

/// Ψ* from Ψ̄ and w.
pub fn recover_basis(w: &DVector<f64>, psibar: &DMatrix<f64>, sqrt_m2: &[f64], recovery: Recovery) -> DMatrix<f64> {
    DMatrix::from_fn(psibar.nrows(), psibar.ncols(), |i, c| {
        let p = psibar[(i, c)] / sqrt_m2[i];
        match recovery {
            Recovery::Inverse => p / w[i],
            Recovery::Literal => p * w[i],
        }
    })
}

/// Proximal alternating minimization with an augmented Lagrangian for the
/// area constraint and periodic reinitialization of Ψ̄.
///
/// Each outer iteration takes curvilinear steps on Ψ̄ (w fixed), then
/// minimizes over w with L-BFGS (Ψ̄ fixed), then updates the multiplier.
/// When progress stalls, Ψ̄ is reset to the minimizer of its Dirichlet term
/// in the current metric and, if `refresh` is given, the target features are
/// recomputed in that metric.
pub fn solve<S: SymOperator>(
    inputs: &mut LbbpInputs<S>,
    initial: LbbpState,
    config: &LbbpConfig,
    mut refresh: Option<&mut FeatureRefresh<'_>>,
) -> Result<LbbpOutcome> {
    config.validate()?;
    if initial.psibar.shape() != (inputs.n(), inputs.k()) || initial.w.len() != inputs.n() {
        return Err(Error::dims(format!(
            "initial state has w of length {} and Ψ̄ {:?}; problem is n = {}, k = {}",
            initial.w.len(),
            initial.psibar.shape(),
            inputs.n(),
            inputs.k()
        )));
    }
    if orthonormality_defect(&initial.psibar) > 1e-8 {
        return Err(Error::dims("initial Ψ̄ is not orthonormal"));
    }
    let mut state = initial;
    let mut energy = Objective::new(inputs, config).breakdown(&state.w, &state.psibar)?;
    let mut trace = vec![TraceRow::new(0, &energy, 0.0, 0.0)];
    let mut reinits = Vec::new();
    let mut last_reinit = 0;
    let mut step = config.curvilinear.initial_step;
    let mut bb_count = 0;
    let mut max_defect = orthonormality_defect(&state.psibar);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for j in 1..=config.max_outer_iterations {
        iterations = j;
        let obj = Objective::new(inputs, config);
        state.w_anchor = state.w.clone();
        state.psibar_anchor = state.psibar.clone();
        let before = obj.augmented(&energy, state.b);

        psi_step(&obj, &mut state, config, &mut step, &mut bb_count)?;
        let b_start = state.b;
        w_step(&obj, &mut state, config)?;

        let new_energy = obj.breakdown(&state.w, &state.psibar)?;
        let prox = (&state.w - &state.w_anchor).norm_squared() + (&state.psibar - &state.psibar_anchor).norm_squared();
        let after = obj.augmented(&new_energy, b_start) + 0.5 * obj.inv_eta * prox;
        let gap = after - before;
        if gap > config.descent_slack && config.alm_inner_iterations == 1 {
            warn!("iteration {j}: proximal-augmented energy rose by {gap:e}");
            debug_assert!(false, "iteration {j}: proximal-augmented energy rose by {gap:e}");
        }
        max_defect = max_defect.max(orthonormality_defect(&state.psibar));
        let rel = (energy.total - new_energy.total).abs() / energy.total.abs().max(f64::MIN_POSITIVE);
        energy = new_energy;
        trace.push(TraceRow::new(j, &energy, gap, prox));
        debug!(
            "iter {j}: total {:.10e} coeff {:.4e} eigen {:.6e} area {:.3e} rel {rel:.3e}",
            energy.total, energy.coeff_match, energy.eigen, energy.area_residual
        );

        let area_ok = energy.area_residual.abs() < config.area_tolerance * inputs.area;
        if rel < config.reinit_tolerance
            && reinits.len() < config.max_reinits
            && j - last_reinit >= config.reinit_min_gap
        {
            if let Some(f) = refresh.as_deref_mut() {
                inputs.set_target_features(f(&state.w)?)?;
            }
            let before_total = energy.total;
            reinitialize(inputs, &mut state, config)?;
            energy = Objective::new(inputs, config).breakdown(&state.w, &state.psibar)?;
            info!(
                "iteration {j}: reinitialized Ψ̄, total energy {before_total:.10e} -> {:.10e}",
                energy.total
            );
            reinits.push(ReinitEvent {
                iteration: j,
                energy_before: before_total,
                energy_after: energy.total,
            });
            trace.last_mut().expect("trace has the initial row").reinit = true;
            last_reinit = j;
            continue;
        }
        if rel < config.termination_tolerance && area_ok {
            termination = Termination::Converged;
            break;
        }
    }
    if termination == Termination::MaxIterations {
        warn!("LBBP stopped at the iteration cap ({iterations})");
    }
    let basis = recover_basis(&state.w, &state.psibar, inputs.sqrt_m2(), config.recovery);
    Ok(LbbpOutcome {
        state,
        basis,
        energy,
        trace,
        reinits,
        iterations,
        termination,
        max_orthonormality_defect: max_defect,
    })
}

fn psi_step<S: SymOperator>(
    obj: &Objective<'_, S>,
    state: &mut LbbpState,
    config: &LbbpConfig,
    step: &mut f64,
    bb_count: &mut usize,
) -> Result<()> {
    let w = state.w.clone();
    let anchor = state.psibar_anchor.clone();
    let inv_eta = obj.inv_eta;
    let value_and_grad = |p: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>)> {
        let (e, g) = obj.with_grad_psibar(&w, p)?;
        let d = p - &anchor;
        Ok((e.total + 0.5 * inv_eta * d.norm_squared(), g + d * inv_eta))
    };
    let (mut f, mut g) = value_and_grad(&state.psibar)?;
    let mut pg = projected_gradient(&state.psibar, &g);
    for _ in 0..config.psi_inner_iterations {
        let outcome = match curvilinear_step(&state.psibar, &g, f, f, *step, &config.curvilinear, |p| {
            let e = obj.breakdown(&w, p)?;
            Ok(e.total + 0.5 * inv_eta * (p - &anchor).norm_squared())
        }) {
            Ok(o) => o,
            Err(Error::LineSearchFailure(_)) => {
                debug!("Ψ̄ line search found no decrease; keeping Ψ̄");
                *step = config.curvilinear.initial_step;
                break;
            }
            Err(e) => return Err(e),
        };
        if outcome.trials == 0 {
            break;
        }
        let next = restore_orthonormality(outcome.x, 1e-11);
        let (f_next, g_next) = value_and_grad(&next)?;
        if f_next > f {
            // Only possible after the polar correction; keep the old point.
            break;
        }
        let pg_next = projected_gradient(&next, &g_next);
        *step = bb_step(&(&next - &state.psibar), &(&pg_next - &pg), *bb_count, &config.curvilinear)
            .unwrap_or(outcome.step);
        *bb_count += 1;
        state.psibar = next;
        f = f_next;
        g = g_next;
        pg = pg_next;
    }
    Ok(())
}

fn w_step<S: SymOperator>(obj: &Objective<'_, S>, state: &mut LbbpState, config: &LbbpConfig) -> Result<()> {
    let psibar = state.psibar.clone();
    let anchor = state.w_anchor.clone();
    let inv_eta = obj.inv_eta;
    let floor = config.w_floor;
    for _ in 0..config.alm_inner_iterations {
        let b = state.b;
        let out = lbfgs_minimize(
            &state.w,
            |w| {
                let (e, g) = obj.with_grad_w(w, &psibar, b)?;
                let d = w - &anchor;
                Ok((obj.augmented(&e, b) + 0.5 * inv_eta * d.norm_squared(), g + d * inv_eta))
            },
            |w| w.iter().all(|v| *v > floor),
            &config.lbfgs,
        )?;
        if out.status == LbfgsStatus::LineSearchStalled {
            debug!("w line search stalled after {} iterations", out.iterations);
        }
        state.w = out.x;
        state.b += obj.area_residual(&state.w);
    }
    Ok(())
}

/// Ψ̄ ← argmin tr(Ψ̄ᵀ S̄(w) Ψ̄) over orthonormal frames, from the current Ψ̄.
pub(crate) fn reinitialize<S: SymOperator>(inputs: &LbbpInputs<S>, state: &mut LbbpState, config: &LbbpConfig) -> Result<()> {
    let sm = inputs.sqrt_m2();
    let op = DiagCongruence {
        op: &inputs.s2,
        d: (0..inputs.n()).map(|i| 1.0 / (state.w[i] * sm[i])).collect(),
    };
    let start = restore_orthonormality(state.psibar.clone(), 1e-12);
    let scale = trace_dot(&start, &op.apply(&start)).abs().max(1.0);
    let out = eig_via_stiefel(
        &op,
        inputs.k(),
        &start,
        config.reinit_max_iterations,
        1e-9 * scale,
        &config.curvilinear,
    )?;
    // The trace is invariant under Ψ̄ ← Ψ̄Q, so the minimizer is a subspace;
    // take the rotation of it that best matches the source coefficients.
    state.psibar = align_rotation(inputs, config, &state.w, out.x);
    Ok(())
}

/// Ψ̄Q with Q orthogonal minimizing the coefficient mismatch (orthogonal
/// Procrustes). Leaves the eigen term unchanged.
pub(crate) fn align_rotation<S: SymOperator>(
    inputs: &LbbpInputs<S>,
    config: &LbbpConfig,
    w: &DVector<f64>,
    psibar: DMatrix<f64>,
) -> DMatrix<f64> {
    let obj = Objective::new(inputs, config);
    let coeffs = &inputs.c1 - obj.residual(w, &psibar);
    let svd = coeffs.tr_mul(&inputs.c1).svd(true, true);
    let q = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    restore_orthonormality(psibar * q, 1e-12)
}
