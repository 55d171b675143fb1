use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::optim::{CurvilinearOptions, LbfgsOptions};

/// How the final basis is recovered from Ψ̄.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    /// Ψ* = diag(w)⁻¹ L⁻¹ Ψ̄, the inverse of the substitution Ψ̄ = L diag(w) Ψ.
    #[default]
    Inverse,
    /// Ψ* = diag(w) L⁻¹ Ψ̄.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmStartConfig {
    pub enabled: bool,
    /// Number of target samples in the reduced problem.
    pub samples: usize,
    /// Heat-bump diffusion time as a multiple of (target area / samples).
    pub time_factor: f64,
    pub substeps: usize,
    /// Outer iterations spent on the reduced problem.
    pub max_outer_iterations: usize,
    /// Reinitializations allowed while solving the reduced problem.
    pub max_reinits: usize,
    /// Finish the lift with a reinitialization of Ψ̄ in the lifted metric.
    pub reinit_after_lift: bool,
}

impl Default for WarmStartConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            samples: 300,
            time_factor: 0.2,
            substeps: 10,
            max_outer_iterations: 500,
            max_reinits: 5,
            reinit_after_lift: true,
        }
    }
}

/// Which corresponding functions drive the coefficient-matching term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    /// Heat time step as a fraction of the surface area.
    pub dt_factor: f64,
    /// Heat snapshot times as multiples of the time step.
    pub time_multiples: Vec<f64>,
    /// Recompute heat features on the target in the metric w²M₂ at each
    /// reinitialization.
    pub refresh_on_reinit: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::Indicator,
            dt_factor: 1e-3,
            time_multiples: vec![5.0, 10.0, 20.0],
            refresh_on_reinit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbbpConfig {
    /// Seeds every random choice (eigensolver start, sample hierarchy).
    pub seed: u64,
    /// Scale both meshes by the factor that gives the target unit mean
    /// vertex area before solving. Outputs are reported in input units.
    pub normalize_scale: bool,
    /// Number of basis functions.
    pub k: usize,
    /// Coefficient-matching weight.
    pub r1: f64,
    /// Eigen (Dirichlet) term weight.
    pub r2: f64,
    /// Harmonic regularization of w.
    pub r3: f64,
    /// Augmented-Lagrangian penalty on the area constraint.
    pub r4: f64,
    /// Proximal step; `None` means 10 / (r1 + r2 + r3).
    pub eta: Option<f64>,
    /// Multiplier updates per outer iteration.
    pub alm_inner_iterations: usize,
    pub max_outer_iterations: usize,
    /// Curvilinear steps per Ψ̄ update.
    pub psi_inner_iterations: usize,
    /// Reinitialize when the relative change of the total energy drops below this.
    pub reinit_tolerance: f64,
    pub max_reinits: usize,
    /// Outer iterations that must separate two reinitializations.
    pub reinit_min_gap: usize,
    /// Iteration cap of the trace minimization run at each reinitialization.
    pub reinit_max_iterations: usize,
    /// Stop when the relative energy change is below this ...
    pub termination_tolerance: f64,
    /// ... and |wᵀM₂w − A| is below this fraction of A.
    pub area_tolerance: f64,
    /// Lower bound on w enforced by rejecting line-search trials.
    pub w_floor: f64,
    /// Absolute slack allowed in the per-iteration descent check.
    pub descent_slack: f64,
    pub recovery: Recovery,
    pub curvilinear: CurvilinearOptions,
    pub lbfgs: LbfgsOptions,
    pub warm_start: WarmStartConfig,
    pub features: FeatureConfig,
}

impl Default for LbbpConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            normalize_scale: true,
            k: 100,
            r1: 10.0,
            r2: 10.0,
            r3: 1.0,
            r4: 0.01,
            eta: None,
            alm_inner_iterations: 1,
            max_outer_iterations: 1500,
            psi_inner_iterations: 1,
            reinit_tolerance: 1e-4,
            max_reinits: 5,
            reinit_min_gap: 10,
            reinit_max_iterations: 300,
            termination_tolerance: 1e-6,
            area_tolerance: 1e-4,
            w_floor: 1e-3,
            descent_slack: 1e-9,
            recovery: Recovery::Inverse,
            curvilinear: CurvilinearOptions::default(),
            lbfgs: LbfgsOptions {
                max_iterations: 20,
                ..LbfgsOptions::default()
            },
            warm_start: WarmStartConfig::default(),
            features: FeatureConfig::default(),
        }
    }
}

impl LbbpConfig {
    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(10.0 / (self.r1 + self.r2 + self.r3))
    }

    /// 1/η, zero when the proximal term is switched off (η = ∞).
    pub fn inv_eta(&self) -> f64 {
        let eta = self.eta();
        if eta.is_infinite() {
            0.0
        } else {
            1.0 / eta
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        for (name, v) in [("r1", self.r1), ("r2", self.r2), ("r3", self.r3), ("r4", self.r4)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a nonnegative finite number, got {v}"));
            }
        }
        if !(self.eta() > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta()));
        }
        if self.alm_inner_iterations == 0 || self.psi_inner_iterations == 0 {
            return bad("inner iteration counts must be at least 1".into());
        }
        if !(self.w_floor > 0.0) {
            return bad("w_floor must be positive".into());
        }
        if self.warm_start.enabled && self.warm_start.samples < self.k {
            return bad(format!(
                "warm start needs at least k = {} samples, got {}",
                self.k, self.warm_start.samples
            ));
        }
        let f = &self.features;
        if f.kind == FeatureKind::HeatDiffusion {
            if !(f.dt_factor > 0.0 && f.dt_factor.is_finite()) || f.time_multiples.is_empty() {
                return bad("heat features need a positive dt_factor and at least one time".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = LbbpConfig::default();
        assert_eq!((c.r1, c.r2, c.r3, c.r4, c.k, c.alm_inner_iterations), (10.0, 10.0, 1.0, 0.01, 100, 1));
        assert!((c.eta() - 10.0 / 21.0).abs() < 1e-15);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: LbbpConfig = serde_json::from_str(r#"{"k": 20, "warm_start": {"enabled": false}}"#).unwrap();
        assert_eq!(c.k, 20);
        assert!(!c.warm_start.enabled);
        assert_eq!(c.r1, 10.0);
        assert!(serde_json::from_str::<LbbpConfig>(r#"{"kk": 20}"#).is_err());
    }

    #[test]
    fn infinite_eta_disables_proximal_term() {
        let c = LbbpConfig {
            eta: Some(f64::INFINITY),
            ..Default::default()
        };
        assert_eq!(c.inv_eta(), 0.0);
    }

    #[test]
    fn validation() {
        for c in [
            LbbpConfig { k: 0, ..Default::default() },
            LbbpConfig { r2: -1.0, ..Default::default() },
            LbbpConfig { eta: Some(0.0), ..Default::default() },
            LbbpConfig { w_floor: 0.0, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
