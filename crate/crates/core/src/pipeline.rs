//! End-to-end registration of a source mesh onto a target mesh from a set of
//! corresponding landmarks.

use std::time::Instant;

use log::info;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::correspondence::{point_to_point, Correspondence};
use crate::eigen::{solve_eigs, EigOptions, Eigensystem, Weighting};
use crate::error::{Error, Result};
use crate::features::{build_diffusion_basis, heat_features, indicator_features, FeatureKind, FeatureSet};
use crate::fem::{assemble_mass, assemble_stiffness, SparseSymMatrix};
use crate::lbbp::{self, LbbpConfig, LbbpInputs, LbbpOutcome, LbbpState, Termination};
use crate::mesh::{farthest_point_sample, TriangleMesh};

/// Both meshes after scale normalization, with everything the solver needs.
pub struct PreparedPair {
    /// Factor applied to the input coordinates.
    pub scale: f64,
    pub source: TriangleMesh,
    pub target: TriangleMesh,
    pub m1: SparseSymMatrix,
    pub m2: SparseSymMatrix,
    pub s2: SparseSymMatrix,
    /// Source eigenbasis Φ (normalized units).
    pub phi: Eigensystem,
    /// Native target eigenbasis, used to initialize Ψ̄.
    pub psi0: Eigensystem,
    pub source_features: FeatureSet,
    pub target_features: FeatureSet,
    pub inputs: LbbpInputs<SparseSymMatrix>,
    /// Heat step used for heat features, if any.
    heat_dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub eigensystems: f64,
    pub features: f64,
    pub warm_start: f64,
    pub solve: f64,
    pub matching: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartSummary {
    pub samples: usize,
    pub iterations: usize,
    pub energy: f64,
    pub max_descent_gap: f64,
    pub max_orthonormality_defect: f64,
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub correspondence: Correspondence,
    /// Conformal factor per target vertex.
    pub w: DVector<f64>,
    /// Ψ* in input units; `values` are its Rayleigh quotients ψᵀS₂ψ.
    pub basis: Eigensystem,
    pub outcome: LbbpOutcome,
    pub warm_start: Option<WarmStartSummary>,
    pub scale: f64,
    pub timings: Timings,
}

/// The JSON-facing digest of a registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub termination: Termination,
    pub reinits: usize,
    pub reinit_iterations: Vec<usize>,
    pub coeff_match: f64,
    pub eigen: f64,
    pub harmonic: f64,
    pub area_residual: f64,
    pub total: f64,
    pub max_descent_gap: f64,
    pub max_orthonormality_defect: f64,
    pub warm_start: Option<WarmStartSummary>,
    pub scale: f64,
    pub timings: Timings,
}

impl Registration {
    pub fn summary(&self) -> RunSummary {
        let o = &self.outcome;
        RunSummary {
            iterations: o.iterations,
            termination: o.termination,
            reinits: o.reinits.len(),
            reinit_iterations: o.reinits.iter().map(|r| r.iteration).collect(),
            coeff_match: o.energy.coeff_match,
            eigen: o.energy.eigen,
            harmonic: o.energy.harmonic,
            area_residual: o.energy.area_residual,
            total: o.energy.total,
            max_descent_gap: o.max_descent_gap(),
            max_orthonormality_defect: o.max_orthonormality_defect,
            warm_start: self.warm_start.clone(),
            scale: self.scale,
            timings: self.timings.clone(),
        }
    }
}

fn eig_options(config: &LbbpConfig) -> EigOptions {
    EigOptions {
        seed: config.seed,
        ..Default::default()
    }
}

impl PreparedPair {
    /// Normalizes scale, computes both eigensystems and the features.
    /// `landmarks` holds (source vertex, target vertex) pairs; feature column
    /// j on both meshes comes from pair j.
    pub fn new(source: &TriangleMesh, target: &TriangleMesh, landmarks: &[(usize, usize)], config: &LbbpConfig) -> Result<(Self, Timings)> {
        config.validate()?;
        if landmarks.is_empty() {
            return Err(Error::EmptyFeatureSet);
        }
        let k = config.k;
        let scale = if config.normalize_scale {
            (target.num_vertices() as f64 / target.surface_area()).sqrt()
        } else {
            1.0
        };
        let source = source.scaled(scale)?;
        let target = target.scaled(scale)?;
        let mut timings = Timings::default();

        let clock = Instant::now();
        let (m1, s1) = (assemble_mass(&source), assemble_stiffness(&source));
        let (m2, s2) = (assemble_mass(&target), assemble_stiffness(&target));
        let phi = solve_eigs(&s1, &m1, k, &eig_options(config))?;
        let psi0 = solve_eigs(&s2, &m2, k, &eig_options(config))?;
        timings.eigensystems = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let src_marks: Vec<usize> = landmarks.iter().map(|p| p.0).collect();
        let tgt_marks: Vec<usize> = landmarks.iter().map(|p| p.1).collect();
        let f = &config.features;
        let (source_features, target_features, heat_dt) = match f.kind {
            FeatureKind::Indicator => (
                indicator_features(source.num_vertices(), &src_marks)?,
                indicator_features(target.num_vertices(), &tgt_marks)?,
                None,
            ),
            FeatureKind::HeatDiffusion => {
                // The deformed target takes the source's area, so both sides
                // use the source's time scale.
                let dt = f.dt_factor * source.surface_area();
                let times: Vec<f64> = f.time_multiples.iter().map(|t| t * dt).collect();
                (
                    heat_features(&m1, &s1, &src_marks, &times, dt, None)?,
                    heat_features(&m2, &s2, &tgt_marks, &times, dt, None)?,
                    Some(dt),
                )
            }
        };
        timings.features = clock.elapsed().as_secs_f64();

        let inputs = LbbpInputs::new(
            &m1.diagonal(),
            &phi.vectors,
            &source_features.values,
            m2.diagonal(),
            s2.clone(),
            target_features.values.clone(),
        )?;
        Ok((
            Self {
                scale,
                source,
                target,
                m1,
                m2,
                s2,
                phi,
                psi0,
                source_features,
                target_features,
                inputs,
                heat_dt,
            },
            timings,
        ))
    }

    /// Constant w meeting the area constraint and the native target basis.
    pub fn cold_start(&self, config: &LbbpConfig) -> Result<LbbpState> {
        lbbp::initial_state(&self.inputs, &self.psi0.vectors, config)
    }

    /// Solves the reduced problem on farthest-point samples of the target and
    /// lifts it to full resolution.
    pub fn warm_start(&self, config: &LbbpConfig) -> Result<(LbbpState, WarmStartSummary)> {
        let ws = &config.warm_start;
        let n = self.target.num_vertices();
        let samples = ws.samples.min(n);
        let hierarchy = farthest_point_sample(&self.target, &[n, samples], config.seed)?;
        let t = ws.time_factor * self.target.surface_area() / samples as f64;
        let basis = build_diffusion_basis(&self.m2, &self.s2, &hierarchy, 1, t, ws.substeps)?;
        let out = lbbp::warm_start(&self.inputs, &basis, &self.psi0.vectors, config)?;
        let summary = WarmStartSummary {
            samples,
            iterations: out.reduced.iterations,
            energy: out.reduced.energy.total,
            max_descent_gap: out.reduced.max_descent_gap(),
            max_orthonormality_defect: out.reduced.max_orthonormality_defect,
        };
        Ok((out.state, summary))
    }

    /// Runs the full-resolution solve from `start`. Heat features on the
    /// target are refreshed at reinitializations when configured.
    pub fn solve(&mut self, start: LbbpState, config: &LbbpConfig) -> Result<LbbpOutcome> {
        match self.heat_dt.filter(|_| config.features.refresh_on_reinit) {
            Some(dt) => {
                let (m2, s2) = (&self.m2, &self.s2);
                let marks = self.target_features.landmarks.clone();
                let times = self.target_features.times.clone();
                let mut refresh = |w: &DVector<f64>| -> Result<DMatrix<f64>> {
                    let w2: Vec<f64> = w.iter().map(|v| v * v).collect();
                    Ok(heat_features(m2, s2, &marks, &times, dt, Some(&w2))?.values)
                };
                lbbp::solve(&mut self.inputs, start, config, Some(&mut refresh))
            }
            None => lbbp::solve(&mut self.inputs, start, config, None),
        }
    }

    /// Ψ* in input units with its Rayleigh quotients.
    pub fn target_basis(&self, outcome: &LbbpOutcome) -> Eigensystem {
        let psi = &outcome.basis;
        let spsi = self.s2.mul_dense(psi);
        let values = (0..psi.ncols())
            .map(|c| psi.column(c).dot(&spsi.column(c)) * self.scale * self.scale)
            .collect();
        Eigensystem {
            values,
            vectors: psi * self.scale,
            weighting: Weighting::Conformal,
        }
    }
}

/// Full pipeline: eigensystems, features, optional warm start, solve, and
/// nearest-neighbour matching of Φ against Ψ*.
pub fn register(source: &TriangleMesh, target: &TriangleMesh, landmarks: &[(usize, usize)], config: &LbbpConfig) -> Result<Registration> {
    let (mut pair, mut timings) = PreparedPair::new(source, target, landmarks, config)?;
    let clock = Instant::now();
    let (start, warm_start) = if config.warm_start.enabled {
        let (state, summary) = pair.warm_start(config)?;
        (state, Some(summary))
    } else {
        (pair.cold_start(config)?, None)
    };
    timings.warm_start = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let outcome = pair.solve(start, config)?;
    timings.solve = clock.elapsed().as_secs_f64();
    info!(
        "solve finished after {} iterations ({:?}), total energy {:.10e}",
        outcome.iterations, outcome.termination, outcome.energy.total
    );

    let clock = Instant::now();
    let correspondence = point_to_point(&pair.phi.vectors, &outcome.basis)?;
    timings.matching = clock.elapsed().as_secs_f64();
    Ok(Registration {
        correspondence,
        w: outcome.state.w.clone(),
        basis: pair.target_basis(&outcome),
        outcome,
        warm_start,
        scale: pair.scale,
        timings,
    })
}
