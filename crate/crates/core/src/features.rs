//! Corresponding feature functions on source and target (landmark
//! indicators, heat-diffusion snapshots) and the heat-bump basis used by the
//! subsampled warm start.

use std::collections::HashSet;
use std::fmt::Write as _;

use log::{info, warn};
use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{HeatStepper, SparseSymMatrix};
use crate::mesh::SampleHierarchy;

/// Gram matrices with a larger condition number are rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Indicator,
    HeatDiffusion,
}

/// n×ℓ feature values with the landmarks (and times) that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub values: DMatrix<f64>,
    pub landmarks: Vec<usize>,
    /// Snapshot times; empty for indicators. Columns are landmark-major.
    pub times: Vec<f64>,
    pub dt: Option<f64>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex");
        for c in 0..self.len() {
            let _ = write!(out, ",f{c}");
        }
        out.push('\n');
        for (i, row) in self.values.row_iter().enumerate() {
            let _ = write!(out, "{i}");
            for v in row.iter() {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

fn check_landmarks(n: usize, landmarks: &[usize]) -> Result<()> {
    if landmarks.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    let mut seen = HashSet::with_capacity(landmarks.len());
    for &l in landmarks {
        if l >= n {
            return Err(Error::IndexOutOfRange { index: l, len: n });
        }
        if !seen.insert(l) {
            return Err(Error::DuplicateLandmark(l));
        }
    }
    Ok(())
}

/// One column per landmark, 1 at the landmark vertex and 0 elsewhere.
pub fn indicator_features(n: usize, landmarks: &[usize]) -> Result<FeatureSet> {
    check_landmarks(n, landmarks)?;
    let mut values = DMatrix::zeros(n, landmarks.len());
    for (c, &l) in landmarks.iter().enumerate() {
        values[(l, c)] = 1.0;
    }
    Ok(FeatureSet {
        kind: FeatureKind::Indicator,
        values,
        landmarks: landmarks.to_vec(),
        times: Vec::new(),
        dt: None,
    })
}

/// Crank–Nicolson diffusion of each landmark indicator, sampled at `times`
/// (ascending positive multiples of `dt`). `weight` holds w² for diffusion
/// under a deformed metric.
pub fn heat_features(
    m: &SparseSymMatrix,
    s: &SparseSymMatrix,
    landmarks: &[usize],
    times: &[f64],
    dt: f64,
    weight: Option<&[f64]>,
) -> Result<FeatureSet> {
    let n = m.dim();
    check_landmarks(n, landmarks)?;
    let steps = snapshot_steps(times, dt)?;
    let stepper = HeatStepper::new(m, s, dt, weight)?;

    let columns: Vec<Vec<Vec<f64>>> = landmarks
        .par_iter()
        .map(|&l| {
            let mut u = vec![0.0; n];
            u[l] = 1.0;
            let mut done = 0;
            let mut snaps = Vec::with_capacity(steps.len());
            for &target in &steps {
                u = stepper.steps(&u, target - done)?;
                done = target;
                snaps.push(u.clone());
            }
            Ok(snaps)
        })
        .collect::<Result<_>>()?;

    let flat: Vec<&Vec<f64>> = columns.iter().flatten().collect();
    let values = DMatrix::from_fn(n, flat.len(), |i, c| flat[c][i]);
    Ok(FeatureSet {
        kind: FeatureKind::HeatDiffusion,
        values,
        landmarks: landmarks.to_vec(),
        times: times.to_vec(),
        dt: Some(dt),
    })
}

fn snapshot_steps(times: &[f64], dt: f64) -> Result<Vec<usize>> {
    if times.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("heat step dt must be positive, got {dt}")));
    }
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        let r = t / dt;
        let k = r.round();
        if k < 1.0 || (r - k).abs() > 1e-9 * k {
            return Err(Error::InvalidConfig(format!("time {t} is not a positive multiple of dt {dt}")));
        }
        let k = k as usize;
        if steps.last().is_some_and(|&p| k <= p) {
            return Err(Error::InvalidConfig("snapshot times must be strictly ascending".into()));
        }
        steps.push(k);
    }
    Ok(steps)
}

/// Heat bumps centred at the samples of one hierarchy level, normalized to a
/// partition of unity, with the mass-weighted least-squares projection onto
/// their span.
#[derive(Debug, Clone)]
pub struct DiffusionBasis {
    u: DMatrix<f64>,
    samples: Vec<usize>,
    mass: Vec<f64>,
    gram: Cholesky<f64, Dyn>,
    condition: f64,
}

impl DiffusionBasis {
    /// n×n̄ basis matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.u.ncols() == 0
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// (UᵀMU)⁻¹UᵀM f, column by column.
    pub fn project(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if f.nrows() != self.u.nrows() {
            return Err(Error::dims(format!("{} rows for a basis over {} vertices", f.nrows(), self.u.nrows())));
        }
        let mut mf = f.clone();
        for (i, mut row) in mf.row_iter_mut().enumerate() {
            row *= self.mass[i];
        }
        Ok(self.gram.solve(&self.u.tr_mul(&mf)))
    }

    /// U f̄.
    pub fn reconstruct(&self, coefficients: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if coefficients.nrows() != self.len() {
            return Err(Error::dims(format!("{} coefficients for {} basis functions", coefficients.nrows(), self.len())));
        }
        Ok(&self.u * coefficients)
    }
}

/// Basis of heat bumps at the samples of `hierarchy.level(level)`, each a
/// unit delta diffused for time `t` in `substeps` Crank–Nicolson steps.
/// `t = 0` gives the plain deltas.
pub fn build_diffusion_basis(
    m: &SparseSymMatrix,
    s: &SparseSymMatrix,
    hierarchy: &SampleHierarchy,
    level: usize,
    t: f64,
    substeps: usize,
) -> Result<DiffusionBasis> {
    if level >= hierarchy.num_levels() {
        return Err(Error::InvalidLevelSpec(format!(
            "level {level} requested from a hierarchy of {}",
            hierarchy.num_levels()
        )));
    }
    let n = m.dim();
    let samples = hierarchy.level(level).to_vec();
    if samples.iter().any(|&v| v >= n) {
        return Err(Error::dims("hierarchy does not belong to this mesh"));
    }
    let bumps: Vec<Vec<f64>> = if t > 0.0 {
        let stepper = HeatStepper::new(m, s, t / substeps.max(1) as f64, None)?;
        samples
            .par_iter()
            .map(|&v| {
                let mut u = vec![0.0; n];
                u[v] = 1.0;
                stepper.steps(&u, substeps.max(1))
            })
            .collect::<Result<_>>()?
    } else {
        samples
            .iter()
            .map(|&v| {
                let mut u = vec![0.0; n];
                u[v] = 1.0;
                u
            })
            .collect()
    };
    let mut u = DMatrix::from_fn(n, samples.len(), |i, c| bumps[c][i].max(0.0));
    let mut uncovered = 0;
    for mut row in u.row_iter_mut() {
        let total: f64 = row.sum();
        if total > 0.0 {
            row /= total;
        } else {
            uncovered += 1;
        }
    }
    if uncovered > 0 {
        warn!("{uncovered} vertices lie outside every heat bump; increase the diffusion time");
    }

    let mass = m.diagonal();
    let mut mu = u.clone();
    for (i, mut row) in mu.row_iter_mut().enumerate() {
        row *= mass[i];
    }
    let gram = u.tr_mul(&mu);
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = SymmetricEigen::new(gram.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    info!("diffusion basis: {} functions, Gram condition {condition:.3e}", samples.len());
    if condition > MAX_GRAM_CONDITION {
        return Err(Error::IllConditionedGram(condition));
    }
    let gram = Cholesky::new(gram).ok_or(Error::IllConditionedGram(condition))?;
    Ok(DiffusionBasis {
        u,
        samples,
        mass,
        gram,
        condition,
    })
}
