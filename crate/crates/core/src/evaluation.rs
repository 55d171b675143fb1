//! Correspondence quality: normalized geodesic errors against a ground-truth
//! map, and the reference conformal factor from first-ring area ratios.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correspondence::Correspondence;
use crate::error::{Error, Result};
use crate::mesh::{EdgeGraph, TriangleMesh};

/// Number of thresholds in the cumulative curve.
pub const CURVE_POINTS: usize = 200;
/// Largest threshold of the cumulative curve.
pub const CURVE_MAX: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean: f64,
    pub max: f64,
    pub fraction_exact: f64,
    /// Fraction with error ≤ 0.05.
    pub fraction_within_5pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// Per source vertex: geodesic distance between predicted and true
    /// image, divided by √(target area).
    pub errors: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// Fraction of errors ≤ each threshold.
    pub curve: Vec<f64>,
    pub summary: ErrorSummary,
}

impl ErrorReport {
    pub fn from_errors(errors: Vec<f64>) -> Self {
        let thresholds: Vec<f64> = (0..CURVE_POINTS)
            .map(|i| CURVE_MAX * i as f64 / (CURVE_POINTS - 1) as f64)
            .collect();
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let n = errors.len().max(1) as f64;
        let fraction_le = |t: f64| sorted.partition_point(|e| *e <= t) as f64 / n;
        let curve = thresholds.iter().map(|&t| fraction_le(t)).collect();
        let summary = ErrorSummary {
            count: errors.len(),
            mean: errors.iter().sum::<f64>() / n,
            max: sorted.last().copied().unwrap_or(0.0),
            fraction_exact: fraction_le(0.0),
            fraction_within_5pct: fraction_le(0.05),
        };
        Self {
            errors,
            thresholds,
            curve,
            summary,
        }
    }

    /// "threshold,fraction" rows in full precision.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("threshold,fraction\n");
        for (t, f) in self.thresholds.iter().zip(&self.curve) {
            let _ = writeln!(out, "{t:.16e},{f:.16e}");
        }
        out
    }

    /// "source,error" rows in full precision.
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("source,error\n");
        for (i, e) in self.errors.iter().enumerate() {
            let _ = writeln!(out, "{i},{e:.16e}");
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

/// Normalized geodesic error of `corr` against `truth` on the target mesh.
pub fn geodesic_errors(corr: &Correspondence, truth: &Correspondence, target: &TriangleMesh) -> Result<ErrorReport> {
    if corr.len() != truth.len() {
        return Err(Error::dims(format!(
            "correspondence covers {} source vertices, ground truth {}",
            corr.len(),
            truth.len()
        )));
    }
    let n = target.num_vertices();
    for &t in corr.index_map.iter().chain(&truth.index_map) {
        if t >= n {
            return Err(Error::IndexOutOfRange { index: t, len: n });
        }
    }
    // One shortest-path solve per distinct true image.
    let mut by_truth: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &t) in truth.index_map.iter().enumerate() {
        by_truth.entry(t).or_default().push(i);
    }
    let graph = EdgeGraph::new(target);
    let scale = 1.0 / target.surface_area().sqrt();
    let groups: Vec<(usize, Vec<usize>)> = by_truth.into_iter().collect();
    let partial: Vec<Vec<(usize, f64)>> = groups
        .par_iter()
        .map(|(t, sources)| {
            let d = graph.distances(*t)?;
            Ok(sources.iter().map(|&i| (i, d[corr.index_map[i]] * scale)).collect())
        })
        .collect::<Result<_>>()?;
    let mut errors = vec![0.0; corr.len()];
    for (i, e) in partial.into_iter().flatten() {
        errors[i] = e;
    }
    Ok(ErrorReport::from_errors(errors))
}

/// Reference log conformal factor on the target: for each source vertex i
/// with true image t, u(t) = ½·ln(ring_area_source(i) / ring_area_target(t)),
/// so w² = e^{2u} scales target areas to source areas (u < 0 where the target
/// is larger). Target vertices hit by several sources get the mean; vertices
/// hit by none are NaN.
pub fn ground_truth_conformal(source: &TriangleMesh, target: &TriangleMesh, truth: &Correspondence) -> Result<Vec<f64>> {
    if truth.len() != source.num_vertices() {
        return Err(Error::dims(format!(
            "ground truth covers {} vertices, source has {}",
            truth.len(),
            source.num_vertices()
        )));
    }
    let (rs, rt) = (source.first_ring_areas(), target.first_ring_areas());
    let mut sum = vec![0.0; target.num_vertices()];
    let mut count = vec![0usize; target.num_vertices()];
    for (i, &t) in truth.index_map.iter().enumerate() {
        if t >= rt.len() {
            return Err(Error::IndexOutOfRange { index: t, len: rt.len() });
        }
        sum[t] += 0.5 * (rs[i] / rt[t]).ln();
        count[t] += 1;
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect())
}

/// Pearson correlation over the entries where both values are finite.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(format!("{} vs {} values", a.len(), b.len())));
    }
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .collect();
    let n = pairs.len() as f64;
    let (ma, mb) = (
        pairs.iter().map(|p| p.0).sum::<f64>() / n,
        pairs.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::MatchMethod;
    use crate::mesh::{geodesic_distance, shapes};

    fn map(v: Vec<usize>) -> Correspondence {
        Correspondence {
            index_map: v,
            method: MatchMethod::Given,
            distances: None,
        }
    }

    #[test]
    fn perfect_map_has_zero_error() {
        let mesh = shapes::icosphere(2, 1.0);
        let id = Correspondence::identity(mesh.num_vertices());
        let r = geodesic_errors(&id, &id, &mesh).unwrap();
        assert!(r.errors.iter().all(|e| *e == 0.0));
        assert!(r.curve.iter().all(|c| *c == 1.0));
        assert_eq!(r.summary.fraction_exact, 1.0);
        assert_eq!(r.thresholds.len(), CURVE_POINTS);
        assert_eq!((r.thresholds[0], *r.thresholds.last().unwrap()), (0.0, CURVE_MAX));
    }

    #[test]
    fn collapsed_map_matches_direct_average() {
        let mesh = shapes::icosphere(2, 1.0);
        let n = mesh.num_vertices();
        let r = geodesic_errors(&map(vec![7; n]), &Correspondence::identity(n), &mesh).unwrap();
        let d = geodesic_distance(&mesh, 7).unwrap();
        let direct = d.iter().sum::<f64>() / n as f64 / mesh.surface_area().sqrt();
        assert!((r.summary.mean - direct).abs() < 1e-12);
        assert!(r.curve.windows(2).all(|w| w[0] <= w[1]));
        assert!((r.summary.fraction_exact - 1.0 / n as f64).abs() < 1e-15);
        assert_eq!(r.summary.fraction_exact, r.curve[0]);
    }

    #[test]
    fn uniform_scaling_leaves_errors_unchanged() {
        let mesh = shapes::icosphere(2, 1.0);
        let big = mesh.scaled(3.0).unwrap();
        let n = mesh.num_vertices();
        let corr = map((0..n).map(|i| (i * 7 + 3) % n).collect());
        let id = Correspondence::identity(n);
        let a = geodesic_errors(&corr, &id, &mesh).unwrap();
        let b = geodesic_errors(&corr, &id, &big).unwrap();
        for (x, y) in a.errors.iter().zip(&b.errors) {
            assert!((x - y).abs() < 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mesh = shapes::icosphere(1, 1.0);
        let r = geodesic_errors(&Correspondence::identity(3), &Correspondence::identity(4), &mesh);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn conformal_reference() {
        let mesh = shapes::icosphere(2, 1.0);
        let id = Correspondence::identity(mesh.num_vertices());
        assert!(ground_truth_conformal(&mesh, &mesh, &id).unwrap().iter().all(|u| u.abs() < 1e-15));
        let big = mesh.scaled(2.0).unwrap();
        let u = ground_truth_conformal(&mesh, &big, &id).unwrap();
        assert!(u.iter().all(|u| (u + 2f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, f64::NAN];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &[3.0, 2.0, 1.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
    }
}
