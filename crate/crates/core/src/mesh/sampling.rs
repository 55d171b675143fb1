use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{vertex_areas, EdgeGraph, TriangleMesh};
use crate::error::{Error, Result};

/// Nested vertex subsets produced by farthest-point sampling.
///
/// `levels[0]` is every vertex; each following level is a subset of the one
/// before it, stored in selection order. Every mesh vertex is owned by its
/// geodesically nearest sample at each level, and a sample's mass is the
/// lumped area of the vertices it owns.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleHierarchy {
    levels: Vec<Vec<usize>>,
    masses: Vec<Vec<f64>>,
    owners: Vec<Vec<usize>>,
}

impl SampleHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, i: usize) -> &[usize] {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    /// Aggregated area per retained vertex at level `i`.
    pub fn masses(&self, i: usize) -> &[f64] {
        &self.masses[i]
    }

    /// For each mesh vertex, the position within `level(i)` of its owner.
    pub fn owners(&self, i: usize) -> &[usize] {
        &self.owners[i]
    }
}

/// Output of one farthest-point pass.
#[derive(Debug, Clone)]
pub struct FarthestPoints {
    pub order: Vec<usize>,
    /// Distance from each point to the nearest selected point.
    pub min_distance: Vec<f64>,
    /// Position in `order` of the nearest selected point.
    pub nearest: Vec<usize>,
}

/// Greedy farthest-point selection over `candidates` under an arbitrary
/// metric. The first pick is the candidate farthest from `start`; each later
/// pick maximizes the distance to everything chosen so far. Ties go to the
/// candidate listed first.
pub fn farthest_point_order<F>(
    candidates: &[usize],
    start: usize,
    count: usize,
    mut distance_from: F,
) -> Result<FarthestPoints>
where
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    if count == 0 || count > candidates.len() {
        return Err(Error::InvalidLevelSpec(format!(
            "cannot pick {count} points from {} candidates",
            candidates.len()
        )));
    }
    let from_start = distance_from(start)?;
    let first = argmax(candidates, |c| from_start[c]);

    let mut order = vec![first];
    let mut min_distance = distance_from(first)?;
    let mut nearest = vec![0usize; min_distance.len()];
    let mut chosen = vec![false; min_distance.len()];
    chosen[first] = true;

    while order.len() < count {
        let next = argmax(candidates, |c| if chosen[c] { f64::NEG_INFINITY } else { min_distance[c] });
        chosen[next] = true;
        let slot = order.len();
        order.push(next);
        let d = distance_from(next)?;
        for (v, &dv) in d.iter().enumerate() {
            if dv < min_distance[v] {
                min_distance[v] = dv;
                nearest[v] = slot;
            }
        }
    }
    Ok(FarthestPoints {
        order,
        min_distance,
        nearest,
    })
}

fn argmax(candidates: &[usize], key: impl Fn(usize) -> f64) -> usize {
    let mut best = candidates[0];
    let mut best_key = key(best);
    for &c in &candidates[1..] {
        let k = key(c);
        if k > best_key {
            best = c;
            best_key = k;
        }
    }
    best
}

/// Geodesic farthest-point hierarchy with the start vertex drawn from `seed`.
/// `counts` must start at the vertex count and strictly decrease.
pub fn farthest_point_sample(mesh: &TriangleMesh, counts: &[usize], seed: u64) -> Result<SampleHierarchy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..mesh.num_vertices());
    farthest_point_sample_from(mesh, counts, start)
}

/// Like [`farthest_point_sample`] with an explicit start vertex.
pub fn farthest_point_sample_from(
    mesh: &TriangleMesh,
    counts: &[usize],
    start: usize,
) -> Result<SampleHierarchy> {
    let n = mesh.num_vertices();
    validate_counts(counts, n)?;
    if start >= n {
        return Err(Error::IndexOutOfRange { index: start, len: n });
    }
    let areas = vertex_areas(mesh);
    let graph = EdgeGraph::new(mesh);

    let mut levels = vec![(0..n).collect::<Vec<_>>()];
    let mut masses = vec![areas.clone()];
    let mut owners = vec![(0..n).collect::<Vec<_>>()];

    for &count in &counts[1..] {
        let fps = farthest_point_order(levels.last().unwrap(), start, count, |v| graph.distances(v))?;
        let mut mass = vec![0.0; count];
        for (v, &owner) in fps.nearest.iter().enumerate() {
            mass[owner] += areas[v];
        }
        levels.push(fps.order);
        masses.push(mass);
        owners.push(fps.nearest);
    }
    Ok(SampleHierarchy {
        levels,
        masses,
        owners,
    })
}

fn validate_counts(counts: &[usize], n: usize) -> Result<()> {
    match counts.first() {
        None => return Err(Error::InvalidLevelSpec("no levels given".into())),
        Some(&c) if c != n => {
            return Err(Error::InvalidLevelSpec(format!(
                "first level must contain all {n} vertices, got {c}"
            )))
        }
        _ => {}
    }
    if let Some(w) = counts.windows(2).find(|w| w[1] >= w[0] || w[1] == 0) {
        return Err(Error::InvalidLevelSpec(format!(
            "level sizes must strictly decrease and stay positive ({} -> {})",
            w[0], w[1]
        )));
    }
    Ok(())
}
