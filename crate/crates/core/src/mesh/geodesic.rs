use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Weighted graph for approximate geodesics: mesh edges plus, for every
/// interior edge, a shortcut between the two opposite vertices whenever the
/// straight segment through the unfolded face pair crosses that edge.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    lengths: Vec<f64>,
}

impl EdgeGraph {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let v = mesh.vertices();
        let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.edges().len() * 2);
        for e in mesh.edges() {
            let [i, j] = e.vertices;
            pairs.push((i, j, (v[i] - v[j]).norm()));
            if let [Some(k), Some(l)] = e.opposite {
                if let Some(d) = unfolded_distance(mesh, i, j, k, l) {
                    pairs.push((k, l, d));
                }
            }
        }

        let n = mesh.num_vertices();
        let mut degree = vec![0usize; n + 1];
        for &(a, b, _) in &pairs {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; offsets[n]];
        let mut lengths = vec![0.0; offsets[n]];
        for &(a, b, d) in &pairs {
            targets[fill[a]] = b;
            lengths[fill[a]] = d;
            fill[a] += 1;
            targets[fill[b]] = a;
            lengths[fill[b]] = d;
            fill[b] += 1;
        }
        Self {
            offsets,
            targets,
            lengths,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Single-source shortest path lengths (Dijkstra).
    pub fn distances(&self, source: usize) -> Result<Vec<f64>> {
        let n = self.num_vertices();
        if source >= n {
            return Err(Error::IndexOutOfRange { index: source, len: n });
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Candidate { dist: 0.0, vertex: source });
        while let Some(Candidate { dist: d, vertex: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for e in self.offsets[u]..self.offsets[u + 1] {
                let v = self.targets[e];
                let nd = d + self.lengths[e];
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Candidate { dist: nd, vertex: v });
                }
            }
        }
        if let Some(unreachable) = dist.iter().position(|d| d.is_infinite()) {
            return Err(Error::DisconnectedMesh {
                source_vertex: source,
                unreachable,
            });
        }
        Ok(dist)
    }
}

/// Approximate geodesic distance from `source` to every vertex.
pub fn geodesic_distance(mesh: &TriangleMesh, source: usize) -> Result<Vec<f64>> {
    EdgeGraph::new(mesh).distances(source)
}

/// Length of the segment k-l after unfolding triangles (i, j, k) and (j, i, l)
/// into the plane, provided the segment passes through edge i-j.
fn unfolded_distance(mesh: &TriangleMesh, i: usize, j: usize, k: usize, l: usize) -> Option<f64> {
    let v = mesh.vertices();
    let e = (v[j] - v[i]).norm();
    let place = |p: usize| {
        let a = (v[p] - v[i]).norm();
        let b = (v[p] - v[j]).norm();
        let x = (a * a - b * b + e * e) / (2.0 * e);
        let y = (a * a - x * x).max(0.0).sqrt();
        (x, y)
    };
    let (xk, yk) = place(k);
    let (xl, yl) = place(l);
    let yl = -yl;
    if yk <= 0.0 || yl >= 0.0 {
        return None;
    }
    let xc = xk + (xl - xk) * yk / (yk - yl);
    if xc <= 0.0 || xc >= e {
        return None;
    }
    Some(((xk - xl).powi(2) + (yk - yl).powi(2)).sqrt())
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist: f64,
    vertex: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Reversed so the max-heap pops the closest vertex; ties by index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}
