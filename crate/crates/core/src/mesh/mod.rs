//! Triangle meshes: storage, validation, adjacency, and the geometric queries
//! the rest of the crate is built on.

mod geodesic;
pub(crate) mod geometry;
pub mod io;
mod sampling;
pub mod shapes;

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use geodesic::{geodesic_distance, EdgeGraph};
pub use geometry::vertex_areas;
pub use sampling::{farthest_point_order, farthest_point_sample, farthest_point_sample_from, SampleHierarchy};

pub type Point = Vector3<f64>;

/// Relative area below which a face counts as degenerate (scaled by the
/// squared bounding-box diagonal).
pub const DEGENERATE_AREA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeshOptions {
    /// Accept edges with a single incident face.
    pub allow_boundary: bool,
}

impl MeshOptions {
    pub fn allowing_boundary() -> Self {
        Self {
            allow_boundary: true,
        }
    }
}

/// An undirected edge with up to two incident faces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    /// Endpoints, smaller index first.
    pub vertices: [usize; 2],
    /// Incident faces; the second slot is empty on a boundary edge.
    pub faces: [Option<usize>; 2],
    /// Vertex opposite the edge in each incident face.
    pub opposite: [Option<usize>; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.faces[1].is_none()
    }
}

/// A validated, edge-manifold, consistently oriented triangle mesh.
///
/// Immutable after construction; adjacency is built once in [`TriangleMesh::new`].
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
    vertex_faces: Vec<Vec<usize>>,
    vertex_neighbors: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

impl TriangleMesh {
    /// Closed-surface constructor: boundary edges are rejected.
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_options(vertices, faces, MeshOptions::default())
    }

    pub fn with_options(
        vertices: Vec<Point>,
        faces: Vec<[usize; 3]>,
        options: MeshOptions,
    ) -> Result<Self> {
        let n = vertices.len();
        if n < 3 || faces.is_empty() {
            return Err(Error::Topology(format!(
                "mesh needs at least 3 vertices and 1 face (got {n} and {})",
                faces.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Topology(format!("vertex {i} has a non-finite coordinate")));
        }

        let diag2 = bounding_box_diagonal(&vertices).powi(2);
        let area_floor = DEGENERATE_AREA_TOL * diag2;
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&v) = f.iter().find(|&&v| v >= n) {
                return Err(Error::IndexOutOfRange { index: v, len: n });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Topology(format!("face {fi} repeats a vertex: {f:?}")));
            }
            let area = geometry::triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if area <= area_floor {
                return Err(Error::Topology(format!(
                    "face {fi} is degenerate (area {area:.3e})"
                )));
            }
        }

        let mut vertex_faces = vec![Vec::new(); n];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }
        if let Some(v) = vertex_faces.iter().position(Vec::is_empty) {
            return Err(Error::Topology(format!("vertex {v} is not referenced by any face")));
        }

        let edges = build_edges(&faces, options)?;

        let mut vertex_neighbors = vec![Vec::new(); n];
        for e in &edges {
            vertex_neighbors[e.vertices[0]].push(e.vertices[1]);
            vertex_neighbors[e.vertices[1]].push(e.vertices[0]);
        }
        for nb in &mut vertex_neighbors {
            nb.sort_unstable();
        }

        let mesh = Self {
            vertices,
            faces,
            vertex_faces,
            vertex_neighbors,
            edges,
        };
        let non_delaunay = mesh.count_non_delaunay_edges();
        if non_delaunay > 0 {
            log::debug!("{non_delaunay} interior edges violate the Delaunay condition");
        }
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Faces incident to vertex `v` (its first ring).
    pub fn one_ring(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    /// Vertices sharing an edge with `v`, sorted.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.vertex_neighbors[v]
    }

    pub fn is_closed(&self) -> bool {
        self.edges.iter().all(|e| !e.is_boundary())
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        bounding_box_diagonal(&self.vertices)
    }

    /// Applies `f` to every vertex position, keeping connectivity.
    pub fn map_vertices(&self, f: impl Fn(&Point) -> Point) -> Result<Self> {
        let options = MeshOptions {
            allow_boundary: !self.is_closed(),
        };
        Self::with_options(self.vertices.iter().map(f).collect(), self.faces.clone(), options)
    }

    /// Uniformly scales all coordinates.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        self.map_vertices(|p| p * factor)
    }

    /// Rebuilds the one-ring and edge tables from the face list and compares
    /// them with the stored adjacency.
    pub fn check_adjacency(&self) -> bool {
        let mut rings = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                rings[v].push(fi);
            }
        }
        if rings != self.vertex_faces {
            return false;
        }
        let options = MeshOptions {
            allow_boundary: true,
        };
        matches!(build_edges(&self.faces, options), Ok(e) if e == self.edges)
    }

    /// Number of interior edges whose opposite angles sum to more than pi.
    pub fn count_non_delaunay_edges(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| match e.opposite {
                [Some(a), Some(b)] => {
                    let [i, j] = e.vertices;
                    let alpha = geometry::angle_at(&self.vertices, a, i, j);
                    let beta = geometry::angle_at(&self.vertices, b, i, j);
                    alpha + beta > std::f64::consts::PI + 1e-12
                }
                _ => false,
            })
            .count()
    }
}

fn bounding_box_diagonal(vertices: &[Point]) -> f64 {
    let mut lo = Point::repeat(f64::INFINITY);
    let mut hi = Point::repeat(f64::NEG_INFINITY);
    for p in vertices {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

fn build_edges(faces: &[[usize; 3]], options: MeshOptions) -> Result<Vec<Edge>> {
    let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3 / 2);
    let mut edges: Vec<Edge> = Vec::with_capacity(faces.len() * 3 / 2);
    // Direction in which each edge was first traversed, to check orientation.
    let mut first_dir: Vec<(usize, usize)> = Vec::with_capacity(faces.len() * 3 / 2);

    for (fi, f) in faces.iter().enumerate() {
        for c in 0..3 {
            let (a, b, opp) = (f[c], f[(c + 1) % 3], f[(c + 2) % 3]);
            let key = (a.min(b), a.max(b));
            match index.get(&key) {
                None => {
                    index.insert(key, edges.len());
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        faces: [Some(fi), None],
                        opposite: [Some(opp), None],
                    });
                    first_dir.push((a, b));
                }
                Some(&ei) => {
                    let e = &mut edges[ei];
                    if e.faces[1].is_some() {
                        return Err(Error::Topology(format!(
                            "edge ({}, {}) is shared by more than two faces",
                            key.0, key.1
                        )));
                    }
                    if first_dir[ei] == (a, b) {
                        return Err(Error::Topology(format!(
                            "inconsistent orientation across edge ({}, {})",
                            key.0, key.1
                        )));
                    }
                    e.faces[1] = Some(fi);
                    e.opposite[1] = Some(opp);
                }
            }
        }
    }

    if !options.allow_boundary {
        if let Some(e) = edges.iter().find(|e| e.is_boundary()) {
            return Err(Error::Topology(format!(
                "boundary edge ({}, {}) in a mesh required to be closed",
                e.vertices[0], e.vertices[1]
            )));
        }
    }
    Ok(edges)
}
