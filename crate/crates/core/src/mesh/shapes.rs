//! Procedural meshes used by tests, benchmarks and synthetic fixtures.

use std::collections::HashMap;

use super::{MeshOptions, Point, TriangleMesh};
use crate::error::Result;

const ICOSAHEDRON_FACES: [[usize; 3]; 20] = [
    [0, 11, 5],
    [0, 5, 1],
    [0, 1, 7],
    [0, 7, 10],
    [0, 10, 11],
    [1, 5, 9],
    [5, 11, 4],
    [11, 10, 2],
    [10, 7, 6],
    [7, 1, 8],
    [3, 9, 4],
    [3, 4, 2],
    [3, 2, 6],
    [3, 6, 8],
    [3, 8, 9],
    [4, 9, 5],
    [2, 4, 11],
    [6, 2, 10],
    [8, 6, 7],
    [9, 8, 1],
];

fn icosahedron_vertices() -> Vec<Point> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point::new(x, y, z).normalize())
    .collect()
}

/// Icosphere built by `subdivisions` rounds of midpoint subdivision of an
/// icosahedron, re-projecting to the sphere after each round.
/// Vertex counts: 12, 42, 162, 642, 2562, ...
pub fn icosphere(subdivisions: usize, radius: f64) -> TriangleMesh {
    let mut vertices = icosahedron_vertices();
    let mut faces = ICOSAHEDRON_FACES.to_vec();
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|p| p * radius).collect();
    TriangleMesh::new(vertices, faces).expect("icosphere is a valid closed mesh")
}

/// Class-I geodesic sphere: each icosahedron face split into `frequency`^2
/// triangles, then projected to the sphere. Vertex count is 10 f^2 + 2
/// (frequency 12 gives 1442 vertices).
pub fn geodesic_sphere(frequency: usize, radius: f64) -> TriangleMesh {
    assert!(frequency >= 1);
    let base = icosahedron_vertices();
    let nu = frequency;
    let mut vertices: Vec<Point> = base.clone();
    let mut faces = Vec::with_capacity(20 * nu * nu);
    // Points on an icosahedron edge are shared between two faces; key them by
    // (lo, hi, steps from lo).
    let mut edge_points: HashMap<(usize, usize, usize), usize> = HashMap::new();

    for &[a, b, c] in &ICOSAHEDRON_FACES {
        // Lattice index (i, j): i steps toward b, j steps toward c.
        let mut lattice = vec![vec![usize::MAX; nu + 1]; nu + 1];
        for i in 0..=nu {
            for j in 0..=(nu - i) {
                let k = nu - i - j;
                let id = if i == 0 && j == 0 {
                    a
                } else if i == nu {
                    b
                } else if j == nu {
                    c
                } else if j == 0 {
                    edge_vertex(&mut edge_points, &mut vertices, &base, a, b, i, nu)
                } else if i == 0 {
                    edge_vertex(&mut edge_points, &mut vertices, &base, a, c, j, nu)
                } else if k == 0 {
                    edge_vertex(&mut edge_points, &mut vertices, &base, b, c, j, nu)
                } else {
                    let p = (base[a] * k as f64 + base[b] * i as f64 + base[c] * j as f64) / nu as f64;
                    vertices.push(p.normalize());
                    vertices.len() - 1
                };
                lattice[i][j] = id;
            }
        }
        for i in 0..nu {
            for j in 0..(nu - i) {
                faces.push([lattice[i][j], lattice[i + 1][j], lattice[i][j + 1]]);
                if i + j + 1 < nu {
                    faces.push([lattice[i + 1][j], lattice[i + 1][j + 1], lattice[i][j + 1]]);
                }
            }
        }
    }
    let vertices = vertices.into_iter().map(|p| p * radius).collect();
    TriangleMesh::new(vertices, faces).expect("geodesic sphere is a valid closed mesh")
}

fn edge_vertex(
    cache: &mut HashMap<(usize, usize, usize), usize>,
    vertices: &mut Vec<Point>,
    base: &[Point],
    from: usize,
    to: usize,
    step: usize,
    nu: usize,
) -> usize {
    let (lo, hi, s) = if from < to {
        (from, to, step)
    } else {
        (to, from, nu - step)
    };
    *cache.entry((lo, hi, s)).or_insert_with(|| {
        let t = s as f64 / nu as f64;
        vertices.push((base[lo] * (1.0 - t) + base[hi] * t).normalize());
        vertices.len() - 1
    })
}

/// Regular tetrahedron with the given edge length, centered at the origin.
pub fn regular_tetrahedron(edge: f64) -> TriangleMesh {
    let s = edge / (2.0 * 2f64.sqrt());
    let vertices = vec![
        Point::new(1.0, 1.0, 1.0) * s,
        Point::new(1.0, -1.0, -1.0) * s,
        Point::new(-1.0, 1.0, -1.0) * s,
        Point::new(-1.0, -1.0, 1.0) * s,
    ];
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriangleMesh::new(vertices, faces).expect("tetrahedron is valid")
}

/// Flat `nx` x `ny` grid of squares in the z = 0 plane, each split along its
/// diagonal. Has a boundary.
pub fn flat_grid(nx: usize, ny: usize, spacing: f64) -> TriangleMesh {
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point::new(i as f64 * spacing, j as f64 * spacing, 0.0));
        }
    }
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh::with_options(vertices, faces, MeshOptions::allowing_boundary())
        .expect("grid is a valid mesh")
}

/// Moves every vertex along its position vector: `p -> scale(p) * p`.
/// On a sphere centered at the origin this is a push along the normals.
pub fn radially_deformed(mesh: &TriangleMesh, scale: impl Fn(&Point) -> f64) -> Result<TriangleMesh> {
    mesh.map_vertices(|p| p * scale(p))
}

/// Unit geodesic sphere and a copy with the same connectivity pushed out
/// along the normals by `exp(amplitude * z)`, so one pole is enlarged and
/// the other shrunk. Vertex i of the source corresponds to vertex i of the
/// target.
pub fn stretched_sphere_pair(frequency: usize, amplitude: f64) -> (TriangleMesh, TriangleMesh) {
    let source = geodesic_sphere(frequency, 1.0);
    let target = radially_deformed(&source, |p| (amplitude * p.z).exp()).expect("radial push keeps the mesh valid");
    (source, target)
}

/// Signed enclosed volume; positive for outward-oriented closed meshes.
pub fn signed_volume(mesh: &TriangleMesh) -> f64 {
    let v = mesh.vertices();
    mesh.faces()
        .iter()
        .map(|&[a, b, c]| v[a].dot(&v[b].cross(&v[c])) / 6.0)
        .sum()
}
