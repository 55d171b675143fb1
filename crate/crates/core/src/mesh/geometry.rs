use super::{Point, TriangleMesh};

pub(crate) fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Interior angle at `apex` in the triangle (apex, i, j).
pub(crate) fn angle_at(vertices: &[Point], apex: usize, i: usize, j: usize) -> f64 {
    let u = vertices[i] - vertices[apex];
    let v = vertices[j] - vertices[apex];
    u.cross(&v).norm().atan2(u.dot(&v))
}

/// Cotangent of the angle at `apex` in the triangle (apex, i, j).
pub(crate) fn cot_at(vertices: &[Point], apex: usize, i: usize, j: usize) -> f64 {
    let u = vertices[i] - vertices[apex];
    let v = vertices[j] - vertices[apex];
    u.dot(&v) / u.cross(&v).norm()
}

impl TriangleMesh {
    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces()[f];
        let v = self.vertices();
        triangle_area(&v[a], &v[b], &v[c])
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.num_faces()).map(|f| self.face_area(f)).collect()
    }

    pub fn surface_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    /// Total area of the faces around each vertex (the full first ring, not
    /// the one-third share used for lumped mass).
    pub fn first_ring_areas(&self) -> Vec<f64> {
        let areas = self.face_areas();
        (0..self.num_vertices())
            .map(|v| self.one_ring(v).iter().map(|&f| areas[f]).sum())
            .collect()
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Point> {
        let v = self.vertices();
        let mut normals = vec![Point::zeros(); v.len()];
        for &[a, b, c] in self.faces() {
            let n = (v[b] - v[a]).cross(&(v[c] - v[a]));
            for i in [a, b, c] {
                normals[i] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }
}

/// Lumped vertex areas: one third of the area of every incident face.
pub fn vertex_areas(mesh: &TriangleMesh) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_vertices()];
    for (f, &[a, b, c]) in mesh.faces().iter().enumerate() {
        let third = mesh.face_area(f) / 3.0;
        out[a] += third;
        out[b] += third;
        out[c] += third;
    }
    out
}
