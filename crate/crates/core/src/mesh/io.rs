//! ASCII mesh readers (OFF, OBJ, PLY), an OFF writer, and the plain-text
//! vertex-pair format shared by landmark and correspondence files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{MeshOptions, Point, TriangleMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    Ply,
}

impl MeshFormat {
    /// Guess the format from the file extension (case-insensitive).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "off" => Some(Self::Off),
            "obj" => Some(Self::Obj),
            "ply" => Some(Self::Ply),
            _ => None,
        }
    }
}

pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriangleMesh> {
    load_mesh_with_options(path, format, MeshOptions::default())
}

pub fn load_mesh_with_options(
    path: impl AsRef<Path>,
    format: MeshFormat,
    options: MeshOptions,
) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text, format, path, options)
}

/// Parse mesh text; `path` is only used in error messages.
pub fn parse_mesh(text: &str, format: MeshFormat, path: &Path, options: MeshOptions) -> Result<TriangleMesh> {
    let mut p = Parser::new(text, path);
    let (vertices, faces) = match format {
        MeshFormat::Off => p.off()?,
        MeshFormat::Obj => p.obj()?,
        MeshFormat::Ply => p.ply()?,
    };
    TriangleMesh::with_options(vertices, faces, options)
}

pub fn write_off(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "OFF\n{} {} 0", mesh.num_vertices(), mesh.num_faces());
    for p in mesh.vertices() {
        let _ = writeln!(out, "{:e} {:e} {:e}", p.x, p.y, p.z);
    }
    for [a, b, c] in mesh.faces() {
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read "src tgt" pairs of 0-based vertex indices, one per line. Text after
/// '#' is ignored.
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, path)
}

pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut p = Parser::new(text, path);
    let mut pairs = Vec::new();
    while let Some(tokens) = p.next_line() {
        if tokens.len() != 2 {
            return Err(p.error(format!("expected 2 indices, found {}", tokens.len())));
        }
        pairs.push((p.number(tokens[0])?, p.number(tokens[1])?));
    }
    Ok(pairs)
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[(usize, usize)]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_pairs(pairs)).map_err(|e| Error::io(path, e))
}

pub fn format_pairs(pairs: &[(usize, usize)]) -> String {
    let mut out = String::with_capacity(pairs.len() * 12);
    for (a, b) in pairs {
        let _ = writeln!(out, "{a} {b}");
    }
    out
}

/// Line-oriented tokenizer that tracks line numbers for diagnostics.
struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
    path: PathBuf,
}

type Parsed = (Vec<Point>, Vec<[usize; 3]>);

impl<'a> Parser<'a> {
    fn new(text: &'a str, path: &Path) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line: 0,
            path: path.to_path_buf(),
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    /// Next non-empty line with comments stripped, split on whitespace.
    fn next_line(&mut self) -> Option<Vec<&'a str>> {
        for (i, raw) in self.lines.by_ref() {
            let content = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if !tokens.is_empty() {
                self.line = i + 1;
                return Some(tokens);
            }
        }
        None
    }

    fn require_line(&mut self, what: &str) -> Result<Vec<&'a str>> {
        self.next_line()
            .ok_or_else(|| self.error(format!("unexpected end of file, expected {what}")))
    }

    fn number<T: std::str::FromStr>(&self, token: &str) -> Result<T> {
        token
            .parse()
            .map_err(|_| self.error(format!("invalid number '{token}'")))
    }

    fn point(&self, tokens: &[&str]) -> Result<Point> {
        if tokens.len() < 3 {
            return Err(self.error("vertex needs three coordinates"));
        }
        Ok(Point::new(
            self.number(tokens[0])?,
            self.number(tokens[1])?,
            self.number(tokens[2])?,
        ))
    }

    /// Fan-triangulate a polygon after range-checking its indices.
    fn push_polygon(&self, poly: &[usize], n: usize, faces: &mut Vec<[usize; 3]>) -> Result<()> {
        if poly.len() < 3 {
            return Err(self.error("face needs at least three vertices"));
        }
        if let Some(&bad) = poly.iter().find(|&&i| i >= n) {
            return Err(self.error(format!("face index {bad} out of range for {n} vertices")));
        }
        for i in 1..poly.len() - 1 {
            faces.push([poly[0], poly[i], poly[i + 1]]);
        }
        Ok(())
    }

    fn off(&mut self) -> Result<Parsed> {
        let header = self.require_line("OFF header")?;
        let counts = match header.as_slice() {
            ["OFF"] => self.require_line("vertex/face counts")?,
            ["OFF", rest @ ..] => rest.to_vec(),
            _ => return Err(self.error("missing OFF header")),
        };
        if counts.len() < 2 {
            return Err(self.error("expected vertex and face counts"));
        }
        let nv: usize = self.number(counts[0])?;
        let nf: usize = self.number(counts[1])?;

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let t = self.require_line("vertex")?;
            vertices.push(self.point(&t)?);
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let t = self.require_line("face")?;
            let len: usize = self.number(t[0])?;
            if t.len() < len + 1 {
                return Err(self.error(format!("face declares {len} vertices but lists {}", t.len() - 1)));
            }
            let poly = t[1..=len]
                .iter()
                .map(|s| self.number(s))
                .collect::<Result<Vec<usize>>>()?;
            self.push_polygon(&poly, nv, &mut faces)?;
        }
        Ok((vertices, faces))
    }

    fn obj(&mut self) -> Result<Parsed> {
        let mut vertices = Vec::new();
        let mut polygons: Vec<(usize, Vec<i64>)> = Vec::new();
        while let Some(t) = self.next_line() {
            match t[0] {
                "v" => vertices.push(self.point(&t[1..])?),
                "f" => {
                    let idx = t[1..]
                        .iter()
                        .map(|s| self.number::<i64>(s.split('/').next().unwrap_or("")))
                        .collect::<Result<Vec<_>>>()?;
                    polygons.push((self.line, idx));
                }
                _ => {}
            }
        }
        let n = vertices.len();
        let mut faces = Vec::with_capacity(polygons.len());
        for (line, idx) in polygons {
            self.line = line;
            // 1-based, negative values count back from the most recent vertex.
            let poly = idx
                .iter()
                .map(|&i| match i {
                    i if i > 0 => Ok(i as usize - 1),
                    i if i < 0 && (-i) as usize <= n => Ok(n - (-i) as usize),
                    _ => Err(self.error(format!("face index {i} out of range for {n} vertices"))),
                })
                .collect::<Result<Vec<_>>>()?;
            self.push_polygon(&poly, n, &mut faces)?;
        }
        Ok((vertices, faces))
    }

    fn ply(&mut self) -> Result<Parsed> {
        struct Element {
            name: String,
            count: usize,
            properties: Vec<String>,
        }
        if self.require_line("ply magic")? != ["ply"] {
            return Err(self.error("missing 'ply' magic"));
        }
        let mut elements: Vec<Element> = Vec::new();
        loop {
            let t = self.require_line("end_header")?;
            match t[0] {
                "format" => {
                    if t.get(1) != Some(&"ascii") {
                        return Err(self.error("only ASCII PLY is supported"));
                    }
                }
                "element" if t.len() == 3 => elements.push(Element {
                    name: t[1].to_string(),
                    count: self.number(t[2])?,
                    properties: Vec::new(),
                }),
                "property" => {
                    let el = elements
                        .last_mut()
                        .ok_or_else(|| self.error("property before any element"))?;
                    el.properties.push(t.last().unwrap().to_string());
                }
                "end_header" => break,
                "comment" | "obj_info" => {}
                other => return Err(self.error(format!("unexpected header keyword '{other}'"))),
            }
        }

        let mut vertices = Vec::new();
        let mut polygons: Vec<(usize, Vec<usize>)> = Vec::new();
        for el in &elements {
            match el.name.as_str() {
                "vertex" => {
                    let col = |name: &str| {
                        el.properties
                            .iter()
                            .position(|p| p == name)
                            .ok_or_else(|| self.error(format!("vertex element lacks property '{name}'")))
                    };
                    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
                    for _ in 0..el.count {
                        let t = self.require_line("vertex")?;
                        if t.len() < el.properties.len() {
                            return Err(self.error("vertex row shorter than its property list"));
                        }
                        vertices.push(Point::new(
                            self.number(t[ix])?,
                            self.number(t[iy])?,
                            self.number(t[iz])?,
                        ));
                    }
                }
                "face" => {
                    for _ in 0..el.count {
                        let t = self.require_line("face")?;
                        let len: usize = self.number(t[0])?;
                        if t.len() < len + 1 {
                            return Err(self.error("face row shorter than its vertex count"));
                        }
                        let poly = t[1..=len]
                            .iter()
                            .map(|s| self.number(s))
                            .collect::<Result<Vec<usize>>>()?;
                        polygons.push((self.line, poly));
                    }
                }
                _ => {
                    for _ in 0..el.count {
                        self.require_line(&el.name)?;
                    }
                }
            }
        }
        let n = vertices.len();
        let mut faces = Vec::with_capacity(polygons.len());
        for (line, poly) in polygons {
            self.line = line;
            self.push_polygon(&poly, n, &mut faces)?;
        }
        Ok((vertices, faces))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn parse(text: &str, format: MeshFormat) -> Result<TriangleMesh> {
        parse_mesh(text, format, Path::new("test"), MeshOptions::default())
    }

    const TETRA_OFF: &str = "OFF\n# tetrahedron\n4 4 6\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n\
                             3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";

    #[test]
    fn single_triangle_off() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let m = parse_mesh(text, MeshFormat::Off, Path::new("t"), MeshOptions::allowing_boundary()).unwrap();
        assert_eq!((m.num_vertices(), m.num_faces()), (3, 1));
    }

    #[test]
    fn single_triangle_is_open() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        assert!(matches!(parse(text, MeshFormat::Off), Err(Error::Topology(_))));
    }

    #[test]
    fn tetrahedron_off() {
        let m = parse(TETRA_OFF, MeshFormat::Off).unwrap();
        assert!(m.is_closed());
        assert_eq!(m.num_faces(), 4);
    }

    #[test]
    fn out_of_range_face_is_parse_error() {
        let text = TETRA_OFF.replace("3 1 3 2", "3 1 7 2");
        match parse(&text, MeshFormat::Off) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 11),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_number() {
        let text = TETRA_OFF.replace("1 -1 -1", "1 -x -1");
        assert!(matches!(parse(&text, MeshFormat::Off), Err(Error::Parse { .. })));
    }

    #[test]
    fn obj_with_slashes_and_negative_indices() {
        let text = "v 1 1 1\nv 1 -1 -1\nv -1 1 -1\nv -1 -1 1\nvn 0 0 1\n\
                    f 1/1/1 2/2/1 3/3/1\nf 1//1 4//1 2//1\nf -4 -2 -1\nf 2 4 3\n";
        let m = parse(text, MeshFormat::Obj).unwrap();
        assert!(m.is_closed());
    }

    #[test]
    fn ply_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 4\nproperty float x\n\
                    property float y\nproperty float z\nproperty uchar red\nelement face 4\n\
                    property list uchar int vertex_indices\nend_header\n\
                    1 1 1 0\n1 -1 -1 0\n-1 1 -1 0\n-1 -1 1 0\n\
                    3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";
        let m = parse(text, MeshFormat::Ply).unwrap();
        assert_eq!(m.num_vertices(), 4);
        assert!(m.is_closed());
    }

    #[test]
    fn binary_ply_rejected() {
        let text = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(matches!(parse(text, MeshFormat::Ply), Err(Error::Parse { .. })));
    }

    #[test]
    fn quads_are_fan_triangulated() {
        // Cube with quad faces.
        let text = "OFF\n8 6 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n\
                    4 0 3 2 1\n4 4 5 6 7\n4 0 1 5 4\n4 1 2 6 5\n4 2 3 7 6\n4 3 0 4 7\n";
        let m = parse(text, MeshFormat::Off).unwrap();
        assert_eq!(m.num_faces(), 12);
        assert!((m.surface_area() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn off_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sphere.off");
        let mesh = shapes::icosphere(2, 1.5);
        write_off(&mesh, &path).unwrap();
        let back = load_mesh(&path, MeshFormat::from_path(&path).unwrap()).unwrap();
        assert_eq!(back.faces(), mesh.faces());
        assert_eq!(back.vertices(), mesh.vertices());
    }

    #[test]
    fn pairs_round_trip_and_comments() {
        let pairs = parse_pairs("# header\n0 5\n\n3 2 # trailing\n", Path::new("p")).unwrap();
        assert_eq!(pairs, vec![(0, 5), (3, 2)]);
        assert_eq!(format_pairs(&pairs), "0 5\n3 2\n");
        assert!(matches!(
            parse_pairs("1 2 3\n", Path::new("p")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_mesh("/nonexistent/mesh.off", MeshFormat::Off),
            Err(Error::Io { .. })
        ));
    }
}
