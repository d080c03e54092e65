//! Triangle surface meshes and ASCII OBJ input/output.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{GeometryError, Vec3};

/// Faces with area below this are rejected as degenerate (mm²).
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Triangle surface in millimeters.
///
/// Boundary loops are derived on construction: every edge used by exactly one
/// face belongs to one loop, and loops follow the face winding.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    boundary_loops: Vec<Vec<usize>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= n {
                    return Err(GeometryError::IndexOutOfRange {
                        face: fi,
                        index: i,
                        vertex_count: n,
                    });
                }
            }
        }
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFiniteVertex(v));
        }
        let mesh = Self::from_parts_unchecked(vertices, faces);
        if let Some(fi) = (0..mesh.faces.len()).find(|&fi| mesh.face_area(fi) < DEGENERATE_AREA) {
            return Err(GeometryError::DegenerateFace(fi));
        }
        Ok(mesh)
    }

    /// Builds the mesh without the degenerate-face check. Indices must be valid.
    pub(crate) fn from_parts_unchecked(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        let boundary_loops = trace_boundary_loops(&faces);
        Self {
            vertices,
            faces,
            boundary_loops,
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_loops.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unit normal following the right-hand rule on the face winding.
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume; positive for a closed mesh with outward normals.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0
            })
            .sum()
    }

    pub fn edge_count(&self) -> usize {
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    /// V − E + F over vertices referenced by at least one face.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &i in f {
                used[i] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_count() as i64 + self.faces.len() as i64
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.vertices.len().max(1) as f64;
        self.vertices.iter().fold(Vec3::zeros(), |acc, v| acc + v) / n
    }

    /// Same topology with every vertex mapped through `f`.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
            boundary_loops: self.boundary_loops.clone(),
        }
    }

    /// Same topology with replacement vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<TriMesh, GeometryError> {
        if vertices.len() != self.vertices.len() {
            return Err(GeometryError::VertexCountMismatch {
                expected: self.vertices.len(),
                found: vertices.len(),
            });
        }
        Ok(TriMesh {
            vertices,
            faces: self.faces.clone(),
            boundary_loops: self.boundary_loops.clone(),
        })
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh, GeometryError> {
        let path = path.as_ref();
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(GeometryError::FileNotFound(path.to_path_buf()))
            }
            Err(e) => return Err(GeometryError::Io(e)),
        };
        parse_obj(&text)
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() && !parent.is_dir() {
                return Err(GeometryError::FileNotFound(parent.to_path_buf()));
            }
        }
        std::fs::write(path, self.to_obj_string())?;
        Ok(())
    }

    /// OBJ text with shortest round-trip float formatting.
    pub fn to_obj_string(&self) -> String {
        let mut out = String::with_capacity(self.vertices.len() * 40 + self.faces.len() * 20);
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }

    /// Subdivided icosahedron projected onto a sphere.
    pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> TriMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v: Vec<Vec3> = [
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
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        #[rustfmt::skip]
        let mut f: Vec<[usize; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut split = |a: usize, b: usize, v: &mut Vec<Vec3>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    v.push(((v[a] + v[b]) * 0.5).normalize());
                    v.len() - 1
                })
            };
            let mut nf = Vec::with_capacity(f.len() * 4);
            for [a, b, c] in f {
                let ab = split(a, b, &mut v);
                let bc = split(b, c, &mut v);
                let ca = split(c, a, &mut v);
                nf.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            f = nf;
        }
        let v = v.into_iter().map(|p| center + p * radius).collect();
        TriMesh::from_parts_unchecked(v, f)
    }
}

/// Parses `v` and `f` records. Polygonal faces are fan-triangulated; texture
/// and normal indices (`f 1/2/3`) are ignored, as are all other record types.
pub fn parse_obj(text: &str) -> Result<TriMesh, GeometryError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| GeometryError::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                if coords.len() != 3 {
                    return Err(GeometryError::Parse {
                        line: line_no,
                        message: "vertex needs three coordinates".into(),
                    });
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in parts {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| GeometryError::Parse {
                        line: line_no,
                        message: format!("bad face index `{tok}`"),
                    })?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(GeometryError::Parse {
                            line: line_no,
                            message: "face index 0 is invalid".into(),
                        });
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(GeometryError::IndexOutOfRange {
                            face: faces.len(),
                            index: i.unsigned_abs() as usize,
                            vertex_count: vertices.len(),
                        });
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(GeometryError::Parse {
                        line: line_no,
                        message: "face needs at least three vertices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

fn trace_boundary_loops(faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut count: HashMap<(usize, usize), u32> = HashMap::new();
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    // Directed boundary edges in face winding order, bucketed by start vertex.
    let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut starts = Vec::new();
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if count[&(a.min(b), a.max(b))] == 1 {
                next.entry(a).or_default().push(b);
                starts.push(a);
            }
        }
    }
    let mut loops = Vec::new();
    for start in starts {
        if next.get(&start).is_none_or(|v| v.is_empty()) {
            continue;
        }
        let mut lp = vec![start];
        let mut cur = start;
        loop {
            let Some(outs) = next.get_mut(&cur) else { break };
            let Some(nxt) = outs.pop() else { break };
            if nxt == start {
                break;
            }
            lp.push(nxt);
            cur = nxt;
        }
        loops.push(lp);
    }
    loops
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> TriMesh {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let f = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        TriMesh::new(v, f).unwrap()
    }

    #[test]
    fn minimal_obj() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.vertices().len(), 3);
        assert_eq!(m.faces().len(), 1);
        assert_eq!(m.boundary_loops().len(), 1);
        assert_eq!(m.boundary_loops()[0].len(), 3);
    }

    #[test]
    fn bad_face_index() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 99\n").unwrap_err();
        assert!(matches!(err, GeometryError::IndexOutOfRange { index: 99, .. }), "{err:?}");
    }

    #[test]
    fn parse_error_reports_line() {
        let err = parse_obj("v 0 0 0\nv 1 zero 0\n").unwrap_err();
        assert!(matches!(err, GeometryError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn missing_file() {
        let err = TriMesh::load_obj("/definitely/not/here.obj").unwrap_err();
        assert!(matches!(err, GeometryError::FileNotFound(_)));
    }

    #[test]
    fn quads_and_slashes() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n").unwrap();
        assert_eq!(m.faces().len(), 2);
    }

    #[test]
    fn degenerate_face_rejected() {
        let v = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert!(matches!(
            TriMesh::new(v, vec![[0, 1, 2]]),
            Err(GeometryError::DegenerateFace(0))
        ));
    }

    #[test]
    fn closed_tetrahedron() {
        let m = tetra();
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
    }
}
