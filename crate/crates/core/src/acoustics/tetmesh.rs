//! Linear tetrahedral meshes of swept tubes.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::geometry::{CanalGeometry, CanalSpec, SweptTube, Vec3};

use super::AcousticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Entrance,
    Drum,
    Wall,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Entrance => "entrance",
            Self::Drum => "drum",
            Self::Wall => "wall",
        })
    }
}

impl FromStr for BoundaryTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "entrance" => Ok(Self::Entrance),
            "drum" => Ok(Self::Drum),
            "wall" => Ok(Self::Wall),
            other => Err(format!("unknown boundary tag `{other}`")),
        }
    }
}

/// Tetrahedra in SI units with tagged, outward-oriented boundary triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    pub vertices: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    pub boundary_faces: Vec<([usize; 3], BoundaryTag)>,
}

fn signed_volume(p: [Vec3; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

/// Faces of a positively oriented tetrahedron, normals pointing out.
fn outward_faces(t: [usize; 4]) -> [[usize; 3]; 4] {
    [
        [t[1], t[2], t[3]],
        [t[0], t[3], t[2]],
        [t[0], t[1], t[3]],
        [t[0], t[2], t[1]],
    ]
}

fn face_key(f: [usize; 3]) -> [usize; 3] {
    let mut k = f;
    k.sort_unstable();
    k
}

/// Faces used by exactly one tetrahedron, oriented outward.
fn boundary_of(tets: &[[usize; 4]]) -> Vec<[usize; 3]> {
    let mut count: HashMap<[usize; 3], (usize, [usize; 3])> = HashMap::new();
    for &t in tets {
        for f in outward_faces(t) {
            count.entry(face_key(f)).or_insert((0, f)).0 += 1;
        }
    }
    let mut out: Vec<[usize; 3]> = count.into_values().filter(|(n, _)| *n == 1).map(|(_, f)| f).collect();
    out.sort_unstable_by_key(|f| face_key(*f));
    out
}

impl TetMesh {
    pub fn new(
        vertices: Vec<Vec3>,
        tets: Vec<[usize; 4]>,
        boundary_faces: Vec<([usize; 3], BoundaryTag)>,
    ) -> Result<Self, AcousticsError> {
        let mesh = Self {
            vertices,
            tets,
            boundary_faces,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), AcousticsError> {
        let bad = |m: String| Err(AcousticsError::InvalidMesh(m));
        let n = self.vertices.len();
        if self.tets.is_empty() {
            return bad("no tetrahedra".into());
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return bad("non-finite vertex".into());
        }
        for (i, t) in self.tets.iter().enumerate() {
            if t.iter().any(|&k| k >= n) {
                return bad(format!("tetrahedron {i} indexes past {n} vertices"));
            }
            if !(self.tet_volume(i) > 0.0) {
                return bad(format!("tetrahedron {i} has non-positive volume"));
            }
        }
        let mut tagged: Vec<[usize; 3]> = self.boundary_faces.iter().map(|(f, _)| face_key(*f)).collect();
        tagged.sort_unstable();
        let mut actual: Vec<[usize; 3]> = boundary_of(&self.tets).into_iter().map(face_key).collect();
        actual.sort_unstable();
        if tagged != actual {
            return bad("tagged faces do not match the mesh boundary".into());
        }
        for tag in [BoundaryTag::Entrance, BoundaryTag::Drum] {
            if !self.boundary_faces.iter().any(|(_, t)| *t == tag) {
                return bad(format!("no {tag} faces"));
            }
        }
        Ok(())
    }

    pub fn tet_points(&self, i: usize) -> [Vec3; 4] {
        self.tets[i].map(|k| self.vertices[k])
    }

    pub fn tet_volume(&self, i: usize) -> f64 {
        signed_volume(self.tet_points(i))
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|i| self.tet_volume(i)).sum()
    }

    pub fn face_area(&self, f: &[usize; 3]) -> f64 {
        let [a, b, c] = f.map(|k| self.vertices[k]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn tagged_area(&self, tag: BoundaryTag) -> f64 {
        self.boundary_faces
            .iter()
            .filter(|(_, t)| *t == tag)
            .map(|(f, _)| self.face_area(f))
            .sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut m: f64 = 0.0;
        for t in &self.tets {
            for a in 0..4 {
                for b in a + 1..4 {
                    m = m.max((self.vertices[t[a]] - self.vertices[t[b]]).norm());
                }
            }
        }
        m
    }

    /// `nv nt nb`, then vertices, tetrahedra and tagged boundary triangles.
    pub fn write_ascii(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.vertices.len(), self.tets.len(), self.boundary_faces.len())?;
        for v in &self.vertices {
            writeln!(w, "{:e} {:e} {:e}", v.x, v.y, v.z)?;
        }
        for t in &self.tets {
            writeln!(w, "{} {} {} {}", t[0], t[1], t[2], t[3])?;
        }
        for (f, tag) in &self.boundary_faces {
            writeln!(w, "{} {} {} {tag}", f[0], f[1], f[2])?;
        }
        Ok(())
    }

    pub fn to_ascii_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_ascii(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn parse_ascii(text: &str) -> Result<Self, AcousticsError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, message: &str| AcousticsError::Parse {
            line: line + 1,
            message: message.to_string(),
        };
        let (hl, header) = lines.next().ok_or_else(|| err(0, "empty file"))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| err(hl, "header must be `nv nt nb`"))?;
        let [nv, nt, nb] = counts[..] else {
            return Err(err(hl, "header must be `nv nt nb`"));
        };
        let mut vertices = Vec::with_capacity(nv);
        let mut tets = Vec::with_capacity(nt);
        let mut faces = Vec::with_capacity(nb);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| err(hl, "missing vertex lines"))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| err(ln, "vertex must be three numbers"))?;
            let [x, y, z] = xs[..] else {
                return Err(err(ln, "vertex must be three numbers"));
            };
            vertices.push(Vec3::new(x, y, z));
        }
        for _ in 0..nt {
            let (ln, l) = lines.next().ok_or_else(|| err(hl, "missing tetrahedron lines"))?;
            let ix: Vec<usize> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| err(ln, "tetrahedron must be four indices"))?;
            let [a, b, c, d] = ix[..] else {
                return Err(err(ln, "tetrahedron must be four indices"));
            };
            tets.push([a, b, c, d]);
        }
        for _ in 0..nb {
            let (ln, l) = lines.next().ok_or_else(|| err(hl, "missing boundary lines"))?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(err(ln, "boundary face must be three indices and a tag"));
            }
            let mut f = [0usize; 3];
            for k in 0..3 {
                f[k] = parts[k].parse().map_err(|_| err(ln, "bad boundary index"))?;
            }
            let tag = parts[3].parse().map_err(|m: String| err(ln, &m))?;
            faces.push((f, tag));
        }
        if let Some((ln, _)) = lines.next() {
            return Err(err(ln, "trailing content"));
        }
        Self::new(vertices, tets, faces)
    }

    pub fn load_ascii(path: impl AsRef<Path>) -> Result<Self, AcousticsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => AcousticsError::FileNotFound(path.to_path_buf()),
            _ => AcousticsError::Io(e),
        })?;
        Self::parse_ascii(&text)
    }
}

/// Tetrahedral mesh of the canal described by `spec`; `max_edge` in metres.
pub fn sweep_tet_mesh(spec: &CanalSpec, max_edge: f64) -> Result<TetMesh, AcousticsError> {
    sweep_tube_tet_mesh(&CanalGeometry::new(spec)?, max_edge)
}

/// Unit-disk sample points: the centre and rings of `6j` points.
fn disk(rings: usize) -> (Vec<(f64, f64)>, Vec<[usize; 3]>) {
    let mut pts = vec![(0.0, 0.0)];
    let mut tris = Vec::new();
    let ring_start = |j: usize| if j == 0 { 0 } else { 1 + 3 * j * (j - 1) };
    let ring_len = |j: usize| if j == 0 { 1 } else { 6 * j };
    for j in 1..=rings {
        let r = j as f64 / rings as f64;
        for c in 0..6 * j {
            let a = std::f64::consts::TAU * c as f64 / (6 * j) as f64;
            pts.push((r * a.cos(), r * a.sin()));
        }
    }
    for j in 1..=rings {
        let (inner, outer) = (ring_start(j - 1), ring_start(j));
        let (ni, no) = (ring_len(j - 1), ring_len(j));
        // Walk both rings by angle, always advancing the one that lags.
        let (mut a, mut b) = (0, 0);
        while a < ni || b < no {
            let next_a = (a + 1) as f64 / ni as f64;
            let next_b = (b + 1) as f64 / no as f64;
            let ia = inner + a % ni;
            let ib = outer + b % no;
            if b < no && (a >= ni || next_b <= next_a) || ni == 1 {
                tris.push([ia, ib, outer + (b + 1) % no]);
                b += 1;
                if ni == 1 && b == no {
                    a = ni;
                }
            } else {
                tris.push([ia, ib, inner + (a + 1) % ni]);
                a += 1;
            }
        }
    }
    (pts, tris)
}

/// Structured sweep: cross-section disks triangulated identically, joined
/// layer by layer, each prism split into three tetrahedra with diagonals
/// chosen by vertex index so neighbouring prisms agree.
pub fn sweep_tube_tet_mesh(tube: &impl SweptTube, max_edge: f64) -> Result<TetMesh, AcousticsError> {
    if !(max_edge > 0.0 && max_edge.is_finite()) {
        return Err(AcousticsError::InvalidRange("max_edge must be positive".into()));
    }
    let h = max_edge * 1e3;
    let r = tube.max_semi_axis();
    let stretch = 1.0 + tube.max_curvature() * r;
    let mut factor = 0.65;
    for _ in 0..12 {
        let e = factor * h;
        let rings = ((r / e).ceil() as usize).max(1);
        let (disk_pts, disk_tris) = disk(rings);
        let nd = disk_pts.len();
        let ends: Vec<f64> = disk_pts.iter().map(|&(u, v)| tube.column_end(u, v)).collect();
        let longest = ends.iter().cloned().fold(0.0, f64::max);
        // Axial step chosen so the prism diagonals also respect `h`.
        let mut in_plane: f64 = 0.0;
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let at = |k: usize| tube.point(ends[k] * t, disk_pts[k].0, disk_pts[k].1);
            for tri in &disk_tris {
                for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                    in_plane = in_plane.max((at(a) - at(b)).norm());
                }
            }
        }
        if in_plane >= 0.95 * h {
            factor *= 0.85;
            continue;
        }
        let axial = (h * h - in_plane * in_plane).sqrt() * 0.95 / stretch;
        let layers = ((longest / axial).ceil() as usize).max(1);
        let mut vertices = Vec::with_capacity(nd * (layers + 1));
        for l in 0..=layers {
            let t = l as f64 / layers as f64;
            for (k, &(u, v)) in disk_pts.iter().enumerate() {
                vertices.push(tube.point(ends[k] * t, u, v) * 1e-3);
            }
        }
        let mut tets = Vec::with_capacity(3 * disk_tris.len() * layers);
        for l in 0..layers {
            for tri in &disk_tris {
                let mut s = *tri;
                s.sort_unstable();
                let lo = |k: usize| l * nd + k;
                let hi = |k: usize| (l + 1) * nd + k;
                let [a, b, c] = s;
                for mut t in [
                    [lo(a), lo(b), lo(c), hi(c)],
                    [lo(a), lo(b), hi(b), hi(c)],
                    [lo(a), hi(a), hi(b), hi(c)],
                ] {
                    if signed_volume(t.map(|k| vertices[k])) < 0.0 {
                        t.swap(2, 3);
                    }
                    tets.push(t);
                }
            }
        }
        let boundary_faces = boundary_of(&tets)
            .into_iter()
            .map(|f| {
                let tag = if f.iter().all(|&k| k < nd) {
                    BoundaryTag::Entrance
                } else if f.iter().all(|&k| k >= layers * nd) {
                    BoundaryTag::Drum
                } else {
                    BoundaryTag::Wall
                };
                (f, tag)
            })
            .collect();
        let mesh = TetMesh::new(vertices, tets, boundary_faces)?;
        if mesh.max_edge_length() <= max_edge * (1.0 + 1e-12) {
            return Ok(mesh);
        }
        factor *= 0.85;
    }
    Err(AcousticsError::InvalidMesh(format!(
        "could not respect max_edge = {max_edge} m on this geometry"
    )))
}
