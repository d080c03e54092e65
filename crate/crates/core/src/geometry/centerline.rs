//! Centerline and cross-sectional area extraction for tubular surfaces.
//!
//! The tube is marched from the entrance: each step places a cutting plane a
//! short distance ahead of the last section centroid, perpendicular to the
//! running tangent, and keeps the section loop that contains the plane origin.
//! Marching stops once the plane leaves the tube past the drum.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use nalgebra::SymmetricEigen;

use super::{cap_open_boundaries, GeometryError, SweptTube, TriMesh, Vec3};

/// Faces whose normal is within about 50° of the marching direction belong to
/// an end cap rather than the tube wall.
const CAP_ALIGNMENT: f64 = 0.65;

/// Marching stops once this share of a section's perimeter lies on an end cap.
/// Chord length used for the direction of the final ray (mm).
const END_BASELINE: f64 = 2.0;
const CAP_SHARE_LIMIT: f64 = 0.1;

/// Cross-sectional area as a function of centerline arc length, SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaFunction {
    arc_length: Vec<f64>,
    area: Vec<f64>,
}

impl AreaFunction {
    pub fn new(arc_length: Vec<f64>, area: Vec<f64>) -> Result<Self, GeometryError> {
        if arc_length.len() != area.len() || arc_length.len() < 2 {
            return Err(GeometryError::InvalidSpec(
                "area function needs matching arc-length and area samples (at least 2)".into(),
            ));
        }
        if arc_length[0] != 0.0 || arc_length.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeometryError::InvalidSpec(
                "arc length must start at 0 and increase strictly".into(),
            ));
        }
        if area.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(GeometryError::InvalidSpec("area must be positive".into()));
        }
        Ok(Self { arc_length, area })
    }

    /// Uniform tube of the given length (m) and area (m²).
    pub fn uniform(length: f64, area: f64) -> Result<Self, GeometryError> {
        Self::new(vec![0.0, length], vec![area, area])
    }

    pub fn arc_length(&self) -> &[f64] {
        &self.arc_length
    }

    pub fn area(&self) -> &[f64] {
        &self.area
    }

    pub fn total_length(&self) -> f64 {
        *self.arc_length.last().expect("non-empty")
    }

    /// Linear interpolation; clamped outside the sampled range.
    pub fn area_at(&self, s: f64) -> f64 {
        let xs = &self.arc_length;
        if s <= xs[0] {
            return self.area[0];
        }
        if s >= self.total_length() {
            return *self.area.last().expect("non-empty");
        }
        let k = xs.partition_point(|&x| x <= s) - 1;
        let t = (s - xs[k]) / (xs[k + 1] - xs[k]);
        self.area[k] + (self.area[k + 1] - self.area[k]) * t
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "arclength_m,area_m2")?;
        for (s, a) in self.arc_length.iter().zip(&self.area) {
            writeln!(w, "{s:.17e},{a:.17e}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                GeometryError::FileNotFound(path.to_path_buf())
            }
            _ => GeometryError::Parse {
                line: 0,
                message: e.to_string(),
            },
        })?;
        let mut s = Vec::new();
        let mut a = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| GeometryError::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            let get = |k: usize| -> Result<f64, GeometryError> {
                rec.get(k)
                    .and_then(|x| x.trim().parse().ok())
                    .ok_or(GeometryError::Parse {
                        line: i + 2,
                        message: "expected two numeric columns".into(),
                    })
            };
            s.push(get(0)?);
            a.push(get(1)?);
        }
        Self::new(s, a)
    }
}

/// Extracted centerline with per-station areas, millimeters.
#[derive(Debug, Clone)]
pub struct Centerline {
    pub points: Vec<Vec3>,
    pub arc_length: Vec<f64>,
    pub area: Vec<f64>,
}

impl Centerline {
    pub fn length(&self) -> f64 {
        *self.arc_length.last().unwrap_or(&0.0)
    }

    /// Largest distance of any centerline point from the entrance–drum chord.
    pub fn max_chord_deviation(&self) -> f64 {
        let (a, b) = (self.points[0], *self.points.last().expect("non-empty"));
        let d = (b - a).normalize();
        self.points
            .iter()
            .map(|p| {
                let r = p - a;
                (r - d * r.dot(&d)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Point at arc length `s` by linear interpolation.
    pub fn point_at(&self, s: f64) -> Vec3 {
        let xs = &self.arc_length;
        if s <= 0.0 {
            return self.points[0];
        }
        if s >= self.length() {
            return *self.points.last().expect("non-empty");
        }
        let k = xs.partition_point(|&x| x <= s) - 1;
        let t = (s - xs[k]) / (xs[k + 1] - xs[k]);
        self.points[k] + (self.points[k + 1] - self.points[k]) * t
    }

    pub fn area_at(&self, s: f64) -> f64 {
        let xs = &self.arc_length;
        if s <= 0.0 {
            return self.area[0];
        }
        if s >= self.length() {
            return *self.area.last().expect("non-empty");
        }
        let k = xs.partition_point(|&x| x <= s) - 1;
        let t = (s - xs[k]) / (xs[k + 1] - xs[k]);
        self.area[k] + (self.area[k + 1] - self.area[k]) * t
    }

    /// SI area function resampled at `stations` uniformly spaced stations.
    pub fn area_function(&self, stations: usize) -> Result<AreaFunction, GeometryError> {
        let n = stations.max(2);
        let total = self.length();
        let s: Vec<f64> = (0..n).map(|i| total * i as f64 / (n - 1) as f64).collect();
        let a: Vec<f64> = s.iter().map(|&x| self.area_at(x) * 1e-6).collect();
        AreaFunction::new(s.iter().map(|x| x * 1e-3).collect(), a)
    }
}

/// Marching parameters for [`extract_centerline`].
#[derive(Debug, Clone, Copy)]
pub struct CenterlineOptions {
    /// Plane advance per step (mm).
    pub step: f64,
    /// Steps between the centroids used to estimate the tangent.
    pub lookback: usize,
    /// Stations in the resampled output.
    pub stations: usize,
}

impl Default for CenterlineOptions {
    fn default() -> Self {
        Self {
            step: 0.1,
            lookback: 5,
            stations: 50,
        }
    }
}

/// Centerline and area function (SI) of a capped tube, 50 stations.
pub fn centerline_and_area(mesh: &TriMesh) -> Result<AreaFunction, GeometryError> {
    let opts = CenterlineOptions::default();
    extract_centerline(mesh, &opts)?.area_function(opts.stations)
}

pub fn extract_centerline(mesh: &TriMesh, opts: &CenterlineOptions) -> Result<Centerline, GeometryError> {
    if mesh.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    let (start, t0) = entrance_plane(mesh)?;
    let closed = cap_open_boundaries(mesh)?;
    let ds = opts.step;

    let first = section_containing(&closed, start + t0 * (0.5 * ds), t0)
        .ok_or_else(|| GeometryError::NotTubular("no section just inside the entrance".into()))?;
    let mut points = vec![start];
    let mut areas = vec![first.area];
    let mut last = first.centroid;
    let mut tangent = t0;
    let mut centroids = vec![first.centroid];
    areas.push(first.area);
    points.push(first.centroid);
    let max_steps = ((mesh_extent(&closed) * 4.0) / ds) as usize + 10;
    let mut travelled = 0.0;
    // Length of `points` up to the last section clear of the drum cap.
    let mut clean = points.len();
    for _ in 0..max_steps {
        let origin = last + tangent * ds;
        let Some(sec) = section_containing(&closed, origin, tangent) else {
            break;
        };
        travelled += ds;
        // Past the first millimetre, a section cutting into the drum cap ends the march.
        if travelled > 1.0 && sec.capped > CAP_SHARE_LIMIT {
            break;
        }
        centroids.push(sec.centroid);
        points.push(sec.centroid);
        areas.push(sec.area);
        if sec.capped == 0.0 {
            clean = points.len();
        }
        last = sec.centroid;
        let back = centroids.len().saturating_sub(1 + opts.lookback);
        let dir = sec.centroid - centroids[back];
        if dir.norm() > 0.5 * ds {
            let cand = dir.normalize();
            if cand.dot(&tangent) > 0.0 {
                tangent = cand;
            }
        }
    }
    if points.len() < 3 {
        return Err(GeometryError::NotTubular("tube too short to march".into()));
    }
    // Drum end: where the centerline, continued straight from the last
    // section clear of the cap, meets the surface.
    points.truncate(clean);
    areas.truncate(clean);
    let tail = *points.last().expect("non-empty");
    let baseline = ((END_BASELINE / ds).round() as usize).max(1);
    let from = points[points.len().saturating_sub(1 + baseline).max(1)];
    let end_dir = if (tail - from).norm() > 0.5 * ds { (tail - from).normalize() } else { tangent };
    if let Some(end) = ray_hit(&closed, &tail, &end_dir) {
        points.push(end);
        areas.push(*areas.last().expect("non-empty"));
    }
    let mut arc_length = Vec::with_capacity(points.len());
    let mut s = 0.0;
    arc_length.push(0.0);
    for w in points.windows(2) {
        s += (w[1] - w[0]).norm();
        arc_length.push(s);
    }
    // Drop any zero-length steps so arc length is strictly increasing.
    let mut keep_p = vec![points[0]];
    let mut keep_s = vec![0.0];
    let mut keep_a = vec![areas[0]];
    for i in 1..points.len() {
        if arc_length[i] > *keep_s.last().expect("non-empty") {
            keep_p.push(points[i]);
            keep_s.push(arc_length[i]);
            keep_a.push(areas[i]);
        }
    }
    Ok(Centerline {
        points: keep_p,
        arc_length: keep_s,
        area: keep_a,
    })
}

fn mesh_extent(mesh: &TriMesh) -> f64 {
    mesh.bounding_box().map(|(lo, hi)| (hi - lo).norm()).unwrap_or(0.0)
}

/// Entrance centroid and the inward unit normal of the entrance.
fn entrance_plane(mesh: &TriMesh) -> Result<(Vec3, Vec3), GeometryError> {
    let centroid = mesh.centroid();
    if let Some(lp) = mesh
        .boundary_loops()
        .iter()
        .max_by(|a, b| loop_area(mesh, a).total_cmp(&loop_area(mesh, b)))
    {
        let c = lp.iter().map(|&i| mesh.vertices()[i]).sum::<Vec3>() / lp.len() as f64;
        let mut n = newell_normal(lp.iter().map(|&i| mesh.vertices()[i]));
        if n.norm() == 0.0 {
            return Err(GeometryError::NotTubular("degenerate entrance loop".into()));
        }
        n.normalize_mut();
        if n.dot(&(centroid - c)) < 0.0 {
            n = -n;
        }
        return Ok((c, n));
    }
    closed_entrance(mesh)
}

fn loop_area(mesh: &TriMesh, lp: &[usize]) -> f64 {
    0.5 * newell_normal(lp.iter().map(|&i| mesh.vertices()[i])).norm()
}

fn newell_normal(points: impl Iterator<Item = Vec3>) -> Vec3 {
    let pts: Vec<Vec3> = points.collect();
    let mut n = Vec3::zeros();
    for k in 0..pts.len() {
        n += pts[k].cross(&pts[(k + 1) % pts.len()]);
    }
    n
}

/// For closed tubes: find the two end caps along the principal axis and pick
/// the end whose nearby cross-section is larger.
fn closed_entrance(mesh: &TriMesh) -> Result<(Vec3, Vec3), GeometryError> {
    let nf = mesh.faces().len();
    let mut wsum = 0.0;
    let mut mean = Vec3::zeros();
    for f in 0..nf {
        let [a, b, c] = mesh.triangle(f);
        let w = mesh.face_area(f);
        mean += (a + b + c) / 3.0 * w;
        wsum += w;
    }
    mean /= wsum;
    let mut cov = nalgebra::Matrix3::zeros();
    for f in 0..nf {
        let [a, b, c] = mesh.triangle(f);
        let d = (a + b + c) / 3.0 - mean;
        cov += d * d.transpose() * mesh.face_area(f);
    }
    let eig = SymmetricEigen::new(cov);
    let axis: Vec3 = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
    let proj: Vec<f64> = mesh.vertices().iter().map(|v| (v - mean).dot(&axis)).collect();
    let (pmin, pmax) = proj.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
        (lo.min(p), hi.max(p))
    });
    let span = pmax - pmin;
    let cap = |outward: Vec3, edge: f64| -> Option<(Vec3, Vec3)> {
        let mut nsum = Vec3::zeros();
        let mut csum = Vec3::zeros();
        let mut w = 0.0;
        for f in 0..nf {
            let [a, b, c] = mesh.triangle(f);
            let ctr = (a + b + c) / 3.0;
            let p = (ctr - mean).dot(&axis);
            if (p - edge).abs() > 0.25 * span {
                continue;
            }
            let n = mesh.face_normal(f);
            if n.dot(&outward) > 40f64.to_radians().cos() {
                let area = mesh.face_area(f);
                nsum += n * area;
                csum += ctr * area;
                w += area;
            }
        }
        (w > 0.0).then(|| (csum / w, -nsum.normalize()))
    };
    let low = cap(-axis, pmin);
    let high = cap(axis, pmax);
    let (low, high) = match (low, high) {
        (Some(l), Some(h)) => (l, h),
        _ => return Err(GeometryError::NotTubular("could not identify both end caps".into())),
    };
    let depth = 0.1 * span;
    let area_in = |(c, t): (Vec3, Vec3)| {
        section_containing(mesh, c + t * depth, t)
            .map(|s| s.area)
            .unwrap_or(0.0)
    };
    let (al, ah) = (area_in(low), area_in(high));
    if ah > al * 1.01 {
        Ok(high)
    } else {
        Ok(low)
    }
}

#[derive(Debug, Clone, Copy)]
struct Section {
    centroid: Vec3,
    area: f64,
    /// Share of the loop perimeter cut from faces facing along the plane normal.
    capped: f64,
}

/// Cuts the closed mesh with the plane through `origin` with normal `normal`
/// and returns the section loop enclosing `origin`, if any.
fn section_containing(mesh: &TriMesh, origin: Vec3, normal: Vec3) -> Option<Section> {
    let n = normal.normalize();
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    let dist: Vec<f64> = mesh.vertices().iter().map(|v| (v - origin).dot(&n)).collect();
    let side = |i: usize| dist[i] >= 0.0;

    let mut point_id: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pts2: Vec<(f64, f64)> = Vec::new();
    // Neighbouring crossing point and the face joining them.
    let mut adj: Vec<Vec<(usize, usize)>> = Vec::new();
    for (fi, f) in mesh.faces().iter().enumerate() {
        let s = [side(f[0]), side(f[1]), side(f[2])];
        if s[0] == s[1] && s[1] == s[2] {
            continue;
        }
        let mut ends = [0usize; 2];
        let mut k_end = 0;
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if side(a) == side(b) {
                continue;
            }
            let key = (a.min(b), a.max(b));
            let id = *point_id.entry(key).or_insert_with(|| {
                let (da, db) = (dist[key.0], dist[key.1]);
                let t = da / (da - db);
                let (pa, pb) = (mesh.vertices()[key.0], mesh.vertices()[key.1]);
                let p = pa + (pb - pa) * t - origin;
                pts2.push((p.dot(&e1), p.dot(&e2)));
                adj.push(Vec::with_capacity(2));
                pts2.len() - 1
            });
            ends[k_end] = id;
            k_end += 1;
        }
        adj[ends[0]].push((ends[1], fi));
        adj[ends[1]].push((ends[0], fi));
    }
    let mut visited = vec![false; pts2.len()];
    let mut best: Option<Section> = None;
    for start in 0..pts2.len() {
        if visited[start] || adj[start].len() != 2 {
            continue;
        }
        let mut lp = vec![start];
        let mut faces = vec![adj[start][0].1];
        visited[start] = true;
        let mut prev = start;
        let mut cur = adj[start][0].0;
        let mut closed = false;
        while !visited[cur] {
            if adj[cur].len() != 2 {
                break;
            }
            visited[cur] = true;
            lp.push(cur);
            let (next, face) = if adj[cur][0].0 == prev { adj[cur][1] } else { adj[cur][0] };
            faces.push(face);
            prev = cur;
            cur = next;
            if cur == start {
                closed = true;
                break;
            }
        }
        if !closed || lp.len() < 3 {
            continue;
        }
        let poly: Vec<(f64, f64)> = lp.iter().map(|&i| pts2[i]).collect();
        if !contains_origin(&poly) {
            continue;
        }
        let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
        let (mut perimeter, mut capped) = (0.0, 0.0);
        for k in 0..poly.len() {
            let (x0, y0) = poly[k];
            let (x1, y1) = poly[(k + 1) % poly.len()];
            let cr = x0 * y1 - x1 * y0;
            a2 += cr;
            cx += (x0 + x1) * cr;
            cy += (y0 + y1) * cr;
            let len = (x1 - x0).hypot(y1 - y0);
            perimeter += len;
            if mesh.face_normal(faces[k]).dot(&n).abs() > CAP_ALIGNMENT {
                capped += len;
            }
        }
        if a2.abs() < 1e-15 {
            continue;
        }
        let area = 0.5 * a2.abs();
        let c = origin + e1 * (cx / (3.0 * a2)) + e2 * (cy / (3.0 * a2));
        // Innermost loop wins if several enclose the origin.
        if best.is_none_or(|b| area < b.area) {
            best = Some(Section {
                centroid: c,
                area,
                capped: capped / perimeter,
            });
        }
    }
    best
}

/// Nearest intersection of the ray `origin + t·dir`, t > 0, with the mesh.
fn ray_hit(mesh: &TriMesh, origin: &Vec3, dir: &Vec3) -> Option<Vec3> {
    let mut best = f64::INFINITY;
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f);
        let (e1, e2) = (b - a, c - a);
        let pv = dir.cross(&e2);
        let det = e1.dot(&pv);
        if det.abs() < 1e-14 {
            continue;
        }
        let tv = origin - a;
        let u = tv.dot(&pv) / det;
        let qv = tv.cross(&e1);
        let v = dir.dot(&qv) / det;
        let t = e2.dot(&qv) / det;
        if u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0 && t < best {
            best = t;
        }
    }
    best.is_finite().then(|| origin + dir * best)
}

fn contains_origin(poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for k in 0..n {
        let (x0, y0) = poly[k];
        let (x1, y1) = poly[(k + 1) % n];
        if (y0 > 0.0) != (y1 > 0.0) {
            let x = x0 + (0.0 - y0) * (x1 - x0) / (y1 - y0);
            if x > 0.0 {
                inside = !inside;
            }
        }
    }
    inside
}

/// Circular tube swept along an extracted centerline (equal-area sections).
#[derive(Debug, Clone)]
pub struct CenterlineTube {
    line: Centerline,
    frames: Vec<(Vec3, Vec3, Vec3)>,
}

impl CenterlineTube {
    pub fn new(line: Centerline) -> Result<Self, GeometryError> {
        if line.points.len() < 2 {
            return Err(GeometryError::NotTubular("centerline needs two points".into()));
        }
        let n = line.points.len();
        let tangent = |k: usize| {
            let (a, b) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            (line.points[b] - line.points[a]).normalize()
        };
        // Parallel transport of an initial normal along the polyline.
        let t0 = tangent(0);
        let helper = if t0.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let mut n1 = (helper - t0 * helper.dot(&t0)).normalize();
        let mut frames = Vec::with_capacity(n);
        for k in 0..n {
            let t = tangent(k);
            n1 = (n1 - t * n1.dot(&t)).normalize();
            let n2 = t.cross(&n1);
            frames.push((t, n1, n2));
        }
        Ok(Self { line, frames })
    }

    fn frame_at(&self, s: f64) -> (Vec3, Vec3, Vec3) {
        let xs = &self.line.arc_length;
        let k = xs.partition_point(|&x| x <= s).saturating_sub(1).min(xs.len() - 2);
        let t = ((s - xs[k]) / (xs[k + 1] - xs[k])).clamp(0.0, 1.0);
        let lerp = |a: Vec3, b: Vec3| (a * (1.0 - t) + b * t).normalize();
        let (ta, n1a, _) = self.frames[k];
        let (tb, n1b, _) = self.frames[k + 1];
        let tt = lerp(ta, tb);
        let n1 = lerp(n1a, n1b);
        let n1 = (n1 - tt * n1.dot(&tt)).normalize();
        (tt, n1, tt.cross(&n1))
    }
}

impl SweptTube for CenterlineTube {
    fn length(&self) -> f64 {
        self.line.length()
    }

    fn max_semi_axis(&self) -> f64 {
        (self.line.area.iter().cloned().fold(0.0, f64::max) / std::f64::consts::PI).sqrt()
    }

    fn max_curvature(&self) -> f64 {
        let mut kmax: f64 = 0.0;
        for k in 1..self.frames.len() {
            let ds = self.line.arc_length[k] - self.line.arc_length[k - 1];
            let dt = (self.frames[k].0 - self.frames[k - 1].0).norm();
            if ds > 0.0 {
                kmax = kmax.max(dt / ds);
            }
        }
        kmax
    }

    fn column_end(&self, _u: f64, _v: f64) -> f64 {
        self.line.length()
    }

    fn point(&self, s: f64, u: f64, v: f64) -> Vec3 {
        let s = s.clamp(0.0, self.line.length());
        let (_, n1, n2) = self.frame_at(s);
        let r = (self.line.area_at(s) / std::f64::consts::PI).sqrt();
        self.line.point_at(s) + n1 * (r * u) + n2 * (r * v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_function_validation() {
        assert!(AreaFunction::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(AreaFunction::new(vec![0.1, 0.2], vec![1.0, 1.0]).is_err());
        assert!(AreaFunction::new(vec![0.0, 0.2], vec![1.0, 0.0]).is_err());
        let af = AreaFunction::new(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 3.0]).unwrap();
        assert_eq!(af.area_at(0.5), 2.0);
        assert_eq!(af.area_at(5.0), 3.0);
    }

    #[test]
    fn csv_round_trip() {
        let af = AreaFunction::new(vec![0.0, 0.013, 0.028], vec![5.0e-5, 4.1e-5, 3.3e-5]).unwrap();
        let mut buf = Vec::new();
        af.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("arclength_m,area_m2\n"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, text).unwrap();
        assert_eq!(AreaFunction::load_csv(&p).unwrap(), af);
    }
}
