//! Parametric ear-canal-like tubes and synthetic populations.
//!
//! The centerline starts at the origin heading along +z and turns in the
//! x–z plane at two bends of constant curvature. Cross-sections are ellipses
//! of area `π r(s)²` whose major axis lies along y, with the radius varying
//! linearly from the entrance to the drum. The drum end is a plane tilted
//! about the in-plane normal, so a mirror image in x of a canal with bend
//! angles `(a, b)` is exactly the canal with `(-a, -b)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeometryError, TriMesh, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanalSpec {
    /// Centerline length from entrance to drum centre (mm).
    pub length: f64,
    pub entrance_radius: f64,
    pub drum_radius: f64,
    /// First and second bend, degrees.
    pub bend_angles: [f64; 2],
    /// Bend centres as fractions of the length.
    pub bend_positions: [f64; 2],
    /// Major/minor axis ratio of the cross-section.
    pub ellipticity: f64,
    /// Bound on per-vertex jitter (mm).
    pub noise_amplitude: f64,
    /// Slant of the drum plane relative to the cross-section, degrees.
    #[serde(default)]
    pub drum_tilt: f64,
}

impl Default for CanalSpec {
    fn default() -> Self {
        Self {
            length: 26.0,
            entrance_radius: 4.0,
            drum_radius: 3.6,
            bend_angles: [25.0, -20.0],
            bend_positions: [0.3, 0.65],
            ellipticity: 1.25,
            noise_amplitude: 0.0,
            drum_tilt: 30.0,
        }
    }
}

impl CanalSpec {
    /// Straight circular tube with a perpendicular drum.
    pub fn cylinder(length: f64, radius: f64) -> Self {
        Self {
            length,
            entrance_radius: radius,
            drum_radius: radius,
            bend_angles: [0.0, 0.0],
            bend_positions: [0.3, 0.7],
            ellipticity: 1.0,
            noise_amplitude: 0.0,
            drum_tilt: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidSpec(m.to_string()));
        let finite = [
            self.length,
            self.entrance_radius,
            self.drum_radius,
            self.bend_angles[0],
            self.bend_angles[1],
            self.bend_positions[0],
            self.bend_positions[1],
            self.ellipticity,
            self.noise_amplitude,
            self.drum_tilt,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all canal parameters must be finite");
        }
        if self.length <= 0.0 {
            return bad("length must be positive");
        }
        if self.entrance_radius <= 0.0 || self.drum_radius <= 0.0 {
            return bad("radii must be positive");
        }
        let [p1, p2] = self.bend_positions;
        if !(0.0 < p1 && p1 < p2 && p2 < 1.0) {
            return bad("bend positions must satisfy 0 < p1 < p2 < 1");
        }
        if self.ellipticity < 1.0 {
            return bad("ellipticity must be >= 1");
        }
        if self.noise_amplitude < 0.0 {
            return bad("noise amplitude must be non-negative");
        }
        if self.drum_tilt.abs() >= 80.0 {
            return bad("drum tilt must be below 80 degrees");
        }
        Ok(())
    }
}

/// Anything that can be swept into a tube: a centerline with cross-sections
/// addressed by unit-disk coordinates `(u, v)`.
pub trait SweptTube {
    /// Centerline length to the drum centre (mm).
    fn length(&self) -> f64;
    /// Largest cross-section semi-axis (mm); used to pick resolutions.
    fn max_semi_axis(&self) -> f64;
    /// Largest curvature of the centerline (1/mm).
    fn max_curvature(&self) -> f64;
    /// Axial parameter at which the column through `(u, v)` meets the drum plane.
    fn column_end(&self, u: f64, v: f64) -> f64;
    /// Point at axial parameter `s` on the column `(u, v)`.
    fn point(&self, s: f64, u: f64, v: f64) -> Vec3;
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    s0: f64,
    s1: f64,
    theta0: f64,
    kappa: f64,
    p0: Vec3,
}

/// Evaluated geometry of a [`CanalSpec`].
#[derive(Debug, Clone)]
pub struct CanalGeometry {
    spec: CanalSpec,
    pieces: Vec<Piece>,
    end: Vec3,
    end_theta: f64,
}

impl CanalGeometry {
    pub fn new(spec: &CanalSpec) -> Result<Self, GeometryError> {
        spec.validate()?;
        let l = spec.length;
        let [p1, p2] = spec.bend_positions.map(|p| p * l);
        let hw1 = (0.1 * l).min(p1).min(0.5 * (p2 - p1));
        let hw2 = (0.1 * l).min(l - p2).min(0.5 * (p2 - p1));
        let [a1, a2] = spec.bend_angles.map(f64::to_radians);
        let breaks = [0.0, p1 - hw1, p1 + hw1, p2 - hw2, p2 + hw2, l];
        let kappas = [0.0, a1 / (2.0 * hw1), 0.0, a2 / (2.0 * hw2), 0.0];
        let mut pieces = Vec::with_capacity(5);
        let mut theta = 0.0;
        let mut p = Vec3::zeros();
        for (w, &kappa) in breaks.windows(2).zip(&kappas) {
            let piece = Piece {
                s0: w[0],
                s1: w[1],
                theta0: theta,
                kappa,
                p0: p,
            };
            p = piece.position(w[1]);
            theta += kappa * (w[1] - w[0]);
            pieces.push(piece);
        }
        Ok(Self {
            spec: spec.clone(),
            pieces,
            end: p,
            end_theta: theta,
        })
    }

    pub fn spec(&self) -> &CanalSpec {
        &self.spec
    }

    fn theta(&self, s: f64) -> f64 {
        if s >= self.spec.length {
            return self.end_theta;
        }
        let pc = self.piece(s);
        pc.theta0 + pc.kappa * (s.max(0.0) - pc.s0)
    }

    fn piece(&self, s: f64) -> &Piece {
        self.pieces
            .iter()
            .find(|pc| s <= pc.s1)
            .unwrap_or(self.pieces.last().expect("five pieces"))
    }

    /// Centerline point; straight continuation beyond either end.
    pub fn centerline(&self, s: f64) -> Vec3 {
        if s >= self.spec.length {
            self.end + self.tangent(self.spec.length) * (s - self.spec.length)
        } else if s <= 0.0 {
            Vec3::new(0.0, 0.0, s)
        } else {
            self.piece(s).position(s)
        }
    }

    pub fn tangent(&self, s: f64) -> Vec3 {
        let t = self.theta(s);
        Vec3::new(t.sin(), 0.0, t.cos())
    }

    /// In-plane normal (bend direction) and out-of-plane binormal at `s`.
    pub fn normals(&self, s: f64) -> (Vec3, Vec3) {
        let t = self.theta(s);
        (Vec3::new(t.cos(), 0.0, -t.sin()), Vec3::new(0.0, 1.0, 0.0))
    }

    pub fn radius(&self, s: f64) -> f64 {
        let f = (s / self.spec.length).clamp(0.0, 1.0);
        self.spec.entrance_radius + (self.spec.drum_radius - self.spec.entrance_radius) * f
    }

    /// Semi-axes along the in-plane normal and binormal.
    pub fn semi_axes(&self, s: f64) -> (f64, f64) {
        let r = self.radius(s);
        let e = self.spec.ellipticity.sqrt();
        (r / e, r * e)
    }

    fn offset(&self, s: f64, u: f64, v: f64) -> Vec3 {
        let (n1, n2) = self.normals(s);
        let (a, b) = self.semi_axes(s);
        n1 * (a * u) + n2 * (b * v)
    }

    /// Unit normal of the drum plane (pointing out of the canal).
    pub fn drum_normal(&self) -> Vec3 {
        let l = self.spec.length;
        let tilt = self.spec.drum_tilt.to_radians();
        self.tangent(l) * tilt.cos() + self.normals(l).1 * tilt.sin()
    }

    pub fn drum_center(&self) -> Vec3 {
        self.end
    }

    /// Centerline polyline with `n + 1` samples from entrance to drum centre.
    pub fn centerline_polyline(&self, n: usize) -> Vec<Vec3> {
        (0..=n)
            .map(|i| self.centerline(self.spec.length * i as f64 / n as f64))
            .collect()
    }
}

impl Piece {
    fn position(&self, s: f64) -> Vec3 {
        let u = s - self.s0;
        let th = self.theta0;
        if self.kappa == 0.0 {
            self.p0 + Vec3::new(th.sin(), 0.0, th.cos()) * u
        } else {
            let k = self.kappa;
            let th1 = th + k * u;
            self.p0 + Vec3::new((th.cos() - th1.cos()) / k, 0.0, (th1.sin() - th.sin()) / k)
        }
    }
}

impl SweptTube for CanalGeometry {
    fn length(&self) -> f64 {
        self.spec.length
    }

    fn max_semi_axis(&self) -> f64 {
        self.spec.entrance_radius.max(self.spec.drum_radius) * self.spec.ellipticity.sqrt()
    }

    fn max_curvature(&self) -> f64 {
        self.pieces.iter().map(|p| p.kappa.abs()).fold(0.0, f64::max)
    }

    fn column_end(&self, u: f64, v: f64) -> f64 {
        let l = self.spec.length;
        let off = self.offset(l, u, v);
        let n = self.drum_normal();
        l - off.dot(&n) / self.tangent(l).dot(&n)
    }

    fn point(&self, s: f64, u: f64, v: f64) -> Vec3 {
        let l = self.spec.length;
        let s_end = self.column_end(u, v);
        if s >= s_end - 1e-12 {
            // Exactly on the drum plane.
            return self.end + self.tangent(l) * (s_end - l) + self.offset(l, u, v);
        }
        if s <= l {
            self.centerline(s) + self.offset(s, u, v)
        } else {
            self.centerline(s) + self.offset(l, u, v)
        }
    }
}

/// Surface sampling density for [`synth_canal_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanalResolution {
    /// Vertices around each ring.
    pub segments: usize,
    /// Target ring spacing along the centerline (mm).
    pub axial_step: f64,
}

impl Default for CanalResolution {
    fn default() -> Self {
        Self {
            segments: 48,
            axial_step: 0.5,
        }
    }
}

/// Synthetic canal surface, open at the entrance and closed by a slanted drum.
pub fn synth_canal(spec: &CanalSpec, seed: u64) -> Result<TriMesh, GeometryError> {
    synth_canal_with(spec, seed, CanalResolution::default())
}

pub fn synth_canal_with(
    spec: &CanalSpec,
    seed: u64,
    res: CanalResolution,
) -> Result<TriMesh, GeometryError> {
    let geo = CanalGeometry::new(spec)?;
    if res.segments < 3 || res.axial_step <= 0.0 {
        return Err(GeometryError::InvalidSpec("resolution too coarse".into()));
    }
    let m = res.segments;
    let rings = ((spec.length / res.axial_step).ceil() as usize).max(2);
    let mut vertices = Vec::with_capacity(m * (rings + 1) + 1);
    for j in 0..=rings {
        for c in 0..m {
            let a = std::f64::consts::TAU * c as f64 / m as f64;
            let (u, v) = (a.cos(), a.sin());
            let s = geo.column_end(u, v) * j as f64 / rings as f64;
            vertices.push(geo.point(s, u, v));
        }
    }
    let center = vertices.len();
    vertices.push(geo.drum_center());

    let id = |j: usize, c: usize| j * m + c % m;
    let mut faces = Vec::with_capacity(2 * m * rings + m);
    for j in 0..rings {
        for c in 0..m {
            faces.push([id(j, c), id(j, c + 1), id(j + 1, c + 1)]);
            faces.push([id(j, c), id(j + 1, c + 1), id(j + 1, c)]);
        }
    }
    for c in 0..m {
        faces.push([center, id(rings, c), id(rings, c + 1)]);
    }

    if spec.noise_amplitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in vertices.iter_mut() {
            let dir = loop {
                let d = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let n = d.norm();
                if n > 1e-3 && n <= 1.0 {
                    break d / n;
                }
            };
            *v += dir * (spec.noise_amplitude * rng.gen::<f64>());
        }
    }
    TriMesh::new(vertices, faces)
}

/// Half-widths of uniform parameter jitter around a nominal spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanalJitter {
    pub length: f64,
    pub radius: f64,
    /// Degrees.
    pub bend_angle: f64,
    pub bend_position: f64,
    pub ellipticity: f64,
    /// Degrees.
    pub drum_tilt: f64,
}

impl Default for CanalJitter {
    fn default() -> Self {
        Self {
            length: 1.5,
            radius: 0.3,
            bend_angle: 5.0,
            bend_position: 0.02,
            ellipticity: 0.08,
            drum_tilt: 4.0,
        }
    }
}

/// `count` specs jittered uniformly around `nominal`, with per-subject noise seeds.
pub fn synth_population_specs(
    nominal: &CanalSpec,
    count: usize,
    seed: u64,
    jitter: &CanalJitter,
) -> Result<Vec<(CanalSpec, u64)>, GeometryError> {
    nominal.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut j = |h: f64| if h > 0.0 { rng.gen_range(-h..=h) } else { 0.0 };
        let mut s = nominal.clone();
        s.length += j(jitter.length);
        let dr = j(jitter.radius);
        s.entrance_radius += dr;
        s.drum_radius += dr * 0.5 + j(jitter.radius) * 0.5;
        s.bend_angles[0] += j(jitter.bend_angle);
        s.bend_angles[1] += j(jitter.bend_angle);
        s.bend_positions[0] += j(jitter.bend_position);
        s.bend_positions[1] += j(jitter.bend_position);
        s.ellipticity = (s.ellipticity + j(jitter.ellipticity)).max(1.0);
        s.drum_tilt += j(jitter.drum_tilt);
        let noise_seed = rng.gen::<u64>();
        s.validate()?;
        out.push((s, noise_seed));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_specs_rejected() {
        let mut s = CanalSpec::default();
        s.bend_positions = [0.6, 0.4];
        assert!(matches!(synth_canal(&s, 0), Err(GeometryError::InvalidSpec(_))));
        let mut s = CanalSpec::default();
        s.length = 0.0;
        assert!(s.validate().is_err());
        let mut s = CanalSpec::default();
        s.drum_radius = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn tangent_is_derivative_of_centerline() {
        let g = CanalGeometry::new(&CanalSpec::default()).unwrap();
        for s in [1.0, 7.5, 9.0, 14.0, 17.2, 25.0] {
            let h = 1e-5;
            let d = (g.centerline(s + h) - g.centerline(s - h)) / (2.0 * h);
            assert!((d - g.tangent(s)).norm() < 1e-8, "s={s}");
        }
    }

    #[test]
    fn drum_ring_lies_on_drum_plane() {
        let g = CanalGeometry::new(&CanalSpec::default()).unwrap();
        let n = g.drum_normal();
        for k in 0..16 {
            let a = k as f64 * 0.4;
            let (u, v) = (a.cos(), a.sin());
            let p = g.point(g.column_end(u, v), u, v);
            assert!((p - g.drum_center()).dot(&n).abs() < 1e-9);
        }
    }

    #[test]
    fn canal_surface_is_open_once_and_outward() {
        let m = synth_canal(&CanalSpec::default(), 3).unwrap();
        assert_eq!(m.boundary_loops().len(), 1);
        let closed = crate::geometry::cap_open_boundaries(&m).unwrap();
        assert_eq!(closed.euler_characteristic(), 2);
        assert!(closed.signed_volume() > 0.0);
    }
}
