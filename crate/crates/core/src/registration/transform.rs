//! Affine and cubic B-spline free-form transforms.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::geometry::{GridSpec, ScalarField, Vec3};

use super::RegistrationError;

/// A map from fixed (template) space into moving (subject) space.
pub trait SpatialTransform {
    fn apply(&self, p: &Vec3) -> Vec3;
}

/// `x ↦ matrix·x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 12]", into = "[f64; 12]")]
pub struct AffineTransform {
    pub matrix: Matrix3<f64>,
    pub translation: Vec3,
}

impl AffineTransform {
    pub fn new(matrix: Matrix3<f64>, translation: Vec3) -> Result<Self, RegistrationError> {
        if !matrix.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(RegistrationError::InvalidTransform("non-finite affine entry".into()));
        }
        if matrix.determinant() <= 0.0 {
            return Err(RegistrationError::InvalidTransform(
                "affine matrix must have positive determinant".into(),
            ));
        }
        Ok(Self { matrix, translation })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn translation(t: Vec3) -> Self {
        Self {
            matrix: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation of `angle` radians about `axis` through `center`.
    pub fn rotation_about(axis: &Vec3, angle: f64, center: &Vec3) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        let m = *r.matrix();
        Self {
            matrix: m,
            translation: center - m * center,
        }
    }

    pub fn then(&self, other: &AffineTransform) -> AffineTransform {
        AffineTransform {
            matrix: other.matrix * self.matrix,
            translation: other.matrix * self.translation + other.translation,
        }
    }

    pub fn inverse(&self) -> AffineTransform {
        let inv = self.matrix.try_inverse().expect("positive determinant");
        AffineTransform {
            matrix: inv,
            translation: -(inv * self.translation),
        }
    }

    /// Angle (radians) of the rotation closest to the linear part.
    pub fn rotation_angle_to(&self, rotation: &Matrix3<f64>) -> f64 {
        let svd = self.matrix.svd(true, true);
        let r = svd.u.expect("u") * svd.v_t.expect("v_t");
        let c = ((r * rotation.transpose()).trace() - 1.0) / 2.0;
        c.clamp(-1.0, 1.0).acos()
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SpatialTransform for AffineTransform {
    #[inline]
    fn apply(&self, p: &Vec3) -> Vec3 {
        self.matrix * p + self.translation
    }
}

impl From<AffineTransform> for [f64; 12] {
    fn from(a: AffineTransform) -> Self {
        let m = a.matrix;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
            a.translation.x,
            a.translation.y,
            a.translation.z,
        ]
    }
}

impl TryFrom<[f64; 12]> for AffineTransform {
    type Error = RegistrationError;

    fn try_from(v: [f64; 12]) -> Result<Self, Self::Error> {
        let m = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        AffineTransform::new(m, Vec3::new(v[9], v[10], v[11]))
    }
}

/// Uniform cubic B-spline weights at fractional position `t ∈ [0, 1)`.
#[inline]
pub(crate) fn bspline_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let s = 1.0 - t;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Displacement field `u(x) = Σ_j β((x − o)/h − j)·d_j` on a control lattice,
/// with control point `j` sitting at `o + j⊙h`. Applying it gives `x + u(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfdTransform {
    pub lattice_origin: Vec3,
    pub lattice_spacing: Vec3,
    pub lattice_dims: [usize; 3],
    /// Flat `[dx, dy, dz]` per control point, x index fastest.
    pub displacements: Vec<f64>,
}

/// Lattice cell and per-axis weights for one point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Support {
    pub base: [isize; 3],
    pub w: [[f64; 4]; 3],
}

impl FfdTransform {
    /// Zero lattice whose spline support covers the box `[lo, hi]`.
    pub fn covering(lo: Vec3, hi: Vec3, spacing: f64) -> Result<Self, RegistrationError> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(RegistrationError::InvalidTransform("lattice spacing must be positive".into()));
        }
        let extent = hi - lo;
        let dims = [0, 1, 2].map(|a| (extent[a].max(0.0) / spacing).floor() as usize + 4);
        Ok(Self::zeros(lo - Vec3::repeat(spacing), Vec3::repeat(spacing), dims))
    }

    pub fn zeros(origin: Vec3, spacing: Vec3, dims: [usize; 3]) -> Self {
        Self {
            lattice_origin: origin,
            lattice_spacing: spacing,
            lattice_dims: dims,
            displacements: vec![0.0; 3 * dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn validate(&self) -> Result<(), RegistrationError> {
        let d = self.lattice_dims;
        if d.iter().any(|&n| n < 4) {
            return Err(RegistrationError::InvalidTransform("lattice needs at least 4 nodes per axis".into()));
        }
        if !self.lattice_spacing.iter().all(|&s| s > 0.0) {
            return Err(RegistrationError::InvalidTransform("lattice spacing must be positive".into()));
        }
        if self.displacements.len() != 3 * d[0] * d[1] * d[2] {
            return Err(RegistrationError::InvalidTransform(format!(
                "expected {} displacement values, found {}",
                3 * d[0] * d[1] * d[2],
                self.displacements.len()
            )));
        }
        if !self.displacements.iter().all(|v| v.is_finite()) {
            return Err(RegistrationError::InvalidTransform("non-finite displacement".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.lattice_dims.iter().product()
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.lattice_dims[0] * (j + self.lattice_dims[1] * k)
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.lattice_origin + self.lattice_spacing.component_mul(&Vec3::new(i as f64, j as f64, k as f64))
    }

    pub fn node(&self, n: usize) -> Vec3 {
        Vec3::new(
            self.displacements[3 * n],
            self.displacements[3 * n + 1],
            self.displacements[3 * n + 2],
        )
    }

    pub fn set_node(&mut self, n: usize, d: Vec3) {
        self.displacements[3 * n..3 * n + 3].copy_from_slice(d.as_slice());
    }

    #[inline]
    pub(crate) fn support(&self, p: &Vec3) -> Support {
        let mut base = [0isize; 3];
        let mut w = [[0.0; 4]; 3];
        for a in 0..3 {
            let q = (p[a] - self.lattice_origin[a]) / self.lattice_spacing[a];
            let f = q.floor();
            base[a] = f as isize - 1;
            w[a] = bspline_weights(q - f);
        }
        Support { base, w }
    }

    /// Calls `f(node, weight)` for every control point influencing the point.
    #[inline]
    pub(crate) fn for_each_weight(&self, s: &Support, mut f: impl FnMut(usize, f64)) {
        let d = self.lattice_dims.map(|n| n as isize);
        for n in 0..4 {
            let k = s.base[2] + n as isize;
            if k < 0 || k >= d[2] {
                continue;
            }
            for m in 0..4 {
                let j = s.base[1] + m as isize;
                if j < 0 || j >= d[1] {
                    continue;
                }
                let wjk = s.w[1][m] * s.w[2][n];
                for l in 0..4 {
                    let i = s.base[0] + l as isize;
                    if i < 0 || i >= d[0] {
                        continue;
                    }
                    let node = (i + d[0] * (j + d[1] * k)) as usize;
                    f(node, s.w[0][l] * wjk);
                }
            }
        }
    }

    #[inline]
    pub(crate) fn displacement_with(&self, s: &Support) -> Vec3 {
        let mut u = Vec3::zeros();
        let c = &self.displacements;
        self.for_each_weight(s, |node, w| {
            u.x += w * c[3 * node];
            u.y += w * c[3 * node + 1];
            u.z += w * c[3 * node + 2];
        });
        u
    }

    #[inline]
    pub fn displacement(&self, p: &Vec3) -> Vec3 {
        self.displacement_with(&self.support(p))
    }

    /// Same displacement field on a lattice of half the spacing (exact).
    pub fn refined(&self) -> FfdTransform {
        let d = self.lattice_dims;
        let nd = d.map(|n| 2 * n - 1);
        let mut out = FfdTransform::zeros(self.lattice_origin, self.lattice_spacing / 2.0, nd);
        // Subdivide one axis at a time: even nodes (c₋ + 6c + c₊)/8, odd nodes (c + c₊)/2.
        let mut cur = self.displacements.clone();
        let mut cur_dims = d;
        for axis in 0..3 {
            let mut next_dims = cur_dims;
            next_dims[axis] = 2 * cur_dims[axis] - 1;
            let mut next = vec![0.0; 3 * next_dims.iter().product::<usize>()];
            let idx = |dims: [usize; 3], ijk: [usize; 3]| ijk[0] + dims[0] * (ijk[1] + dims[1] * ijk[2]);
            let n = cur_dims[axis];
            for k in 0..next_dims[2] {
                for j in 0..next_dims[1] {
                    for i in 0..next_dims[0] {
                        let fine = [i, j, k];
                        let pos = fine[axis];
                        let mut coarse = fine;
                        let get = |c: isize, coarse: &mut [usize; 3]| -> Vec3 {
                            if c < 0 || c >= n as isize {
                                return Vec3::zeros();
                            }
                            coarse[axis] = c as usize;
                            let o = 3 * idx(cur_dims, *coarse);
                            Vec3::new(cur[o], cur[o + 1], cur[o + 2])
                        };
                        let c = (pos / 2) as isize;
                        let v = if pos % 2 == 0 {
                            (get(c - 1, &mut coarse) + get(c, &mut coarse) * 6.0 + get(c + 1, &mut coarse)) / 8.0
                        } else {
                            (get(c, &mut coarse) + get(c + 1, &mut coarse)) / 2.0
                        };
                        let o = 3 * idx(next_dims, fine);
                        next[o..o + 3].copy_from_slice(v.as_slice());
                    }
                }
            }
            cur = next;
            cur_dims = next_dims;
        }
        out.displacements = cur;
        out
    }

    pub fn max_displacement_norm(&self) -> f64 {
        (0..self.node_count()).map(|n| self.node(n).norm()).fold(0.0, f64::max)
    }
}

impl SpatialTransform for FfdTransform {
    #[inline]
    fn apply(&self, p: &Vec3) -> Vec3 {
        p + self.displacement(p)
    }
}

/// `φ(x) = A(x + u(x))`: the free-form displacement first, then the affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedTransform<'a> {
    pub affine: &'a AffineTransform,
    pub ffd: Option<&'a FfdTransform>,
}

impl<'a> ComposedTransform<'a> {
    pub fn new(affine: &'a AffineTransform, ffd: Option<&'a FfdTransform>) -> Self {
        Self { affine, ffd }
    }
}

impl SpatialTransform for ComposedTransform<'_> {
    #[inline]
    fn apply(&self, p: &Vec3) -> Vec3 {
        match self.ffd {
            Some(f) => self.affine.apply(&f.apply(p)),
            None => self.affine.apply(p),
        }
    }
}

/// `field ∘ φ` sampled on the field's own grid.
pub fn resample_through_transform(field: &ScalarField, transform: &impl SpatialTransform) -> ScalarField {
    resample_onto(field, transform, field.grid())
}

/// `field ∘ φ` sampled on `grid` (trilinear, clamped at the field border).
pub fn resample_onto(field: &ScalarField, transform: &impl SpatialTransform, grid: &GridSpec) -> ScalarField {
    let values = (0..grid.len())
        .map(|i| field.sample(&transform.apply(&grid.point_at(i))))
        .collect();
    ScalarField::new(*grid, values).expect("resampling a finite field stays finite")
}
