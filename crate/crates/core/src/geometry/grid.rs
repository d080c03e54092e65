use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec3};

/// Regular voxel lattice. Sample `(i, j, k)` sits at `origin + (i, j, k) ⊙ spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec3,
    pub spacing: Vec3,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Vec3, spacing: Vec3, dims: [usize; 3]) -> Result<Self, GeometryError> {
        if !spacing.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(GeometryError::InvalidGrid(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(GeometryError::InvalidGrid(format!(
                "every axis needs at least 2 samples, got {dims:?}"
            )));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::InvalidGrid("non-finite origin".into()));
        }
        Ok(Self {
            origin,
            spacing,
            dims,
        })
    }

    /// Isotropic grid covering `[lo, hi]` expanded by `margin` on every side.
    pub fn covering(lo: Vec3, hi: Vec3, spacing: f64, margin: f64) -> Result<Self, GeometryError> {
        let origin = lo - Vec3::repeat(margin);
        let extent = hi - lo + Vec3::repeat(2.0 * margin);
        let dims = [0, 1, 2].map(|a| (extent[a] / spacing).ceil() as usize + 1);
        Self::new(origin, Vec3::repeat(spacing), dims)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin
            + Vec3::new(
                i as f64 * self.spacing.x,
                j as f64 * self.spacing.y,
                k as f64 * self.spacing.z,
            )
    }

    pub fn point_at(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.ijk(idx);
        self.point(i, j, k)
    }

    /// Far corner of the lattice.
    pub fn max_corner(&self) -> Vec3 {
        self.point(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    pub fn voxel_diagonal(&self) -> f64 {
        self.spacing.norm()
    }

    /// Half resolution: every second sample, spacing doubled.
    pub fn coarsened(&self) -> GridSpec {
        GridSpec {
            origin: self.origin,
            spacing: self.spacing * 2.0,
            dims: self.dims.map(|d| (d.div_ceil(2)).max(2)),
        }
    }
}

/// Real samples on a [`GridSpec`], x varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.len() != grid.len() {
            return Err(GeometryError::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidGrid("non-finite field value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(Vec3) -> f64) -> Result<Self, GeometryError> {
        let values = (0..grid.len()).map(|i| f(grid.point_at(i))).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Same grid translated by `offset`; values unchanged.
    pub fn translated(&self, offset: Vec3) -> ScalarField {
        let mut grid = self.grid;
        grid.origin += offset;
        Self {
            grid,
            values: self.values.clone(),
        }
    }

    #[inline]
    fn cell(&self, p: &Vec3) -> ([usize; 3], [f64; 3], [bool; 3]) {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut inside = [true; 3];
        for a in 0..3 {
            let n = self.grid.dims[a];
            let mut u = (p[a] - self.grid.origin[a]) / self.grid.spacing[a];
            let hi = (n - 1) as f64;
            if u <= 0.0 {
                inside[a] = u == 0.0;
                u = 0.0;
            } else if u >= hi {
                inside[a] = u == hi;
                u = hi;
            }
            let i0 = (u.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = u - i0 as f64;
        }
        (base, frac, inside)
    }

    /// Trilinear interpolation, clamped to the grid border.
    #[inline]
    pub fn sample(&self, p: &Vec3) -> f64 {
        let ([i, j, k], [tx, ty, tz], _) = self.cell(p);
        let d = self.grid.dims;
        let idx = i + d[0] * (j + d[1] * k);
        let sx = 1;
        let sy = d[0];
        let sz = d[0] * d[1];
        let v = &self.values;
        let c00 = v[idx] * (1.0 - tx) + v[idx + sx] * tx;
        let c10 = v[idx + sy] * (1.0 - tx) + v[idx + sy + sx] * tx;
        let c01 = v[idx + sz] * (1.0 - tx) + v[idx + sz + sx] * tx;
        let c11 = v[idx + sz + sy] * (1.0 - tx) + v[idx + sz + sy + sx] * tx;
        let c0 = c00 * (1.0 - ty) + c10 * ty;
        let c1 = c01 * (1.0 - ty) + c11 * ty;
        c0 * (1.0 - tz) + c1 * tz
    }

    /// Trilinear value and its exact spatial gradient. The gradient component
    /// along an axis is zero where the point is clamped on that axis.
    #[inline]
    pub fn sample_with_gradient(&self, p: &Vec3) -> (f64, Vec3) {
        let ([i, j, k], [tx, ty, tz], inside) = self.cell(p);
        let d = self.grid.dims;
        let idx = i + d[0] * (j + d[1] * k);
        let sy = d[0];
        let sz = d[0] * d[1];
        let v = &self.values;
        let v000 = v[idx];
        let v100 = v[idx + 1];
        let v010 = v[idx + sy];
        let v110 = v[idx + sy + 1];
        let v001 = v[idx + sz];
        let v101 = v[idx + sz + 1];
        let v011 = v[idx + sz + sy];
        let v111 = v[idx + sz + sy + 1];

        let c00 = v000 * (1.0 - tx) + v100 * tx;
        let c10 = v010 * (1.0 - tx) + v110 * tx;
        let c01 = v001 * (1.0 - tx) + v101 * tx;
        let c11 = v011 * (1.0 - tx) + v111 * tx;
        let c0 = c00 * (1.0 - ty) + c10 * ty;
        let c1 = c01 * (1.0 - ty) + c11 * ty;
        let value = c0 * (1.0 - tz) + c1 * tz;

        let dx00 = v100 - v000;
        let dx10 = v110 - v010;
        let dx01 = v101 - v001;
        let dx11 = v111 - v011;
        let dx0 = dx00 * (1.0 - ty) + dx10 * ty;
        let dx1 = dx01 * (1.0 - ty) + dx11 * ty;
        let gx = dx0 * (1.0 - tz) + dx1 * tz;
        let gy = (c10 - c00) * (1.0 - tz) + (c11 - c01) * tz;
        let gz = c1 - c0;

        let s = self.grid.spacing;
        let mut g = Vec3::new(gx / s.x, gy / s.y, gz / s.z);
        for a in 0..3 {
            if !inside[a] {
                g[a] = 0.0;
            }
        }
        (value, g)
    }

    /// Separable Gaussian blur with standard deviation `sigma` (mm); kernel
    /// truncated at 3σ, borders replicated. `sigma <= 0` returns a copy.
    pub fn gaussian_smoothed(&self, sigma: f64) -> ScalarField {
        if sigma <= 0.0 {
            return self.clone();
        }
        let mut values = self.values.clone();
        let mut scratch = vec![0.0; values.len()];
        for axis in 0..3 {
            let s = sigma / self.grid.spacing[axis];
            if s < 1e-3 {
                continue;
            }
            let radius = (3.0 * s).ceil() as isize;
            let mut kernel: Vec<f64> = (-radius..=radius)
                .map(|o| (-(o as f64).powi(2) / (2.0 * s * s)).exp())
                .collect();
            let norm: f64 = kernel.iter().sum();
            kernel.iter_mut().for_each(|w| *w /= norm);
            convolve_axis(&self.grid, &values, &mut scratch, axis, &kernel, radius);
            std::mem::swap(&mut values, &mut scratch);
        }
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    /// Gaussian pre-filter followed by 2× decimation.
    pub fn downsampled(&self) -> ScalarField {
        let smooth = self.gaussian_smoothed(self.grid.spacing.min());
        let grid = self.grid.coarsened();
        let d = self.grid.dims;
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.dims[2] {
            for j in 0..grid.dims[1] {
                for i in 0..grid.dims[0] {
                    let (si, sj, sk) = ((2 * i).min(d[0] - 1), (2 * j).min(d[1] - 1), (2 * k).min(d[2] - 1));
                    values.push(smooth.at(si, sj, sk));
                }
            }
        }
        ScalarField { grid, values }
    }
}

fn convolve_axis(grid: &GridSpec, src: &[f64], dst: &mut [f64], axis: usize, kernel: &[f64], radius: isize) {
    let d = grid.dims;
    let stride = [1, d[0], d[0] * d[1]][axis];
    let n = d[axis] as isize;
    for idx in 0..src.len() {
        let ijk = grid.ijk(idx);
        let pos = ijk[axis] as isize;
        let line_start = idx - ijk[axis] * stride;
        let mut acc = 0.0;
        for (w, o) in kernel.iter().zip(-radius..=radius) {
            let q = (pos + o).clamp(0, n - 1) as usize;
            acc += w * src[line_start + q * stride];
        }
        dst[idx] = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(Vec3::new(-1.0, -2.0, 0.5), Vec3::new(0.5, 0.25, 1.0), [6, 7, 5]).unwrap()
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0), [2, 2, 2]).is_err());
        assert!(GridSpec::new(Vec3::zeros(), Vec3::repeat(1.0), [2, 1, 2]).is_err());
        let g = grid();
        assert!(ScalarField::new(g, vec![0.0; 3]).is_err());
        let mut v = vec![0.0; g.len()];
        v[4] = f64::NAN;
        assert!(ScalarField::new(g, v).is_err());
    }

    #[test]
    fn trilinear_reproduces_affine_functions() {
        let f = |p: Vec3| 0.3 * p.x - 1.7 * p.y + 2.1 * p.z + 0.4;
        let field = ScalarField::from_fn(grid(), f).unwrap();
        for p in [Vec3::new(0.1, -1.3, 2.2), Vec3::new(1.2, -0.6, 1.1)] {
            let (v, g) = field.sample_with_gradient(&p);
            assert!((v - f(p)).abs() < 1e-12);
            assert!((g - Vec3::new(0.3, -1.7, 2.1)).norm() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let field = ScalarField::from_fn(grid(), |p| (p.x * p.y).sin() + p.z * p.z).unwrap();
        let p = Vec3::new(0.33, -1.11, 2.37);
        let (_, g) = field.sample_with_gradient(&p);
        let h = 1e-6;
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = h;
            let fd = (field.sample(&(p + e)) - field.sample(&(p - e))) / (2.0 * h);
            assert!((fd - g[a]).abs() < 1e-6, "axis {a}: {fd} vs {}", g[a]);
        }
    }

    #[test]
    fn clamps_outside() {
        let field = ScalarField::from_fn(grid(), |p| p.x).unwrap();
        let (v, g) = field.sample_with_gradient(&Vec3::new(-10.0, 0.0, 1.0));
        assert_eq!(v, -1.0);
        assert_eq!(g.x, 0.0);
    }

    #[test]
    fn smoothing_preserves_constants() {
        let f = ScalarField::constant(grid(), 3.5).gaussian_smoothed(0.7);
        assert!(f.values().iter().all(|v| (v - 3.5).abs() < 1e-12));
    }
}
