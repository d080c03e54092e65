//! Narrow-band ℓ1 distance between signed distance fields.

use crate::geometry::{ScalarField, Vec3};

use nalgebra::{SMatrix, SVector};

use super::transform::Support;
use super::{AffineTransform, FfdTransform, RegistrationConfig, RegistrationError, SpatialTransform};

/// `M = mean_{x∈B} |S(x) − R(φ(x))|` over the band `B = {x : |S(x)| < w}`,
/// with both fields Gaussian-smoothed at `config.smoothing_sigma` first.
pub fn similarity_l1(
    subject: &ScalarField,
    reference: &ScalarField,
    transform: &impl SpatialTransform,
    config: &RegistrationConfig,
) -> Result<f64, RegistrationError> {
    Ok(SimilarityTerm::new(subject, reference, config)?.value(transform))
}

/// Reusable evaluator of the narrow-band ℓ1 term and its gradients.
#[derive(Debug, Clone)]
pub struct SimilarityTerm {
    points: Vec<Vec3>,
    targets: Vec<f64>,
    reference: ScalarField,
}

impl SimilarityTerm {
    /// Smooths both fields and collects the band of the subject.
    pub fn new(
        subject: &ScalarField,
        reference: &ScalarField,
        config: &RegistrationConfig,
    ) -> Result<Self, RegistrationError> {
        let s = subject.gaussian_smoothed(config.smoothing_sigma);
        let r = reference.gaussian_smoothed(config.smoothing_sigma);
        Self::from_smoothed(&s, r, config.narrowband_width)
    }

    /// Uses the fields as given, without further smoothing.
    pub fn from_smoothed(
        subject: &ScalarField,
        reference: ScalarField,
        narrowband_width: f64,
    ) -> Result<Self, RegistrationError> {
        let grid = subject.grid();
        let mut points = Vec::new();
        let mut targets = Vec::new();
        for (i, &v) in subject.values().iter().enumerate() {
            if v.abs() < narrowband_width {
                points.push(grid.point_at(i));
                targets.push(v);
            }
        }
        if points.is_empty() {
            return Err(RegistrationError::EmptyNarrowband);
        }
        Ok(Self {
            points,
            targets,
            reference,
        })
    }

    pub fn band_size(&self) -> usize {
        self.points.len()
    }

    pub fn band_points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn value(&self, transform: &impl SpatialTransform) -> f64 {
        let sum: f64 = self
            .points
            .iter()
            .zip(&self.targets)
            .map(|(p, s)| (s - self.reference.sample(&transform.apply(p))).abs())
            .sum();
        sum / self.points.len() as f64
    }

    /// Value and gradient for `φ(x) = (I + P/ρ)(x − c) + c + t`, parameters
    /// ordered as `P` row-major then `t`.
    pub fn affine_gradient(&self, param: &AffineParameterization, p: &[f64; 12]) -> (f64, [f64; 12]) {
        let a = param.transform(p);
        let inv_n = 1.0 / self.points.len() as f64;
        let mut value = 0.0;
        let mut g = [0.0; 12];
        for (x, s) in self.points.iter().zip(&self.targets) {
            let y = a.apply(x);
            let (r, dr) = self.reference.sample_with_gradient(&y);
            let res = s - r;
            value += res.abs();
            let sgn = -res.signum();
            if res == 0.0 {
                continue;
            }
            let rel = (x - param.center) / param.scale;
            for row in 0..3 {
                let w = sgn * dr[row];
                for col in 0..3 {
                    g[3 * row + col] += w * rel[col];
                }
                g[9 + row] += w;
            }
        }
        g.iter_mut().for_each(|v| *v *= inv_n);
        (value * inv_n, g)
    }

    /// Value and gradient with respect to the flat lattice displacements for
    /// `φ(x) = A(x + u(x))` with `A` held fixed.
    pub fn ffd_gradient(&self, affine: &AffineTransform, ffd: &FfdTransform) -> (f64, Vec<f64>) {
        let inv_n = 1.0 / self.points.len() as f64;
        let mut value = 0.0;
        let mut g = vec![0.0; ffd.displacements.len()];
        let mt = affine.matrix.transpose();
        for (x, s) in self.points.iter().zip(&self.targets) {
            let sup = ffd.support(x);
            let u = ffd.displacement_with(&sup);
            let y = affine.apply(&(x + u));
            let (r, dr) = self.reference.sample_with_gradient(&y);
            let res = s - r;
            value += res.abs();
            if res == 0.0 {
                continue;
            }
            let w = mt * dr * (-res.signum() * inv_n);
            ffd.for_each_weight(&sup, |node, b| {
                g[3 * node] += b * w.x;
                g[3 * node + 1] += b * w.y;
                g[3 * node + 2] += b * w.z;
            });
        }
        (value * inv_n, g)
    }

    /// Residual floor for the reweighting: a small fraction of a voxel.
    fn irls_floor(&self) -> f64 {
        IRLS_FLOOR * self.reference.grid().spacing.min()
    }

    /// Reweighted Gauss–Newton matrix of the affine problem: the ℓ1 term is
    /// treated as least squares with weights `1/max(|r|, ε)`.
    pub(crate) fn affine_curvature(&self, param: &AffineParameterization, p: &[f64; 12]) -> SMatrix<f64, 12, 12> {
        let a = param.transform(p);
        let eps = self.irls_floor();
        let mut h = SMatrix::<f64, 12, 12>::zeros();
        for (x, s) in self.points.iter().zip(&self.targets) {
            let (r, dr) = self.reference.sample_with_gradient(&a.apply(x));
            let w = 1.0 / (s - r).abs().max(eps);
            let rel = (x - param.center) / param.scale;
            let mut j = SVector::<f64, 12>::zeros();
            for row in 0..3 {
                for col in 0..3 {
                    j[3 * row + col] = dr[row] * rel[col];
                }
                j[9 + row] = dr[row];
            }
            h.syger(w, &j, &j, 1.0);
        }
        h / self.points.len() as f64
    }

    /// Reweighted Gauss–Newton linearization of the free-form problem at `ffd`.
    pub(crate) fn ffd_linearization(&self, affine: &AffineTransform, ffd: &FfdTransform) -> FfdLinearization {
        let eps = self.irls_floor();
        let inv_n = 1.0 / self.points.len() as f64;
        let mt = affine.matrix.transpose();
        let mut supports = Vec::with_capacity(self.points.len());
        let mut gradients = Vec::with_capacity(self.points.len());
        let mut diagonal = vec![0.0; ffd.displacements.len()];
        for (x, s) in self.points.iter().zip(&self.targets) {
            let sup = ffd.support(x);
            let y = affine.apply(&(x + ffd.displacement_with(&sup)));
            let (r, dr) = self.reference.sample_with_gradient(&y);
            let w = inv_n / (s - r).abs().max(eps);
            let g = mt * dr;
            let gw = g.component_mul(&g) * w;
            ffd.for_each_weight(&sup, |node, b| {
                let b2 = b * b;
                diagonal[3 * node] += b2 * gw.x;
                diagonal[3 * node + 1] += b2 * gw.y;
                diagonal[3 * node + 2] += b2 * gw.z;
            });
            supports.push(sup);
            gradients.push(g * w.sqrt());
        }
        FfdLinearization {
            lattice: FfdTransform::zeros(ffd.lattice_origin, ffd.lattice_spacing, ffd.lattice_dims),
            supports,
            gradients,
            diagonal,
        }
    }
}

const IRLS_FLOOR: f64 = 0.05;

/// `H v = Σ_x w_x J_xᵀ J_x v` for the free-form coefficients.
pub(crate) struct FfdLinearization {
    lattice: FfdTransform,
    supports: Vec<Support>,
    /// `√w_x · Aᵀ∇R` per band point.
    gradients: Vec<Vec3>,
    pub diagonal: Vec<f64>,
}

impl FfdLinearization {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (sup, g) in self.supports.iter().zip(&self.gradients) {
            let mut jv = 0.0;
            self.lattice.for_each_weight(sup, |node, b| {
                jv += b * (g.x * v[3 * node] + g.y * v[3 * node + 1] + g.z * v[3 * node + 2]);
            });
            let q = g * jv;
            self.lattice.for_each_weight(sup, |node, b| {
                out[3 * node] += b * q.x;
                out[3 * node + 1] += b * q.y;
                out[3 * node + 2] += b * q.z;
            });
        }
        out
    }
}

/// Affine parameters centred on the band so that all twelve act on a
/// millimetre scale: `φ(x) = (I + P/ρ)(x − c) + c + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParameterization {
    pub center: Vec3,
    pub scale: f64,
}

impl AffineParameterization {
    /// Raw matrix-and-translation coordinates.
    pub fn raw() -> Self {
        Self {
            center: Vec3::zeros(),
            scale: 1.0,
        }
    }

    /// Centroid and RMS radius of the points.
    pub fn for_points(points: &[Vec3]) -> Self {
        let n = points.len().max(1) as f64;
        let center = points.iter().sum::<Vec3>() / n;
        let rms = (points.iter().map(|p| (p - center).norm_squared()).sum::<f64>() / n).sqrt();
        Self {
            center,
            scale: if rms > 0.0 { rms } else { 1.0 },
        }
    }

    pub fn transform(&self, p: &[f64; 12]) -> AffineTransform {
        let m = nalgebra::Matrix3::identity()
            + nalgebra::Matrix3::from_row_slice(&p[..9]) / self.scale;
        let t = Vec3::new(p[9], p[10], p[11]);
        AffineTransform {
            matrix: m,
            translation: self.center + t - m * self.center,
        }
    }

    pub fn parameters(&self, a: &AffineTransform) -> [f64; 12] {
        let p = (a.matrix - nalgebra::Matrix3::identity()) * self.scale;
        let t = a.matrix * self.center + a.translation - self.center;
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = p[(r, c)];
            }
            out[9 + r] = t[r];
        }
        out
    }
}
