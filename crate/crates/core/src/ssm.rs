//! Point distribution model over corresponded surfaces.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{GeometryError, MeshIndex, TriMesh, Vec3};
use crate::registration::{AtlasResult, SpatialTransform};

#[derive(Debug, thiserror::Error)]
pub enum SsmError {
    #[error("population of {0} shapes is too small (need at least 2)")]
    TooFewShapes(usize),
    #[error("all shapes are identical; the model has no modes")]
    DegeneratePopulation { mean_only: Box<ShapeModel> },
    #[error("{given} coefficients given but the model has {modes} modes")]
    TooManyCoefficients { given: usize, modes: usize },
    #[error("shape {index} has {found} points, expected {expected}")]
    PointCountMismatch { index: usize, expected: usize, found: usize },
    #[error("atlas describes {atlas} subjects but {surfaces} surfaces were given")]
    SubjectCountMismatch { atlas: usize, surfaces: usize },
    #[error("malformed shape model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Template vertices carried onto every subject surface.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    /// `points[i][v]`: vertex `v` of the template on subject `i`.
    pub points: Vec<Vec<Vec3>>,
    pub faces: Vec<[usize; 3]>,
}

impl CorrespondenceSet {
    pub fn population_size(&self) -> usize {
        self.points.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn mesh(&self, i: usize) -> Result<TriMesh, GeometryError> {
        TriMesh::new(self.points[i].clone(), self.faces.clone())
    }
}

/// Maps every template vertex through `φ_i` and snaps it onto surface `i`.
pub fn project_correspondences(atlas: &AtlasResult, surfaces: &[TriMesh]) -> Result<CorrespondenceSet, SsmError> {
    if atlas.per_subject_affine.len() != surfaces.len() {
        return Err(SsmError::SubjectCountMismatch {
            atlas: atlas.per_subject_affine.len(),
            surfaces: surfaces.len(),
        });
    }
    let template = &atlas.template_mesh;
    let points = surfaces
        .par_iter()
        .enumerate()
        .map(|(i, surface)| {
            let index = MeshIndex::new(surface)?;
            let phi = atlas.transform(i);
            Ok(template
                .vertices()
                .iter()
                .map(|v| index.closest_point(&phi.apply(v)).point)
                .collect())
        })
        .collect::<Result<Vec<Vec<Vec3>>, GeometryError>>()?;
    Ok(CorrespondenceSet {
        points,
        faces: template.faces().to_vec(),
    })
}

/// Mean shape plus orthonormal modes of variation.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeModel {
    pub mean_points: Vec<Vec3>,
    /// `3·vertex_count × mode_count`, columns orthonormal.
    pub modes: DMatrix<f64>,
    /// Per-mode variance (mm²), descending.
    pub eigenvalues: Vec<f64>,
    pub faces: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdmOptions {
    /// Similarity-Procrustes alignment of the shapes before PCA.
    pub procrustes: bool,
}

/// Eigenvalues below this fraction of the largest are dropped.
const TRUNCATION: f64 = 1e-12;

fn flatten(points: &[Vec3]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn unflatten(flat: &[f64]) -> Vec<Vec3> {
    flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

pub fn build_pdm(correspondences: &CorrespondenceSet) -> Result<ShapeModel, SsmError> {
    build_pdm_with(correspondences, &PdmOptions::default())
}

pub fn build_pdm_with(correspondences: &CorrespondenceSet, options: &PdmOptions) -> Result<ShapeModel, SsmError> {
    let m = correspondences.population_size();
    if m < 2 {
        return Err(SsmError::TooFewShapes(m));
    }
    let nv = correspondences.vertex_count();
    for (index, p) in correspondences.points.iter().enumerate() {
        if p.len() != nv {
            return Err(SsmError::PointCountMismatch {
                index,
                expected: nv,
                found: p.len(),
            });
        }
    }
    let shapes = if options.procrustes {
        generalized_procrustes(&correspondences.points)
    } else {
        correspondences.points.clone()
    };
    let d = 3 * nv;
    // Rows are subjects.
    let mut x = DMatrix::<f64>::zeros(m, d);
    for (i, s) in shapes.iter().enumerate() {
        x.row_mut(i).copy_from_slice(&flatten(s));
    }
    let mean: DVector<f64> = DVector::from_iterator(d, (0..d).map(|j| x.column(j).sum() / m as f64));
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = (m - 1) as f64;
    let gram = (&x * x.transpose()) / denom;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda1 = eig.eigenvalues[order[0]].max(0.0);
    // Variance at rounding level of the coordinates counts as none.
    let noise = 1e-20 * mean.norm_squared() / d as f64;
    let lambda1 = if lambda1 > noise { lambda1 } else { 0.0 };
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&k| lambda1 > 0.0 && eig.eigenvalues[k] > TRUNCATION * lambda1)
        .take(m - 1)
        .collect();
    let mut modes = DMatrix::<f64>::zeros(d, kept.len());
    let mut eigenvalues = Vec::with_capacity(kept.len());
    for (c, &k) in kept.iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        let u = eig.eigenvectors.column(k);
        let mut v = x.transpose() * u;
        v /= v.norm();
        let lead = v.iamax();
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        modes.set_column(c, &v);
        eigenvalues.push(lambda);
    }
    let model = ShapeModel {
        mean_points: unflatten(mean.as_slice()),
        modes,
        eigenvalues,
        faces: correspondences.faces.clone(),
    };
    if model.mode_count() == 0 {
        return Err(SsmError::DegeneratePopulation {
            mean_only: Box::new(model),
        });
    }
    Ok(model)
}

/// Iteratively aligns every shape (rotation, uniform scale, translation) to
/// the running mean, which is kept at the first shape's centroid and size.
fn generalized_procrustes(shapes: &[Vec<Vec3>]) -> Vec<Vec<Vec3>> {
    let centroid = |s: &[Vec3]| s.iter().sum::<Vec3>() / s.len() as f64;
    let size = |s: &[Vec3], c: &Vec3| s.iter().map(|p| (p - c).norm_squared()).sum::<f64>().sqrt();
    let c0 = centroid(&shapes[0]);
    let s0 = size(&shapes[0], &c0);
    let mut reference = shapes[0].clone();
    let mut aligned = shapes.to_vec();
    for _ in 0..10 {
        aligned = shapes.iter().map(|s| align_similarity(s, &reference)).collect();
        let mut mean: Vec<Vec3> = (0..reference.len())
            .map(|v| aligned.iter().map(|s| s[v]).sum::<Vec3>() / aligned.len() as f64)
            .collect();
        let c = centroid(&mean);
        let k = s0 / size(&mean, &c).max(f64::MIN_POSITIVE);
        mean.iter_mut().for_each(|p| *p = (*p - c) * k + c0);
        let change = mean.iter().zip(&reference).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        reference = mean;
        if change < 1e-10 {
            break;
        }
    }
    aligned
}

/// Least-squares similarity transform of `from` onto `to`, applied to `from`.
fn align_similarity(from: &[Vec3], to: &[Vec3]) -> Vec<Vec3> {
    let n = from.len() as f64;
    let cf = from.iter().sum::<Vec3>() / n;
    let ct = to.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    let mut var = 0.0;
    for (a, b) in from.iter().zip(to) {
        cov += (b - ct) * (a - cf).transpose();
        var += (a - cf).norm_squared();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    let scale = (svd.singular_values.component_mul(&d.diagonal())).sum() / var.max(f64::MIN_POSITIVE);
    from.iter().map(|a| r * (a - cf) * scale + ct).collect()
}

impl ShapeModel {
    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mean_points.len()
    }

    pub fn mean_mesh(&self) -> Result<TriMesh, GeometryError> {
        TriMesh::new(self.mean_points.clone(), self.faces.clone())
    }

    /// Vertex positions for coefficients in standard-deviation units.
    pub fn synthesize_points(&self, coefficients: &[f64]) -> Result<Vec<Vec3>, SsmError> {
        if coefficients.len() > self.mode_count() {
            return Err(SsmError::TooManyCoefficients {
                given: coefficients.len(),
                modes: self.mode_count(),
            });
        }
        let mut flat = DVector::from_vec(flatten(&self.mean_points));
        for (k, c) in coefficients.iter().enumerate() {
            flat.axpy(c * self.eigenvalues[k].sqrt(), &self.modes.column(k), 1.0);
        }
        Ok(unflatten(flat.as_slice()))
    }

    /// Coefficients (standard-deviation units) of `points` on every mode.
    pub fn project(&self, points: &[Vec3]) -> Result<Vec<f64>, SsmError> {
        if points.len() != self.vertex_count() {
            return Err(SsmError::PointCountMismatch {
                index: 0,
                expected: self.vertex_count(),
                found: points.len(),
            });
        }
        let centered: Vec<f64> = flatten(points)
            .iter()
            .zip(flatten(&self.mean_points))
            .map(|(p, m)| p - m)
            .collect();
        let centered = DVector::from_vec(centered);
        Ok((0..self.mode_count())
            .map(|k| self.modes.column(k).dot(&centered) / self.eigenvalues[k].sqrt())
            .collect())
    }

    pub fn to_json(&self) -> Result<String, SsmError> {
        Ok(serde_json::to_string(&ShapeModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self, SsmError> {
        serde_json::from_str::<ShapeModelFile>(text)?.try_into()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), SsmError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, SsmError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn synthesize(model: &ShapeModel, coefficients: &[f64]) -> Result<TriMesh, SsmError> {
    Ok(TriMesh::new(model.synthesize_points(coefficients)?, model.faces.clone())?)
}

/// Share of the total variance carried by the first `k` modes.
pub fn explained_variance(model: &ShapeModel, k: usize) -> f64 {
    let total: f64 = model.eigenvalues.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    model.eigenvalues.iter().take(k).sum::<f64>() / total
}

/// Subject whose correspondences have the smallest RMS distance to the mean.
pub fn nearest_to_mean(model: &ShapeModel, correspondences: &CorrespondenceSet) -> usize {
    let rms = |pts: &[Vec3]| {
        pts.iter()
            .zip(&model.mean_points)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            / pts.len().max(1) as f64
    };
    let mut best = (0, f64::INFINITY);
    for (i, pts) in correspondences.points.iter().enumerate() {
        let d = rms(pts);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// On-disk layout: counts and eigenvalues up front, then flat arrays.
#[derive(Serialize, Deserialize)]
struct ShapeModelFile {
    vertex_count: usize,
    mode_count: usize,
    eigenvalues: Vec<f64>,
    mean: Vec<f64>,
    /// Mode-major: all coordinates of mode 0, then mode 1, ...
    modes: Vec<f64>,
    faces: Vec<[usize; 3]>,
}

impl From<&ShapeModel> for ShapeModelFile {
    fn from(m: &ShapeModel) -> Self {
        Self {
            vertex_count: m.vertex_count(),
            mode_count: m.mode_count(),
            eigenvalues: m.eigenvalues.clone(),
            mean: flatten(&m.mean_points),
            modes: m.modes.as_slice().to_vec(),
            faces: m.faces.clone(),
        }
    }
}

impl TryFrom<ShapeModelFile> for ShapeModel {
    type Error = SsmError;

    fn try_from(f: ShapeModelFile) -> Result<Self, SsmError> {
        let d = 3 * f.vertex_count;
        if f.mean.len() != d || f.eigenvalues.len() != f.mode_count || f.modes.len() != d * f.mode_count {
            return Err(SsmError::Malformed("array lengths disagree with the counts".into()));
        }
        if f.faces.iter().flatten().any(|&i| i >= f.vertex_count) {
            return Err(SsmError::Malformed("face index out of range".into()));
        }
        Ok(Self {
            mean_points: unflatten(&f.mean),
            modes: DMatrix::from_vec(d, f.mode_count, f.modes),
            eigenvalues: f.eigenvalues,
            faces: f.faces,
        })
    }
}
