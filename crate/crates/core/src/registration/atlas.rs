//! Groupwise template construction.

use std::io::Write;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{cap_open_boundaries, signed_distance_field, GridSpec, ScalarField, TriMesh, Vec3};

use super::{
    register_affine, register_ffd, AffineTransform, ComposedTransform, FfdTransform, RegistrationConfig,
    RegistrationError, SpatialTransform,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtlasConfig {
    pub registration: RegistrationConfig,
    /// SDF voxel size (mm).
    pub grid_spacing: f64,
    /// Outer template-update iterations.
    pub max_iterations: usize,
    /// Mean vertex update (mm) below which the template is final.
    pub tolerance: f64,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self {
            registration: RegistrationConfig::default(),
            grid_spacing: 0.5,
            max_iterations: 10,
            tolerance: 0.05,
        }
    }
}

impl AtlasConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        self.registration.validate()?;
        if !(self.grid_spacing > 0.0) {
            return Err(RegistrationError::InvalidConfig("grid_spacing must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(RegistrationError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(RegistrationError::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Distance between a surface and its SDF grid border (mm).
    pub fn grid_margin(&self) -> f64 {
        self.registration.narrowband_width + 4.0 + 2.0 * self.grid_spacing
    }
}

#[derive(Debug, Clone)]
pub struct AtlasResult {
    pub template_mesh: TriMesh,
    /// `φ_i = affine_i ∘ (id + u_i)` maps template space into subject `i`.
    pub per_subject_affine: Vec<AffineTransform>,
    pub per_subject_ffd: Vec<FfdTransform>,
    /// Mean template vertex update per outer iteration (mm).
    pub convergence_history: Vec<f64>,
}

impl AtlasResult {
    pub fn transform(&self, i: usize) -> ComposedTransform<'_> {
        ComposedTransform::new(&self.per_subject_affine[i], Some(&self.per_subject_ffd[i]))
    }

    pub fn write_history_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "iteration,mean_update_mm")?;
        for (i, v) in self.convergence_history.iter().enumerate() {
            writeln!(w, "{},{v:.17e}", i + 1)?;
        }
        Ok(())
    }
}

/// SDF of a (capped) surface on a grid covering it with the atlas margin.
pub fn surface_sdf(mesh: &TriMesh, config: &AtlasConfig) -> Result<ScalarField, RegistrationError> {
    let closed = cap_open_boundaries(mesh)?;
    let (lo, hi) = closed.bounding_box().ok_or(crate::geometry::GeometryError::EmptyMesh)?;
    let grid = GridSpec::covering(lo, hi, config.grid_spacing, config.grid_margin())?;
    Ok(signed_distance_field(&closed, &grid)?)
}

/// Registers the template to every subject, averages the mapped template
/// vertices into a new template, and repeats until the update is small.
pub fn build_atlas(surfaces: &[TriMesh], config: &AtlasConfig) -> Result<AtlasResult, RegistrationError> {
    config.validate()?;
    if surfaces.len() < 2 {
        return Err(RegistrationError::TooFewSubjects(surfaces.len()));
    }
    let reg = &config.registration;
    let with_index = |i: usize| move |e: RegistrationError| RegistrationError::Subject {
        index: i,
        source: Box::new(e),
    };
    let fields: Vec<ScalarField> = surfaces
        .par_iter()
        .enumerate()
        .map(|(i, m)| surface_sdf(m, config).map_err(with_index(i)))
        .collect::<Result<_, _>>()?;

    // Start from subject 0 carried to the mean of its affine alignments.
    let initial: Vec<AffineTransform> = fields
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            if i == 0 {
                Ok(AffineTransform::identity())
            } else {
                register_affine(&fields[0], f, reg).map_err(with_index(i))
            }
        })
        .collect::<Result<_, _>>()?;
    let mean_affine = mean_affine(&initial)?;
    let mut template = surfaces[0].map_vertices(|v| mean_affine.apply(v));

    let mut history: Vec<f64> = Vec::new();
    let mut affines = Vec::new();
    let mut ffds = Vec::new();
    for iteration in 0..config.max_iterations {
        let t_field = surface_sdf(&template, config)?;
        let pairs: Vec<(AffineTransform, FfdTransform)> = fields
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let a = register_affine(&t_field, f, reg).map_err(with_index(i))?;
                let u = register_ffd(&t_field, f, &a, reg).map_err(with_index(i))?;
                Ok((a, u))
            })
            .collect::<Result<_, RegistrationError>>()?;
        let (a, u): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();

        let m = surfaces.len() as f64;
        let moved: Vec<Vec3> = template
            .vertices()
            .iter()
            .map(|v| {
                a.iter()
                    .zip(&u)
                    .map(|(ai, ui)| ComposedTransform::new(ai, Some(ui)).apply(v))
                    .sum::<Vec3>()
                    / m
            })
            .collect();
        let update = template
            .vertices()
            .iter()
            .zip(&moved)
            .map(|(p, q)| (p - q).norm())
            .sum::<f64>()
            / moved.len() as f64;
        (affines, ffds) = remove_mean_displacement(&a, &u)?;
        template = template.with_vertices(moved)?;
        history.push(update);
        log::info!("stage=atlas iteration={} mean_update_mm={:.6e}", iteration + 1, update);
        if update < config.tolerance {
            break;
        }
        let k = history.len();
        if k >= 3 && history[k - 1] > history[k - 2] && history[k - 2] > history[k - 3] {
            return Err(RegistrationError::Diverged { iteration: k });
        }
    }
    Ok(AtlasResult {
        template_mesh: template,
        per_subject_affine: affines,
        per_subject_ffd: ffds,
        convergence_history: history,
    })
}

fn mean_affine(all: &[AffineTransform]) -> Result<AffineTransform, RegistrationError> {
    let n = all.len() as f64;
    let m = all.iter().map(|a| a.matrix).sum::<Matrix3<f64>>() / n;
    let t = all.iter().map(|a| a.translation).sum::<Vec3>() / n;
    AffineTransform::new(m, t)
}

/// Rewrites every `φ_i` as `φ_i − mean_k(φ_k − id)` so that the transforms
/// average to the identity everywhere. Exact because all lattices coincide.
pub fn remove_mean_displacement(
    affines: &[AffineTransform],
    ffds: &[FfdTransform],
) -> Result<(Vec<AffineTransform>, Vec<FfdTransform>), RegistrationError> {
    let n = affines.len() as f64;
    let m_bar = affines.iter().map(|a| a.matrix).sum::<Matrix3<f64>>() / n;
    let t_bar = affines.iter().map(|a| a.translation).sum::<Vec3>() / n;
    let nodes = ffds[0].node_count();
    if ffds.iter().any(|f| f.lattice_dims != ffds[0].lattice_dims || f.lattice_origin != ffds[0].lattice_origin) {
        return Err(RegistrationError::InvalidTransform("subject lattices differ".into()));
    }
    let mean_mc: Vec<Vec3> = (0..nodes)
        .map(|j| affines.iter().zip(ffds).map(|(a, f)| a.matrix * f.node(j)).sum::<Vec3>() / n)
        .collect();
    let mut out_a = Vec::with_capacity(affines.len());
    let mut out_f = Vec::with_capacity(affines.len());
    for (a, f) in affines.iter().zip(ffds) {
        let m = a.matrix - m_bar + Matrix3::identity();
        let corrected = AffineTransform::new(m, a.translation - t_bar)?;
        let inv = m.try_inverse().expect("positive determinant");
        let mut g = f.clone();
        for (j, mc) in mean_mc.iter().enumerate() {
            g.set_node(j, inv * (a.matrix * f.node(j) - mc));
        }
        out_a.push(corrected);
        out_f.push(g);
    }
    Ok((out_a, out_f))
}
