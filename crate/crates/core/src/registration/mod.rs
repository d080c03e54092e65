//! Affine and B-spline free-form registration of signed distance fields, and
//! groupwise template construction.
//!
//! Transforms map fixed (template) space into moving (subject) space, so the
//! moving field is resampled as `R ∘ φ`.

use serde::{Deserialize, Serialize};

use crate::geometry::GeometryError;

mod atlas;
mod bending;
mod optimize;
mod register;
mod similarity;
mod transform;

pub use atlas::{build_atlas, remove_mean_displacement, surface_sdf, AtlasConfig, AtlasResult};
pub use bending::{bending_energy, bending_energy_gradient};
pub use register::{register_affine, register_ffd, register_ffd_detailed, FfdOutcome};
pub use similarity::{similarity_l1, AffineParameterization, SimilarityTerm};
pub use transform::{
    resample_onto, resample_through_transform, AffineTransform, ComposedTransform, FfdTransform,
    SpatialTransform,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    /// Weight of the bending energy.
    pub lambda: f64,
    /// Half-width of the band `|S| < w` used by the similarity (mm).
    pub narrowband_width: f64,
    pub pyramid_levels: usize,
    /// Iterations per pyramid level.
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Smallest step worth trying (mm).
    pub step_tolerance: f64,
    /// Gaussian pre-smoothing of both fields (mm).
    pub smoothing_sigma: f64,
    /// Control-point spacing at the finest level (mm); doubles per coarser level.
    pub lattice_spacing: f64,
    /// Largest rotation the affine stage may introduce (degrees).
    pub max_rotation_deg: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            narrowband_width: 4.0,
            pyramid_levels: 3,
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-4,
            smoothing_sigma: 0.5,
            lattice_spacing: 4.0,
            max_rotation_deg: 30.0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: &str| Err(RegistrationError::InvalidConfig(m.to_string()));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.narrowband_width > 0.0) {
            return bad("narrowband_width must be positive");
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be at least 1");
        }
        if !(self.smoothing_sigma >= 0.0) {
            return bad("smoothing_sigma must be non-negative");
        }
        if !(self.lattice_spacing > 0.0) {
            return bad("lattice_spacing must be positive");
        }
        if !(self.max_rotation_deg > 0.0 && self.max_rotation_deg <= 180.0) {
            return bad("max_rotation_deg must be in (0, 180]");
        }
        if !(self.step_tolerance > 0.0 && self.gradient_tolerance >= 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RegistrationError {
    #[error("narrow band is empty")]
    EmptyNarrowband,
    #[error("no descent direction reduces the objective at pyramid level {level}")]
    NoDescent { level: usize },
    #[error("template update grew for two consecutive iterations (iteration {iteration})")]
    Diverged { iteration: usize },
    #[error("atlas needs at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("subject {index}: {source}")]
    Subject {
        index: usize,
        #[source]
        source: Box<RegistrationError>,
    },
    #[error("invalid registration config: {0}")]
    InvalidConfig(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
