use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acoustics::{AirProperties, DrumImpedance};
use crate::geometry::{CanalJitter, CanalSpec};
use crate::registration::AtlasConfig;

use super::PipelineError;

/// Everything a pipeline run needs. Relative paths resolve against the
/// working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Surface meshes (OBJ) of the population.
    pub mesh_paths: Option<Vec<PathBuf>>,
    /// Synthetic population, used instead of `mesh_paths`.
    pub synthetic: Option<SyntheticPopulation>,
    pub atlas: AtlasConfig,
    pub ssm: SsmOptions,
    pub acoustics: AcousticsOptions,
    pub output_dir: PathBuf,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mesh_paths: None,
            synthetic: Some(SyntheticPopulation::default()),
            atlas: AtlasConfig::default(),
            ssm: SsmOptions::default(),
            acoustics: AcousticsOptions::default(),
            output_dir: PathBuf::from("out"),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticPopulation {
    pub spec: CanalSpec,
    pub count: usize,
    pub seed: u64,
    pub jitter: CanalJitter,
}

impl Default for SyntheticPopulation {
    fn default() -> Self {
        Self {
            spec: CanalSpec::default(),
            count: 10,
            seed: 0,
            jitter: CanalJitter::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsmOptions {
    /// Similarity-Procrustes alignment before PCA.
    pub procrustes: bool,
    /// Modes exported as ±1 SD meshes.
    pub exported_modes: usize,
}

impl Default for SsmOptions {
    fn default() -> Self {
        Self {
            procrustes: false,
            exported_modes: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrumModel {
    Rigid,
    Matched,
    /// CSV of `freq_hz,re_zs,im_zs`.
    Table(PathBuf),
}

impl DrumModel {
    pub fn load(&self) -> Result<DrumImpedance, PipelineError> {
        match self {
            Self::Rigid => Ok(DrumImpedance::Rigid),
            Self::Matched => Ok(DrumImpedance::Matched),
            Self::Table(path) => DrumImpedance::load_csv(path).map_err(|e| PipelineError::input(path, e)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcousticsOptions {
    pub f_min: f64,
    pub f_max: f64,
    pub bands_per_octave: u32,
    pub air: AirProperties,
    pub drum: DrumModel,
    /// Longest tetrahedron edge (m).
    pub max_edge: f64,
    pub horn_segments: usize,
    /// Half-wave resonance every curve is aligned to (Hz).
    pub reference_frequency: f64,
    /// Precomputed tetrahedral mesh for `impedance-fem`.
    pub tet_mesh: Option<PathBuf>,
    /// Measured curves for `average`, with one area function each.
    pub curves: Option<Vec<PathBuf>>,
    pub area_functions: Option<Vec<PathBuf>>,
}

impl Default for AcousticsOptions {
    fn default() -> Self {
        Self {
            f_min: 35.0,
            f_max: 25000.0,
            bands_per_octave: 24,
            air: AirProperties::default(),
            drum: DrumModel::Rigid,
            max_edge: 0.003,
            horn_segments: crate::acoustics::DEFAULT_SEGMENTS,
            reference_frequency: 9400.0,
            tet_mesh: None,
            curves: None,
            area_functions: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => PipelineError::Config(format!("config file not found: {}", path.display())),
            _ => PipelineError::Config(format!("cannot read {}: {e}", path.display())),
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        match (&self.mesh_paths, &self.synthetic) {
            (Some(_), Some(_)) => return bad("give either mesh_paths or synthetic, not both".into()),
            (None, None) => return bad("one of mesh_paths or synthetic is required".into()),
            (Some(p), None) if p.is_empty() => return bad("mesh_paths is empty".into()),
            (None, Some(s)) => {
                if s.count == 0 {
                    return bad("synthetic.count must be at least 1".into());
                }
                s.spec.validate().map_err(|e| PipelineError::Config(format!("synthetic.spec: {e}")))?;
            }
            _ => {}
        }
        self.atlas
            .validate()
            .map_err(|e| PipelineError::Config(format!("atlas: {e}")))?;
        let a = &self.acoustics;
        a.air
            .validate()
            .map_err(|e| PipelineError::Config(format!("acoustics.air: {e}")))?;
        if !(a.f_min > 0.0 && a.f_min < a.f_max) || a.bands_per_octave == 0 {
            return bad("acoustics needs 0 < f_min < f_max and bands_per_octave ≥ 1".into());
        }
        if !(a.max_edge > 0.0) || a.horn_segments == 0 {
            return bad("acoustics.max_edge and horn_segments must be positive".into());
        }
        if let Some(c) = &a.curves {
            if a.area_functions.as_ref().map(Vec::len) != Some(c.len()) {
                return bad("acoustics.curves needs one area function per curve".into());
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }
}
