//! Acoustic input impedance of ducts: analytic lines, horn propagation and
//! a linear tetrahedral Helmholtz solver.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::geometry::GeometryError;

mod fem;
mod grid;
mod horn;
mod tetmesh;
mod tube;

pub use fem::{
    fem_half_wave_resonance, solve_input_impedance_fem, FemSolution, FemSystem, MeshTooCoarse,
    ELEMENTS_PER_WAVELENGTH,
};
pub use grid::{freq_grid, FrequencyGrid, ImpedanceCurve};
pub use horn::{
    align_to_reference_plane, find_half_wave_resonance, horn_input_impedance, horn_propagate, horn_propagate_with,
    population_average, TransferMatrix, DEFAULT_SEGMENTS,
};
pub use tetmesh::{sweep_tet_mesh, sweep_tube_tet_mesh, BoundaryTag, TetMesh};
pub use tube::{analytic_tube_impedance, DrumImpedance};

pub type Complex = num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum AcousticsError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("position {position} m lies outside [{min}, {max}] m")]
    OutOfRange { position: f64, min: f64, max: f64 },
    #[error("no impedance maximum between {lo} Hz and {hi} Hz")]
    NoResonance { lo: f64, hi: f64 },
    #[error("curves are sampled on different frequency grids")]
    GridMismatch,
    #[error("singular system at {frequency} Hz")]
    SingularSystem { frequency: f64 },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Density (kg/m³) and speed of sound (m/s) of the medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AirProperties {
    pub density: f64,
    pub sound_speed: f64,
}

impl Default for AirProperties {
    fn default() -> Self {
        Self {
            density: 1.21,
            sound_speed: 343.0,
        }
    }
}

impl AirProperties {
    pub fn new(density: f64, sound_speed: f64) -> Result<Self, AcousticsError> {
        let air = Self { density, sound_speed };
        air.validate()?;
        Ok(air)
    }

    pub fn validate(&self) -> Result<(), AcousticsError> {
        if !(self.density > 0.0 && self.sound_speed > 0.0) {
            return Err(AcousticsError::InvalidRange("density and sound speed must be positive".into()));
        }
        Ok(())
    }

    /// Specific impedance ρc (Pa·s/m).
    pub fn specific_impedance(&self) -> f64 {
        self.density * self.sound_speed
    }

    /// Characteristic impedance ρc/A of a duct (Pa·s/m³).
    pub fn characteristic_impedance(&self, area: f64) -> f64 {
        self.specific_impedance() / area
    }

    pub fn wavenumber(&self, frequency: f64) -> f64 {
        std::f64::consts::TAU * frequency / self.sound_speed
    }

    /// Longest element edge that still resolves `frequency` with
    /// [`ELEMENTS_PER_WAVELENGTH`] elements per wavelength (m).
    pub fn max_element_edge(&self, frequency: f64) -> f64 {
        self.sound_speed / (ELEMENTS_PER_WAVELENGTH * frequency)
    }
}

fn read_error(path: &std::path::Path, e: csv::Error) -> AcousticsError {
    match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            AcousticsError::FileNotFound(path.to_path_buf())
        }
        _ => AcousticsError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        },
    }
}

/// Rows of three numbers from a CSV file with a header line.
fn read_triples(path: &std::path::Path) -> Result<Vec<[f64; 3]>, AcousticsError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| read_error(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| read_error(path, e))?;
        let mut row = [0.0; 3];
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = rec
                .get(k)
                .and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| AcousticsError::Parse {
                    line: i + 2,
                    message: "expected three numeric columns".into(),
                })?;
        }
        rows.push(row);
    }
    Ok(rows)
}
