//! Triangle meshes, voxel fields and the tubular canal geometry.

use std::path::PathBuf;

mod bvh;
mod canal;
mod cap;
mod centerline;
mod grid;
mod isosurface;
mod mesh;
mod sdf;

pub use bvh::{closest_point, closest_point_on_triangle, ClosestPoint, MeshIndex};
pub use canal::{
    synth_canal, synth_canal_with, synth_population_specs, CanalGeometry, CanalJitter, CanalResolution,
    CanalSpec, SweptTube,
};
pub use cap::cap_open_boundaries;
pub use centerline::{
    centerline_and_area, extract_centerline, AreaFunction, Centerline, CenterlineOptions, CenterlineTube,
};
pub use grid::{GridSpec, ScalarField};
pub use isosurface::extract_isosurface;
pub use mesh::{parse_obj, TriMesh, DEGENERATE_AREA};
pub use sdf::{point_inside, signed_distance_field, MIN_MARGIN_VOXELS};

pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("vertex {0} is not finite")]
    NonFiniteVertex(usize),
    #[error("face {0} has zero area")]
    DegenerateFace(usize),
    #[error("expected {expected} vertices, found {found}")]
    VertexCountMismatch { expected: usize, found: usize },
    #[error("boundary loop {0} is not simple")]
    NonSimpleLoop(usize),
    #[error("mesh is not closed ({boundary_loops} boundary loops)")]
    MeshNotClosed { boundary_loops: usize },
    #[error("grid does not contain the mesh with the required margin")]
    GridTooSmall,
    #[error("level set is empty")]
    EmptyLevelSet,
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape is not tubular: {0}")]
    NotTubular(String),
}
