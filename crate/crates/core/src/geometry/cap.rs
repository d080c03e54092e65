use std::collections::HashSet;

use super::{GeometryError, TriMesh, Vec3};

/// Closes every boundary loop with a triangle fan around the loop centroid.
/// Closed meshes are returned unchanged.
pub fn cap_open_boundaries(mesh: &TriMesh) -> Result<TriMesh, GeometryError> {
    if mesh.is_closed() {
        return Ok(mesh.clone());
    }
    let mut seen = HashSet::new();
    for (li, lp) in mesh.boundary_loops().iter().enumerate() {
        if lp.len() < 3 || !lp.iter().all(|v| seen.insert(*v)) {
            return Err(GeometryError::NonSimpleLoop(li));
        }
    }
    let mut vertices = mesh.vertices().to_vec();
    let mut faces = mesh.faces().to_vec();
    for lp in mesh.boundary_loops() {
        let centroid = lp.iter().fold(Vec3::zeros(), |acc, &i| acc + vertices[i]) / lp.len() as f64;
        let c = vertices.len();
        vertices.push(centroid);
        // Boundary edges run a -> b in their face; the cap uses b -> a.
        for k in 0..lp.len() {
            let a = lp[k];
            let b = lp[(k + 1) % lp.len()];
            faces.push([b, a, c]);
        }
    }
    TriMesh::new(vertices, faces)
}
