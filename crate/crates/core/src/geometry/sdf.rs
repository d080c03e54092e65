//! Signed distance fields from closed triangle meshes.

use rayon::prelude::*;

use super::{GeometryError, GridSpec, MeshIndex, ScalarField, TriMesh, Vec3};

/// Minimum number of voxels between the mesh bounding box and the grid border.
pub const MIN_MARGIN_VOXELS: f64 = 2.0;

/// Euclidean distance to the nearest triangle at every grid sample, negative
/// inside the surface.
///
/// The inside test casts one ray family along each grid axis (scanline parity)
/// and takes the majority of the three votes, so a grazing hit on one axis
/// does not flip the sign.
pub fn signed_distance_field(mesh: &TriMesh, grid: &GridSpec) -> Result<ScalarField, GeometryError> {
    if !mesh.is_closed() {
        return Err(GeometryError::MeshNotClosed {
            boundary_loops: mesh.boundary_loops().len(),
        });
    }
    let (lo, hi) = mesh.bounding_box().ok_or(GeometryError::EmptyMesh)?;
    let need_lo = grid.origin + grid.spacing * MIN_MARGIN_VOXELS;
    let need_hi = grid.max_corner() - grid.spacing * MIN_MARGIN_VOXELS;
    if (0..3).any(|a| lo[a] < need_lo[a] || hi[a] > need_hi[a]) {
        return Err(GeometryError::GridTooSmall);
    }
    let index = MeshIndex::new(mesh)?;
    let votes = inside_votes(mesh, grid);
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let d = index.closest_point(&grid.point_at(i)).distance;
            if votes[i] >= 2 {
                -d
            } else {
                d
            }
        })
        .collect();
    ScalarField::new(*grid, values)
}

/// Number of axis-aligned scanline families (0..=3) that classify each sample
/// as inside.
fn inside_votes(mesh: &TriMesh, grid: &GridSpec) -> Vec<u8> {
    let mut votes = vec![0u8; grid.len()];
    for axis in 0..3 {
        let b = (axis + 1) % 3;
        let c = (axis + 2) % 3;
        let (nb, nc, na) = (grid.dims[b], grid.dims[c], grid.dims[axis]);
        // Tiny irrational offsets keep scanlines off exact mesh edges and vertices.
        let off_b = grid.spacing[b] * 1.414_213_562e-6 * (1.0 + axis as f64 * 0.173);
        let off_c = grid.spacing[c] * 1.732_050_808e-6 * (1.0 + axis as f64 * 0.311);
        let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); nb * nc];
        for f in 0..mesh.faces().len() {
            let [p0, p1, p2] = mesh.triangle(f);
            let (ab, ac) = ([p0[b], p1[b], p2[b]], [p0[c], p1[c], p2[c]]);
            let area2 = (ab[1] - ab[0]) * (ac[2] - ac[0]) - (ab[2] - ab[0]) * (ac[1] - ac[0]);
            if area2 == 0.0 {
                continue;
            }
            let line_range = |vals: [f64; 3], ax: usize, off: f64, n: usize| {
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let i0 = ((lo - grid.origin[ax] - off) / grid.spacing[ax]).ceil().max(0.0) as usize;
                let i1f = ((hi - grid.origin[ax] - off) / grid.spacing[ax]).floor();
                if i1f < 0.0 {
                    return (1, 0);
                }
                (i0, (i1f as usize).min(n - 1))
            };
            let (jb0, jb1) = line_range(ab, b, off_b, nb);
            let (jc0, jc1) = line_range(ac, c, off_c, nc);
            for jc in jc0..=jc1 {
                let qc = grid.origin[c] + jc as f64 * grid.spacing[c] + off_c;
                for jb in jb0..=jb1 {
                    let qb = grid.origin[b] + jb as f64 * grid.spacing[b] + off_b;
                    let edge = |i: usize, j: usize| {
                        (ab[j] - ab[i]) * (qc - ac[i]) - (ac[j] - ac[i]) * (qb - ab[i])
                    };
                    let w0 = edge(1, 2);
                    let w1 = edge(2, 0);
                    let w2 = edge(0, 1);
                    let inside = (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0)
                        || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
                    if !inside {
                        continue;
                    }
                    let s = w0 + w1 + w2;
                    if s == 0.0 {
                        continue;
                    }
                    let x = (w0 * p0[axis] + w1 * p1[axis] + w2 * p2[axis]) / s;
                    crossings[jb + nb * jc].push(x);
                }
            }
        }
        for jc in 0..nc {
            for jb in 0..nb {
                let xs = &mut crossings[jb + nb * jc];
                if xs.is_empty() {
                    continue;
                }
                xs.sort_by(f64::total_cmp);
                let mut passed = 0usize;
                for ia in 0..na {
                    let x = grid.origin[axis] + ia as f64 * grid.spacing[axis];
                    while passed < xs.len() && xs[passed] < x {
                        passed += 1;
                    }
                    if passed % 2 == 1 {
                        let mut ijk = [0usize; 3];
                        ijk[axis] = ia;
                        ijk[b] = jb;
                        ijk[c] = jc;
                        votes[grid.index(ijk[0], ijk[1], ijk[2])] += 1;
                    }
                }
            }
        }
    }
    votes
}

/// Sign-only inside test for a single point by majority over three skewed rays.
/// Slow; intended for checks and sparse queries.
pub fn point_inside(index: &MeshIndex<'_>, p: &Vec3) -> bool {
    let dirs = [
        Vec3::new(0.5773, 0.5774, 0.5775),
        Vec3::new(-0.7071, 0.3162, 0.6325),
        Vec3::new(0.2673, -0.8018, -0.5345),
        Vec3::new(-0.3015, -0.9045, 0.3015),
        Vec3::new(0.9045, -0.3015, -0.3015),
    ];
    let mut inside = 0;
    let mut decided = 0;
    for d in dirs {
        if let Some(v) = index.ray_parity(p, &d) {
            decided += 1;
            inside += v as usize;
            if decided == 3 {
                break;
            }
        }
    }
    2 * inside > decided
}
