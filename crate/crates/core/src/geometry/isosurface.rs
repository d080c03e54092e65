//! Level-set extraction by marching tetrahedra.
//!
//! Each voxel cell is split into six tetrahedra sharing the main diagonal
//! (Kuhn split), which is consistent across neighbouring cells, so the output
//! is watertight whenever the level set stays away from the grid border.

use std::collections::HashMap;

use super::{GeometryError, ScalarField, TriMesh, Vec3, DEGENERATE_AREA};

// Corner bit layout: x = 1, y = 2, z = 4.
const KUHN_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

pub fn extract_isosurface(field: &ScalarField, level: f64) -> Result<TriMesh, GeometryError> {
    let (lo, hi) = field.min_max();
    if !(lo < level && level < hi) {
        return Err(GeometryError::EmptyLevelSet);
    }
    let grid = field.grid();
    let d = grid.dims;
    // Samples lying on the level would make zero-length edges; nudge them outside.
    let nudge = 1e-4 * grid.spacing.min();
    let values: Vec<f64> = field
        .values()
        .iter()
        .map(|&v| if (v - level).abs() < nudge { level + nudge } else { v })
        .collect();

    let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    let mut vertex_on_edge = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
        let key = (a.min(b), a.max(b));
        *edge_vertex.entry(key).or_insert_with(|| {
            let (va, vb) = (values[key.0], values[key.1]);
            let t = ((level - va) / (vb - va)).clamp(0.0, 1.0);
            let (pa, pb) = (grid.point_at(key.0), grid.point_at(key.1));
            vertices.push(pa + (pb - pa) * t);
            vertices.len() - 1
        })
    };

    for k in 0..d[2] - 1 {
        for j in 0..d[1] - 1 {
            for i in 0..d[0] - 1 {
                let corner = |bits: usize| {
                    grid.index(i + (bits & 1), j + ((bits >> 1) & 1), k + ((bits >> 2) & 1))
                };
                let ids: [usize; 8] = std::array::from_fn(corner);
                let any_in = ids.iter().any(|&g| values[g] < level);
                let any_out = ids.iter().any(|&g| values[g] >= level);
                if !(any_in && any_out) {
                    continue;
                }
                for tet in KUHN_TETS {
                    let g = tet.map(|c| ids[c]);
                    let (ins, outs): (Vec<usize>, Vec<usize>) =
                        g.iter().partition(|&&gi| values[gi] < level);
                    let polygon: Vec<usize> = match (ins.len(), outs.len()) {
                        (1, 3) => outs.iter().map(|&o| vertex_on_edge(ins[0], o, &mut vertices)).collect(),
                        (3, 1) => ins.iter().map(|&n| vertex_on_edge(n, outs[0], &mut vertices)).collect(),
                        (2, 2) => vec![
                            vertex_on_edge(ins[0], outs[0], &mut vertices),
                            vertex_on_edge(ins[0], outs[1], &mut vertices),
                            vertex_on_edge(ins[1], outs[1], &mut vertices),
                            vertex_on_edge(ins[1], outs[0], &mut vertices),
                        ],
                        _ => continue,
                    };
                    let inside_c = ins.iter().map(|&x| grid.point_at(x)).sum::<Vec3>() / ins.len() as f64;
                    let outside_c = outs.iter().map(|&x| grid.point_at(x)).sum::<Vec3>() / outs.len() as f64;
                    let outward = outside_c - inside_c;
                    for t in 1..polygon.len() - 1 {
                        let mut tri = [polygon[0], polygon[t], polygon[t + 1]];
                        let n = (vertices[tri[1]] - vertices[tri[0]]).cross(&(vertices[tri[2]] - vertices[tri[0]]));
                        if n.dot(&outward) < 0.0 {
                            tri.swap(1, 2);
                        }
                        faces.push(tri);
                    }
                }
            }
        }
    }
    let mesh = weld_and_clean(vertices, faces);
    if mesh.is_empty() {
        return Err(GeometryError::EmptyLevelSet);
    }
    Ok(mesh)
}

/// Merges bit-identical vertices (produced when a sample sits exactly on the
/// level) and drops faces that collapse or fall below the degenerate-area floor.
fn weld_and_clean(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> TriMesh {
    let mut canonical: HashMap<[u64; 3], usize> = HashMap::new();
    let mut remap = Vec::with_capacity(vertices.len());
    let mut welded: Vec<Vec3> = Vec::new();
    for v in &vertices {
        let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
        let id = *canonical.entry(key).or_insert_with(|| {
            welded.push(*v);
            welded.len() - 1
        });
        remap.push(id);
    }
    let kept: Vec<[usize; 3]> = faces
        .into_iter()
        .map(|f| f.map(|i| remap[i]))
        .filter(|f| {
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return false;
            }
            let a = 0.5 * (welded[f[1]] - welded[f[0]]).cross(&(welded[f[2]] - welded[f[0]])).norm();
            a >= DEGENERATE_AREA
        })
        .collect();
    // Compact away vertices no longer referenced.
    let mut new_id = vec![usize::MAX; welded.len()];
    let mut out_v = Vec::new();
    let out_f = kept
        .into_iter()
        .map(|f| {
            f.map(|i| {
                if new_id[i] == usize::MAX {
                    new_id[i] = out_v.len();
                    out_v.push(welded[i]);
                }
                new_id[i]
            })
        })
        .collect();
    TriMesh::from_parts_unchecked(out_v, out_f)
}
