//! Axis-aligned bounding-box tree for closest-point queries on triangle meshes.

use super::{GeometryError, TriMesh, Vec3};

const LEAF_SIZE: usize = 4;

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub face: usize,
    pub distance: f64,
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    // Leaf when count > 0: faces are order[start..start + count].
    start: usize,
    count: usize,
    left: usize,
    right: usize,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.count > 0
    }

    #[inline]
    fn dist2(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

/// Closest-point index over the faces of one mesh.
///
/// Ties between faces at exactly the same distance resolve to the lowest face
/// index, so results match an exhaustive scan bit for bit.
#[derive(Debug, Clone)]
pub struct MeshIndex<'a> {
    mesh: &'a TriMesh,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl<'a> MeshIndex<'a> {
    pub fn new(mesh: &'a TriMesh) -> Result<Self, GeometryError> {
        if mesh.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        let nf = mesh.faces().len();
        let centroids: Vec<Vec3> = (0..nf)
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                (a + b + c) / 3.0
            })
            .collect();
        let mut order: Vec<usize> = (0..nf).collect();
        let mut nodes = Vec::with_capacity(2 * nf / LEAF_SIZE + 1);
        build(mesh, &centroids, &mut order, 0, nf, &mut nodes);
        Ok(Self { mesh, nodes, order })
    }

    pub fn mesh(&self) -> &TriMesh {
        self.mesh
    }

    pub fn closest_point(&self, query: &Vec3) -> ClosestPoint {
        let mut best_d2 = f64::INFINITY;
        let mut best_face = usize::MAX;
        let mut best_point = Vec3::zeros();
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.dist2(query) > best_d2 {
                continue;
            }
            if node.is_leaf() {
                for &f in &self.order[node.start..node.start + node.count] {
                    let [a, b, c] = self.mesh.triangle(f);
                    let q = closest_point_on_triangle(query, &a, &b, &c);
                    let d2 = (q - query).norm_squared();
                    if d2 < best_d2 || (d2 == best_d2 && f < best_face) {
                        best_d2 = d2;
                        best_face = f;
                        best_point = q;
                    }
                }
            } else {
                let (l, r) = (node.left, node.right);
                let (dl, dr) = (self.nodes[l].dist2(query), self.nodes[r].dist2(query));
                // Visit the nearer child first.
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        ClosestPoint {
            point: best_point,
            face: best_face,
            distance: best_d2.sqrt(),
        }
    }

    /// Parity of crossings of the ray `origin + t·dir, t > 0` with the mesh.
    /// Returns `None` when the ray grazes an edge or vertex too closely to decide.
    pub fn ray_parity(&self, origin: &Vec3, dir: &Vec3) -> Option<bool> {
        let mut crossings = 0usize;
        let mut stack = vec![0usize];
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !ray_hits_box(origin, &inv, &node.lo, &node.hi) {
                continue;
            }
            if node.is_leaf() {
                for &f in &self.order[node.start..node.start + node.count] {
                    let [a, b, c] = self.mesh.triangle(f);
                    match ray_triangle(origin, dir, &a, &b, &c) {
                        RayHit::Miss => {}
                        RayHit::Hit => crossings += 1,
                        RayHit::Ambiguous => return None,
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        Some(crossings % 2 == 1)
    }
}

fn ray_hits_box(o: &Vec3, inv: &Vec3, lo: &Vec3, hi: &Vec3) -> bool {
    let mut tmin = 0.0f64;
    let mut tmax = f64::INFINITY;
    for a in 0..3 {
        let t1 = (lo[a] - o[a]) * inv[a];
        let t2 = (hi[a] - o[a]) * inv[a];
        let (t1, t2) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        if t1.is_nan() || t2.is_nan() {
            // Ray parallel to slab and origin on its boundary.
            if o[a] < lo[a] || o[a] > hi[a] {
                return false;
            }
            continue;
        }
        tmin = tmin.max(t1);
        tmax = tmax.min(t2);
        if tmin > tmax {
            return false;
        }
    }
    true
}

enum RayHit {
    Miss,
    Hit,
    Ambiguous,
}

fn ray_triangle(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> RayHit {
    const EPS: f64 = 1e-10;
    let e1 = b - a;
    let e2 = c - a;
    let pv = d.cross(&e2);
    let det = e1.dot(&pv);
    let scale = e1.norm() * e2.norm() * d.norm();
    if det.abs() <= 1e-14 * scale {
        return RayHit::Miss;
    }
    let inv = 1.0 / det;
    let tv = o - a;
    let u = tv.dot(&pv) * inv;
    let qv = tv.cross(&e1);
    let v = d.dot(&qv) * inv;
    let t = e2.dot(&qv) * inv;
    if t <= 0.0 {
        return RayHit::Miss;
    }
    if u < -EPS || v < -EPS || u + v > 1.0 + EPS {
        return RayHit::Miss;
    }
    if u < EPS || v < EPS || u + v > 1.0 - EPS {
        return RayHit::Ambiguous;
    }
    RayHit::Hit
}

fn build(
    mesh: &TriMesh,
    centroids: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    let (mut clo, mut chi) = (lo, hi);
    for &f in &order[start..end] {
        for v in mesh.triangle(f) {
            lo = lo.inf(&v);
            hi = hi.sup(&v);
        }
        clo = clo.inf(&centroids[f]);
        chi = chi.sup(&centroids[f]);
    }
    let id = nodes.len();
    nodes.push(Node {
        lo,
        hi,
        start,
        count: 0,
        left: 0,
        right: 0,
    });
    let n = end - start;
    let extent = chi - clo;
    if n <= LEAF_SIZE || extent.max() <= 0.0 {
        nodes[id].count = n;
        return id;
    }
    let axis = extent.imax();
    let mid = start + n / 2;
    order[start..end].select_nth_unstable_by(n / 2, |&p, &q| {
        centroids[p][axis].total_cmp(&centroids[q][axis])
    });
    let left = build(mesh, centroids, order, start, mid, nodes);
    let right = build(mesh, centroids, order, mid, end, nodes);
    nodes[id].left = left;
    nodes[id].right = right;
    id
}

/// One-shot closest-point query. Build a [`MeshIndex`] for repeated queries.
pub fn closest_point(mesh: &TriMesh, query: &Vec3) -> Result<ClosestPoint, GeometryError> {
    Ok(MeshIndex::new(mesh)?.closest_point(query))
}
