//! Discrete thin-plate bending energy of a control lattice.
//!
//! `E = (Σ |D_xx|² + |D_yy|² + |D_zz|² + 2|D_xy|² + 2|D_xz|² + 2|D_yz|²) / N`
//! with centred second differences at interior nodes, forward mixed
//! differences over lattice cells, and `N` the number of control points.

use super::FfdTransform;

/// Pure second-difference stencil along `a`, mixed stencil over `a`/`b`.
enum Stencil {
    Pure(usize),
    Mixed(usize, usize),
}

const STENCILS: [(Stencil, f64); 6] = [
    (Stencil::Pure(0), 1.0),
    (Stencil::Pure(1), 1.0),
    (Stencil::Pure(2), 1.0),
    (Stencil::Mixed(0, 1), 2.0),
    (Stencil::Mixed(0, 2), 2.0),
    (Stencil::Mixed(1, 2), 2.0),
];

/// Visits every difference term as `f(weight, [(node, coefficient)])`.
fn for_each_term(ffd: &FfdTransform, mut f: impl FnMut(f64, &[(usize, f64)])) {
    let d = ffd.lattice_dims;
    let at = |p: [usize; 3]| ffd.node_index(p[0], p[1], p[2]);
    for (stencil, weight) in &STENCILS {
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let p = [i, j, k];
                    match *stencil {
                        Stencil::Pure(a) => {
                            if p[a] == 0 || p[a] + 1 >= d[a] {
                                continue;
                            }
                            let (mut lo, mut hi) = (p, p);
                            lo[a] -= 1;
                            hi[a] += 1;
                            f(*weight, &[(at(lo), 1.0), (at(p), -2.0), (at(hi), 1.0)]);
                        }
                        Stencil::Mixed(a, b) => {
                            if p[a] + 1 >= d[a] || p[b] + 1 >= d[b] {
                                continue;
                            }
                            let (mut pa, mut pb) = (p, p);
                            pa[a] += 1;
                            pb[b] += 1;
                            let mut pab = pa;
                            pab[b] += 1;
                            f(*weight, &[(at(pab), 1.0), (at(pa), -1.0), (at(pb), -1.0), (at(p), 1.0)]);
                        }
                    }
                }
            }
        }
    }
}

pub fn bending_energy(ffd: &FfdTransform) -> f64 {
    let c = &ffd.displacements;
    let mut e = 0.0;
    for_each_term(ffd, |w, terms| {
        for axis in 0..3 {
            let v: f64 = terms.iter().map(|&(n, k)| k * c[3 * n + axis]).sum();
            e += w * v * v;
        }
    });
    e / ffd.node_count() as f64
}

/// Bending energy and its gradient with respect to the flat displacement array.
pub fn bending_energy_gradient(ffd: &FfdTransform) -> (f64, Vec<f64>) {
    let c = &ffd.displacements;
    let n = ffd.node_count() as f64;
    let mut e = 0.0;
    let mut g = vec![0.0; c.len()];
    for_each_term(ffd, |w, terms| {
        for axis in 0..3 {
            let v: f64 = terms.iter().map(|&(nd, k)| k * c[3 * nd + axis]).sum();
            e += w * v * v;
            for &(nd, k) in terms {
                g[3 * nd + axis] += 2.0 * w * v * k / n;
            }
        }
    });
    (e / n, g)
}

/// Diagonal of the (constant) Hessian of the bending energy.
pub(crate) fn bending_hessian_diagonal(ffd: &FfdTransform) -> Vec<f64> {
    let n = ffd.node_count() as f64;
    let mut d = vec![0.0; ffd.displacements.len()];
    for_each_term(ffd, |w, terms| {
        for &(nd, k) in terms {
            for axis in 0..3 {
                d[3 * nd + axis] += 2.0 * w * k * k / n;
            }
        }
    });
    d
}
