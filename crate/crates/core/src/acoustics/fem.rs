//! Linear tetrahedral Helmholtz solver for the input impedance of a duct.
//!
//! Weak form with pressure `p`, rigid walls, a Robin condition on the drum
//! and a uniform piston on the entrance:
//! `(K − k²M + iωρ·Y_s·M_drum) p = iωρ·v_n·b_entrance`.

use rayon::prelude::*;
use sprs::{CsMat, TriMat};

use super::{AcousticsError, AirProperties, BoundaryTag, Complex, DrumImpedance, FrequencyGrid, ImpedanceCurve, TetMesh};

pub const ELEMENTS_PER_WAVELENGTH: f64 = 6.0;

/// The mesh is too coarse for the top of the requested band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshTooCoarse {
    /// Longest element edge (m).
    pub max_edge: f64,
    /// Longest edge that resolves the top frequency (m).
    pub required: f64,
    pub frequency: f64,
}

impl std::fmt::Display for MeshTooCoarse {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "longest edge {:.3e} m exceeds {:.3e} m needed for {} elements per wavelength at {} Hz",
            self.max_edge, self.required, ELEMENTS_PER_WAVELENGTH, self.frequency
        )
    }
}

#[derive(Debug, Clone)]
pub struct FemSolution {
    pub impedance: ImpedanceCurve,
    pub warnings: Vec<MeshTooCoarse>,
}

/// Frequency-independent matrices, stored in bandwidth-reducing order.
#[derive(Debug, Clone)]
pub struct FemSystem {
    stiffness: CsMat<f64>,
    mass: CsMat<f64>,
    drum_mass: CsMat<f64>,
    /// `∫_entrance φ_i`.
    entrance_load: Vec<f64>,
    entrance_area: f64,
    bandwidth: usize,
    max_edge: f64,
}

fn gradients(p: [crate::geometry::Vec3; 4]) -> ([crate::geometry::Vec3; 4], f64) {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let e3 = p[3] - p[0];
    let det = e1.dot(&e2.cross(&e3));
    let g1 = e2.cross(&e3) / det;
    let g2 = e3.cross(&e1) / det;
    let g3 = e1.cross(&e2) / det;
    ([-(g1 + g2 + g3), g1, g2, g3], det / 6.0)
}

impl FemSystem {
    pub fn assemble(mesh: &TetMesh) -> Result<Self, AcousticsError> {
        mesh.validate()?;
        let n = mesh.vertices.len();
        let mut k = TriMat::new((n, n));
        let mut m = TriMat::new((n, n));
        for (ti, t) in mesh.tets.iter().enumerate() {
            let (g, vol) = gradients(mesh.tet_points(ti));
            for a in 0..4 {
                for b in 0..4 {
                    k.add_triplet(t[a], t[b], vol * g[a].dot(&g[b]));
                    m.add_triplet(t[a], t[b], vol / 20.0 * if a == b { 2.0 } else { 1.0 });
                }
            }
        }
        let mut md = TriMat::new((n, n));
        let mut load = vec![0.0; n];
        let mut entrance_area = 0.0;
        for (f, tag) in &mesh.boundary_faces {
            let area = mesh.face_area(f);
            match tag {
                BoundaryTag::Drum => {
                    for a in 0..3 {
                        for b in 0..3 {
                            md.add_triplet(f[a], f[b], area / 12.0 * if a == b { 2.0 } else { 1.0 });
                        }
                    }
                }
                BoundaryTag::Entrance => {
                    entrance_area += area;
                    for &v in f {
                        load[v] += area / 3.0;
                    }
                }
                BoundaryTag::Wall => {}
            }
        }
        let k: CsMat<f64> = k.to_csr();
        // Ordering only needs the pattern; the values are symmetric only to round-off.
        let pattern = k.map(|_| 1.0);
        let order = sprs::linalg::reverse_cuthill_mckee(pattern.view());
        let new_of_old = order.perm.inv_vec();
        let permute = |a: CsMat<f64>| -> CsMat<f64> {
            let mut t = TriMat::new((n, n));
            for (v, (i, j)) in a.iter() {
                t.add_triplet(new_of_old[i], new_of_old[j], *v);
            }
            t.to_csr()
        };
        let stiffness = permute(k);
        let bandwidth = stiffness
            .iter()
            .map(|(_, (i, j))| i.abs_diff(j))
            .max()
            .unwrap_or(0);
        let mut entrance_load = vec![0.0; n];
        for (old, v) in load.into_iter().enumerate() {
            entrance_load[new_of_old[old]] = v;
        }
        Ok(Self {
            stiffness,
            mass: permute(m.to_csr()),
            drum_mass: permute(md.to_csr()),
            entrance_load,
            entrance_area,
            bandwidth,
            max_edge: mesh.max_edge_length(),
        })
    }

    pub fn dof_count(&self) -> usize {
        self.entrance_load.len()
    }

    /// Half bandwidth after reordering.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn entrance_area(&self) -> f64 {
        self.entrance_area
    }

    pub fn max_edge(&self) -> f64 {
        self.max_edge
    }

    /// Robin coefficient `iωρ·Y_s` of the drum at `frequency`.
    fn drum_coefficient(&self, frequency: f64, air: &AirProperties, drum: &DrumImpedance) -> Result<Complex, AcousticsError> {
        let y = drum.specific_admittance(frequency, air).ok_or_else(|| {
            AcousticsError::InvalidRange(format!("drum impedance vanishes at {frequency} Hz"))
        })?;
        let omega = std::f64::consts::TAU * frequency;
        Ok(Complex::new(0.0, omega * air.density) * y)
    }

    /// System matrix at one frequency as `(row, col, value)` entries in the
    /// solver's ordering.
    pub fn matrix_entries(
        &self,
        frequency: f64,
        air: &AirProperties,
        drum: &DrumImpedance,
    ) -> Result<Vec<(usize, usize, Complex)>, AcousticsError> {
        let k2 = air.wavenumber(frequency).powi(2);
        let robin = self.drum_coefficient(frequency, air, drum)?;
        let mut out: Vec<(usize, usize, Complex)> = Vec::with_capacity(self.stiffness.nnz());
        for (v, (i, j)) in self.stiffness.iter() {
            out.push((i, j, Complex::new(*v, 0.0)));
        }
        for (v, (i, j)) in self.mass.iter() {
            out.push((i, j, Complex::new(-k2 * v, 0.0)));
        }
        for (v, (i, j)) in self.drum_mass.iter() {
            out.push((i, j, robin * v));
        }
        Ok(out)
    }

    /// Entrance pressure averaged over the piston, per unit volume velocity.
    pub fn input_impedance(&self, frequency: f64, air: &AirProperties, drum: &DrumImpedance) -> Result<Complex, AcousticsError> {
        let n = self.dof_count();
        let mut band = BandMatrix::zeros(n, self.bandwidth);
        for (i, j, v) in self.matrix_entries(frequency, air, drum)? {
            band.add(i, j, v);
        }
        let omega = std::f64::consts::TAU * frequency;
        let scale = Complex::new(0.0, omega * air.density);
        let mut rhs: Vec<Complex> = self.entrance_load.iter().map(|&b| scale * b).collect();
        band.factor_solve(&mut rhs).map_err(|_| AcousticsError::SingularSystem { frequency })?;
        let mean_flux: Complex = rhs.iter().zip(&self.entrance_load).map(|(p, b)| p * b).sum();
        Ok(mean_flux / (self.entrance_area * self.entrance_area))
    }

    pub fn solve(&self, grid: &FrequencyGrid, air: &AirProperties, drum: &DrumImpedance) -> Result<FemSolution, AcousticsError> {
        air.validate()?;
        let values: Vec<Complex> = grid
            .frequencies
            .par_iter()
            .map(|&f| self.input_impedance(f, air, drum))
            .collect::<Result<_, _>>()?;
        let mut warnings = Vec::new();
        let top = grid.max();
        let required = air.max_element_edge(top);
        if self.max_edge > required {
            let w = MeshTooCoarse {
                max_edge: self.max_edge,
                required,
                frequency: top,
            };
            log::warn!("stage=fem warning=mesh_too_coarse {w}");
            warnings.push(w);
        }
        Ok(FemSolution {
            impedance: ImpedanceCurve::new(grid.clone(), values)?,
            warnings,
        })
    }
}

pub fn solve_input_impedance_fem(
    mesh: &TetMesh,
    grid: &FrequencyGrid,
    air: &AirProperties,
    drum: &DrumImpedance,
) -> Result<FemSolution, AcousticsError> {
    let system = FemSystem::assemble(mesh)?;
    log::debug!(
        "stage=fem dofs={} tets={} bandwidth={}",
        system.dof_count(),
        mesh.tets.len(),
        system.bandwidth()
    );
    system.solve(grid, air, drum)
}

/// Half-wave resonance of the FEM model: the impedance maximum on a
/// `fraction`-octave scan of `window`, refined by bisection on the zero of
/// the admittance's imaginary part.
pub fn fem_half_wave_resonance(
    system: &FemSystem,
    air: &AirProperties,
    drum: &DrumImpedance,
    window: (f64, f64),
    fraction: u32,
) -> Result<f64, AcousticsError> {
    let grid = super::freq_grid(window.0, window.1, fraction)?;
    let curve = system.solve(&grid, air, drum)?.impedance;
    let mags = curve.magnitudes();
    let peak = (1..mags.len().saturating_sub(1))
        .filter(|&i| mags[i] > mags[i - 1] && mags[i] >= mags[i + 1])
        .max_by(|&a, &b| mags[a].total_cmp(&mags[b]))
        .ok_or(AcousticsError::NoResonance {
            lo: window.0,
            hi: window.1,
        })?;
    let g = |f: f64| -> Result<f64, AcousticsError> { Ok(system.input_impedance(f, air, drum)?.inv().im) };
    let (mut lo, mut hi) = (grid.frequencies[peak - 1], grid.frequencies[peak + 1]);
    let (mut glo, ghi) = (g(lo)?, g(hi)?);
    if glo.signum() == ghi.signum() {
        return Ok(grid.frequencies[peak]);
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Square band matrix with room for the fill of partial pivoting, stored
/// by column: entry `(i, j)` sits at `j·ld + 2w + i − j`.
struct BandMatrix {
    n: usize,
    w: usize,
    ld: usize,
    data: Vec<Complex>,
}

struct Singular;

impl BandMatrix {
    fn zeros(n: usize, w: usize) -> Self {
        let ld = 3 * w + 1;
        Self {
            n,
            w,
            ld,
            data: vec![Complex::new(0.0, 0.0); n * ld],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        j * self.ld + 2 * self.w + i - j
    }

    fn add(&mut self, i: usize, j: usize, v: Complex) {
        let k = self.at(i, j);
        self.data[k] += v;
    }

    /// LU with partial pivoting, then solves in place.
    fn factor_solve(&mut self, b: &mut [Complex]) -> Result<(), Singular> {
        let (n, w) = (self.n, self.w);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let tiny = 1e-14 * scale;
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last_row = (k + w).min(n - 1);
            let last_col = (k + 2 * w).min(n - 1);
            let p = (k..=last_row)
                .max_by(|&a, &c| self.data[self.at(a, k)].norm().total_cmp(&self.data[self.at(c, k)].norm()))
                .expect("non-empty");
            pivots[k] = p;
            let pivot = self.data[self.at(p, k)];
            if !(pivot.norm() > tiny) {
                return Err(Singular);
            }
            if p != k {
                for j in k..=last_col {
                    let (a, c) = (self.at(k, j), self.at(p, j));
                    self.data.swap(a, c);
                }
            }
            let inv = pivot.inv();
            for i in k + 1..=last_row {
                let ik = self.at(i, k);
                let l = self.data[ik] * inv;
                self.data[ik] = l;
                if l == Complex::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..=last_col {
                    let kj = self.data[self.at(k, j)];
                    let ij = self.at(i, j);
                    self.data[ij] -= l * kj;
                }
            }
        }
        for k in 0..n {
            b.swap(k, pivots[k]);
            let bk = b[k];
            for i in k + 1..=(k + w).min(n - 1) {
                b[i] -= self.data[self.at(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + 2 * w).min(n - 1) {
                s -= self.data[self.at(k, j)] * b[j];
            }
            b[k] = s / self.data[self.at(k, k)];
        }
        Ok(())
    }
}
