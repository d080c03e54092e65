//! Multiresolution affine and free-form registration of SDF pairs.

use crate::geometry::{ScalarField, Vec3};

use nalgebra::{Matrix3, SVector};

use super::bending::bending_hessian_diagonal;
use super::optimize::{conjugate_gradient, descend, DescentOptions, DescentProblem};
use super::{
    bending_energy_gradient, AffineParameterization, AffineTransform, FfdTransform, RegistrationConfig,
    RegistrationError, SimilarityTerm,
};

/// Similarity terms from coarsest to finest resolution.
pub(crate) fn pyramid(
    subject: &ScalarField,
    reference: &ScalarField,
    config: &RegistrationConfig,
) -> Result<Vec<SimilarityTerm>, RegistrationError> {
    let mut s = subject.gaussian_smoothed(config.smoothing_sigma);
    let mut r = reference.gaussian_smoothed(config.smoothing_sigma);
    let mut levels = vec![SimilarityTerm::from_smoothed(&s, r.clone(), config.narrowband_width)?];
    for _ in 1..config.pyramid_levels {
        if s.grid().dims.iter().any(|&d| d < 8) {
            break;
        }
        s = s.downsampled();
        r = r.downsampled();
        match SimilarityTerm::from_smoothed(&s, r.clone(), config.narrowband_width) {
            Ok(t) => levels.push(t),
            Err(RegistrationError::EmptyNarrowband) => break,
            Err(e) => return Err(e),
        }
    }
    levels.reverse();
    Ok(levels)
}

fn level_spacing(levels: usize, level: usize, finest: f64) -> f64 {
    finest * f64::powi(2.0, (levels - 1 - level) as i32)
}

/// Per-axis scale bounds of the affine search; also keeps it away from
/// reflections reached by shrinking two axes through zero.
const AFFINE_SCALE_RANGE: (f64, f64) = (0.5, 2.0);

fn admissible(m: &Matrix3<f64>, max_rotation: f64) -> bool {
    if m.determinant() <= 0.0 {
        return false;
    }
    let svd = m.svd(true, true);
    let (lo, hi) = AFFINE_SCALE_RANGE;
    if svd.singular_values.min() < lo || svd.singular_values.max() > hi {
        return false;
    }
    let r = svd.u.expect("requested") * svd.v_t.expect("requested");
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos.acos() <= max_rotation
}

struct AffineProblem<'a> {
    term: &'a SimilarityTerm,
    param: &'a AffineParameterization,
    max_rotation: f64,
}

fn as_params(x: &[f64]) -> &[f64; 12] {
    x.try_into().expect("12 parameters")
}

impl DescentProblem for AffineProblem<'_> {
    fn evaluate(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        if !admissible(&self.param.transform(as_params(x)).matrix, self.max_rotation) {
            return (f64::INFINITY, vec![0.0; 12]);
        }
        let (v, g) = self.term.affine_gradient(self.param, as_params(x));
        (v, g.to_vec())
    }

    fn direction(&mut self, x: &[f64], g: &[f64], mu: f64) -> Vec<f64> {
        let mut h = self.term.affine_curvature(self.param, as_params(x));
        let ridge = 1e-12 * h.trace().max(f64::MIN_POSITIVE);
        for i in 0..12 {
            h[(i, i)] = h[(i, i)] * (1.0 + mu) + ridge;
        }
        let rhs = -SVector::<f64, 12>::from_column_slice(g);
        match h.cholesky() {
            Some(c) => c.solve(&rhs).as_slice().to_vec(),
            None => rhs.as_slice().to_vec(),
        }
    }
}

/// Affine map from subject space into reference space minimizing the
/// narrow-band ℓ1 distance, coarse to fine.
pub fn register_affine(
    subject: &ScalarField,
    reference: &ScalarField,
    config: &RegistrationConfig,
) -> Result<AffineTransform, RegistrationError> {
    config.validate()?;
    let levels = pyramid(subject, reference, config)?;
    let finest = levels.last().expect("at least one level");
    let param = AffineParameterization::for_points(finest.band_points());
    let identity = [0.0; 12];
    let mut p = identity;
    let opts = descent_options(config);
    for (li, term) in levels.iter().enumerate() {
        if li + 1 == levels.len() {
            // Never hand back something worse than doing nothing.
            let here = term.affine_gradient(&param, &p).0;
            if term.affine_gradient(&param, &identity).0 < here {
                p = identity;
            }
        }
        let out = descend(
            &mut AffineProblem {
                term,
                param: &param,
                max_rotation: config.max_rotation_deg.to_radians(),
            },
            p.to_vec(),
            &opts,
        );
        if li == 0 && out.accepted_steps() == 0 && out.initial_gradient_max >= config.gradient_tolerance {
            return Err(RegistrationError::NoDescent { level: li });
        }
        log::debug!(
            "stage=affine level={} band={} iterations={} objective_start={:.6e} objective_end={:.6e}",
            li,
            term.band_size(),
            out.accepted_steps(),
            out.history[0],
            out.value
        );
        p.copy_from_slice(&out.x);
    }
    let a = param.transform(&p);
    AffineTransform::new(a.matrix, a.translation)
}

fn descent_options(config: &RegistrationConfig) -> DescentOptions {
    DescentOptions {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        step_tolerance: config.step_tolerance,
    }
}

struct FfdProblem<'a> {
    term: &'a SimilarityTerm,
    init: &'a AffineTransform,
    lambda: f64,
    work: FfdTransform,
    bending_diagonal: Vec<f64>,
}

impl FfdProblem<'_> {
    fn bending_gradient_at(&mut self, c: &[f64]) -> (f64, Vec<f64>) {
        self.work.displacements.copy_from_slice(c);
        bending_energy_gradient(&self.work)
    }
}

impl DescentProblem for FfdProblem<'_> {
    fn evaluate(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        let (e, ge) = self.bending_gradient_at(x);
        let (m, mut g) = self.term.ffd_gradient(self.init, &self.work);
        for (a, b) in g.iter_mut().zip(ge) {
            *a += self.lambda * b;
        }
        (m + self.lambda * e, g)
    }

    fn direction(&mut self, x: &[f64], g: &[f64], mu: f64) -> Vec<f64> {
        self.work.displacements.copy_from_slice(x);
        let lin = self.term.ffd_linearization(self.init, &self.work);
        let diag: Vec<f64> = lin
            .diagonal
            .iter()
            .zip(&self.bending_diagonal)
            .map(|(m, b)| (m + self.lambda * b) * (1.0 + mu))
            .collect();
        let floor = 1e-12 * diag.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let diag: Vec<f64> = diag.into_iter().map(|d| d.max(floor)).collect();
        let lambda = self.lambda;
        let mut scratch = self.work.clone();
        let apply = |v: &[f64]| {
            let mut out = lin.apply(v);
            scratch.displacements.copy_from_slice(v);
            let hb = bending_energy_gradient(&scratch).1;
            for i in 0..out.len() {
                out[i] += lambda * hb[i] + mu / (1.0 + mu) * diag[i] * v[i];
            }
            out
        };
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        conjugate_gradient(apply, &diag, &rhs, CG_ITERATIONS, CG_TOLERANCE)
    }
}

const CG_ITERATIONS: usize = 30;
const CG_TOLERANCE: f64 = 0.05;

/// Outcome of [`register_ffd_detailed`].
#[derive(Debug, Clone)]
pub struct FfdOutcome {
    pub ffd: FfdTransform,
    /// Objective `M + λ·E` after every accepted step, per level.
    pub objective_history: Vec<Vec<f64>>,
    /// Similarity term alone at the finest level, before and after.
    pub initial_similarity: f64,
    pub final_similarity: f64,
}

/// Free-form refinement on top of `init`: `φ(x) = init(x + u(x))`.
pub fn register_ffd(
    subject: &ScalarField,
    reference: &ScalarField,
    init: &AffineTransform,
    config: &RegistrationConfig,
) -> Result<FfdTransform, RegistrationError> {
    Ok(register_ffd_detailed(subject, reference, init, config)?.ffd)
}

pub fn register_ffd_detailed(
    subject: &ScalarField,
    reference: &ScalarField,
    init: &AffineTransform,
    config: &RegistrationConfig,
) -> Result<FfdOutcome, RegistrationError> {
    config.validate()?;
    let levels = pyramid(subject, reference, config)?;
    let finest = levels.last().expect("at least one level");
    let (lo, hi) = bounds(finest.band_points());
    let n = levels.len();
    let mut ffd = FfdTransform::covering(lo, hi, level_spacing(n, 0, config.lattice_spacing))?;
    let initial_similarity = finest.ffd_gradient(init, &ffd).0;
    let mut history = Vec::with_capacity(n);
    let opts = descent_options(config);
    for (li, term) in levels.iter().enumerate() {
        if li > 0 {
            ffd = ffd.refined();
        }
        let lattice_h = ffd.lattice_spacing.min();
        let mut problem = FfdProblem {
            term,
            init,
            lambda: config.lambda,
            work: ffd.clone(),
            bending_diagonal: bending_hessian_diagonal(&ffd),
        };
        let out = descend(&mut problem, ffd.displacements.clone(), &opts);
        if li == 0 && out.accepted_steps() == 0 && out.initial_gradient_max >= config.gradient_tolerance {
            return Err(RegistrationError::NoDescent { level: li });
        }
        log::debug!(
            "stage=ffd level={} lattice_mm={} nodes={} band={} iterations={} objective_start={:.6e} objective_end={:.6e}",
            li,
            lattice_h,
            ffd.node_count(),
            term.band_size(),
            out.accepted_steps(),
            out.history[0],
            out.value
        );
        ffd.displacements = out.x;
        history.push(out.history);
    }
    let final_similarity = finest.ffd_gradient(init, &ffd).0;
    Ok(FfdOutcome {
        ffd,
        objective_history: history,
        initial_similarity,
        final_similarity,
    })
}

fn bounds(points: &[Vec3]) -> (Vec3, Vec3) {
    points.iter().fold(
        (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    )
}
