//! Preconditioned gradient descent with backtracking line search.
//!
//! Each iteration moves along `d = −(H + μ·diag H)⁻¹ ∇f`, where `H` is a
//! positive-definite curvature model supplied by the problem (for the ℓ1
//! similarity, the reweighted Gauss–Newton matrix). The step along `d` is
//! halved until the Armijo condition holds on the true objective, and `μ`
//! adapts to how often full steps succeed.

pub(crate) trait DescentProblem {
    /// Objective value and gradient.
    fn evaluate(&mut self, x: &[f64]) -> (f64, Vec<f64>);
    /// Approximate solution of `(H(x) + μ·diag H(x)) d = −g`.
    fn direction(&mut self, x: &[f64], g: &[f64], mu: f64) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DescentOptions {
    pub max_iterations: usize,
    /// Stop once the largest gradient component falls below this.
    pub gradient_tolerance: f64,
    /// Stop once the largest accepted step component falls below this.
    pub step_tolerance: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct DescentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub initial_gradient_max: f64,
}

impl DescentOutcome {
    pub fn accepted_steps(&self) -> usize {
        self.history.len() - 1
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;
/// Stop after this many consecutive steps that each gain less than
/// `STALL_RELATIVE` of the objective.
const STALL_STEPS: usize = 5;
const STALL_RELATIVE: f64 = 1e-4;

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn descend(problem: &mut impl DescentProblem, x0: Vec<f64>, opts: &DescentOptions) -> DescentOutcome {
    let mut x = x0;
    let (mut fx, mut g) = problem.evaluate(&x);
    let initial_gradient_max = max_abs(&g);
    let mut history = vec![fx];
    let mut mu = 1e-3;
    let mut stalled = 0;
    for _ in 0..opts.max_iterations {
        if max_abs(&g) < opts.gradient_tolerance {
            break;
        }
        let d = problem.direction(&x, &g, mu);
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let dmax = max_abs(&d);
        if !(slope < 0.0) || !dmax.is_finite() {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            if alpha * dmax < opts.step_tolerance {
                break;
            }
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            let (ft, gt) = problem.evaluate(&trial);
            if ft.is_finite() && ft <= fx + ARMIJO * alpha * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            break;
        };
        mu = if alpha == 1.0 { (mu / 3.0).max(1e-6) } else { (mu * 4.0).min(1e3) };
        stalled = if fx - fnew < STALL_RELATIVE * fx.abs() { stalled + 1 } else { 0 };
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        log::trace!("iteration={} objective={:.9e} step={:.4e}", history.len() - 1, fx, alpha * dmax);
        if alpha * dmax < opts.step_tolerance || stalled >= STALL_STEPS {
            break;
        }
    }
    DescentOutcome {
        x,
        value: fx,
        history,
        initial_gradient_max,
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive
/// definite `A x = b`, starting from zero.
pub(crate) fn conjugate_gradient(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    diag: &[f64],
    b: &[f64],
    max_iterations: usize,
    rel_tol: f64,
) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let precond = |r: &[f64]| -> Vec<f64> { r.iter().zip(diag).map(|(ri, di)| ri / di).collect() };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let b_norm = dot(b, b).sqrt();
    for _ in 0..max_iterations {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        if dot(&r, &r).sqrt() <= rel_tol * b_norm {
            break;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}
