//! Dense primal-dual interior-point method for small problems of the form
//!
//! ```text
//! maximize  cᵀz   subject to  g_i(z) >= 0,  g_i concave and twice differentiable.
//! ```
//!
//! Two phases on the log-barrier central path `λ_i g_i(z) = 1/t`:
//!
//! 1. Primal barrier: damped Newton centering of `-t cᵀz - Σ ln g_i(z)` with
//!    `t` growing geometrically until `m / t` reaches a moderate gap.
//! 2. Primal-dual polish from the centered point with `λ_i = 1 / (t g_i)`:
//!    full Newton steps on the perturbed KKT system, backtracking to keep
//!    `g > 0`, `λ > 0` and to decrease the residual norm. Explicit duals keep
//!    the stationarity residual accurate when `g_i` is at round-off level.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A concave constraint evaluated at a point: value, gradient, Hessian.
pub struct ConstraintEval {
    pub value: f64,
    pub grad: DVector<f64>,
    /// `None` for affine constraints.
    pub hess: Option<DMatrix<f64>>,
}

pub trait ConvexProgram {
    fn n_vars(&self) -> usize;

    fn n_constraints(&self) -> usize;

    /// Linear objective to maximize.
    fn objective(&self) -> DVector<f64>;

    /// Values of every constraint (cheap path for line searches).
    fn constraint_values(&self, z: &DVector<f64>) -> Vec<f64>;

    fn constraints(&self, z: &DVector<f64>) -> Vec<ConstraintEval>;
}

#[derive(Debug, Clone, Copy)]
pub struct IpmOptions {
    /// Initial barrier weight of the primal phase.
    pub t0: f64,
    /// Growth factor of `t` in the primal phase.
    pub growth: f64,
    /// Gap bound `m / t` at which the primal phase hands over.
    pub handover_gap: f64,
    /// Newton decrement `λ² / 2` ending each centering.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Centrality factor of the polish: `t = mu · m / gap`.
    pub mu: f64,
    /// Target surrogate duality gap `Σ λ_i g_i`.
    pub gap_tol: f64,
    /// Target `‖c + Σ λ_i ∇g_i‖_∞`.
    pub stationarity_tol: f64,
    pub max_polish: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            t0: 1.0,
            growth: 20.0,
            handover_gap: 1e-6,
            newton_tol: 1e-12,
            max_newton: 500,
            mu: 10.0,
            gap_tol: 1e-11,
            stationarity_tol: 1e-10,
            max_polish: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub z: DVector<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    /// `‖c + Σ λ_i ∇g_i‖_∞` at the returned point.
    pub stationarity: f64,
    /// Surrogate duality gap `Σ λ_i g_i(z)`.
    pub gap: f64,
    pub newton_steps: usize,
}

struct Residual {
    dual: DVector<f64>,
    cent: DVector<f64>,
}

impl Residual {
    fn norm(&self) -> f64 {
        (self.dual.norm_squared() + self.cent.norm_squared()).sqrt()
    }
}

/// `dual = c + Σ λ_i ∇g_i`, `cent_i = λ_i g_i - 1/t`.
fn residual(evals: &[ConstraintEval], c: &DVector<f64>, lambda: &DVector<f64>, t: f64) -> Residual {
    let mut dual = c.clone();
    let mut cent = DVector::zeros(evals.len());
    for (i, e) in evals.iter().enumerate() {
        dual += &e.grad * lambda[i];
        cent[i] = lambda[i] * e.value - 1.0 / t;
    }
    Residual { dual, cent }
}

fn barrier_value(p: &dyn ConvexProgram, c: &DVector<f64>, t: f64, z: &DVector<f64>) -> Option<f64> {
    let vals = p.constraint_values(z);
    if vals.iter().any(|&g| !(g > 0.0)) {
        return None;
    }
    Some(-t * c.dot(z) - vals.iter().map(|g| g.ln()).sum::<f64>())
}

fn solve_spd(h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    h.lu().solve(rhs)
}

/// Damped Newton centering at fixed `t`. Returns the number of steps taken.
fn center(problem: &dyn ConvexProgram, c: &DVector<f64>, t: f64, z: &mut DVector<f64>, opts: &IpmOptions) -> usize {
    let n = problem.n_vars();
    for k in 0..opts.max_newton {
        let evals = problem.constraints(z);
        let mut grad = -t * c;
        let mut hess = DMatrix::<f64>::zeros(n, n);
        for e in &evals {
            let inv = 1.0 / e.value;
            grad -= &e.grad * inv;
            hess += (&e.grad * e.grad.transpose()) * (inv * inv);
            if let Some(h) = &e.hess {
                hess -= h * inv;
            }
        }
        let Some(step) = solve_spd(hess, &(-&grad)) else {
            return k;
        };
        let decrement = -grad.dot(&step);
        if !decrement.is_finite() || decrement / 2.0 <= opts.newton_tol {
            return k;
        }
        let f0 = barrier_value(problem, c, t, z).expect("centering keeps the iterate interior");
        let mut s = 1.0;
        loop {
            let cand = &*z + &step * s;
            if let Some(f) = barrier_value(problem, c, t, &cand) {
                if f <= f0 - 0.25 * s * decrement {
                    *z = cand;
                    break;
                }
            }
            s *= 0.5;
            if s < 1e-20 {
                return k + 1;
            }
        }
    }
    opts.max_newton
}

fn stationarity(evals: &[ConstraintEval], c: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
    let mut r = c.clone();
    for (e, l) in evals.iter().zip(lambda.iter()) {
        r += &e.grad * *l;
    }
    r.amax()
}

/// Runs both phases from a strictly feasible `z0`.
pub fn solve(problem: &dyn ConvexProgram, z0: DVector<f64>, opts: &IpmOptions) -> Result<IpmResult> {
    let c = problem.objective();
    let n = problem.n_vars();
    let m = problem.n_constraints();
    if problem.constraint_values(&z0).iter().any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidInput("interior-point start is not strictly feasible".into()));
    }
    let mut z = z0;
    let mut t = opts.t0;
    let mut newton_steps = 0;
    loop {
        newton_steps += center(problem, &c, t, &mut z, opts);
        if m as f64 / t <= opts.handover_gap {
            break;
        }
        t *= opts.growth;
    }

    let g: Vec<f64> = problem.constraint_values(&z);
    let mut lambda = DVector::from_iterator(m, g.iter().map(|g| 1.0 / (t * g)));
    let mut stat = f64::INFINITY;
    let mut gap = f64::INFINITY;
    for _ in 0..opts.max_polish {
        let evals = problem.constraints(&z);
        gap = evals.iter().zip(lambda.iter()).map(|(e, l)| e.value * l).sum();
        stat = stationarity(&evals, &c, &lambda);
        if stat <= opts.stationarity_tol && gap <= opts.gap_tol {
            return Ok(IpmResult {
                objective: c.dot(&z),
                z,
                duals: lambda.iter().copied().collect(),
                stationarity: stat,
                gap,
                newton_steps,
            });
        }
        let t = opts.mu * m as f64 / gap;
        let r = residual(&evals, &c, &lambda, t);

        // [ Σλ∇²g     Dgᵀ  ] [Δz]   [ -r_dual ]
        // [ λ∘Dg   diag(g) ] [Δλ] = [ -r_cent ]
        let mut kkt = DMatrix::<f64>::zeros(n + m, n + m);
        for (i, e) in evals.iter().enumerate() {
            if let Some(h) = &e.hess {
                let mut block = kkt.view_mut((0, 0), (n, n));
                block += h * lambda[i];
            }
            for j in 0..n {
                kkt[(j, n + i)] = e.grad[j];
                kkt[(n + i, j)] = lambda[i] * e.grad[j];
            }
            kkt[(n + i, n + i)] = e.value;
        }
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-&r.dual));
        rhs.rows_mut(n, m).copy_from(&(-&r.cent));
        let Some(step) = kkt.lu().solve(&rhs) else {
            break;
        };
        let dz = step.rows(0, n).into_owned();
        let dl = step.rows(n, m).into_owned();
        newton_steps += 1;

        let mut s: f64 = 1.0;
        for i in 0..m {
            if dl[i] < 0.0 {
                s = s.min(-lambda[i] / dl[i]);
            }
        }
        s *= 0.99;
        let r_norm = r.norm();
        let mut accepted = false;
        while s > 1e-16 {
            let zc = &z + &dz * s;
            let lc = &lambda + &dl * s;
            if problem.constraint_values(&zc).iter().all(|&g| g > 0.0) {
                let ec = problem.constraints(&zc);
                if residual(&ec, &c, &lc, t).norm() <= (1.0 - 0.01 * s) * r_norm {
                    z = zc;
                    lambda = lc;
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::SolverNonConvergence {
        iterations: newton_steps,
        stationarity: stat,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// maximize x + y subject to 1 - x² - y² >= 0.
    struct Disk;

    impl ConvexProgram for Disk {
        fn n_vars(&self) -> usize {
            2
        }
        fn n_constraints(&self) -> usize {
            1
        }
        fn objective(&self) -> DVector<f64> {
            DVector::from_vec(vec![1.0, 1.0])
        }
        fn constraint_values(&self, z: &DVector<f64>) -> Vec<f64> {
            vec![1.0 - z.norm_squared()]
        }
        fn constraints(&self, z: &DVector<f64>) -> Vec<ConstraintEval> {
            vec![ConstraintEval {
                value: 1.0 - z.norm_squared(),
                grad: -2.0 * z,
                hess: Some(DMatrix::identity(2, 2) * -2.0),
            }]
        }
    }

    /// maximize x subject to x >= 0, 1 - x >= 0, y >= 0, 2 - y >= 0.
    struct BoxLp;

    impl ConvexProgram for BoxLp {
        fn n_vars(&self) -> usize {
            2
        }
        fn n_constraints(&self) -> usize {
            4
        }
        fn objective(&self) -> DVector<f64> {
            DVector::from_vec(vec![1.0, 0.0])
        }
        fn constraint_values(&self, z: &DVector<f64>) -> Vec<f64> {
            vec![z[0], 1.0 - z[0], z[1], 2.0 - z[1]]
        }
        fn constraints(&self, z: &DVector<f64>) -> Vec<ConstraintEval> {
            let g = |a: f64, b: f64| DVector::from_vec(vec![a, b]);
            let v = self.constraint_values(z);
            [g(1.0, 0.0), g(-1.0, 0.0), g(0.0, 1.0), g(0.0, -1.0)]
                .into_iter()
                .zip(v)
                .map(|(grad, value)| ConstraintEval { value, grad, hess: None })
                .collect()
        }
    }

    #[test]
    fn disk_optimum() {
        let r = solve(&Disk, DVector::zeros(2), &IpmOptions::default()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.z[0] - s).abs() < 1e-9);
        assert!((r.z[1] - s).abs() < 1e-9);
        assert!(r.stationarity <= 1e-10);
        assert!(r.gap <= 1e-11);
        assert!((r.duals[0] - s).abs() < 1e-8);
    }

    #[test]
    fn box_lp_optimum() {
        let r = solve(&BoxLp, DVector::from_vec(vec![0.5, 1.0]), &IpmOptions::default()).unwrap();
        assert!((r.z[0] - 1.0).abs() < 1e-10);
        assert!((r.objective - 1.0).abs() < 1e-10);
        assert!(r.z[1] > 0.0 && r.z[1] < 2.0);
    }

    #[test]
    fn infeasible_start_rejected() {
        let z = DVector::from_vec(vec![2.0, 0.0]);
        assert!(solve(&Disk, z, &IpmOptions::default()).is_err());
    }
}
