//! Augmented-Lagrangian solver for smooth problems with inequality and
//! equality constraints, with an L-BFGS inner loop over a retraction.
//!
//! The problem supplies function values, gradients in tangent coordinates
//! and a retraction; the same engine drives the rotation-group bound problems
//! and the Euclidean epigraph problem for the quality bound.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Solver tolerances and restart policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Largest constraint violation accepted as feasible.
    pub feas_tol: f64,
    /// Relative objective tolerance for stopping.
    pub obj_tol: f64,
    /// Cap on inner iterations per local solve.
    pub max_iter: usize,
    /// Random restarts per problem.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            feas_tol: 1e-6,
            obj_tol: 1e-8,
            max_iter: 2000,
            restarts: 20,
            seed: 20_240_601,
        }
    }
}

/// A smooth constrained minimization problem on a manifold.
///
/// Inequalities are feasible when non-negative, equalities when zero. The
/// constraint buffer holds the inequalities first.
pub trait Problem {
    type Point: Clone;

    fn dim(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn n_eq(&self) -> usize;

    /// Objective value; constraint values are written to `cons`.
    fn evaluate(&self, x: &Self::Point, cons: &mut [f64]) -> f64;

    /// Tangent-coordinate gradient of `w_obj·f + Σ_c w_cons[c]·c(x)`.
    fn combined_gradient(&self, x: &Self::Point, w_obj: f64, w_cons: &[f64], out: &mut [f64]);

    fn retract(&self, x: &Self::Point, step: &[f64]) -> Self::Point;

    /// Whether `hessian` and `jacobian` are implemented; enables Newton
    /// inner steps instead of L-BFGS.
    fn has_hessian(&self) -> bool {
        false
    }

    /// Tangent-coordinate Hessian (row-major `dim × dim`) of
    /// `w_obj·f + Σ_c w_cons[c]·c(x)`.
    fn hessian(&self, _x: &Self::Point, _w_obj: f64, _w_cons: &[f64], _out: &mut [f64]) {
        unimplemented!("problem does not provide second derivatives")
    }

    /// Constraint Jacobian, row-major `(n_ineq + n_eq) × dim`.
    fn jacobian(&self, _x: &Self::Point, _out: &mut [f64]) {
        unimplemented!("problem does not provide a constraint Jacobian")
    }

    /// Hook run between outer iterations (e.g. renormalization).
    fn normalize(&self, x: Self::Point) -> Self::Point {
        x
    }
}

#[derive(Debug, Clone)]
pub struct LocalSolution<P> {
    pub point: P,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
}

pub fn max_violation(cons: &[f64], n_ineq: usize) -> f64 {
    let ineq = cons[..n_ineq].iter().map(|g| (-g).max(0.0)).fold(0.0, f64::max);
    let eq = cons[n_ineq..].iter().map(|h| h.abs()).fold(0.0, f64::max);
    ineq.max(eq)
}

struct AlState {
    lambda: Vec<f64>,
    mu: f64,
}

impl AlState {
    /// Augmented Lagrangian value and the weights `∂Φ/∂c` on each constraint.
    fn merit(&self, f: f64, cons: &[f64], n_ineq: usize, weights: &mut [f64]) -> f64 {
        let mu = self.mu;
        let mut phi = f;
        for (c, &g) in cons.iter().enumerate() {
            let lam = self.lambda[c];
            if c < n_ineq {
                let shifted = lam - mu * g;
                if shifted > 0.0 {
                    phi += -lam * g + 0.5 * mu * g * g;
                    weights[c] = -shifted;
                } else {
                    phi += -0.5 * lam * lam / mu;
                    weights[c] = 0.0;
                }
            } else {
                phi += -lam * g + 0.5 * mu * g * g;
                weights[c] = -lam + mu * g;
            }
        }
        phi
    }

    fn update(&mut self, cons: &[f64], n_ineq: usize) {
        for (c, &g) in cons.iter().enumerate() {
            if c < n_ineq {
                self.lambda[c] = (self.lambda[c] - self.mu * g).max(0.0);
            } else {
                self.lambda[c] -= self.mu * g;
            }
        }
    }
}

const LBFGS_MEMORY: usize = 8;
const MU_INIT: f64 = 10.0;
const MU_MAX: f64 = 1e12;
/// Feasibility the outer loop aims for; well inside the acceptance threshold.
const TARGET_VIOLATION: f64 = 1e-9;
/// Largest tangent step taken in one iteration.
const MAX_STEP: f64 = 0.5;

/// Working buffers shared by the inner solvers.
struct Inner<'a, P: Problem> {
    problem: &'a P,
    n_ineq: usize,
    x: P::Point,
    f: f64,
    phi: f64,
    cons: Vec<f64>,
    weights: Vec<f64>,
    grad: Vec<f64>,
    iterations: usize,
}

impl<'a, P: Problem> Inner<'a, P> {
    /// Backtracking Armijo search along `dir`; on success the state moves to
    /// the new point and the step actually taken is returned.
    fn line_search(&mut self, state: &AlState, dir: &[f64], slope: f64) -> Option<Vec<f64>> {
        let m = self.cons.len();
        let mut new_cons = vec![0.0; m];
        let mut new_weights = vec![0.0; m];
        let dnorm = norm(dir);
        let mut alpha = if dnorm > MAX_STEP { MAX_STEP / dnorm } else { 1.0 };
        let mut step = vec![0.0; dir.len()];
        for _ in 0..40 {
            for (s, d) in step.iter_mut().zip(dir) {
                *s = alpha * d;
            }
            let x_new = self.problem.retract(&self.x, &step);
            let f_new = self.problem.evaluate(&x_new, &mut new_cons);
            let phi_new = state.merit(f_new, &new_cons, self.n_ineq, &mut new_weights);
            if phi_new <= self.phi + 1e-4 * alpha * slope {
                self.x = x_new;
                self.f = f_new;
                self.phi = phi_new;
                self.cons.copy_from_slice(&new_cons);
                self.weights.copy_from_slice(&new_weights);
                return Some(step);
            }
            alpha *= 0.5;
        }
        None
    }

    fn refresh_gradient(&mut self) {
        self.problem.combined_gradient(&self.x, 1.0, &self.weights, &mut self.grad);
    }

    /// Minimizes the augmented Lagrangian with L-BFGS to gradient norm `omega`.
    fn lbfgs(&mut self, state: &AlState, omega: f64, max_iter: usize) {
        let d = self.grad.len();
        let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(LBFGS_MEMORY);
        let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(LBFGS_MEMORY);
        let mut dir = vec![0.0; d];
        let mut inner = 0usize;
        self.phi = state.merit(self.f, &self.cons, self.n_ineq, &mut self.weights);
        self.refresh_gradient();
        loop {
            let gnorm = norm(&self.grad);
            if gnorm <= omega || self.iterations >= max_iter {
                break;
            }
            two_loop(&self.grad, &s_hist, &y_hist, &mut dir);
            let mut slope = dot(&self.grad, &dir);
            if slope >= -1e-16 * gnorm * norm(&dir) {
                // not a descent direction: reset memory
                s_hist.clear();
                y_hist.clear();
                for (di, gi) in dir.iter_mut().zip(&self.grad) {
                    *di = -gi;
                }
                slope = -gnorm * gnorm;
            }
            let phi_old = self.phi;
            let old_grad = self.grad.clone();
            self.iterations += 1;
            inner += 1;
            let Some(s) = self.line_search(state, &dir, slope) else {
                break;
            };
            self.refresh_gradient();
            let y: Vec<f64> = self.grad.iter().zip(&old_grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * norm(&s) * norm(&y) {
                if s_hist.len() == LBFGS_MEMORY {
                    s_hist.remove(0);
                    y_hist.remove(0);
                }
                s_hist.push(s);
                y_hist.push(y);
            }
            if (phi_old - self.phi).abs() <= 1e-15 * self.phi.abs().max(1.0) && inner > 5 {
                break;
            }
        }
    }

    /// Minimizes the augmented Lagrangian with regularized Newton steps using
    /// the problem's exact Hessian and constraint Jacobian.
    fn newton(&mut self, state: &AlState, omega: f64, max_iter: usize) {
        let d = self.grad.len();
        let m = self.cons.len();
        let mut jac = vec![0.0; m * d];
        let mut hess = vec![0.0; d * d];
        let mut inner = 0usize;
        self.phi = state.merit(self.f, &self.cons, self.n_ineq, &mut self.weights);
        self.refresh_gradient();
        loop {
            let gnorm = norm(&self.grad);
            if gnorm <= omega || self.iterations >= max_iter {
                break;
            }
            self.problem.hessian(&self.x, 1.0, &self.weights, &mut hess);
            self.problem.jacobian(&self.x, &mut jac);
            let mut h = DMatrix::from_row_slice(d, d, &hess);
            let active: Vec<usize> = (0..m)
                .filter(|&c| c >= self.n_ineq || self.weights[c] != 0.0)
                .collect();
            if !active.is_empty() {
                let mut rows = Vec::with_capacity(active.len() * d);
                for &c in &active {
                    rows.extend_from_slice(&jac[c * d..(c + 1) * d]);
                }
                let j_act = DMatrix::from_row_slice(active.len(), d, &rows);
                h.gemm_tr(state.mu, &j_act, &j_act, 1.0);
            }
            let dir = regularized_newton_direction(&h, &self.grad);
            let slope = dot(&self.grad, &dir);
            let (dir, slope) = if slope < -1e-16 * gnorm * norm(&dir) {
                (dir, slope)
            } else {
                (self.grad.iter().map(|g| -g).collect(), -gnorm * gnorm)
            };
            let phi_old = self.phi;
            self.iterations += 1;
            inner += 1;
            if self.line_search(state, &dir, slope).is_none() {
                break;
            }
            self.refresh_gradient();
            if (phi_old - self.phi).abs() <= 1e-15 * self.phi.abs().max(1.0) && inner > 5 {
                break;
            }
        }
    }
}

/// Solves `(H + δI) p = -g`, raising the shift until the factorization
/// succeeds.
fn regularized_newton_direction(h: &DMatrix<f64>, grad: &[f64]) -> Vec<f64> {
    let d = grad.len();
    let g = DVector::from_column_slice(grad);
    let scale = (0..d).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    let mut shift = 0.0;
    for _ in 0..24 {
        let mut hs = h.clone();
        for i in 0..d {
            hs[(i, i)] += shift;
        }
        if let Some(ch) = hs.cholesky() {
            let p = ch.solve(&g);
            if p.iter().all(|v| v.is_finite()) {
                return p.iter().map(|v| -v).collect();
            }
        }
        shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
    }
    grad.iter().map(|v| -v).collect()
}

/// Solves `min f(x)` subject to the problem's constraints from `start`.
pub fn solve_local<P: Problem>(problem: &P, start: P::Point, cfg: &SolverConfig) -> LocalSolution<P::Point> {
    let m = problem.n_ineq() + problem.n_eq();
    let n_ineq = problem.n_ineq();
    let d = problem.dim();
    let mut state = AlState {
        lambda: vec![0.0; m],
        mu: MU_INIT,
    };
    let mut cons = vec![0.0; m];
    let f = problem.evaluate(&start, &mut cons);
    let mut viol = max_violation(&cons, n_ineq);
    let newton = problem.has_hessian();
    let mut inner = Inner {
        problem,
        n_ineq,
        x: start,
        f,
        phi: f,
        cons,
        weights: vec![0.0; m],
        grad: vec![0.0; d],
        iterations: 0,
    };
    let mut prev_viol = f64::INFINITY;
    let mut omega = 1e-3;
    let mut prev_f = f64::INFINITY;

    // Last feasible iterate, in case later outer steps degrade.
    let mut best: Option<(P::Point, f64, f64)> = None;

    for _outer in 0..60 {
        if newton {
            inner.newton(&state, omega, cfg.max_iter);
        } else {
            inner.lbfgs(&state, omega, cfg.max_iter);
        }
        inner.x = problem.normalize(inner.x.clone());
        inner.f = problem.evaluate(&inner.x, &mut inner.cons);
        let f = inner.f;
        viol = max_violation(&inner.cons, n_ineq);
        if viol <= cfg.feas_tol {
            best = Some((inner.x.clone(), f, viol));
        }
        let gnorm = norm(&inner.grad);
        let stalled_obj = (f - prev_f).abs() <= cfg.obj_tol * f.abs().max(1.0);
        if viol <= TARGET_VIOLATION && omega <= 1e-8 && stalled_obj {
            break;
        }
        if viol <= TARGET_VIOLATION && gnorm <= 1e-9 && stalled_obj {
            break;
        }
        if inner.iterations >= cfg.max_iter {
            break;
        }
        // hopeless: penalty is saturated and violation is not moving
        if state.mu >= MU_MAX && viol > 1e-3 && viol >= 0.99 * prev_viol {
            break;
        }
        prev_f = f;
        state.update(&inner.cons, n_ineq);
        if viol > 0.25 * prev_viol && viol > TARGET_VIOLATION {
            state.mu = (state.mu * 10.0).min(MU_MAX);
        }
        prev_viol = viol;
        omega = (omega * 0.1).max(1e-9);
    }

    let iterations = inner.iterations;
    // Prefer the final iterate; fall back to the last feasible one.
    match best {
        Some((point, objective, max_violation)) if viol > cfg.feas_tol => LocalSolution {
            point,
            objective,
            max_violation,
            iterations,
        },
        _ => LocalSolution {
            point: inner.x,
            objective: inner.f,
            max_violation: viol,
            iterations,
        },
    }
}

fn two_loop(grad: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>], dir: &mut [f64]) {
    let k = s_hist.len();
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = vec![0.0; k];
    for i in (0..k).rev() {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        alphas[i] = rho * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alphas[i] * yj;
        }
    }
    let gamma = if k > 0 {
        dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
    } else {
        1.0
    };
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for i in 0..k {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        let beta = rho * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alphas[i] - beta) * sj;
        }
    }
    for (d, v) in dir.iter_mut().zip(q) {
        *d = -v;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min x + y on the unit circle with x ≥ -0.5 (Euclidean point, penalty
    /// on the norm via an equality).
    struct Circle;

    impl Problem for Circle {
        type Point = Vec<f64>;
        fn dim(&self) -> usize {
            2
        }
        fn n_ineq(&self) -> usize {
            1
        }
        fn n_eq(&self) -> usize {
            1
        }
        fn evaluate(&self, x: &Vec<f64>, cons: &mut [f64]) -> f64 {
            cons[0] = x[0] + 0.5;
            cons[1] = x[0] * x[0] + x[1] * x[1] - 1.0;
            x[0] + x[1]
        }
        fn combined_gradient(&self, x: &Vec<f64>, w: f64, wc: &[f64], out: &mut [f64]) {
            out[0] = w + wc[0] + wc[1] * 2.0 * x[0];
            out[1] = w + wc[1] * 2.0 * x[1];
        }
        fn retract(&self, x: &Vec<f64>, step: &[f64]) -> Vec<f64> {
            vec![x[0] + step[0], x[1] + step[1]]
        }
    }

    #[test]
    fn circle_with_half_space() {
        let sol = solve_local(&Circle, vec![1.0, 0.0], &SolverConfig::default());
        // optimum on the circle at x = -0.5, y = -sqrt(3)/2
        assert!(sol.max_violation < 1e-8);
        assert!((sol.point[0] + 0.5).abs() < 1e-6, "{:?}", sol.point);
        assert!((sol.point[1] + 0.75f64.sqrt()).abs() < 1e-6);
    }

    struct Infeasible;

    impl Problem for Infeasible {
        type Point = Vec<f64>;
        fn dim(&self) -> usize {
            1
        }
        fn n_ineq(&self) -> usize {
            2
        }
        fn n_eq(&self) -> usize {
            0
        }
        fn evaluate(&self, x: &Vec<f64>, cons: &mut [f64]) -> f64 {
            cons[0] = x[0] - 1.0;
            cons[1] = -x[0] - 1.0;
            x[0]
        }
        fn combined_gradient(&self, _x: &Vec<f64>, w: f64, wc: &[f64], out: &mut [f64]) {
            out[0] = w + wc[0] - wc[1];
        }
        fn retract(&self, x: &Vec<f64>, step: &[f64]) -> Vec<f64> {
            vec![x[0] + step[0]]
        }
    }

    #[test]
    fn contradictory_constraints_stay_infeasible() {
        let sol = solve_local(&Infeasible, vec![0.3], &SolverConfig::default());
        assert!(sol.max_violation > 0.5);
    }
}
