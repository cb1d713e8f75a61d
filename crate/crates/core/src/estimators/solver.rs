use std::collections::VecDeque;

use nalgebra::DVector;

use super::Objective;
use crate::error::{Error, Result};
use crate::linalg::solve_psd;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `‖∇L‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Ridge added when the stationarity system is singular.
    pub ridge: f64,
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 10_000,
            ridge: 1e-8,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// The linear system needed the ridge fallback.
    pub ridge_flagged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn solve(obj: &Objective) -> Result<Vec<f64>> {
    solve_with(obj, &SolverOptions::default()).map(|r| r.theta)
}

/// Quadratic losses are minimized exactly through their stationarity system;
/// softmax objectives with L-BFGS from θ = 0.
pub fn solve_with(obj: &Objective, opts: &SolverOptions) -> Result<SolveReport> {
    let zero = vec![0.0; obj.dim()];
    let (v0, g0) = obj.value_grad(&zero);
    if !v0.is_finite() || g0.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(
            "objective is not finite at theta = 0".into(),
        ));
    }
    if obj.model().is_quadratic() {
        let h = obj.hessian(&zero);
        let rhs = -DVector::from_vec(g0);
        let (x, flagged) = solve_psd(&h, &rhs, opts.ridge)?;
        let theta: Vec<f64> = x.iter().copied().collect();
        let grad_norm = inf_norm(&obj.gradient(&theta));
        return Ok(SolveReport {
            theta,
            iterations: 1,
            grad_norm,
            converged: true,
            ridge_flagged: flagged,
        });
    }
    Ok(lbfgs(obj, zero, opts))
}

/// Backtracking line search along `dir`; returns the accepted step and point.
fn backtrack(
    obj: &Objective,
    x: &[f64],
    f: f64,
    g: &[f64],
    dir: &[f64],
    t0: f64,
) -> Option<(f64, Vec<f64>, f64, Vec<f64>)> {
    let slope: f64 = g.iter().zip(dir).map(|(a, b)| a * b).sum();
    if !(slope < 0.0) {
        return None;
    }
    let mut t = t0;
    for _ in 0..60 {
        let xn: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + t * d).collect();
        let (fv, gn) = obj.value_grad(&xn);
        // near the optimum `f` stops resolving the decrease; accept on a
        // smaller gradient instead
        let flat = fv <= f + 1e-14 * f.abs() && inf_norm(&gn) < inf_norm(g);
        if fv.is_finite() && (fv <= f + 1e-4 * t * slope || flat) {
            return Some((t, xn, fv, gn));
        }
        t *= 0.5;
    }
    None
}

/// Full-batch gradient descent with Armijo backtracking.
pub fn gradient_descent(obj: &Objective, x0: Vec<f64>, opts: &SolverOptions) -> SolveReport {
    let mut x = x0;
    let (mut f, mut g) = obj.value_grad(&x);
    let mut t = 1.0;
    let mut it = 0;
    while it < opts.max_iters && inf_norm(&g) > opts.tol {
        let dir: Vec<f64> = g.iter().map(|v| -v).collect();
        match backtrack(obj, &x, f, &g, &dir, t) {
            Some((ts, xn, fv, gn)) => {
                x = xn;
                f = fv;
                g = gn;
                t = ts * 2.0;
            }
            None => break,
        }
        it += 1;
    }
    let grad_norm = inf_norm(&g);
    SolveReport {
        theta: x,
        iterations: it,
        grad_norm,
        converged: grad_norm <= opts.tol,
        ridge_flagged: false,
    }
}

fn lbfgs(obj: &Objective, x0: Vec<f64>, opts: &SolverOptions) -> SolveReport {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = x0;
    let (mut f, mut g) = obj.value_grad(&x);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut it = 0;
    while it < opts.max_iters && inf_norm(&g) > opts.tol {
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(q, y)| *q -= a * y);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(q, s)| *q += (a - b) * s);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut step = backtrack(obj, &x, f, &g, &dir, 1.0);
        if step.is_none() && !hist.is_empty() {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            step = backtrack(obj, &x, f, &g, &dir, 1.0);
        }
        let Some((_, xn, fv, gn)) = step else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        f = fv;
        g = gn;
        it += 1;
    }
    let grad_norm = inf_norm(&g);
    SolveReport {
        theta: x,
        iterations: it,
        grad_norm,
        converged: grad_norm <= opts.tol,
        ridge_flagged: false,
    }
}
