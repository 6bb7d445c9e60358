//! Unconstrained minimization of smooth objectives.
//!
//! Quasi-Newton (BFGS) on central-difference gradients, with a Nelder–Mead
//! simplex used when the quasi-Newton pass stalls. Objectives may return
//! `+∞` outside their domain; line searches and the simplex both back away
//! from such points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bfgs,
    NelderMead,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimConfig {
    pub method: Method,
    /// Fall back to the simplex when BFGS fails to certify a minimum.
    pub fallback: bool,
    pub max_iterations: usize,
    /// Infinity-norm gradient threshold for BFGS convergence.
    pub grad_tol: f64,
    /// Coordinate probe size used to certify a local minimum.
    pub step_tol: f64,
    pub f_tol: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            method: Method::Bfgs,
            fallback: true,
            max_iterations: 500,
            grad_tol: 1e-5,
            step_tol: 1e-6,
            f_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

struct Counted<'a, F> {
    f: &'a F,
    calls: std::cell::Cell<usize>,
}

impl<F: Fn(&[f64]) -> f64> Counted<'_, F> {
    fn eval(&self, x: &[f64]) -> f64 {
        self.calls.set(self.calls.get() + 1);
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimize `f` starting from `x0`.
///
/// Hitting the iteration cap is not an error; it is reported through
/// `converged = false`.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], cfg: &OptimConfig) -> Result<OptimResult> {
    let obj = Counted {
        f,
        calls: std::cell::Cell::new(0),
    };
    let f0 = obj.eval(x0);
    if !f0.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let (mut x, mut fx, mut iterations) = match cfg.method {
        Method::Bfgs => bfgs(&obj, x0.to_vec(), f0, cfg),
        Method::NelderMead => nelder_mead(&obj, x0.to_vec(), f0, cfg),
    };
    let mut converged = is_coordinate_minimum(&obj, &x, fx, cfg.step_tol);
    if !converged && cfg.fallback {
        let (xs, fs, its) = nelder_mead(&obj, x.clone(), fx, cfg);
        let (xb, fb, itb) = bfgs(&obj, xs, fs, cfg);
        x = xb;
        fx = fb;
        iterations += its + itb;
        converged = is_coordinate_minimum(&obj, &x, fx, cfg.step_tol);
    }
    Ok(OptimResult {
        x,
        f: fx,
        converged,
        iterations,
        evaluations: obj.calls.get(),
    })
}

fn is_coordinate_minimum<F: Fn(&[f64]) -> f64>(obj: &Counted<F>, x: &[f64], fx: f64, tol: f64) -> bool {
    let slack = 1e-12 * (1.0 + fx.abs());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        for sign in [-1.0, 1.0] {
            probe[i] = x[i] + sign * tol;
            if obj.eval(&probe) < fx - slack {
                return false;
            }
        }
        probe[i] = x[i];
    }
    true
}

fn fd_step(xi: f64) -> f64 {
    // cube root of machine epsilon, scaled
    6.055e-6 * xi.abs().max(1.0)
}

/// Central-difference gradient; one-sided where a neighbor is infeasible.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let fx = f(x);
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = fd_step(x[i]);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            match (up.is_finite(), down.is_finite()) {
                (true, true) => (up - down) / (2.0 * h),
                (true, false) => (up - fx) / h,
                (false, true) => (fx - down) / h,
                (false, false) => f64::NAN,
            }
        })
        .collect()
}

/// Central-difference Hessian from function values.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let fx = f(x);
    let h: Vec<f64> = x.iter().map(|&xi| 1e-4 * xi.abs().max(1.0)).collect();
    let mut probe = x.to_vec();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        probe[i] = x[i] + h[i];
        let up = f(&probe);
        probe[i] = x[i] - h[i];
        let down = f(&probe);
        probe[i] = x[i];
        out[(i, i)] = (up - 2.0 * fx + down) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = f(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn bfgs<F: Fn(&[f64]) -> f64>(obj: &Counted<F>, x0: Vec<f64>, f0: f64, cfg: &OptimConfig) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let grad = |x: &DVector<f64>| DVector::from_vec(gradient(&|p: &[f64]| obj.eval(p), x.as_slice()));
    let mut x = DVector::from_vec(x0);
    let mut fx = f0;
    let mut g = grad(&x);
    let mut inv_h = DMatrix::<f64>::identity(n, n);
    let mut flat_steps = 0;
    for it in 0..cfg.max_iterations {
        if g.iter().any(|v| !v.is_finite()) {
            return (x.as_slice().to_vec(), fx, it);
        }
        if g.amax() < cfg.grad_tol {
            return (x.as_slice().to_vec(), fx, it);
        }
        let mut d = -(&inv_h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            inv_h = DMatrix::identity(n, n);
            d = -g.clone();
            slope = g.dot(&d);
        }
        // backtracking Armijo search
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + alpha * &d;
            let ft = obj.eval(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if inv_h != DMatrix::identity(n, n) {
                inv_h = DMatrix::identity(n, n);
                continue;
            }
            return (x.as_slice().to_vec(), fx, it);
        };
        let g_new = grad(&x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            if it == 0 {
                inv_h *= sy / y.dot(&y);
            }
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            inv_h = &left * &inv_h * &right + rho * &s * s.transpose();
        }
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        if improvement <= cfg.f_tol * (1.0 + fx.abs()) {
            flat_steps += 1;
            if flat_steps >= 3 {
                return (x.as_slice().to_vec(), fx, it + 1);
            }
        } else {
            flat_steps = 0;
        }
    }
    (x.as_slice().to_vec(), fx, cfg.max_iterations)
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(obj: &Counted<F>, x0: Vec<f64>, f0: f64, cfg: &OptimConfig) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let nf = n as f64;
    // adaptive coefficients for higher dimensions
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut simplex = vec![(x0.clone(), f0)];
    for i in 0..n {
        let mut v = x0.clone();
        let step = if v[i].abs() > 1e-8 { 0.05 * v[i].abs() } else { 0.00025 };
        v[i] += step;
        let mut fv = obj.eval(&v);
        if !fv.is_finite() {
            v[i] = x0[i] - step;
            fv = obj.eval(&v);
        }
        simplex.push((v, fv));
    }
    let max_iter = cfg.max_iterations * 20 * n.max(1);
    for it in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= cfg.f_tol * (1.0 + best.abs()) && size < cfg.step_tol {
            return (simplex.swap_remove(0).0, best, it);
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / nf)
            .collect();
        let toward = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = toward(alpha);
        let fr = obj.eval(&xr);
        if fr < best {
            let xe = toward(alpha * beta);
            let fe = obj.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = toward(alpha * gamma);
            let fc = obj.eval(&xc);
            (xc, fc)
        } else {
            let xc = toward(-gamma);
            let fc = obj.eval(&xc);
            (xc, fc)
        };
        if fc < worst.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            for (vj, aj) in v.iter_mut().zip(&anchor) {
                *vj = aj + delta * (*vj - aj);
            }
            *fv = obj.eval(v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    (x, f, max_iter)
}
