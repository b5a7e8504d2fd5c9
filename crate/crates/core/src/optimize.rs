//! BFGS minimization with a backtracking (Armijo) line search.
//!
//! Objective evaluations may fail (e.g. a covariance that does not
//! factorize); the line search treats a failure like an infinite value and
//! backtracks.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once the gradient infinity norm drops below this.
    pub grad_tol: f64,
    /// Cap on the infinity norm of a single step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 500,
            grad_tol: 1e-4,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACK: usize = 50;

/// Minimizes `f`, which returns the value and gradient at a point, or `None`
/// where the objective is undefined. Returns `None` if the starting point
/// is itself undefined.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = f(x.as_slice()).filter(|(v, g)| finite(*v, g))?;
    let mut g = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh_h = true;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if g.amax() < opts.grad_tol {
            return Some(done(x, fx, g, iterations, true));
        }
        iterations += 1;

        let mut p = -(&h * &g);
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            fresh_h = true;
            p = -g.clone();
            slope = g.dot(&p);
        }
        let pmax = p.amax();
        if pmax > opts.max_step {
            p *= opts.max_step / pmax;
            slope *= opts.max_step / pmax;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial = &x + step * &p;
            if let Some((ft, gt)) = f(trial.as_slice()).filter(|(v, g)| finite(*v, g)) {
                if ft <= fx + ARMIJO_C1 * step * slope {
                    accepted = Some((trial, ft, DVector::from_vec(gt)));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh_h {
                // no descent along the steepest direction either
                let conv = g.amax() < opts.grad_tol;
                return Some(done(x, fx, g, iterations, conv));
            }
            h = DMatrix::identity(n, n);
            fresh_h = true;
            continue;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if fresh_h {
                // rescale the initial inverse Hessian guess
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += ((1.0 + rho * yhy) * rho) * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
            fresh_h = false;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    let conv = g.amax() < opts.grad_tol;
    Some(done(x, fx, g, iterations, conv))
}

fn finite(v: f64, g: &[f64]) -> bool {
    v.is_finite() && g.iter().all(|x| x.is_finite())
}

fn done(x: DVector<f64>, value: f64, g: DVector<f64>, iterations: usize, converged: bool) -> Minimum {
    Minimum {
        x: x.as_slice().to_vec(),
        value,
        grad: g.as_slice().to_vec(),
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Some((v, g))
        };
        let m = minimize(f, &[-1.2, 1.0], &BfgsOptions { grad_tol: 1e-8, ..Default::default() }).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn quadratic_converges_quickly() {
        let f = |x: &[f64]| {
            let v = 0.5 * (3.0 * x[0] * x[0] + x[1] * x[1]) + x[0] - 2.0 * x[1];
            Some((v, vec![3.0 * x[0] + 1.0, x[1] - 2.0]))
        };
        let m = minimize(f, &[5.0, 5.0], &BfgsOptions::default()).unwrap();
        assert!(m.converged);
        assert!(m.iterations < 30);
        assert!((m.x[0] + 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn backtracks_out_of_undefined_region() {
        // undefined for x >= 1; minimum of (x - 0.9)^2 at 0.9
        let f = |x: &[f64]| {
            if x[0] >= 1.0 {
                None
            } else {
                Some(((x[0] - 0.9).powi(2), vec![2.0 * (x[0] - 0.9)]))
            }
        };
        let m = minimize(f, &[-3.0], &BfgsOptions::default()).unwrap();
        assert!((m.x[0] - 0.9).abs() < 1e-4);
        assert!(minimize(f, &[2.0], &BfgsOptions::default()).is_none());
    }
}
