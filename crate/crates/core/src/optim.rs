//! Small dense optimizers: damped Gauss-Newton for weighted least squares and
//! Nelder-Mead for derivative-free minimization.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub params: Vec<f64>,
    /// Weighted residual sum of squares.
    pub rss: f64,
    /// `(JᵀWJ)⁻¹` at the solution, when invertible.
    pub normal_inverse: Option<DMatrix<f64>>,
    pub iterations: usize,
}

/// Minimizes `Σ w_k (y_k − f(x_k; p))²` by Gauss-Newton with Levenberg damping.
///
/// `model(p)` returns the predictions for all points. The Jacobian is taken by
/// central differences.
pub fn gauss_newton<F>(model: F, observed: &[f64], weights: &[f64], start: &[f64], max_iter: usize) -> Result<LeastSquaresFit>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if observed.len() != weights.len() {
        return invalid("observations and weights differ in length");
    }
    if observed.len() < start.len() {
        return invalid(format!(
            "{} observations cannot determine {} parameters",
            observed.len(),
            start.len()
        ));
    }
    let m = observed.len();
    let n = start.len();
    let rss_of = |p: &[f64]| -> f64 {
        model(p)
            .iter()
            .zip(observed)
            .zip(weights)
            .map(|((f, y), w)| w * (y - f).powi(2))
            .sum()
    };
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(m, n);
        for j in 0..n {
            let h = 1e-6 * p[j].abs().max(1e-3);
            let mut hi = p.to_vec();
            let mut lo = p.to_vec();
            hi[j] += h;
            lo[j] -= h;
            let (fh, fl) = (model(&hi), model(&lo));
            for k in 0..m {
                jac[(k, j)] = (fh[k] - fl[k]) / (2.0 * h);
            }
        }
        jac
    };
    let normal = |jac: &DMatrix<f64>| -> DMatrix<f64> {
        let mut jtwj = DMatrix::zeros(n, n);
        for k in 0..m {
            for a in 0..n {
                for b in 0..n {
                    jtwj[(a, b)] += weights[k] * jac[(k, a)] * jac[(k, b)];
                }
            }
        }
        jtwj
    };

    let mut p = start.to_vec();
    let mut rss = rss_of(&p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let f = model(&p);
        let jac = jacobian(&p);
        let jtwj = normal(&jac);
        let mut grad = DVector::zeros(n);
        for k in 0..m {
            let r = weights[k] * (observed[k] - f[k]);
            for a in 0..n {
                grad[a] += jac[(k, a)] * r;
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtwj.clone();
            for a in 0..n {
                damped[(a, a)] += lambda * jtwj[(a, a)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&grad) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_rss = rss_of(&trial);
            if trial_rss.is_finite() && trial_rss <= rss {
                let rel = (rss - trial_rss) / rss.max(1e-300);
                p = trial;
                rss = trial_rss;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let normal_inverse = normal(&jacobian(&p)).try_inverse();
    Ok(LeastSquaresFit {
        params: p,
        rss,
        normal_inverse,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex search with standard coefficients (1, 2, 0.5, 0.5).
pub fn nelder_mead<F>(f: F, start: &[f64], step: f64, tol: f64, max_evals: usize) -> NelderMeadResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let evals = Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start)));
    for k in 0..n {
        let mut x = start.to_vec();
        x[k] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut converged = false;
    while evals.get() < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= tol * (1.0 + simplex[0].1.abs()) && size <= tol.sqrt() {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = entry.0.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    let v = eval(&x);
                    *entry = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (point, value) = simplex.swap_remove(0);
    NelderMeadResult {
        point,
        value,
        evaluations: evals.get(),
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_newton_fits_exponential() {
        let xs: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
        let truth = [2.0, -0.7];
        let ys: Vec<f64> = xs.iter().map(|x| truth[0] * (truth[1] * x).exp()).collect();
        let model = |p: &[f64]| xs.iter().map(|x| p[0] * (p[1] * x).exp()).collect::<Vec<_>>();
        let fit = gauss_newton(model, &ys, &vec![1.0; xs.len()], &[1.0, 0.0], 100).unwrap();
        assert!((fit.params[0] - 2.0).abs() < 1e-8);
        assert!((fit.params[1] + 0.7).abs() < 1e-8);
        assert!(fit.rss < 1e-16);
    }

    #[test]
    fn gauss_newton_rejects_underdetermined() {
        assert!(gauss_newton(|p: &[f64]| vec![p[0]], &[1.0], &[1.0], &[0.0, 0.0], 10).is_err());
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], 0.5, 1e-14, 5000);
        assert!(r.converged);
        assert!((r.point[0] - 1.0).abs() < 1e-4 && (r.point[1] - 1.0).abs() < 1e-4, "{:?}", r.point);
    }
}
