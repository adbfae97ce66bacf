//! Unconstrained maximisation over a subset of free coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMethod {
    /// Newton steps on the analytic Hessian, regularised when not concave.
    Newton,
    /// BFGS on the analytic gradient.
    Bfgs,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InnerSettings {
    /// Stop when the sup-norm of the free gradient is below this.
    pub tol: f64,
    pub max_iter: usize,
    pub method: InnerMethod,
    /// Largest allowed change of any coordinate in one step.
    pub max_step: f64,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            method: InnerMethod::Newton,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub type Objective<'a> = dyn FnMut(&[f64], bool) -> Result<(f64, DVector<f64>, Option<DMatrix<f64>>)> + 'a;

fn free_norm(g: &DVector<f64>, free: &[usize]) -> f64 {
    free.iter().map(|&k| g[k].abs()).fold(0.0, f64::max)
}

fn try_value(f: &mut Objective, x: &[f64]) -> Option<(f64, DVector<f64>, Option<DMatrix<f64>>)> {
    match f(x, false) {
        Ok(r) if r.0.is_finite() => Some(r),
        _ => None,
    }
}

/// Maximises `f` over the coordinates flagged in `free`, starting at `x0`.
pub fn maximize(
    f: &mut Objective,
    x0: &[f64],
    free: &[bool],
    settings: &InnerSettings,
) -> Result<InnerResult> {
    let free_idx: Vec<usize> = (0..x0.len()).filter(|&k| free[k]).collect();
    match settings.method {
        InnerMethod::Newton => newton(f, x0, &free_idx, settings),
        InnerMethod::Bfgs => bfgs(f, x0, &free_idx, settings),
    }
}

fn clip(d: &mut DVector<f64>, max_step: f64) {
    let big = d.amax();
    if big > max_step {
        *d *= max_step / big;
    }
}

/// Backtracking search along `d` (free coordinates). Returns the accepted
/// point and value, or `None`.
fn line_search(
    f: &mut Objective,
    x: &[f64],
    value: f64,
    slope: f64,
    d: &DVector<f64>,
    free: &[usize],
) -> Option<(Vec<f64>, f64, DVector<f64>)> {
    let mut t = 1.0;
    for _ in 0..60 {
        let mut xn = x.to_vec();
        for (j, &k) in free.iter().enumerate() {
            xn[k] += t * d[j];
        }
        if let Some((v, g, _)) = try_value(f, &xn) {
            if v >= value + 1e-4 * t * slope {
                return Some((xn, v, g));
            }
            // flat to rounding: accept if no worse
            if slope * t < 1e-13 * value.abs().max(1.0) && v >= value - 1e-14 * value.abs().max(1.0) {
                return Some((xn, v, g));
            }
        }
        t *= 0.5;
    }
    None
}

fn newton(f: &mut Objective, x0: &[f64], free: &[usize], s: &InnerSettings) -> Result<InnerResult> {
    let nf = free.len();
    let mut x = x0.to_vec();
    let (mut value, mut grad, mut hess) = f(&x, true)?;
    for iter in 0..=s.max_iter {
        let gn = free_norm(&grad, free);
        if gn < s.tol || nf == 0 {
            return Ok(InnerResult {
                x,
                value,
                grad,
                grad_norm: gn,
                iterations: iter,
                converged: true,
            });
        }
        if iter == s.max_iter {
            break;
        }
        let h = hess.take().expect("Hessian requested");
        let gf = DVector::from_iterator(nf, free.iter().map(|&k| grad[k]));
        let neg = DMatrix::from_fn(nf, nf, |a, b| -h[(free[a], free[b])]);
        let scale = neg.diagonal().amax().max(1e-12);
        let mut tau = 0.0;
        let mut d = loop {
            let mut m = neg.clone();
            for a in 0..nf {
                m[(a, a)] += tau;
            }
            if let Some(ch) = m.cholesky() {
                break ch.solve(&gf);
            }
            tau = if tau == 0.0 { 1e-8 * scale } else { tau * 10.0 };
            if tau > 1e12 * scale {
                break gf.clone() / scale;
            }
        };
        clip(&mut d, s.max_step);
        let mut slope = gf.dot(&d);
        if !(slope > 0.0) {
            d = gf.clone() / scale;
            clip(&mut d, s.max_step);
            slope = gf.dot(&d);
        }
        match line_search(f, &x, value, slope, &d, free) {
            Some((xn, _, _)) => {
                x = xn;
                let r = f(&x, true)?;
                value = r.0;
                grad = r.1;
                hess = r.2;
            }
            None => {
                return Ok(InnerResult {
                    x,
                    value,
                    grad,
                    grad_norm: gn,
                    iterations: iter,
                    converged: false,
                })
            }
        }
    }
    let gn = free_norm(&grad, free);
    Ok(InnerResult {
        x,
        value,
        grad,
        grad_norm: gn,
        iterations: s.max_iter,
        converged: gn < s.tol,
    })
}

fn bfgs(f: &mut Objective, x0: &[f64], free: &[usize], s: &InnerSettings) -> Result<InnerResult> {
    let nf = free.len();
    let mut x = x0.to_vec();
    let (mut value, mut grad, _) = f(&x, false)?;
    // inverse Hessian of -f on the free block
    let mut hinv = DMatrix::<f64>::identity(nf, nf);
    let mut scaled = false;
    let max_iter = s.max_iter * 10;
    for iter in 0..=max_iter {
        let gn = free_norm(&grad, free);
        if gn < s.tol || nf == 0 {
            return Ok(InnerResult {
                x,
                value,
                grad,
                grad_norm: gn,
                iterations: iter,
                converged: true,
            });
        }
        if iter == max_iter {
            break;
        }
        let gf = DVector::from_iterator(nf, free.iter().map(|&k| grad[k]));
        let mut d = &hinv * &gf;
        if !(gf.dot(&d) > 0.0) {
            hinv = DMatrix::identity(nf, nf);
            d = gf.clone();
        }
        clip(&mut d, s.max_step);
        let slope = gf.dot(&d);
        let Some((xn, vn, gnew)) = line_search(f, &x, value, slope, &d, free) else {
            return Ok(InnerResult {
                x,
                value,
                grad,
                grad_norm: gn,
                iterations: iter,
                converged: false,
            });
        };
        let step = DVector::from_iterator(nf, free.iter().map(|&k| xn[k] - x[k]));
        // y is the change in the gradient of -f
        let yv = DVector::from_iterator(nf, free.iter().map(|&k| grad[k] - gnew[k]));
        let sy = step.dot(&yv);
        if sy > 1e-12 * step.norm() * yv.norm() {
            if !scaled {
                hinv *= sy / yv.dot(&yv);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            hinv += (&step * step.transpose()) * (rho * rho * yhy + rho)
                - (&hy * step.transpose() + &step * hy.transpose()) * rho;
        }
        x = xn;
        value = vn;
        grad = gnew;
    }
    let gn = free_norm(&grad, free);
    Ok(InnerResult {
        x,
        value,
        grad,
        grad_norm: gn,
        iterations: max_iter,
        converged: gn < s.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], hess: bool) -> Result<(f64, DVector<f64>, Option<DMatrix<f64>>)> {
        let (a, b) = (x[0], x[1]);
        let v = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
        let g = DVector::from_vec(vec![
            2.0 * (1.0 - a) + 400.0 * a * (b - a * a),
            -200.0 * (b - a * a),
        ]);
        let h = hess.then(|| {
            DMatrix::from_row_slice(
                2,
                2,
                &[-2.0 + 400.0 * b - 1200.0 * a * a, 400.0 * a, 400.0 * a, -200.0],
            )
        });
        Ok((v, g, h))
    }

    #[test]
    fn both_methods_solve_rosenbrock() {
        for method in [InnerMethod::Newton, InnerMethod::Bfgs] {
            let s = InnerSettings {
                tol: 1e-8,
                method,
                ..Default::default()
            };
            let r = maximize(&mut rosenbrock, &[-1.2, 1.0], &[true, true], &s).unwrap();
            assert!(r.converged, "{method:?}");
            assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{method:?}");
        }
    }

    #[test]
    fn pinned_coordinates_stay_put() {
        let s = InnerSettings::default();
        let r = maximize(&mut rosenbrock, &[0.5, 3.0], &[true, false], &s).unwrap();
        assert_eq!(r.x[1], 3.0);
        // maximiser of the slice b = 3
        assert!(r.grad[0].abs() < 1e-6);
    }
}
