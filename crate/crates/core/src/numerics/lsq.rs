//! Levenberg–Marquardt for small dense problems with a forward-difference
//! Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-14,
            xtol: 1e-12,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `‖r(x)‖²`. The residual closure returns `None` for parameters
/// outside its domain; such trial steps are rejected.
pub fn levenberg_marquardt<F>(residual: F, x0: &[f64], opts: LmOptions) -> Option<LmResult>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = DVector::from_vec(residual(&x)?);
    let m = r.len();
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    let mut jac = DMatrix::<f64>::zeros(m, n);
    while iterations < opts.max_iter {
        iterations += 1;
        for j in 0..n {
            let h = opts.fd_step * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = match residual(&xp) {
                Some(v) => v,
                None => {
                    xp[j] = x[j] - h;
                    let rm = residual(&xp)?;
                    for i in 0..m {
                        jac[(i, j)] = (r[i] - rm[i]) / h;
                    }
                    continue;
                }
            };
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        if jtr.amax() < 1e-300 {
            converged = true;
            break;
        }

        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&jtr)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_r = residual(&trial).map(DVector::from_vec);
            match trial_r {
                Some(tr) if tr.norm_squared() < cost => {
                    let new_cost = tr.norm_squared();
                    let rel = (cost - new_cost) / cost.max(1e-300);
                    let xstep = step.norm() / (DVector::from_column_slice(&x).norm() + opts.xtol);
                    x = trial;
                    r = tr;
                    cost = new_cost;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if rel < opts.ftol || xstep < opts.xtol {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Some(LmResult {
        x,
        cost,
        iterations,
        converged,
    })
}
