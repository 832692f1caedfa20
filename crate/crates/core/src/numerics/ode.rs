//! Dormand–Prince 5(4) integrator for complex state vectors with step-size
//! control and fourth-order continuous output.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    #[serde(default)]
    pub initial_step: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Interpolate sample times from the continuous extension instead of
    /// shortening steps to land on them.
    #[serde(default = "default_dense")]
    pub dense_output: bool,
}

fn default_max_steps() -> usize {
    5_000_000
}

fn default_dense() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            max_step: 1.0,
            initial_step: None,
            max_steps: default_max_steps(),
            dense_output: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(format!(
                "tolerances must be positive (rtol={}, atol={})",
                self.rtol, self.atol
            ));
        }
        if !(self.max_step > 0.0) {
            return Err(format!("max_step must be positive, got {}", self.max_step));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OdeError<E> {
    #[error("step size underflow at t={t} (h={h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("exceeded {steps} steps at t={t}")]
    TooManySteps { t: f64, steps: usize },
    #[error("non-finite state at t={t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Callback(E),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Work {
    k: [Vec<Complex64>; 7],
    ytmp: Vec<Complex64>,
    ynew: Vec<Complex64>,
    cont: [Vec<Complex64>; 5],
    out: Vec<Complex64>,
}

impl Work {
    fn new(n: usize) -> Self {
        let z = || vec![Complex64::new(0.0, 0.0); n];
        Self {
            k: [z(), z(), z(), z(), z(), z(), z()],
            ytmp: z(),
            ynew: z(),
            cont: [z(), z(), z(), z(), z()],
            out: z(),
        }
    }
}

fn err_scale(y0: Complex64, y1: Complex64, cfg: &SolverConfig) -> f64 {
    cfg.atol + cfg.rtol * y0.norm().max(y1.norm())
}

/// Integrates `dy/dt = rhs(t, y)` from `t0` to `t_end`, calling `on_sample`
/// at every entry of `sample_times` (ascending, inside `[t0, t_end]`).
/// On return `y` holds the state at `t_end`.
pub fn integrate<E, F, O>(
    mut rhs: F,
    t0: f64,
    y: &mut [Complex64],
    t_end: f64,
    sample_times: &[f64],
    cfg: &SolverConfig,
    mut on_sample: O,
) -> Result<SolveStats, OdeError<E>>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<(), E>,
    O: FnMut(f64, &[Complex64]) -> Result<(), E>,
{
    let n = y.len();
    let mut w = Work::new(n);
    let mut stats = SolveStats::default();
    let mut next_sample = 0usize;
    let mut t = t0;

    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
        on_sample(sample_times[next_sample], y).map_err(OdeError::Callback)?;
        next_sample += 1;
    }
    if t_end <= t0 {
        return Ok(stats);
    }

    rhs(t, y, &mut w.k[0]).map_err(OdeError::Callback)?;
    stats.rhs_evals += 1;

    let mut h = match cfg.initial_step {
        Some(h) => h,
        None => {
            initial_step(&mut rhs, t, y, &mut w, cfg, t_end - t0).map_err(OdeError::Callback)?
        }
    };
    stats.rhs_evals += 1;
    h = h.min(cfg.max_step).min(t_end - t);

    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let h_floor = 1e-14 * (t_end - t0).abs().max(1.0);

    loop {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(OdeError::TooManySteps {
                t,
                steps: cfg.max_steps,
            });
        }
        let mut last = false;
        if t + h >= t_end - 1e-12 * h.abs() {
            h = t_end - t;
            last = true;
        }
        if !cfg.dense_output && next_sample < sample_times.len() {
            let ts = sample_times[next_sample];
            if ts < t + h {
                h = ts - t;
                last = false;
            }
        }
        if h < h_floor {
            return Err(OdeError::StepUnderflow { t, h });
        }

        // stages
        for i in 0..n {
            w.ytmp[i] = y[i] + w.k[0][i] * (h * A21);
        }
        rhs(t + C2 * h, &w.ytmp, &mut w.k[1]).map_err(OdeError::Callback)?;
        for i in 0..n {
            w.ytmp[i] = y[i] + (w.k[0][i] * A31 + w.k[1][i] * A32) * h;
        }
        rhs(t + C3 * h, &w.ytmp, &mut w.k[2]).map_err(OdeError::Callback)?;
        for i in 0..n {
            w.ytmp[i] = y[i] + (w.k[0][i] * A41 + w.k[1][i] * A42 + w.k[2][i] * A43) * h;
        }
        rhs(t + C4 * h, &w.ytmp, &mut w.k[3]).map_err(OdeError::Callback)?;
        for i in 0..n {
            w.ytmp[i] =
                y[i] + (w.k[0][i] * A51 + w.k[1][i] * A52 + w.k[2][i] * A53 + w.k[3][i] * A54) * h;
        }
        rhs(t + C5 * h, &w.ytmp, &mut w.k[4]).map_err(OdeError::Callback)?;
        for i in 0..n {
            w.ytmp[i] = y[i]
                + (w.k[0][i] * A61
                    + w.k[1][i] * A62
                    + w.k[2][i] * A63
                    + w.k[3][i] * A64
                    + w.k[4][i] * A65)
                    * h;
        }
        rhs(t + h, &w.ytmp, &mut w.k[5]).map_err(OdeError::Callback)?;
        for i in 0..n {
            w.ynew[i] = y[i]
                + (w.k[0][i] * A71
                    + w.k[2][i] * A73
                    + w.k[3][i] * A74
                    + w.k[4][i] * A75
                    + w.k[5][i] * A76)
                    * h;
        }
        rhs(t + h, &w.ynew, &mut w.k[6]).map_err(OdeError::Callback)?;
        stats.rhs_evals += 6;

        let mut acc = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = (w.k[0][i] * E1
                + w.k[2][i] * E3
                + w.k[3][i] * E4
                + w.k[4][i] * E5
                + w.k[5][i] * E6
                + w.k[6][i] * E7)
                * h;
            let sc = err_scale(y[i], w.ynew[i], cfg);
            let r = e.norm() / sc;
            acc += r * r;
            if !w.ynew[i].re.is_finite() || !w.ynew[i].im.is_finite() {
                finite = false;
            }
        }
        if !finite {
            // shrink hard; a genuinely diverging state ends in underflow
            if h <= h_floor * 10.0 {
                return Err(OdeError::NonFinite { t });
            }
            h *= 0.1;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }
        let err = (acc / n.max(1) as f64).sqrt();

        const BETA: f64 = 0.04;
        const EXPO1: f64 = 0.2 - BETA * 0.75;
        let fac11 = err.powf(EXPO1);
        let fac = (fac11 / err_old.powf(BETA) / 0.9).clamp(0.1, 5.0);
        let mut h_new = h / fac;

        if err <= 1.0 {
            err_old = err.max(1e-4);
            stats.accepted += 1;
            let t_new = t + h;

            if next_sample < sample_times.len()
                && sample_times[next_sample] <= t_new + 1e-12 * h.abs()
            {
                if cfg.dense_output {
                    for i in 0..n {
                        let ydiff = w.ynew[i] - y[i];
                        let bspl = w.k[0][i] * h - ydiff;
                        w.cont[0][i] = y[i];
                        w.cont[1][i] = ydiff;
                        w.cont[2][i] = bspl;
                        w.cont[3][i] = ydiff - w.k[6][i] * h - bspl;
                        w.cont[4][i] = (w.k[0][i] * D1
                            + w.k[2][i] * D3
                            + w.k[3][i] * D4
                            + w.k[4][i] * D5
                            + w.k[5][i] * D6
                            + w.k[6][i] * D7)
                            * h;
                    }
                }
                while next_sample < sample_times.len()
                    && sample_times[next_sample] <= t_new + 1e-12 * h.abs()
                {
                    let ts = sample_times[next_sample];
                    if (ts - t_new).abs() <= 1e-12 * h.abs().max(1.0) || !cfg.dense_output {
                        on_sample(ts, &w.ynew).map_err(OdeError::Callback)?;
                    } else {
                        let th = (ts - t) / h;
                        let th1 = 1.0 - th;
                        for i in 0..n {
                            w.out[i] = w.cont[0][i]
                                + (w.cont[1][i]
                                    + (w.cont[2][i] + (w.cont[3][i] + w.cont[4][i] * th1) * th)
                                        * th1)
                                    * th;
                        }
                        on_sample(ts, &w.out).map_err(OdeError::Callback)?;
                    }
                    next_sample += 1;
                }
            }

            y.copy_from_slice(&w.ynew);
            let (first, rest) = w.k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            t = t_new;
            if last {
                break;
            }
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new.min(cfg.max_step);
        } else {
            h_new = h / (fac11 / 0.9).min(10.0);
            stats.rejected += 1;
            last_rejected = true;
            h = h_new;
        }
    }
    Ok(stats)
}

fn initial_step<E, F>(
    rhs: &mut F,
    t: f64,
    y: &[Complex64],
    w: &mut Work,
    cfg: &SolverConfig,
    span: f64,
) -> Result<f64, E>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<(), E>,
{
    let n = y.len().max(1) as f64;
    let (mut dnf, mut dny) = (0.0, 0.0);
    for (yi, fi) in y.iter().zip(w.k[0].iter()) {
        let sk = cfg.atol + cfg.rtol * yi.norm();
        dnf += (fi.norm() / sk).powi(2);
        dny += (yi.norm() / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(cfg.max_step).min(span);
    for i in 0..y.len() {
        w.ytmp[i] = y[i] + w.k[0][i] * h;
    }
    rhs(t + h, &w.ytmp, &mut w.k[1])?;
    let mut der2 = 0.0;
    for i in 0..y.len() {
        let sk = cfg.atol + cfg.rtol * y[i].norm();
        der2 += ((w.k[1][i] - w.k[0][i]).norm() / sk).powi(2);
    }
    let der2 = (der2 / n).sqrt() / h;
    let der12 = der2.max((dnf / n).sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(cfg.max_step).min(span))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rotating_phase_matches_exact_solution() {
        let cfg = SolverConfig {
            rtol: 1e-10,
            atol: 1e-12,
            ..Default::default()
        };
        let omega = 2.3;
        let mut y = vec![c(1.0, 0.0)];
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
        let mut worst: f64 = 0.0;
        integrate::<Infallible, _, _>(
            |_t, y, dy| {
                dy[0] = c(0.0, -omega) * y[0];
                Ok(())
            },
            0.0,
            &mut y,
            10.0,
            &times,
            &cfg,
            |t, y| {
                let exact = c(0.0, -omega * t).exp();
                worst = worst.max((y[0] - exact).norm());
                Ok(())
            },
        )
        .unwrap();
        assert!(worst < 1e-8, "dense output error {worst}");
        assert!((y[0] - c(0.0, -omega * 10.0).exp()).norm() < 1e-8);
    }

    #[test]
    fn stepping_to_samples_matches_dense_output() {
        let base = SolverConfig {
            rtol: 1e-9,
            atol: 1e-12,
            ..Default::default()
        };
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.3).collect();
        let run = |cfg: SolverConfig| {
            let mut y = vec![c(1.0, 0.0), c(0.0, 0.0)];
            let mut out = Vec::new();
            integrate::<Infallible, _, _>(
                |t, y, dy| {
                    dy[0] = c(0.0, -1.0) * y[1] * t.cos();
                    dy[1] = c(0.0, -1.0) * y[0] * t.cos() - y[1] * 0.1;
                    Ok(())
                },
                0.0,
                &mut y,
                3.0,
                &times,
                &cfg,
                |_t, y| {
                    out.push(y[0]);
                    Ok(())
                },
            )
            .unwrap();
            out
        };
        let a = run(base);
        let b = run(SolverConfig {
            dense_output: false,
            ..base
        });
        assert_eq!(a.len(), times.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-7);
        }
    }

    #[test]
    fn callback_errors_propagate() {
        let mut y = vec![c(1.0, 0.0)];
        let res = integrate(
            |_t, _y, dy: &mut [Complex64]| {
                dy[0] = c(1.0, 0.0);
                Ok(())
            },
            0.0,
            &mut y,
            1.0,
            &[0.5],
            &SolverConfig::default(),
            |_t, _y| Err("stop"),
        );
        assert!(matches!(res, Err(OdeError::Callback("stop"))));
    }
}
