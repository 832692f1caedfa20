//! Multi-exponential fit of a sampled correlation function.
//!
//! Amplitudes enter linearly and are eliminated by a complex least-squares
//! solve for every trial set of rates (variable projection); the rates are
//! then optimized by Levenberg–Marquardt from several random starts.

use super::{BathError, BcfTerm, ExponentialBcf, OhmicSpectralDensity};
use crate::numerics::lsq::{levenberg_marquardt, LmOptions};
use crate::{c64, Complex64};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    /// Largest acceptable relative L∞ residual.
    pub max_residual: f64,
    /// Upper end of the initial decay-rate range.
    pub rate_max: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            seed: 0x5eed_f17,
            max_residual: 1e-3,
            rate_max: 10.0,
        }
    }
}

fn rates(x: &[f64]) -> Vec<Complex64> {
    x.chunks(2).map(|p| c64(p[0].exp(), p[1])).collect()
}

fn design(times: &[f64], w: &[Complex64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(times.len(), w.len(), |i, j| (-w[j] * times[i]).exp())
}

fn amplitudes(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Option<DVector<Complex64>> {
    let svd = a.clone().svd(true, true);
    let g = svd.solve(b, 1e-14).ok()?;
    g.iter()
        .all(|z| z.re.is_finite() && z.im.is_finite())
        .then_some(g)
}

fn rel_linf(times: &[f64], values: &[Complex64], terms: &[BcfTerm]) -> f64 {
    let scale = values
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    times
        .iter()
        .zip(values)
        .map(|(&t, v)| {
            let m: Complex64 = terms.iter().map(|k| k.g * (-k.w * t).exp()).sum();
            (m - v).norm()
        })
        .fold(0.0, f64::max)
        / scale
}

/// Fits `Σ_μ G_μ e^{−W_μ τ}` with `num_terms` terms to `values` sampled at
/// `times` (τ ≥ 0). The residual is the relative L∞ error on the samples.
pub fn fit_exponentials(
    times: &[f64],
    values: &[Complex64],
    num_terms: usize,
    opts: FitOptions,
) -> Result<ExponentialBcf, BathError> {
    if num_terms == 0 {
        return Err(BathError::InvalidParameter(
            "num_terms must be at least 1".into(),
        ));
    }
    if times.len() != values.len() || times.len() < 2 * num_terms {
        return Err(BathError::InvalidParameter(format!(
            "need at least {} samples with matching lengths, got {} times and {} values",
            2 * num_terms,
            times.len(),
            values.len()
        )));
    }
    let window = times.iter().cloned().fold(0.0, f64::max);
    if !(window > 0.0) {
        return Err(BathError::InvalidParameter(
            "sample window must be positive".into(),
        ));
    }
    let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(BathError::InvalidParameter(
            "cannot fit an identically zero function".into(),
        ));
    }
    let b = DVector::from_iterator(values.len(), values.iter().map(|v| *v / scale));

    let residual = |x: &[f64]| -> Option<Vec<f64>> {
        if x.chunks(2).any(|p| p[0] > 8.0 || p[0] < -30.0) {
            return None;
        }
        let a = design(times, &rates(x));
        let g = amplitudes(&a, &b)?;
        let r = &a * g - &b;
        Some(r.iter().flat_map(|z| [z.re, z.im]).collect())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (lo, hi) = ((0.1 / window).ln(), opts.rate_max.ln());
    let mut best: Option<(f64, Vec<BcfTerm>)> = None;
    for _ in 0..opts.starts.max(1) {
        let mut x0 = Vec::with_capacity(2 * num_terms);
        for _ in 0..num_terms {
            x0.push(rng.random_range(lo..hi));
            x0.push(rng.random_range(-0.5 * opts.rate_max..opts.rate_max) * 0.2);
        }
        let Some(res) = levenberg_marquardt(
            residual,
            &x0,
            LmOptions {
                max_iter: 300,
                ..Default::default()
            },
        ) else {
            continue;
        };
        let w = rates(&res.x);
        let a = design(times, &w);
        let Some(g) = amplitudes(&a, &b) else {
            continue;
        };
        let mut terms: Vec<BcfTerm> = g
            .iter()
            .zip(w.iter())
            .map(|(g, w)| BcfTerm {
                g: *g * scale,
                w: *w,
            })
            .collect();
        terms.sort_by(|p, q| p.w.re.total_cmp(&q.w.re).then(p.w.im.total_cmp(&q.w.im)));
        let r = rel_linf(times, values, &terms);
        if best.as_ref().is_none_or(|(b, _)| r < *b) {
            best = Some((r, terms));
        }
    }
    let (r, terms) = best.ok_or(BathError::FitFailed {
        best_residual: f64::INFINITY,
        threshold: opts.max_residual,
    })?;
    if !(r <= opts.max_residual) {
        return Err(BathError::FitFailed {
            best_residual: r,
            threshold: opts.max_residual,
        });
    }
    ExponentialBcf::new(terms, r)
}

/// Sample grid used for correlation-function fits: dense near the origin,
/// uniform over the rest of the window.
pub fn fit_grid(window: f64, n: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n).map(|i| window * i as f64 / (n - 1) as f64).collect();
    let t0 = (window * 1e-4).min(1e-2);
    for i in 0..n {
        t.push(t0 * (window / t0).powf(i as f64 / (n - 1) as f64));
    }
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    t
}

/// Fits the zero-temperature Ohmic BCF over `[0, window]`. The fit is done
/// for `η̃ = 1` and rescaled, so one fit serves every coupling strength.
pub fn fit_ohmic(
    sd: &OhmicSpectralDensity,
    num_terms: usize,
    window: f64,
    opts: FitOptions,
) -> Result<ExponentialBcf, BathError> {
    let unit = OhmicSpectralDensity::new(1.0, sd.omega_c)?;
    let times = fit_grid(window, 200);
    let values: Vec<Complex64> = times.iter().map(|&t| unit.bcf(t)).collect();
    let opts = FitOptions {
        rate_max: opts.rate_max * sd.omega_c,
        ..opts
    };
    let fit = fit_exponentials(&times, &values, num_terms, opts)?;
    // residual against a denser grid than the one fitted
    let dense: Vec<f64> = (0..=4000).map(|i| window * i as f64 / 4000.0).collect();
    let dv: Vec<Complex64> = dense.iter().map(|&t| unit.bcf(t)).collect();
    let r = rel_linf(&dense, &dv, &fit.terms).max(fit.fit_residual);
    let scaled = fit.scaled(sd.eta_tilde);
    ExponentialBcf::new(scaled.terms, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_single_exponential() {
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let vals: Vec<Complex64> = times.iter().map(|&t| (-c64(1.0, 1.0) * t).exp()).collect();
        let fit = fit_exponentials(&times, &vals, 1, FitOptions::default()).unwrap();
        assert!(
            (fit.terms[0].g - c64(1.0, 0.0)).norm() < 1e-10,
            "{:?}",
            fit.terms
        );
        assert!((fit.terms[0].w - c64(1.0, 1.0)).norm() < 1e-10);
    }

    #[test]
    fn rejects_zero_terms() {
        assert!(matches!(
            fit_exponentials(&[0.0, 1.0], &[c64(1.0, 0.0); 2], 0, FitOptions::default()),
            Err(BathError::InvalidParameter(_))
        ));
    }

    #[test]
    fn ohmic_five_term_fit() {
        let sd = OhmicSpectralDensity::new(1.0, 1.0).unwrap();
        let fit = fit_ohmic(&sd, 5, 60.0, FitOptions::default()).unwrap();
        assert!(fit.fit_residual < 1e-3, "residual {}", fit.fit_residual);
        assert!(fit.terms.iter().all(|t| t.w.re > 0.0));
        assert!((fit.eval(0.0) - sd.bcf(0.0)).norm() < 1e-3 * sd.bcf(0.0).norm());
    }
}
