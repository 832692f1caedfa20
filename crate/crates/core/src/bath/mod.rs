//! Ohmic baths: spectral densities, correlation functions and coupling
//! calibration.

mod fit;

pub use fit::{fit_exponentials, fit_grid, fit_ohmic, FitOptions};

use crate::numerics::quad::{self, QuadOptions};
use crate::{c64, Complex64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BathError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("quadrature did not converge (requested {requested:e}, achieved {achieved:e})")]
    Quadrature { requested: f64, achieved: f64 },
    #[error("exponential fit failed: best residual {best_residual:e} above {threshold:e}")]
    FitFailed { best_residual: f64, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhmicSpectralDensity {
    pub eta_tilde: f64,
    pub omega_c: f64,
}

impl OhmicSpectralDensity {
    pub fn new(eta_tilde: f64, omega_c: f64) -> Result<Self, BathError> {
        // zero is the decoupled limit
        if !(eta_tilde >= 0.0 && eta_tilde.is_finite()) {
            return Err(BathError::InvalidParameter(format!(
                "eta_tilde must be non-negative, got {eta_tilde}"
            )));
        }
        if !(omega_c > 0.0 && omega_c.is_finite()) {
            return Err(BathError::InvalidParameter(format!(
                "omega_c must be positive, got {omega_c}"
            )));
        }
        Ok(Self { eta_tilde, omega_c })
    }

    /// `J(ω)`, continued to negative frequencies as an odd function.
    pub fn j(&self, omega: f64) -> f64 {
        let w = omega.abs();
        omega.signum() * self.eta_tilde * w * (-w / self.omega_c).exp()
    }

    pub fn bcf(&self, tau: f64) -> Complex64 {
        bcf_zero_temp(self, tau)
    }
}

/// `α(τ) = (η̃/π) ω_c² / (1 + iω_cτ)²`.
pub fn bcf_zero_temp(sd: &OhmicSpectralDensity, tau: f64) -> Complex64 {
    let d = c64(1.0, sd.omega_c * tau);
    Complex64::from(sd.eta_tilde / PI * sd.omega_c * sd.omega_c) / (d * d)
}

/// Inverse temperature; `beta = ∞` encodes zero temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParameters {
    pub beta: f64,
}

impl ThermalParameters {
    pub fn new(beta: f64) -> Result<Self, BathError> {
        if !(beta > 0.0) {
            return Err(BathError::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn from_temperature(t: f64) -> Result<Self, BathError> {
        if t == 0.0 {
            return Ok(Self::zero_temperature());
        }
        Self::new(1.0 / t)
    }

    pub fn zero_temperature() -> Self {
        Self {
            beta: f64::INFINITY,
        }
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.beta.is_infinite()
    }

    /// Bose occupation `1 / (e^{βω} − 1)`.
    pub fn n_bar(&self, omega: f64) -> f64 {
        if self.is_zero_temperature() {
            return 0.0;
        }
        1.0 / (self.beta * omega).exp_m1()
    }
}

/// Spectral weight `n̄(βω) J(ω) / π` of the thermal process (ω > 0).
pub fn thermal_weight(sd: &OhmicSpectralDensity, thermal: &ThermalParameters, omega: f64) -> f64 {
    if thermal.is_zero_temperature() || omega <= 0.0 {
        return 0.0;
    }
    let x = thermal.beta * omega;
    let ratio = if x < 1e-8 {
        1.0 / thermal.beta
    } else {
        omega / x.exp_m1()
    };
    sd.eta_tilde * ratio * (-omega / sd.omega_c).exp() / PI
}

/// Frequency beyond which the thermal weight drops below `rel` of its peak.
pub fn thermal_cutoff(sd: &OhmicSpectralDensity, thermal: &ThermalParameters, rel: f64) -> f64 {
    if thermal.is_zero_temperature() {
        return 0.0;
    }
    let scale = sd.omega_c.min(1.0 / thermal.beta);
    let dw = scale * 1e-2;
    let mut peak: f64 = 0.0;
    let mut w: f64 = 0.0;
    // weight decays monotonically past its maximum; walk until far below it
    loop {
        let v = thermal_weight(sd, thermal, w.max(1e-300));
        peak = peak.max(v);
        if w > 0.0 && v < rel * peak {
            return w;
        }
        w += dw;
        if w > 1e6 * scale {
            return w;
        }
    }
}

/// `(1/π)∫₀^∞ n̄(βω) J(ω) e^{−iωτ} dω`.
pub fn thermal_correlation(
    sd: &OhmicSpectralDensity,
    thermal: &ThermalParameters,
    tau: f64,
) -> Result<Complex64, BathError> {
    thermal_correlation_with(sd, thermal, tau, QuadOptions::default())
}

pub fn thermal_correlation_with(
    sd: &OhmicSpectralDensity,
    thermal: &ThermalParameters,
    tau: f64,
    opts: QuadOptions,
) -> Result<Complex64, BathError> {
    if thermal.is_zero_temperature() {
        return Ok(c64(0.0, 0.0));
    }
    let cutoff = thermal_cutoff(sd, thermal, 1e-14);
    let f = |w: f64| Complex64::from(thermal_weight(sd, thermal, w)) * c64(0.0, -w * tau).exp();
    quad::integrate(f, 0.0, cutoff, opts).map_err(|e| BathError::Quadrature {
        requested: e.requested,
        achieved: e.achieved,
    })
}

/// `J_β(ω) = J(ω) / (1 − e^{−βω})` with the odd continuation of `J`:
/// `J(n̄ + 1)` on the emission side ω > 0 and `J(|ω|)·n̄` for ω < 0.
pub fn thermal_spectral_density(
    sd: &OhmicSpectralDensity,
    thermal: &ThermalParameters,
    omega: f64,
) -> Result<f64, BathError> {
    if omega == 0.0 {
        return Err(BathError::InvalidParameter(
            "thermal spectral density undefined at omega = 0".into(),
        ));
    }
    let w = omega.abs();
    Ok(if omega > 0.0 {
        sd.j(w) * (thermal.n_bar(w) + 1.0)
    } else {
        sd.j(w) * thermal.n_bar(w)
    })
}

/// Coupling prefactors `(η̃_cold, η̃_hot)` for which the thermal spectral
/// densities take the value `delta` at `Ω` (cold) and `2Ω` (hot), `Ω = 1`.
pub fn calibrate_delta(
    delta: f64,
    beta_cold: f64,
    beta_hot: f64,
    omega_c: f64,
) -> Result<(f64, f64), BathError> {
    if !(delta > 0.0) {
        return Err(BathError::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(beta_cold > 0.0 && beta_hot > 0.0 && omega_c > 0.0) {
        return Err(BathError::InvalidParameter(
            "temperatures and cutoff must be positive".into(),
        ));
    }
    let unit = |w: f64, beta: f64| w * (-w / omega_c).exp() / -(-beta * w).exp_m1();
    Ok((delta / unit(1.0, beta_cold), delta / unit(2.0, beta_hot)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcfTerm {
    #[serde(rename = "G")]
    pub g: Complex64,
    #[serde(rename = "W")]
    pub w: Complex64,
}

/// `α(τ) ≈ Σ_μ G_μ e^{−W_μ τ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialBcf {
    pub terms: Vec<BcfTerm>,
    #[serde(rename = "residual")]
    pub fit_residual: f64,
}

impl ExponentialBcf {
    pub fn new(terms: Vec<BcfTerm>, fit_residual: f64) -> Result<Self, BathError> {
        if let Some(t) = terms.iter().find(|t| !(t.w.re > 0.0)) {
            return Err(BathError::InvalidParameter(format!(
                "non-decaying rate W = {}",
                t.w
            )));
        }
        Ok(Self {
            terms,
            fit_residual,
        })
    }

    pub fn eval(&self, tau: f64) -> Complex64 {
        self.terms.iter().map(|t| t.g * (-t.w * tau).exp()).sum()
    }

    /// Same rates, amplitudes multiplied by `factor` (BCFs are linear in η̃).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| BcfTerm {
                    g: t.g * factor,
                    w: t.w,
                })
                .collect(),
            fit_residual: self.fit_residual,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// On-disk form of a cached fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcfFitDocument {
    pub terms: Vec<BcfTerm>,
    pub residual: f64,
    pub sd: OhmicSpectralDensity,
    #[serde(default)]
    pub window: Option<f64>,
}

impl BcfFitDocument {
    pub fn to_bcf(&self) -> Result<ExponentialBcf, BathError> {
        ExponentialBcf::new(self.terms.clone(), self.residual)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_sd() -> OhmicSpectralDensity {
        OhmicSpectralDensity::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_temperature_bcf_values() {
        let sd = unit_sd();
        assert!((bcf_zero_temp(&sd, 0.0) - c64(1.0 / PI, 0.0)).norm() < 1e-15);
        assert!(bcf_zero_temp(&sd, 1e4).norm() < 1e-8 / PI * 1.01);
        // closed form against direct quadrature of J(ω)e^{−iωτ}/π
        for tau in [0.0, 0.7, 3.0] {
            let q = quad::integrate(
                |w| Complex64::from(sd.j(w) / PI) * c64(0.0, -w * tau).exp(),
                0.0,
                60.0,
                QuadOptions::default(),
            )
            .unwrap();
            assert!((q - bcf_zero_temp(&sd, tau)).norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(OhmicSpectralDensity::new(-0.1, 1.0).is_err());
        assert!(OhmicSpectralDensity::new(0.0, 1.0).is_ok());
        assert!(OhmicSpectralDensity::new(1.0, -1.0).is_err());
        assert!(ThermalParameters::new(0.0).is_err());
        assert!(calibrate_delta(0.0, 2.0, 0.25, 1.0).is_err());
        let sd = unit_sd();
        assert!(thermal_spectral_density(&sd, &ThermalParameters::new(1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn thermal_correlation_matches_brute_force() {
        let sd = unit_sd();
        let th = ThermalParameters::new(1.0).unwrap();
        let tight = QuadOptions {
            abs_tol: 1e-13,
            rel_tol: 1e-14,
            max_intervals: 20000,
        };
        for tau in [0.0, 0.5, 2.0, -1.3] {
            let fast = thermal_correlation(&sd, &th, tau).unwrap();
            let brute = quad::integrate(
                |w| {
                    let v = if w == 0.0 { 1.0 } else { w / w.exp_m1() };
                    Complex64::from(v * (-w).exp() / PI) * c64(0.0, -w * tau).exp()
                },
                0.0,
                80.0,
                tight,
            )
            .unwrap();
            assert!((fast - brute).norm() < 1e-8, "tau={tau}");
        }
        // at τ=0 the integral is Σ_{n≥2} 1/n²
        let zero = thermal_correlation(&sd, &th, 0.0).unwrap();
        assert!((zero.re - (PI * PI / 6.0 - 1.0) / PI).abs() < 1e-9);
        let plus = thermal_correlation(&sd, &th, 0.8).unwrap();
        let minus = thermal_correlation(&sd, &th, -0.8).unwrap();
        assert!((plus - minus.conj()).norm() < 1e-12);
        let cold = thermal_correlation(&sd, &ThermalParameters::zero_temperature(), 0.3).unwrap();
        assert_eq!(cold, c64(0.0, 0.0));
    }

    #[test]
    fn thermal_spectral_density_limits() {
        let sd = unit_sd();
        let th = ThermalParameters::new(1e3).unwrap();
        assert!(thermal_spectral_density(&sd, &th, -1.0).unwrap().abs() < 1e-300);
        assert!((thermal_spectral_density(&sd, &th, 1.0).unwrap() - sd.j(1.0)).abs() < 1e-15);
        let th = ThermalParameters::new(0.7).unwrap();
        for w in [0.3, 1.0, 2.5] {
            let pos = thermal_spectral_density(&sd, &th, w).unwrap();
            let neg = thermal_spectral_density(&sd, &th, -w).unwrap();
            // emission exceeds absorption by J(ω)
            assert!((pos - neg - sd.j(w)).abs() < 1e-12);
            assert!(pos > 0.0 && neg > 0.0);
        }
    }

    #[test]
    fn calibration_round_trip() {
        let (bc, bh) = (2.0, 0.25);
        let (ec, eh) = calibrate_delta(0.7, bc, bh, 1.0).unwrap();
        let cold = thermal_spectral_density(
            &OhmicSpectralDensity::new(ec, 1.0).unwrap(),
            &ThermalParameters::new(bc).unwrap(),
            1.0,
        )
        .unwrap();
        let hot = thermal_spectral_density(
            &OhmicSpectralDensity::new(eh, 1.0).unwrap(),
            &ThermalParameters::new(bh).unwrap(),
            2.0,
        )
        .unwrap();
        assert!((cold - 0.7).abs() < 1e-12 * 0.7);
        assert!((hot - 0.7).abs() < 1e-12 * 0.7);
        let (sc, sh) = calibrate_delta(1e-9, bc, bh, 1.0).unwrap();
        assert!(sc < 1e-7 && sh < 1e-7);
    }

    #[test]
    fn fit_document_round_trips_through_json() {
        let doc = BcfFitDocument {
            terms: vec![BcfTerm {
                g: c64(1.0, -0.5),
                w: c64(2.0, 0.25),
            }],
            residual: 1e-4,
            sd: unit_sd(),
            window: Some(60.0),
        };
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains("\"G\":[1.0,-0.5]"));
        let back: BcfFitDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
    }
}
