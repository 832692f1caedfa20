//! Qubit Otto engine: model, protocols and cycle thermodynamics.

mod engine;
mod protocol;

pub use engine::{
    bath_noise, prime_unit_bcf, run_engine, scan, unit_bcf, work_diagram, CycleMetrics,
    EngineConfig, EngineError, EngineResult, Estimate, ScanRow, WorkChannel, WorkDiagram,
};
pub use protocol::{
    make_olc, make_shifted, smoothstep, Protocol, ProtocolError, Pulse, ShiftTarget,
};

use crate::bath::{BathError, OhmicSpectralDensity, ThermalParameters};
use crate::propagator::SystemModel;
use crate::{c64, Complex64};
use serde::{Deserialize, Serialize};

/// Bath ordinals used throughout the engine.
pub const COLD: usize = 0;
pub const HOT: usize = 1;

/// Qubit with modulated gap coupled via `σ_x` to a cold and a hot Ohmic bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitEngineSpec {
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default)]
    pub s_x: f64,
    pub delta: f64,
    #[serde(default = "one")]
    pub omega_c: f64,
    pub t_cold: f64,
    pub t_hot: f64,
    /// Explicit `(η̃_cold, η̃_hot)`; otherwise derived from `delta`.
    #[serde(default)]
    pub eta: Option<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}

impl QubitEngineSpec {
    /// δ = 0.7, ω_c = Ω, T_c = Ω/2, T_h = 4Ω, s_x = 0.
    pub fn reference() -> Self {
        Self {
            omega: 1.0,
            s_x: 0.0,
            delta: 0.7,
            omega_c: 1.0,
            t_cold: 0.5,
            t_hot: 4.0,
            eta: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.omega > 0.0) {
            return Err(format!("omega must be positive, got {}", self.omega));
        }
        if !(self.s_x.abs() < 0.5 * self.omega) {
            return Err(format!("|s_x| must stay below omega/2, got {}", self.s_x));
        }
        if !(self.t_cold > 0.0 && self.t_hot > self.t_cold) {
            return Err(format!(
                "need 0 < t_cold < t_hot, got {} and {}",
                self.t_cold, self.t_hot
            ));
        }
        if !(self.omega_c > 0.0) {
            return Err(format!("omega_c must be positive, got {}", self.omega_c));
        }
        match self.eta {
            Some(e) if !(e[0] >= 0.0 && e[1] >= 0.0) => {
                Err(format!("eta must be non-negative, got {e:?}"))
            }
            None if !(self.delta > 0.0) => {
                Err(format!("delta must be positive, got {}", self.delta))
            }
            _ => Ok(()),
        }
    }

    /// Small and large level spacings.
    pub fn gaps(&self) -> (f64, f64) {
        let w = self.omega;
        (w.hypot(self.s_x), (2.0 * w).hypot(self.s_x))
    }

    pub fn eta_otto(&self) -> f64 {
        let (e0, e1) = self.gaps();
        1.0 - e0 / e1
    }

    pub fn eta_carnot(&self) -> f64 {
        1.0 - self.t_cold / self.t_hot
    }

    /// `(η̃_cold, η̃_hot)` so that the thermal spectral density of each bath
    /// equals `delta` at its resonance (ε₀ for cold, ε₁ for hot, s_x = 0).
    pub fn etas(&self) -> Result<[f64; 2], BathError> {
        if let Some(e) = self.eta {
            return Ok(e);
        }
        let w = self.omega;
        let (c, h) = crate::bath::calibrate_delta(
            self.delta,
            w / self.t_cold,
            w / self.t_hot,
            self.omega_c / w,
        )?;
        Ok([c / w, h / w])
    }

    pub fn spectral_densities(&self) -> Result<[OhmicSpectralDensity; 2], BathError> {
        let e = self.etas()?;
        Ok([
            OhmicSpectralDensity::new(e[COLD], self.omega_c)?,
            OhmicSpectralDensity::new(e[HOT], self.omega_c)?,
        ])
    }

    pub fn thermal(&self) -> Result<[ThermalParameters; 2], BathError> {
        Ok([
            ThermalParameters::from_temperature(self.t_cold)?,
            ThermalParameters::from_temperature(self.t_hot)?,
        ])
    }
}

/// Operators of the engine at one instant, row-major 2×2, in the basis
/// `(|↑⟩, |↓⟩)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineOperators {
    pub h_s: [Complex64; 4],
    pub dh_s: [Complex64; 4],
    /// `[cold, hot]`.
    pub l: [[Complex64; 4]; 2],
    pub dl: [[Complex64; 4]; 2],
}

const SIGMA_X_HALF: [Complex64; 4] = [
    Complex64 { re: 0.0, im: 0.0 },
    Complex64 { re: 0.5, im: 0.0 },
    Complex64 { re: 0.5, im: 0.0 },
    Complex64 { re: 0.0, im: 0.0 },
];

fn scaled(m: [Complex64; 4], s: f64) -> [Complex64; 4] {
    m.map(|z| z * s)
}

/// `H_S = (Ω/2)[(s_x/Ω)σ_x + (1+f)(σ_z+1)]`, `L_n = h_n σ_x/2` and their
/// time derivatives.
pub fn hamiltonian_at(spec: &QubitEngineSpec, proto: &Protocol, t: f64) -> EngineOperators {
    let (f, df) = proto.f(t);
    let (hc, dhc) = proto.h_cold(t);
    let (hh, dhh) = proto.h_hot(t);
    let w = spec.omega;
    let z = c64(0.0, 0.0);
    EngineOperators {
        h_s: [
            c64(w * (1.0 + f), 0.0),
            c64(0.5 * spec.s_x, 0.0),
            c64(0.5 * spec.s_x, 0.0),
            z,
        ],
        dh_s: [c64(w * df, 0.0), z, z, z],
        l: [scaled(SIGMA_X_HALF, hc), scaled(SIGMA_X_HALF, hh)],
        dl: [scaled(SIGMA_X_HALF, dhc), scaled(SIGMA_X_HALF, dhh)],
    }
}

/// `∂H/∂f`.
pub fn df_operator(spec: &QubitEngineSpec) -> [Complex64; 4] {
    let z = c64(0.0, 0.0);
    [c64(spec.omega, 0.0), z, z, z]
}

/// `∂H/∂h_n`, the same for both baths.
pub fn dh_operator() -> [Complex64; 4] {
    SIGMA_X_HALF
}

/// The engine as a propagator system model, baths ordered `[cold, hot]`.
#[derive(Debug, Clone)]
pub struct EngineModel {
    pub spec: QubitEngineSpec,
    pub protocol: Protocol,
}

impl SystemModel for EngineModel {
    fn dim(&self) -> usize {
        2
    }
    fn num_baths(&self) -> usize {
        2
    }
    fn hamiltonian(&self, t: f64, out: &mut [Complex64]) {
        out.copy_from_slice(&hamiltonian_at(&self.spec, &self.protocol, t).h_s);
    }
    fn coupling(&self, bath: usize, t: f64, out: &mut [Complex64]) {
        let h = if bath == COLD {
            self.protocol.h_cold(t).0
        } else {
            self.protocol.h_hot(t).0
        };
        out.copy_from_slice(&scaled(SIGMA_X_HALF, h));
    }
    fn hamiltonian_rate(&self, t: f64, out: &mut [Complex64]) {
        out.copy_from_slice(&hamiltonian_at(&self.spec, &self.protocol, t).dh_s);
    }
    fn coupling_rate(&self, bath: usize, t: f64, out: &mut [Complex64]) {
        let h = if bath == COLD {
            self.protocol.h_cold(t).1
        } else {
            self.protocol.h_hot(t).1
        };
        out.copy_from_slice(&scaled(SIGMA_X_HALF, h));
    }
}

/// Bloch vector `tr[σ ρ]` of a row-major 2×2 density matrix.
pub fn bloch(rho: &[Complex64]) -> [f64; 3] {
    [2.0 * rho[1].re, -2.0 * rho[1].im, rho[0].re - rho[3].re]
}

/// Gibbs populations `(p_↑, p_↓)` of `H_S` at fixed `f` and temperature.
pub fn gibbs_populations(spec: &QubitEngineSpec, f: f64, temperature: f64) -> [f64; 2] {
    // only meaningful for s_x = 0 where H_S is diagonal
    let e = spec.omega * (1.0 + f);
    let up = 1.0 / (1.0 + (e / temperature).exp());
    [up, 1.0 - up]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eig_gap(h: &[Complex64; 4]) -> (f64, f64) {
        let tr = h[0].re + h[3].re;
        let det = h[0].re * h[3].re - h[1].norm_sqr();
        let disc = (0.25 * tr * tr - det).sqrt();
        (0.5 * tr - disc, 2.0 * disc)
    }

    #[test]
    fn gaps_at_plateaus() {
        let spec = QubitEngineSpec::reference();
        let p = make_olc(60.0, 3.6).unwrap();
        let (g0, e0) = eig_gap(&hamiltonian_at(&spec, &p, 0.0).h_s);
        assert_eq!((g0, e0), (0.0, 1.0));
        let (g1, e1) = eig_gap(&hamiltonian_at(&spec, &p, 15.0).h_s);
        assert_eq!((g1, e1), (0.0, 2.0));
        let ops = hamiltonian_at(&spec, &p, 0.0);
        assert!(ops.l.iter().flatten().all(|z| *z == c64(0.0, 0.0)));
    }

    #[test]
    fn transverse_gaps_and_bounds() {
        let mut spec = QubitEngineSpec::reference();
        spec.s_x = 0.15;
        let p = make_olc(60.0, 3.6).unwrap();
        let (_, e0) = eig_gap(&hamiltonian_at(&spec, &p, 0.0).h_s);
        let (_, e1) = eig_gap(&hamiltonian_at(&spec, &p, 15.0).h_s);
        let (g0, g1) = spec.gaps();
        assert!((e0 - g0).abs() < 1e-14 && (e1 - g1).abs() < 1e-14);
        for s in [0.0, 0.1, 0.3, 0.49] {
            spec.s_x = s;
            let (a, b) = spec.gaps();
            assert!(a < b);
            assert!(spec.eta_otto() < spec.eta_carnot());
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let spec = QubitEngineSpec {
            s_x: 0.1,
            ..QubitEngineSpec::reference()
        };
        let p = make_shifted(&make_olc(60.0, 3.6).unwrap(), 5.0, ShiftTarget::Both, true).unwrap();
        let h = 1e-6;
        for t in [1.0, 4.0, 8.0, 31.0, 36.0, 40.0, 55.0] {
            let a = hamiltonian_at(&spec, &p, t - h);
            let b = hamiltonian_at(&spec, &p, t + h);
            let m = hamiltonian_at(&spec, &p, t);
            for k in 0..4 {
                assert!(((b.h_s[k] - a.h_s[k]) / (2.0 * h) - m.dh_s[k]).norm() < 1e-6);
                for n in 0..2 {
                    assert!(((b.l[n][k] - a.l[n][k]) / (2.0 * h) - m.dl[n][k]).norm() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn calibration_reproduces_delta() {
        let spec = QubitEngineSpec::reference();
        let [c, h] = spec.spectral_densities().unwrap();
        let [tc, th] = spec.thermal().unwrap();
        let jb = |sd: &OhmicSpectralDensity, t: &ThermalParameters, w: f64| {
            crate::bath::thermal_spectral_density(sd, t, w).unwrap()
        };
        assert!((jb(&c, &tc, 1.0) - 0.7).abs() < 1e-12);
        assert!((jb(&h, &th, 2.0) - 0.7).abs() < 1e-12);
    }
}
