//! Brute-force reference: each bath replaced by a few harmonic modes with
//! truncated Fock spaces, the full state propagated exactly.

use crate::bath::{BcfTerm, ExponentialBcf, OhmicSpectralDensity, ThermalParameters};
use crate::ensemble::run_ensemble;
use crate::hierarchy::{build_basis, HierarchyError, HopsCoefficients};
use crate::numerics::chebyshev::chebyshev_propagate;
use crate::numerics::ode::SolverConfig;
use crate::numerics::quad::{integrate, QuadOptions};
use crate::observables::{trajectory_series, ChannelLayout, EnergySeries, EnsembleAccumulator};
use crate::propagator::{
    propagate_trajectory, BathNoise, Hops, HopsMethod, PropagateOptions, PropagationError,
    StaticSystem,
};
use crate::stochproc::{stream_seed, LineProcess, Noise, ProcessKind};
use crate::{c64, Complex64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("Hilbert space dimension {dim} exceeds the bound {bound}")]
    DimensionExceeded { dim: usize, bound: usize },
    #[error("invalid oracle setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error("every HOPS trajectory aborted: {0}")]
    AllAborted(String),
}

/// Modes `(ω_λ, g_λ)` of one bath with a Fock cutoff per mode (levels
/// `0..cutoff`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedBath {
    pub omegas: Vec<f64>,
    pub g: Vec<Complex64>,
    pub fock_cutoff: Vec<usize>,
}

/// Midpoint rule on `[0, omega_max]`: `|g_λ|² = J(ω_λ) Δω / π`.
pub fn discretize(
    sd: &OhmicSpectralDensity,
    k: usize,
    omega_max: f64,
) -> Result<DiscretizedBath, OracleError> {
    if k == 0 || !(omega_max > 0.0) {
        return Err(OracleError::Invalid(format!(
            "need K ≥ 1 and omega_max > 0, got {k} and {omega_max}"
        )));
    }
    let dw = omega_max / k as f64;
    let omegas: Vec<f64> = (0..k).map(|l| (l as f64 + 0.5) * dw).collect();
    let g = omegas
        .iter()
        .map(|&w| c64((sd.j(w) * dw / PI).sqrt(), 0.0))
        .collect();
    Ok(DiscretizedBath {
        omegas,
        g,
        fock_cutoff: vec![2; k],
    })
}

impl DiscretizedBath {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.fock_cutoff = vec![cutoff.max(2); self.len()];
        self
    }

    /// Per-mode cutoffs leaving Gibbs weight below `tol` above the top level,
    /// plus `headroom` levels for excitations created by the coupling.
    pub fn with_thermal_cutoffs(
        mut self,
        thermal: &ThermalParameters,
        tol: f64,
        headroom: usize,
    ) -> Self {
        self.fock_cutoff = self
            .omegas
            .iter()
            .map(|w| {
                let levels = if thermal.is_zero_temperature() {
                    1
                } else {
                    (tol.ln() / (-thermal.beta * w)).ceil().max(1.0) as usize
                };
                (levels + headroom).max(2)
            })
            .collect();
        self
    }

    /// `Σ_λ |g_λ|² e^{−iω_λτ}`.
    pub fn bcf(&self, tau: f64) -> Complex64 {
        self.omegas
            .iter()
            .zip(&self.g)
            .map(|(w, g)| g.norm_sqr() * c64(0.0, -w * tau).exp())
            .sum()
    }

    /// Largest `|α_K(τ) − α(τ)| / |α(0)|` on `n` points of `[0, window]`.
    pub fn bcf_error(&self, sd: &OhmicSpectralDensity, window: f64, n: usize) -> f64 {
        let scale = sd.bcf(0.0).norm();
        (0..=n)
            .map(|i| window * i as f64 / n.max(1) as f64)
            .map(|t| (self.bcf(t) - sd.bcf(t)).norm() / scale)
            .fold(0.0, f64::max)
    }

    /// `2π/Δω`, after which the discrete correlation revives.
    pub fn recurrence_time(&self) -> f64 {
        if self.len() < 2 {
            return f64::INFINITY;
        }
        2.0 * PI / (self.omegas[1] - self.omegas[0])
    }

    /// The discrete BCF as undamped exponentials `G = |g|²`, `W = iω`.
    pub fn as_bcf(&self) -> ExponentialBcf {
        ExponentialBcf {
            terms: self
                .omegas
                .iter()
                .zip(&self.g)
                .map(|(w, g)| BcfTerm {
                    g: c64(g.norm_sqr(), 0.0),
                    w: c64(0.0, *w),
                })
                .collect(),
            fit_residual: 0.0,
        }
    }

    /// Line weights `n̄(βω_λ)|g_λ|²` of the thermal process.
    pub fn thermal_weights(&self, thermal: &ThermalParameters) -> Vec<f64> {
        self.omegas
            .iter()
            .zip(&self.g)
            .map(|(w, g)| thermal.n_bar(*w) * g.norm_sqr())
            .collect()
    }
}

/// One bath attached to the system through `L_n`.
#[derive(Debug, Clone)]
pub struct OracleBath {
    pub coupling: Vec<Complex64>,
    pub modes: DiscretizedBath,
    pub thermal: ThermalParameters,
}

/// `H = H_S + Σ_n (L_n B_n† + L_n† B_n) + Σ_λ ω_λ a_λ†a_λ` with
/// `B_n = Σ_λ g_λ a_λ`.
#[derive(Debug, Clone)]
pub struct OracleSystem {
    pub dim: usize,
    pub h_s: Vec<Complex64>,
    pub baths: Vec<OracleBath>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleConfig {
    pub max_dim: usize,
    /// Gibbs weight allowed to be dropped from the initial bath mixture.
    pub tail: f64,
    pub chebyshev_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_dim: 20_000,
            tail: 1e-6,
            chebyshev_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResult {
    /// Channels `rho_re_ij`, `rho_im_ij`, `H_S`, `H_I_n`, `J_n`, `dH_B_n`,
    /// `H_total`; standard errors are zero.
    pub series: EnergySeries,
    pub dim: usize,
    /// Initial Fock configurations propagated.
    pub configurations: usize,
    /// Gibbs weight left out of the mixture.
    pub missing_weight: f64,
    /// Largest population of any mode's top Fock level.
    pub leakage: f64,
    /// Largest `|⟨H⟩(t) − ⟨H⟩(0)| / max(1, |⟨H⟩(0)|)`.
    pub energy_drift: f64,
}

struct FockSpace {
    d: usize,
    modes: Vec<(usize, f64, Complex64)>,
    strides: Vec<usize>,
    cutoffs: Vec<usize>,
    size: usize,
    occ: Vec<u16>,
    nb: usize,
    energies: Vec<f64>,
}

impl FockSpace {
    fn new(sys: &OracleSystem) -> Self {
        let mut modes = Vec::new();
        let mut cutoffs = Vec::new();
        for (n, b) in sys.baths.iter().enumerate() {
            for l in 0..b.modes.len() {
                modes.push((n, b.modes.omegas[l], b.modes.g[l]));
                cutoffs.push(b.modes.fock_cutoff[l]);
            }
        }
        let k = modes.len();
        let mut strides = vec![1; k];
        for l in (0..k.saturating_sub(1)).rev() {
            strides[l] = strides[l + 1] * cutoffs[l + 1];
        }
        let size: usize = cutoffs.iter().product();
        let mut occ = vec![0u16; size * k];
        for m in 0..size {
            for l in 0..k {
                occ[m * k + l] = ((m / strides[l]) % cutoffs[l]) as u16;
            }
        }
        let nb = sys.baths.len();
        let mut energies = vec![0.0; size * nb];
        for m in 0..size {
            for (l, md) in modes.iter().enumerate() {
                energies[m * nb + md.0] += md.1 * occ[m * k + l] as f64;
            }
        }
        Self {
            d: sys.dim,
            modes,
            strides,
            cutoffs,
            size,
            occ,
            nb,
            energies,
        }
    }

    fn n(&self, m: usize, l: usize) -> usize {
        self.occ[m * self.modes.len() + l] as usize
    }

    fn bath_energy(&self, m: usize, bath: usize) -> f64 {
        self.energies[m * self.nb + bath]
    }

    /// `out = B_n ψ` (or `B_n† ψ`) acting on the bath factor.
    fn apply_b(&self, bath: usize, dagger: bool, psi: &[Complex64], out: &mut [Complex64]) {
        out.fill(Complex64::default());
        for (l, &(n, _, g)) in self.modes.iter().enumerate() {
            if n != bath {
                continue;
            }
            let st = self.strides[l];
            for s in 0..self.d {
                let base = s * self.size;
                for m in 0..self.size {
                    let k = self.n(m, l);
                    if dagger {
                        if k > 0 {
                            out[base + m] += g.conj() * (k as f64).sqrt() * psi[base + m - st];
                        }
                    } else if k + 1 < self.cutoffs[l] {
                        out[base + m] += g * ((k + 1) as f64).sqrt() * psi[base + m + st];
                    }
                }
            }
        }
    }

    /// `out += (A ⊗ 1) ψ`.
    fn apply_sys(&self, a: &[Complex64], psi: &[Complex64], out: &mut [Complex64]) {
        let (d, f) = (self.d, self.size);
        for s in 0..d {
            for r in 0..d {
                let c = a[s * d + r];
                if c == Complex64::default() {
                    continue;
                }
                let (src, dst) = (&psi[r * f..(r + 1) * f], s * f);
                for m in 0..f {
                    out[dst + m] += c * src[m];
                }
            }
        }
    }
}

fn adjoint(d: usize, a: &[Complex64]) -> Vec<Complex64> {
    let mut o = vec![Complex64::default(); d * d];
    for i in 0..d {
        for j in 0..d {
            o[j * d + i] = a[i * d + j].conj();
        }
    }
    o
}

fn row_norm(d: usize, a: &[Complex64]) -> f64 {
    (0..d)
        .map(|i| a[i * d..(i + 1) * d].iter().map(|z| z.norm()).sum::<f64>())
        .chain((0..d).map(|j| (0..d).map(|i| a[i * d + j].norm()).sum::<f64>()))
        .fold(0.0, f64::max)
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

struct Ops<'a> {
    sys: &'a OracleSystem,
    fock: FockSpace,
    l_dag: Vec<Vec<Complex64>>,
}

impl Ops<'_> {
    /// `(L_n B_n† + L_n† B_n) ψ`.
    fn interaction(
        &self,
        n: usize,
        psi: &[Complex64],
        out: &mut [Complex64],
        tmp: &mut [Complex64],
    ) {
        out.fill(Complex64::default());
        self.fock.apply_b(n, true, psi, tmp);
        self.fock.apply_sys(&self.sys.baths[n].coupling, tmp, out);
        self.fock.apply_b(n, false, psi, tmp);
        self.fock.apply_sys(&self.l_dag[n], tmp, out);
    }

    fn hamiltonian(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let f = self.fock.size;
        out.fill(Complex64::default());
        self.fock.apply_sys(&self.sys.h_s, psi, out);
        for s in 0..self.fock.d {
            for m in 0..f {
                let e: f64 = (0..self.sys.baths.len())
                    .map(|n| self.fock.bath_energy(m, n))
                    .sum();
                out[s * f + m] += psi[s * f + m] * e;
            }
        }
        let mut tmp = vec![Complex64::default(); psi.len()];
        let mut hi = vec![Complex64::default(); psi.len()];
        for n in 0..self.sys.baths.len() {
            self.interaction(n, psi, &mut hi, &mut tmp);
            for (o, h) in out.iter_mut().zip(&hi) {
                *o += h;
            }
        }
    }

    fn spectral_bounds(&self) -> (f64, f64) {
        let d = self.fock.d;
        let hs = row_norm(d, &self.sys.h_s);
        let hb: f64 = self
            .fock
            .modes
            .iter()
            .zip(&self.fock.cutoffs)
            .map(|(m, &c)| m.1.abs() * (c - 1) as f64)
            .sum();
        let hi: f64 = self
            .fock
            .modes
            .iter()
            .zip(&self.fock.cutoffs)
            .map(|(m, &c)| {
                2.0 * row_norm(d, &self.sys.baths[m.0].coupling)
                    * m.2.norm()
                    * ((c - 1) as f64).sqrt()
            })
            .sum();
        (-hs - hi, hs + hb + hi)
    }
}

/// Thermal Fock configurations in decreasing probability until all but a
/// fraction `tail` of the weight inside the cutoffs is covered. The second
/// value is the Gibbs weight left out, truncation included.
fn gibbs_configurations(
    sys: &OracleSystem,
    fock: &FockSpace,
    tail: f64,
) -> (Vec<(usize, f64)>, f64) {
    let per_mode: Vec<Vec<f64>> = fock
        .modes
        .iter()
        .zip(&fock.cutoffs)
        .map(|(&(n, w, _), &c)| {
            let th = &sys.baths[n].thermal;
            if th.is_zero_temperature() {
                let mut p = vec![0.0; c];
                p[0] = 1.0;
                return p;
            }
            let x = (-th.beta * w).exp();
            (0..c).map(|k| (1.0 - x) * x.powi(k as i32)).collect()
        })
        .collect();
    let mut all: Vec<(usize, f64)> = (0..fock.size)
        .map(|m| {
            (
                m,
                (0..fock.modes.len())
                    .map(|l| per_mode[l][fock.n(m, l)])
                    .product(),
            )
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1));
    let within: f64 = all.iter().map(|c| c.1).sum();
    let mut kept = Vec::new();
    let mut acc = 0.0;
    for (m, p) in all {
        if acc >= (1.0 - tail) * within || p == 0.0 {
            break;
        }
        acc += p;
        kept.push((m, p));
    }
    (kept, 1.0 - acc)
}

fn validate(sys: &OracleSystem, psi0: &[Complex64], times: &[f64]) -> Result<(), OracleError> {
    let d = sys.dim;
    if d == 0 || sys.h_s.len() != d * d || psi0.len() != d {
        return Err(OracleError::Invalid(
            "system operator shapes do not match dim".into(),
        ));
    }
    for (n, b) in sys.baths.iter().enumerate() {
        if b.coupling.len() != d * d
            || b.modes.g.len() != b.modes.len()
            || b.modes.fock_cutoff.len() != b.modes.len()
        {
            return Err(OracleError::Invalid(format!(
                "bath {n} has inconsistent shapes"
            )));
        }
        if b.modes.fock_cutoff.iter().any(|&c| c < 2) {
            return Err(OracleError::Invalid(format!(
                "bath {n}: Fock cutoff must be ≥ 2"
            )));
        }
    }
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(OracleError::Invalid(
            "sample times must be non-negative and sorted".into(),
        ));
    }
    Ok(())
}

/// Exact evolution of `|psi0⟩⟨psi0| ⊗ ρ_B^{Gibbs}` under a static
/// Hamiltonian, the bath mixture enumerated over Fock configurations.
pub fn exact_propagate(
    sys: &OracleSystem,
    psi0: &[Complex64],
    times: &[f64],
    cfg: &OracleConfig,
) -> Result<OracleResult, OracleError> {
    validate(sys, psi0, times)?;
    let d = sys.dim;
    let fock_size: usize = sys
        .baths
        .iter()
        .flat_map(|b| b.modes.fock_cutoff.iter())
        .product();
    let dim = d.saturating_mul(fock_size);
    if dim > cfg.max_dim {
        return Err(OracleError::DimensionExceeded {
            dim,
            bound: cfg.max_dim,
        });
    }
    let ops = Ops {
        sys,
        fock: FockSpace::new(sys),
        l_dag: sys.baths.iter().map(|b| adjoint(d, &b.coupling)).collect(),
    };
    let f = ops.fock.size;
    let nb = sys.baths.len();
    let (configs, missing) = gibbs_configurations(sys, &ops.fock, cfg.tail);
    let norm: f64 = configs.iter().map(|c| c.1).sum();
    let (e_min, e_max) = ops.spectral_bounds();

    let layout = ChannelLayout {
        dim: d,
        num_baths: nb,
        conjugates: false,
    };
    let mut names: Vec<String> = layout.names()[..2 * d * d].to_vec();
    names.push("H_S".into());
    for n in 0..nb {
        names.extend([format!("H_I_{n}"), format!("J_{n}"), format!("dH_B_{n}")]);
    }
    names.push("H_total".into());
    let nt = times.len();
    let mut mean = vec![vec![0.0; nt]; names.len()];
    let top: Vec<usize> = (0..f)
        .filter(|&m| (0..ops.fock.modes.len()).any(|l| ops.fock.n(m, l) + 1 == ops.fock.cutoffs[l]))
        .collect();
    let mut top_pop = vec![0.0; nt];
    let mut h_b0 = vec![0.0; nb];

    let mut psi = vec![Complex64::default(); d * f];
    let mut hi = vec![Complex64::default(); d * f];
    let mut hb = vec![Complex64::default(); d * f];
    let mut tmp = vec![Complex64::default(); d * f];
    for &(m0, p) in &configs {
        let w = p / norm;
        psi.fill(Complex64::default());
        for s in 0..d {
            psi[s * f + m0] = psi0[s];
        }
        let mut t = 0.0;
        for (i, &ti) in times.iter().enumerate() {
            if ti > t {
                chebyshev_propagate(
                    |v, o| ops.hamiltonian(v, o),
                    e_min,
                    e_max,
                    ti - t,
                    &mut psi,
                    cfg.chebyshev_tol,
                );
                t = ti;
            }
            let mut c = 0;
            for a in 0..d {
                for b in 0..d {
                    let r = dot(&psi[b * f..(b + 1) * f], &psi[a * f..(a + 1) * f]);
                    mean[layout.rho_re(a, b)][i] += w * r.re;
                    mean[layout.rho_im(a, b)][i] += w * r.im;
                }
            }
            c += 2 * d * d;
            tmp.fill(Complex64::default());
            ops.fock.apply_sys(&sys.h_s, &psi, &mut tmp);
            let e_s = dot(&psi, &tmp).re;
            mean[c][i] += w * e_s;
            c += 1;
            let mut total = e_s;
            for n in 0..nb {
                ops.interaction(n, &psi, &mut hi, &mut tmp);
                let e_i = dot(&psi, &hi).re;
                for s in 0..d {
                    for m in 0..f {
                        hb[s * f + m] = psi[s * f + m] * ops.fock.bath_energy(m, n);
                    }
                }
                let e_b = dot(&psi, &hb).re;
                let flow = -2.0 * dot(&hb, &hi).im;
                if i == 0 {
                    h_b0[n] += w * e_b;
                }
                mean[c][i] += w * e_i;
                mean[c + 1][i] += w * flow;
                mean[c + 2][i] += w * e_b;
                total += e_i + e_b;
                c += 3;
            }
            mean[c][i] += w * total;
            let leak: f64 = top
                .iter()
                .map(|&m| (0..d).map(|s| psi[s * f + m].norm_sqr()).sum::<f64>())
                .sum();
            top_pop[i] += w * leak;
        }
    }
    for n in 0..nb {
        let c = 2 * d * d + 1 + 3 * n + 2;
        for v in mean[c].iter_mut() {
            *v -= h_b0[n];
        }
    }
    let h_total = &mean[names.len() - 1];
    let scale = h_total[0].abs().max(1.0);
    let energy_drift = h_total
        .iter()
        .map(|e| (e - h_total[0]).abs() / scale)
        .fold(0.0, f64::max);
    Ok(OracleResult {
        series: EnergySeries {
            times: times.to_vec(),
            stderr: vec![vec![0.0; nt]; names.len()],
            names,
            mean,
        },
        dim,
        configurations: configs.len(),
        missing_weight: missing,
        leakage: top_pop.iter().copied().fold(0.0, f64::max),
        energy_drift,
    })
}

/// HOPS settings for [`hops_discrete`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopsReference {
    pub trajectories: u64,
    pub k_max: usize,
    pub method: HopsMethod,
    pub seed: u64,
    /// 0 selects all available cores.
    pub workers: usize,
    pub solver: SolverConfig,
}

impl Default for HopsReference {
    fn default() -> Self {
        Self {
            trajectories: 20_000,
            k_max: 4,
            method: HopsMethod::Nonlinear,
            seed: 1,
            workers: 0,
            solver: SolverConfig::default(),
        }
    }
}

/// HOPS ensemble for the same discrete baths, with exact line processes for
/// `η` and `ξ`. Returns the ensemble series and the abort count.
pub fn hops_discrete(
    sys: &OracleSystem,
    psi0: &[Complex64],
    times: &[f64],
    cfg: &HopsReference,
) -> Result<(EnergySeries, u64), OracleError> {
    validate(sys, psi0, times)?;
    let d = sys.dim;
    let nb = sys.baths.len();
    let model = StaticSystem {
        dim: d,
        h: sys.h_s.clone(),
        couplings: sys.baths.iter().map(|b| b.coupling.clone()).collect(),
    };
    let bcfs: Vec<ExponentialBcf> = sys.baths.iter().map(|b| b.modes.as_bcf()).collect();
    let counts: Vec<usize> = bcfs.iter().map(|b| b.len()).collect();
    let basis = build_basis(&counts, cfg.k_max)?;
    let coeffs = HopsCoefficients::new(&basis, &bcfs)?;
    let hops = Hops::new(&model, &basis, &coeffs, cfg.method)?;
    let layout = ChannelLayout {
        dim: d,
        num_baths: nb,
        conjugates: false,
    };
    let opts = PropagateOptions {
        keep_second_level: false,
    };
    let trajectory = |i: u64| {
        let noise: Vec<BathNoise> = sys
            .baths
            .iter()
            .enumerate()
            .map(|(n, b)| {
                let w: Vec<f64> = b.modes.g.iter().map(|g| g.norm_sqr()).collect();
                let driving = Noise::Lines(LineProcess::sample(
                    &b.modes.omegas,
                    &w,
                    stream_seed(cfg.seed, i, n, ProcessKind::Driving),
                ));
                let tw = b.modes.thermal_weights(&b.thermal);
                let thermal = if tw.iter().all(|&x| x == 0.0) {
                    Noise::Zero
                } else {
                    Noise::Lines(LineProcess::sample(
                        &b.modes.omegas,
                        &tw,
                        stream_seed(cfg.seed, i, n, ProcessKind::Thermal),
                    ))
                };
                BathNoise { driving, thermal }
            })
            .collect();
        let s = propagate_trajectory(&hops, psi0, &noise, &cfg.solver, times, &opts)
            .map_err(|e| e.to_string())?;
        Ok(trajectory_series(
            &s, &model, &coeffs, cfg.method, &layout, None,
        ))
    };
    let workers = if cfg.workers == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        cfg.workers
    };
    let acc = run_ensemble(
        cfg.trajectories,
        workers,
        4,
        || EnsembleAccumulator::new(layout.clone(), times.to_vec(), Vec::new()),
        trajectory,
    );
    if acc.trajectories() == 0 {
        return Err(OracleError::AllAborted(
            acc.abort_log.first().cloned().unwrap_or_default(),
        ));
    }
    Ok((acc.energy_series(), acc.aborted))
}

/// Qubit at the compressed gap `2Ω` (`H_S = 2Ω|↑⟩⟨↑|`) coupled through
/// `σ_x/2` to a few modes of the cold bath calibrated at `delta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossCheck {
    pub delta: f64,
    pub t_cold: f64,
    pub t_hot: f64,
    pub omega_c: f64,
    pub modes: usize,
    pub omega_max: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Extra Fock levels above the thermally occupied ones.
    pub headroom: usize,
    pub hops: HopsReference,
}

impl Default for CrossCheck {
    fn default() -> Self {
        Self {
            delta: 0.35,
            t_cold: 0.5,
            t_hot: 4.0,
            omega_c: 1.0,
            modes: 4,
            omega_max: 4.0,
            horizon: 5.0,
            dt: 0.1,
            headroom: 2,
            hops: HopsReference::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelComparison {
    pub name: String,
    /// Largest `|exact − hops| / σ` over the grid, `σ² = SE² + disc²`.
    pub max_z: f64,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub max_trace_distance: f64,
    pub channels: Vec<ChannelComparison>,
    pub exact: OracleResult,
    pub hops: EnergySeries,
    pub hops_aborted: u64,
    /// Recurrence time of the discretised bath.
    pub recurrence_time: f64,
}

impl CrossCheck {
    pub fn system(&self, headroom: usize) -> Result<OracleSystem, OracleError> {
        let (eta, _) = crate::bath::calibrate_delta(
            self.delta,
            1.0 / self.t_cold,
            1.0 / self.t_hot,
            self.omega_c,
        )
        .map_err(|e| OracleError::Invalid(e.to_string()))?;
        let sd = OhmicSpectralDensity::new(eta, self.omega_c)
            .map_err(|e| OracleError::Invalid(e.to_string()))?;
        let thermal = ThermalParameters::from_temperature(self.t_cold)
            .map_err(|e| OracleError::Invalid(e.to_string()))?;
        let z = c64(0.0, 0.0);
        Ok(OracleSystem {
            dim: 2,
            h_s: vec![c64(2.0, 0.0), z, z, z],
            baths: vec![OracleBath {
                coupling: vec![z, c64(0.5, 0.0), c64(0.5, 0.0), z],
                modes: discretize(&sd, self.modes, self.omega_max)?
                    .with_thermal_cutoffs(&thermal, 1e-6, headroom),
                thermal,
            }],
        })
    }

    /// Exact propagation at `headroom` and `headroom + 1` (their gap is the
    /// truncation error) against a HOPS ensemble on the same modes.
    pub fn run(&self, cfg: &OracleConfig) -> Result<CrossCheckReport, OracleError> {
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(OracleError::Invalid(
                "horizon and dt must be positive".into(),
            ));
        }
        let n = (self.horizon / self.dt).round() as usize;
        let times: Vec<f64> = (0..=n)
            .map(|i| self.horizon * i as f64 / n as f64)
            .collect();
        let psi0 = [c64(0.0, 0.0), c64(1.0, 0.0)];
        let sys = self.system(self.headroom)?;
        let exact = exact_propagate(&sys, &psi0, &times, cfg)?;
        let finer = exact_propagate(&self.system(self.headroom + 1)?, &psi0, &times, cfg)?;
        let (hops, hops_aborted) = hops_discrete(&sys, &psi0, &times, &self.hops)?;
        let max_trace_distance = (0..times.len())
            .map(|i| trace_distance_2x2(&density_at(&exact.series, 2, i), &density_at(&hops, 2, i)))
            .fold(0.0, f64::max);
        let channels = ["H_S", "H_I_0", "J_0", "dH_B_0"]
            .iter()
            .map(|name| {
                let e = exact.series.channel(name).expect("oracle channel").0;
                let f = finer.series.channel(name).expect("oracle channel").0;
                let (m, se) = hops.channel(name).expect("hops channel");
                let mut max_z: f64 = 0.0;
                let mut max_abs_diff: f64 = 0.0;
                for i in 1..times.len() {
                    let d = (e[i] - m[i]).abs();
                    let sigma = (se[i] * se[i] + (e[i] - f[i]).powi(2)).sqrt();
                    max_abs_diff = max_abs_diff.max(d);
                    max_z = max_z.max(if sigma > 0.0 {
                        d / sigma
                    } else if d > 1e-12 {
                        f64::INFINITY
                    } else {
                        0.0
                    });
                }
                ChannelComparison {
                    name: name.to_string(),
                    max_z,
                    max_abs_diff,
                }
            })
            .collect();
        Ok(CrossCheckReport {
            max_trace_distance,
            channels,
            recurrence_time: sys.baths[0].modes.recurrence_time(),
            exact,
            hops,
            hops_aborted,
        })
    }
}

/// Coherence decay exponent `Γ(t)` of a pure-dephasing coupling whose
/// operator eigenvalues differ by `gap`: `|ρ₀₁(t)| = |ρ₀₁(0)| e^{−Γ(t)}` with
/// `Γ = (gap²/π) ∫ J(ω) coth(βω/2) (1 − cos ωt)/ω² dω`.
pub fn dephasing_exponent(
    sd: &OhmicSpectralDensity,
    thermal: &ThermalParameters,
    gap: f64,
    t: f64,
) -> f64 {
    let f = |w: f64| {
        if w <= 0.0 {
            return Complex64::default();
        }
        let coth = if thermal.is_zero_temperature() {
            1.0
        } else {
            1.0 + 2.0 * thermal.n_bar(w)
        };
        // (1 − cos ωt)/ω² = 2 sin²(ωt/2)/ω², stable for small ω
        let s = (0.5 * w * t).sin() / w;
        c64(sd.j(w) * coth * 2.0 * s * s, 0.0)
    };
    let hi = 60.0 * sd.omega_c;
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        max_intervals: 20_000,
    };
    let v = integrate(f, 0.0, hi, opts).unwrap_or_else(|e| e.value);
    gap * gap / PI * v.re
}

/// Trace distance `½‖ρ − σ‖₁` of two Hermitian 2×2 matrices.
pub fn trace_distance_2x2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let tr = 0.5 * (d[0].re + d[3].re);
    let z = 0.5 * (d[0].re - d[3].re);
    let r = (z * z + d[1].norm_sqr()).sqrt();
    0.5 * ((tr + r).abs() + (tr - r).abs())
}

/// Row-major `ρ_S` at sample `i` from a series with `rho_re_ij`/`rho_im_ij`.
pub fn density_at(series: &EnergySeries, dim: usize, i: usize) -> Vec<Complex64> {
    let mut rho = vec![Complex64::default(); dim * dim];
    for a in 0..dim {
        for b in 0..dim {
            let re = series
                .channel(&format!("rho_re_{a}{b}"))
                .map_or(0.0, |c| c.0[i]);
            let im = series
                .channel(&format!("rho_im_{a}{b}"))
                .map_or(0.0, |c| c.0[i]);
            rho[a * dim + b] = c64(re, im);
        }
    }
    rho
}
