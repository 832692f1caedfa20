//! Multi-bath HOPS right-hand side and trajectory integration.
//!
//! The state vector stacks all hierarchy states `ψ^k` (basis order, `D`
//! entries each) followed, for the nonlinear method, by one memory register
//! per BCF term whose sum is the noise shift of that bath.

use crate::hierarchy::{HierarchyBasis, HopsCoefficients, NONE};
use crate::numerics::ode::{self, OdeError, SolveStats, SolverConfig};
use crate::stochproc::Noise;
use crate::{c64, Complex64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Time-dependent system and coupling operators, row-major `D×D`.
pub trait SystemModel: Send + Sync {
    fn dim(&self) -> usize;
    fn num_baths(&self) -> usize;
    fn hamiltonian(&self, t: f64, out: &mut [Complex64]);
    fn coupling(&self, bath: usize, t: f64, out: &mut [Complex64]);
    fn hamiltonian_rate(&self, t: f64, out: &mut [Complex64]);
    fn coupling_rate(&self, bath: usize, t: f64, out: &mut [Complex64]);
}

/// Time-independent system, mostly for tests and the oracle comparison.
#[derive(Debug, Clone)]
pub struct StaticSystem {
    pub dim: usize,
    pub h: Vec<Complex64>,
    pub couplings: Vec<Vec<Complex64>>,
}

impl SystemModel for StaticSystem {
    fn dim(&self) -> usize {
        self.dim
    }
    fn num_baths(&self) -> usize {
        self.couplings.len()
    }
    fn hamiltonian(&self, _t: f64, out: &mut [Complex64]) {
        out.copy_from_slice(&self.h);
    }
    fn coupling(&self, bath: usize, _t: f64, out: &mut [Complex64]) {
        out.copy_from_slice(&self.couplings[bath]);
    }
    fn hamiltonian_rate(&self, _t: f64, out: &mut [Complex64]) {
        out.fill(Complex64::default());
    }
    fn coupling_rate(&self, _bath: usize, _t: f64, out: &mut [Complex64]) {
        out.fill(Complex64::default());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopsMethod {
    Linear,
    Nonlinear,
}

/// Driving process `η(t)` (the equations use its conjugate) and thermal
/// process `ξ(t)` of one bath.
#[derive(Debug, Clone)]
pub struct BathNoise {
    pub driving: Noise,
    pub thermal: Noise,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("zeroth hierarchy state norm {norm:e} below floor at t={t}")]
    NormUnderflow { t: f64, norm: f64 },
    #[error("non-finite state at t={t} (hierarchy ordinal {ordinal})")]
    NonFinite { t: f64, ordinal: usize },
    #[error("solver step underflow at t={t} (h={h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("solver exceeded {steps} steps at t={t}")]
    TooManySteps { t: f64, steps: usize },
    #[error("thermal process lacks a derivative for bath {bath}")]
    MissingDerivative { bath: usize },
    #[error("invalid setup: {0}")]
    Invalid(String),
}

pub const NORM_FLOOR: f64 = 1e-12;

#[inline]
fn matvec(d: usize, m: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        let mut acc = Complex64::default();
        for j in 0..d {
            acc += row[j] * v[j];
        }
        out[i] = acc;
    }
}

#[inline]
fn adjoint(d: usize, m: &[Complex64], out: &mut [Complex64]) {
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = m[i * d + j].conj();
        }
    }
}

/// `⟨a|M|b⟩`.
pub fn sandwich(d: usize, a: &[Complex64], m: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::default();
    for i in 0..d {
        let mut row = Complex64::default();
        for j in 0..d {
            row += m[i * d + j] * b[j];
        }
        acc += a[i].conj() * row;
    }
    acc
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Everything the right-hand side needs; shared read-only.
pub struct Hops<'a> {
    pub system: &'a dyn SystemModel,
    pub basis: &'a HierarchyBasis,
    pub coeffs: &'a HopsCoefficients,
    pub method: HopsMethod,
    down_coef: Vec<Complex64>,
    up_coef: Vec<Complex64>,
    slot_start: Vec<usize>,
}

/// Scratch space owned by one trajectory.
pub struct RhsWork {
    h: Vec<Complex64>,
    l: Vec<Vec<Complex64>>,
    ldag: Vec<Vec<Complex64>>,
    diag: Vec<Complex64>,
    l_psi: Vec<Vec<Complex64>>,
    ldag_psi: Vec<Vec<Complex64>>,
    active: Vec<bool>,
    l_dag_exp: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl<'a> Hops<'a> {
    pub fn new(
        system: &'a dyn SystemModel,
        basis: &'a HierarchyBasis,
        coeffs: &'a HopsCoefficients,
        method: HopsMethod,
    ) -> Result<Self, PropagationError> {
        if system.num_baths() != basis.num_baths() {
            return Err(PropagationError::Invalid(format!(
                "system has {} baths, hierarchy {}",
                system.num_baths(),
                basis.num_baths()
            )));
        }
        let m = basis.m_total();
        let n = basis.len();
        let mut down_coef = vec![Complex64::default(); n * m];
        let mut up_coef = vec![Complex64::default(); n * m];
        for i in 0..n {
            let k = basis.index(i);
            for s in 0..m {
                let minus_i_sqrt_g = c64(0.0, -1.0) * coeffs.sqrt_g[s];
                down_coef[i * m + s] = minus_i_sqrt_g * (k[s] as f64).sqrt();
                up_coef[i * m + s] = minus_i_sqrt_g * (k[s] as f64 + 1.0).sqrt();
            }
        }
        let mut slot_start = Vec::new();
        let mut acc = 0;
        for &c in &basis.term_counts {
            slot_start.push(acc);
            acc += c;
        }
        slot_start.push(acc);
        Ok(Self {
            system,
            basis,
            coeffs,
            method,
            down_coef,
            up_coef,
            slot_start,
        })
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn psi_len(&self) -> usize {
        self.basis.len() * self.dim()
    }

    pub fn state_len(&self) -> usize {
        self.psi_len()
            + match self.method {
                HopsMethod::Linear => 0,
                HopsMethod::Nonlinear => self.basis.m_total(),
            }
    }

    pub fn work(&self) -> RhsWork {
        let d = self.dim();
        let nb = self.basis.num_baths();
        let z = Complex64::default();
        RhsWork {
            h: vec![z; d * d],
            l: vec![vec![z; d * d]; nb],
            ldag: vec![vec![z; d * d]; nb],
            diag: vec![z; d * d],
            l_psi: vec![vec![z; self.psi_len()]; nb],
            ldag_psi: vec![vec![z; self.psi_len()]; nb],
            active: vec![false; nb],
            l_dag_exp: vec![z; nb],
            tmp: vec![z; d],
        }
    }

    /// Noise shift of each bath read from the register block of `y`.
    pub fn shifts(&self, y: &[Complex64]) -> Vec<Complex64> {
        let nb = self.basis.num_baths();
        if self.method == HopsMethod::Linear {
            return vec![Complex64::default(); nb];
        }
        let regs = &y[self.psi_len()..];
        (0..nb)
            .map(|n| {
                regs[self.slot_start[n]..self.slot_start[n + 1]]
                    .iter()
                    .sum()
            })
            .collect()
    }

    /// `dy/dt` at time `t`.
    pub fn rhs(
        &self,
        t: f64,
        y: &[Complex64],
        noise: &[BathNoise],
        work: &mut RhsWork,
        dy: &mut [Complex64],
    ) -> Result<(), PropagationError> {
        let d = self.dim();
        let nb = self.basis.num_baths();
        let m = self.basis.m_total();
        let n_states = self.basis.len();
        let psi = &y[..self.psi_len()];

        self.system.hamiltonian(t, &mut work.h);
        for b in 0..nb {
            self.system.coupling(b, t, &mut work.l[b]);
            work.active[b] = work.l[b].iter().any(|z| *z != Complex64::default());
            adjoint(d, &work.l[b], &mut work.ldag[b]);
        }

        let psi0 = &psi[..d];
        let norm0 = norm_sqr(psi0);
        if self.method == HopsMethod::Nonlinear {
            if !(norm0 > NORM_FLOOR) {
                return Err(PropagationError::NormUnderflow { t, norm: norm0 });
            }
            for b in 0..nb {
                work.l_dag_exp[b] = if work.active[b] {
                    sandwich(d, psi0, &work.ldag[b], psi0) / norm0
                } else {
                    Complex64::default()
                };
            }
        } else {
            work.l_dag_exp.fill(Complex64::default());
        }
        let shifts = self.shifts(y);

        // diagonal generator −iH + Σ_n [L_n η̃*_n − i(L_n ξ*_n + L_n† ξ_n)]
        for (o, h) in work.diag.iter_mut().zip(&work.h) {
            *o = c64(0.0, -1.0) * h;
        }
        for b in 0..nb {
            if !work.active[b] {
                continue;
            }
            let eta_star = noise[b].driving.value(t).conj() + shifts[b];
            let xi = noise[b].thermal.value(t);
            for i in 0..d * d {
                work.diag[i] += work.l[b][i] * eta_star
                    - c64(0.0, 1.0) * (work.l[b][i] * xi.conj() + work.ldag[b][i] * xi);
            }
        }

        for b in 0..nb {
            if !work.active[b] {
                continue;
            }
            let exp = work.l_dag_exp[b];
            for k in 0..n_states {
                let src = &psi[k * d..(k + 1) * d];
                matvec(d, &work.l[b], src, &mut work.l_psi[b][k * d..(k + 1) * d]);
                let dst = &mut work.ldag_psi[b][k * d..(k + 1) * d];
                matvec(d, &work.ldag[b], src, dst);
                for i in 0..d {
                    dst[i] -= exp * src[i];
                }
            }
        }

        for k in 0..n_states {
            let src = &psi[k * d..(k + 1) * d];
            matvec(d, &work.diag, src, &mut work.tmp);
            let damp = self.coeffs.damping[k];
            let out = &mut dy[k * d..(k + 1) * d];
            for i in 0..d {
                out[i] = work.tmp[i] - damp * src[i];
            }
            for b in 0..nb {
                if !work.active[b] {
                    continue;
                }
                for s in self.slot_start[b]..self.slot_start[b + 1] {
                    let dn = self.basis.down_slot(k, s);
                    if dn != NONE {
                        let c = self.down_coef[k * m + s];
                        let v = &work.l_psi[b][dn as usize * d..(dn as usize + 1) * d];
                        for i in 0..d {
                            out[i] += c * v[i];
                        }
                    }
                    let up = self.basis.up_slot(k, s);
                    if up != NONE {
                        let c = self.up_coef[k * m + s];
                        let v = &work.ldag_psi[b][up as usize * d..(up as usize + 1) * d];
                        for i in 0..d {
                            out[i] += c * v[i];
                        }
                    }
                }
            }
        }

        if self.method == HopsMethod::Nonlinear {
            let off = self.psi_len();
            for s in 0..m {
                let b = self.coeffs.bath_of_slot[s];
                dy[off + s] = -self.coeffs.w[s].conj() * y[off + s]
                    + self.coeffs.g[s].conj() * work.l_dag_exp[b];
            }
        }
        Ok(())
    }

    pub fn initial_state(&self, psi0: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::default(); self.state_len()];
        y[..psi0.len()].copy_from_slice(psi0);
        y
    }
}

/// Sampled output of one trajectory.
#[derive(Debug, Clone, Default)]
pub struct TrajectorySamples {
    pub times: Vec<f64>,
    pub dim: usize,
    pub m_total: usize,
    /// `ψ⁰` per time, `D` entries each.
    pub psi0: Vec<Complex64>,
    /// First-level states `ψ^{e_s}` per time, `m_total·D` entries each.
    pub first: Vec<Complex64>,
    /// Second-level states per time in basis order of level 2, when kept.
    pub second: Option<Vec<Complex64>>,
    /// Per time and bath: shifted driving noise `η̃*`, `ξ`, `ξ̇`.
    pub eta_star: Vec<Complex64>,
    pub xi: Vec<Complex64>,
    pub xi_dot: Vec<Complex64>,
    pub stats: SolveStats,
}

impl TrajectorySamples {
    pub fn psi0_at(&self, i: usize) -> &[Complex64] {
        &self.psi0[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first_at(&self, i: usize, slot: usize) -> &[Complex64] {
        let base = (i * self.m_total + slot) * self.dim;
        &self.first[base..base + self.dim]
    }
}

pub struct PropagateOptions {
    pub keep_second_level: bool,
}

/// Integrates one trajectory from the product initial state
/// `(ψ⁰ = psi0, auxiliaries = 0)` and samples it on `sample_times`.
pub fn propagate_trajectory(
    hops: &Hops,
    psi0: &[Complex64],
    noise: &[BathNoise],
    solver: &SolverConfig,
    sample_times: &[f64],
    opts: &PropagateOptions,
) -> Result<TrajectorySamples, PropagationError> {
    let d = hops.dim();
    if psi0.len() != d {
        return Err(PropagationError::Invalid(format!(
            "initial state has {} entries, system dimension {d}",
            psi0.len()
        )));
    }
    if noise.len() != hops.basis.num_baths() {
        return Err(PropagationError::Invalid(
            "one noise pair per bath required".into(),
        ));
    }
    let nb = hops.basis.num_baths();
    let m = hops.basis.m_total();
    let first_ord: Vec<usize> = (0..m)
        .map(|s| hops.basis.up_slot(0, s))
        .map(|u| if u == NONE { usize::MAX } else { u as usize })
        .collect();
    let second_range = if opts.keep_second_level && hops.basis.k_max >= 2 {
        Some(hops.basis.level_range(2))
    } else {
        None
    };

    let n_t = sample_times.len();
    let mut out = TrajectorySamples {
        times: Vec::with_capacity(n_t),
        dim: d,
        m_total: m,
        psi0: Vec::with_capacity(n_t * d),
        first: Vec::with_capacity(n_t * m * d),
        second: second_range
            .as_ref()
            .map(|r| Vec::with_capacity(n_t * r.len() * d)),
        eta_star: Vec::with_capacity(n_t * nb),
        xi: Vec::with_capacity(n_t * nb),
        xi_dot: Vec::with_capacity(n_t * nb),
        stats: SolveStats::default(),
    };

    let mut y = hops.initial_state(psi0);
    let mut work = hops.work();
    let t0 = sample_times.first().copied().unwrap_or(0.0).min(0.0);
    let t_end = sample_times.last().copied().unwrap_or(0.0);

    let rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| hops.rhs(t, y, noise, &mut work, dy);
    let on_sample = |t: f64, y: &[Complex64]| -> Result<(), PropagationError> {
        if let Some(bad) = y
            .iter()
            .position(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(PropagationError::NonFinite {
                t,
                ordinal: bad / d,
            });
        }
        out.times.push(t);
        out.psi0.extend_from_slice(&y[..d]);
        for &o in &first_ord {
            if o == usize::MAX {
                out.first
                    .extend(std::iter::repeat_n(Complex64::default(), d));
            } else {
                out.first.extend_from_slice(&y[o * d..(o + 1) * d]);
            }
        }
        if let (Some(r), Some(sec)) = (&second_range, out.second.as_mut()) {
            sec.extend_from_slice(&y[r.start * d..r.end * d]);
        }
        let shifts = hops.shifts(y);
        for b in 0..nb {
            out.eta_star
                .push(noise[b].driving.value(t).conj() + shifts[b]);
            out.xi.push(noise[b].thermal.value(t));
            let xd = noise[b]
                .thermal
                .derivative(t)
                .ok_or(PropagationError::MissingDerivative { bath: b })?;
            out.xi_dot.push(xd);
        }
        Ok(())
    };
    let stats = ode::integrate(rhs, t0, &mut y, t_end, sample_times, solver, on_sample).map_err(
        |e| match e {
            OdeError::StepUnderflow { t, h } => PropagationError::StepUnderflow { t, h },
            OdeError::TooManySteps { t, steps } => PropagationError::TooManySteps { t, steps },
            OdeError::NonFinite { t } => PropagationError::NonFinite { t, ordinal: 0 },
            OdeError::Callback(e) => e,
        },
    )?;
    out.stats = stats;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{BcfTerm, ExponentialBcf};
    use crate::hierarchy::build_basis;

    fn sx() -> Vec<Complex64> {
        vec![c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)]
    }

    fn sz() -> Vec<Complex64> {
        vec![c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(-1.0, 0.0)]
    }

    fn single_term(g: Complex64, w: Complex64) -> ExponentialBcf {
        ExponentialBcf::new(vec![BcfTerm { g, w }], 0.0).unwrap()
    }

    fn quiet() -> Vec<BathNoise> {
        vec![BathNoise {
            driving: Noise::Zero,
            thermal: Noise::Zero,
        }]
    }

    #[test]
    fn small_hierarchy_matches_hand_assembled_matrix() {
        let (g, w) = (c64(0.8, 0.3), c64(1.2, -0.4));
        let sys = StaticSystem {
            dim: 2,
            h: sz().iter().map(|z| z * 0.5).collect(),
            couplings: vec![sx()],
        };
        let basis = build_basis(&[1], 1).unwrap();
        let coeffs = HopsCoefficients::new(&basis, &[single_term(g, w)]).unwrap();
        let hops = Hops::new(&sys, &basis, &coeffs, HopsMethod::Linear).unwrap();
        let y = vec![
            c64(0.3, 0.1),
            c64(-0.2, 0.5),
            c64(0.7, -0.1),
            c64(0.05, 0.2),
        ];
        let mut dy = vec![Complex64::default(); 4];
        let mut work = hops.work();
        hops.rhs(0.0, &y, &quiet(), &mut work, &mut dy).unwrap();

        // ψ̇⁰ = −iHψ⁰ − i√G L† ψ¹ ; ψ̇¹ = (−iH − W)ψ¹ − i√G L ψ⁰
        let sg = g.sqrt();
        let h = |v: &[Complex64]| [v[0] * 0.5, v[1] * -0.5];
        let x = |v: &[Complex64]| [v[1], v[0]];
        let mi = c64(0.0, -1.0);
        let h0 = h(&y[0..2]);
        let x1 = x(&y[2..4]);
        let h1 = h(&y[2..4]);
        let x0 = x(&y[0..2]);
        let expect = [
            mi * h0[0] + mi * sg * x1[0],
            mi * h0[1] + mi * sg * x1[1],
            mi * h1[0] - w * y[2] + mi * sg * x0[0],
            mi * h1[1] - w * y[3] + mi * sg * x0[1],
        ];
        for (a, b) in dy.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn closed_system_limit_is_unitary_and_auxiliaries_stay_zero() {
        let sys = StaticSystem {
            dim: 2,
            h: sz().iter().map(|z| z * 0.5).collect(),
            couplings: vec![vec![Complex64::default(); 4]],
        };
        let basis = build_basis(&[2], 2).unwrap();
        let bcf = ExponentialBcf::new(
            vec![
                BcfTerm {
                    g: c64(1.0, 0.0),
                    w: c64(1.0, 1.0),
                },
                BcfTerm {
                    g: c64(0.5, 0.0),
                    w: c64(2.0, 0.0),
                },
            ],
            0.0,
        )
        .unwrap();
        let coeffs = HopsCoefficients::new(&basis, &[bcf]).unwrap();
        for method in [HopsMethod::Linear, HopsMethod::Nonlinear] {
            let hops = Hops::new(&sys, &basis, &coeffs, method).unwrap();
            let psi0 = [c64(0.6, 0.0), c64(0.8, 0.0)];
            let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
            let cfg = SolverConfig {
                rtol: 1e-10,
                atol: 1e-12,
                ..Default::default()
            };
            let s = propagate_trajectory(
                &hops,
                &psi0,
                &quiet(),
                &cfg,
                &times,
                &PropagateOptions {
                    keep_second_level: false,
                },
            )
            .unwrap();
            for (i, &t) in times.iter().enumerate() {
                let p = s.psi0_at(i);
                assert!((p[0] - psi0[0] * c64(0.0, -0.5 * t).exp()).norm() < 1e-8);
                assert!((p[1] - psi0[1] * c64(0.0, 0.5 * t).exp()).norm() < 1e-8);
                assert!(s.first_at(i, 0).iter().all(|z| *z == Complex64::default()));
            }
        }
    }

    #[test]
    fn auxiliary_damping_rate() {
        let sys = StaticSystem {
            dim: 2,
            h: vec![Complex64::default(); 4],
            couplings: vec![vec![Complex64::default(); 4]],
        };
        let basis = build_basis(&[1], 2).unwrap();
        let w = c64(0.7, 0.3);
        let coeffs = HopsCoefficients::new(&basis, &[single_term(c64(1.0, 0.0), w)]).unwrap();
        let hops = Hops::new(&sys, &basis, &coeffs, HopsMethod::Linear).unwrap();
        let mut y = vec![Complex64::default(); 6];
        y[4] = c64(1.0, 0.0);
        let mut dy = vec![Complex64::default(); 6];
        hops.rhs(0.0, &y, &quiet(), &mut hops.work(), &mut dy)
            .unwrap();
        // d|ψ|/dt = −2 Re W |ψ| at level 2
        assert!((dy[4].re + 2.0 * w.re).abs() < 1e-14);
    }

    #[test]
    fn nonlinear_equals_linear_when_expectation_vanishes() {
        let sys = StaticSystem {
            dim: 2,
            h: sz().iter().map(|z| z * 0.5).collect(),
            couplings: vec![sx().iter().map(|z| z * 0.5).collect()],
        };
        let basis = build_basis(&[1], 2).unwrap();
        let coeffs =
            HopsCoefficients::new(&basis, &[single_term(c64(0.4, 0.1), c64(1.0, 0.5))]).unwrap();
        let lin = Hops::new(&sys, &basis, &coeffs, HopsMethod::Linear).unwrap();
        let non = Hops::new(&sys, &basis, &coeffs, HopsMethod::Nonlinear).unwrap();
        let mut y = non.initial_state(&[c64(0.0, 0.0), c64(1.0, 0.0)]);
        y[2] = c64(0.1, 0.2);
        y[5] = c64(-0.3, 0.05);
        let mut a = vec![Complex64::default(); lin.state_len()];
        let mut b = vec![Complex64::default(); non.state_len()];
        lin.rhs(
            0.3,
            &y[..lin.state_len()],
            &quiet(),
            &mut lin.work(),
            &mut a,
        )
        .unwrap();
        non.rhs(0.3, &y, &quiet(), &mut non.work(), &mut b).unwrap();
        for i in 0..lin.state_len() {
            assert!((a[i] - b[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn nonlinear_rejects_vanishing_norm() {
        let sys = StaticSystem {
            dim: 2,
            h: sz(),
            couplings: vec![sx()],
        };
        let basis = build_basis(&[1], 1).unwrap();
        let coeffs =
            HopsCoefficients::new(&basis, &[single_term(c64(1.0, 0.0), c64(1.0, 0.0))]).unwrap();
        let hops = Hops::new(&sys, &basis, &coeffs, HopsMethod::Nonlinear).unwrap();
        let y = vec![Complex64::default(); hops.state_len()];
        let mut dy = y.clone();
        assert!(matches!(
            hops.rhs(0.0, &y, &quiet(), &mut hops.work(), &mut dy),
            Err(PropagationError::NormUnderflow { .. })
        ));
    }

    #[test]
    fn shift_registers_follow_constant_expectation() {
        // L = σ_x/2 frozen expectation: ψ⁰ ∝ |+⟩ is an eigenstate of L with H = 0
        let sys = StaticSystem {
            dim: 2,
            h: vec![Complex64::default(); 4],
            couplings: vec![sx().iter().map(|z| z * 0.5).collect()],
        };
        let basis = build_basis(&[1], 1).unwrap();
        let (g, w) = (c64(0.3, 0.2), c64(0.9, 0.4));
        let coeffs = HopsCoefficients::new(&basis, &[single_term(g, w)]).unwrap();
        let hops = Hops::new(&sys, &basis, &coeffs, HopsMethod::Nonlinear).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let y = hops.initial_state(&[c64(s, 0.0), c64(s, 0.0)]);
        let mut dy = vec![Complex64::default(); hops.state_len()];
        hops.rhs(0.0, &y, &quiet(), &mut hops.work(), &mut dy)
            .unwrap();
        let reg = dy[hops.psi_len()];
        assert!((reg - g.conj() * 0.5).norm() < 1e-15);
    }
}
