//! Per-trajectory estimators of the reduced state and of energetic
//! quantities. Ensemble means of these series are the physical values.
//!
//! For the nonlinear method every quadratic form is divided by `⟨ψ⁰|ψ⁰⟩`.

use crate::hierarchy::{HierarchyBasis, HopsCoefficients};
use crate::propagator::{norm_sqr, sandwich, HopsMethod, SystemModel, TrajectorySamples};
use crate::Complex64;
use thiserror::Error;

mod series;

pub use series::{
    trajectory_series, window_vector, ChannelLayout, EnergySeries, EnsembleAccumulator,
    TrajectorySeries, WindowStats,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("sample grid has {got} points, expected {expected}")]
    GridMismatch { got: usize, expected: usize },
    #[error("bath observable of order ({a}, {b}) unsupported; at most 2 each")]
    UnsupportedOrder { a: usize, b: usize },
    #[error("hierarchy level {0} not retained in samples")]
    MissingLevel(usize),
    #[error("bath index {0} out of range")]
    NoSuchBath(usize),
}

fn weight(samples: &TrajectorySamples, i: usize, method: HopsMethod) -> f64 {
    match method {
        HopsMethod::Linear => 1.0,
        HopsMethod::Nonlinear => 1.0 / norm_sqr(samples.psi0_at(i)),
    }
}

fn slots_of(coeffs: &HopsCoefficients, bath: usize) -> impl Iterator<Item = usize> + '_ {
    coeffs
        .bath_of_slot
        .iter()
        .enumerate()
        .filter(move |(_, &b)| b == bath)
        .map(|(s, _)| s)
}

/// Reduced density matrix estimate `|ψ⁰⟩⟨ψ⁰|·w`, row-major.
pub fn reduced_density(
    samples: &TrajectorySamples,
    i: usize,
    method: HopsMethod,
) -> Vec<Complex64> {
    let d = samples.dim;
    let p = samples.psi0_at(i);
    let w = weight(samples, i, method);
    let mut rho = vec![Complex64::default(); d * d];
    for a in 0..d {
        for b in 0..d {
            rho[a * d + b] = p[a] * p[b].conj() * w;
        }
    }
    rho
}

/// `⟨A ⊗ B_n⟩ + c.c.` for a system operator `A` at sample `i`, with
/// `B_n ψ ≅ Σ_μ √G_μ ψ^{e_μ} + ξ_n ψ⁰`. With `A = L_n(t)` this is the
/// interaction energy, with `A = dL_n/dt` the interaction power (up to sign).
pub fn interaction_form(
    samples: &TrajectorySamples,
    coeffs: &HopsCoefficients,
    bath: usize,
    i: usize,
    op: &[Complex64],
    method: HopsMethod,
) -> f64 {
    let d = samples.dim;
    let mut adj = vec![Complex64::default(); d * d];
    for a in 0..d {
        for b in 0..d {
            adj[b * d + a] = op[a * d + b].conj();
        }
    }
    let p0 = samples.psi0_at(i);
    let mut acc = Complex64::default();
    for s in slots_of(coeffs, bath) {
        acc += coeffs.sqrt_g[s] * sandwich(d, p0, &adj, samples.first_at(i, s));
    }
    let nb = samples.eta_star.len() / samples.times.len().max(1);
    acc += samples.xi[i * nb + bath] * sandwich(d, p0, &adj, p0);
    2.0 * acc.re * weight(samples, i, method)
}

/// Energy flow out of bath `bath`: `⟨L† ∂_t B⟩ + c.c.`, with
/// `∂_t B ψ ≅ −Σ_μ √G_μ W_μ ψ^{e_μ} + ξ̇ ψ⁰`.
pub fn bath_energy_flow(
    samples: &TrajectorySamples,
    coeffs: &HopsCoefficients,
    system: &dyn SystemModel,
    bath: usize,
    i: usize,
    method: HopsMethod,
) -> f64 {
    let d = samples.dim;
    let mut l = vec![Complex64::default(); d * d];
    system.coupling(bath, samples.times[i], &mut l);
    let mut ldag = vec![Complex64::default(); d * d];
    for a in 0..d {
        for b in 0..d {
            ldag[b * d + a] = l[a * d + b].conj();
        }
    }
    let p0 = samples.psi0_at(i);
    let mut acc = Complex64::default();
    for s in slots_of(coeffs, bath) {
        acc -= coeffs.sqrt_g[s] * coeffs.w[s] * sandwich(d, p0, &ldag, samples.first_at(i, s));
    }
    let nb = samples.eta_star.len() / samples.times.len().max(1);
    acc += samples.xi_dot[i * nb + bath] * sandwich(d, p0, &ldag, p0);
    2.0 * acc.re * weight(samples, i, method)
}

pub fn interaction_energy(
    samples: &TrajectorySamples,
    coeffs: &HopsCoefficients,
    system: &dyn SystemModel,
    bath: usize,
    i: usize,
    method: HopsMethod,
) -> f64 {
    let d = samples.dim;
    let mut l = vec![Complex64::default(); d * d];
    system.coupling(bath, samples.times[i], &mut l);
    interaction_form(samples, coeffs, bath, i, &l, method)
}

/// Power split at sample `i`: `(P, P_S, [P_I^{(n)}])`, positive for output.
pub fn total_power(
    samples: &TrajectorySamples,
    coeffs: &HopsCoefficients,
    system: &dyn SystemModel,
    i: usize,
    method: HopsMethod,
) -> (f64, f64, Vec<f64>) {
    let d = samples.dim;
    let t = samples.times[i];
    let mut hd = vec![Complex64::default(); d * d];
    system.hamiltonian_rate(t, &mut hd);
    let p0 = samples.psi0_at(i);
    let p_s = -sandwich(d, p0, &hd, p0).re * weight(samples, i, method);
    let mut ld = vec![Complex64::default(); d * d];
    let p_i: Vec<f64> = (0..system.num_baths())
        .map(|n| {
            system.coupling_rate(n, t, &mut ld);
            if ld.iter().all(|z| *z == Complex64::default()) {
                0.0
            } else {
                -interaction_form(samples, coeffs, n, i, &ld, method)
            }
        })
        .collect();
    (p_s + p_i.iter().sum::<f64>(), p_s, p_i)
}

/// One term of a collective bath observable `F ⊗ (B_n†)^a (B_n)^b`.
#[derive(Debug, Clone)]
pub struct CollectiveTerm {
    pub op: Vec<Complex64>,
    pub a: usize,
    pub b: usize,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `(−iD)^m ψ` of bath `bath` at sample `i`: weighted sum over the level-`m`
/// states restricted to that bath, `m ≤ 2`.
fn lowered(
    samples: &TrajectorySamples,
    basis: &HierarchyBasis,
    coeffs: &HopsCoefficients,
    bath: usize,
    i: usize,
    m: usize,
) -> Result<Vec<Complex64>, ObservableError> {
    let d = samples.dim;
    let slots: Vec<usize> = slots_of(coeffs, bath).collect();
    let mut out = vec![Complex64::default(); d];
    match m {
        0 => out.copy_from_slice(samples.psi0_at(i)),
        1 => {
            for &s in &slots {
                let v = samples.first_at(i, s);
                for j in 0..d {
                    out[j] += coeffs.sqrt_g[s] * v[j];
                }
            }
        }
        2 => {
            let sec = samples
                .second
                .as_ref()
                .ok_or(ObservableError::MissingLevel(2))?;
            let range = basis.level_range(2);
            let per_t = range.len() * d;
            for (pos, ord) in range.clone().enumerate() {
                let k = basis.index(ord);
                if k.iter()
                    .enumerate()
                    .any(|(s, &x)| x > 0 && coeffs.bath_of_slot[s] != bath)
                {
                    continue;
                }
                // multinomial·√(G^k k!)
                let mut kfact = 1.0;
                let mut gk = Complex64::new(1.0, 0.0);
                for (s, &x) in k.iter().enumerate() {
                    if x > 0 {
                        kfact *= factorial(x as usize);
                        gk *= coeffs.sqrt_g[s].powu(x as u32);
                    }
                }
                let coef = gk * (factorial(2) / kfact) * kfact.sqrt();
                let v = &sec[i * per_t + pos * d..i * per_t + (pos + 1) * d];
                for j in 0..d {
                    out[j] += coef * v[j];
                }
            }
        }
        _ => return Err(ObservableError::UnsupportedOrder { a: m, b: m }),
    }
    Ok(out)
}

fn binom(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Per-trajectory value of `Σ_α ⟨F_α ⊗ (B†)^a B^b⟩` for one bath, thermal
/// shift included via `B → B + ξ`.
pub fn collective_observable(
    samples: &TrajectorySamples,
    basis: &HierarchyBasis,
    coeffs: &HopsCoefficients,
    bath: usize,
    i: usize,
    terms: &[CollectiveTerm],
    method: HopsMethod,
) -> Result<Complex64, ObservableError> {
    let d = samples.dim;
    if bath >= basis.num_baths() {
        return Err(ObservableError::NoSuchBath(bath));
    }
    let nb = basis.num_baths();
    let xi = samples.xi[i * nb + bath];
    let mut levels: Vec<Option<Vec<Complex64>>> = vec![None, None, None];
    let mut total = Complex64::default();
    for term in terms {
        if term.a > 2 || term.b > 2 {
            return Err(ObservableError::UnsupportedOrder {
                a: term.a,
                b: term.b,
            });
        }
        for l in 0..=term.a {
            for m in 0..=term.b {
                for lvl in [l, m] {
                    if levels[lvl].is_none() {
                        levels[lvl] = Some(lowered(samples, basis, coeffs, bath, i, lvl)?);
                    }
                }
                let bra = levels[l].as_ref().expect("level computed");
                let ket = levels[m].as_ref().expect("level computed");
                let c = binom(term.a, l) * binom(term.b, m);
                let th = xi.conj().powu((term.a - l) as u32) * xi.powu((term.b - m) as u32);
                total += sandwich(d, bra, &term.op, ket) * th * c;
            }
        }
    }
    Ok(total * weight(samples, i, method))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{BcfTerm, ExponentialBcf};
    use crate::c64;
    use crate::hierarchy::build_basis;
    use crate::propagator::StaticSystem;

    fn toy_samples() -> (TrajectorySamples, HopsCoefficients, StaticSystem) {
        let basis = build_basis(&[2], 2).unwrap();
        let bcf = ExponentialBcf::new(
            vec![
                BcfTerm {
                    g: c64(0.5, 0.1),
                    w: c64(1.0, 0.3),
                },
                BcfTerm {
                    g: c64(0.2, -0.3),
                    w: c64(2.0, -0.5),
                },
            ],
            0.0,
        )
        .unwrap();
        let coeffs = HopsCoefficients::new(&basis, &[bcf]).unwrap();
        let sys = StaticSystem {
            dim: 2,
            h: vec![c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)],
            couplings: vec![vec![
                c64(0.0, 0.0),
                c64(0.5, 0.0),
                c64(0.5, 0.0),
                c64(0.0, 0.0),
            ]],
        };
        let samples = TrajectorySamples {
            times: vec![0.0],
            dim: 2,
            m_total: 2,
            psi0: vec![c64(0.6, 0.1), c64(0.3, -0.7)],
            first: vec![c64(0.1, 0.2), c64(-0.3, 0.05), c64(0.2, 0.0), c64(0.4, 0.1)],
            second: Some(vec![c64(0.01, 0.02); 6]),
            eta_star: vec![c64(0.0, 0.0)],
            xi: vec![c64(0.3, -0.2)],
            xi_dot: vec![c64(-0.1, 0.4)],
            stats: Default::default(),
        };
        (samples, coeffs, sys)
    }

    #[test]
    fn collective_first_order_reproduces_interaction_energy() {
        let (s, coeffs, sys) = toy_samples();
        let basis = build_basis(&[2], 2).unwrap();
        let l = sys.couplings[0].clone();
        let hi = interaction_energy(&s, &coeffs, &sys, 0, 0, HopsMethod::Nonlinear);
        let terms = [
            CollectiveTerm {
                op: l.clone(),
                a: 0,
                b: 1,
            },
            CollectiveTerm { op: l, a: 1, b: 0 },
        ];
        let v = collective_observable(&s, &basis, &coeffs, 0, 0, &terms, HopsMethod::Nonlinear)
            .unwrap();
        assert!((v.re - hi).abs() < 1e-14);
        assert!(v.im.abs() < 1e-14);
    }

    #[test]
    fn zeroth_order_is_plain_expectation() {
        let (s, coeffs, sys) = toy_samples();
        let basis = build_basis(&[2], 2).unwrap();
        let v = collective_observable(
            &s,
            &basis,
            &coeffs,
            0,
            0,
            &[CollectiveTerm {
                op: sys.h.clone(),
                a: 0,
                b: 0,
            }],
            HopsMethod::Nonlinear,
        )
        .unwrap();
        let rho = reduced_density(&s, 0, HopsMethod::Nonlinear);
        assert!((v - rho[0]).norm() < 1e-14);
        assert!(matches!(
            collective_observable(
                &s,
                &basis,
                &coeffs,
                0,
                0,
                &[CollectiveTerm {
                    op: sys.h.clone(),
                    a: 3,
                    b: 0
                }],
                HopsMethod::Linear
            ),
            Err(ObservableError::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn static_system_has_no_power_and_density_is_projector() {
        let (s, coeffs, sys) = toy_samples();
        let (p, ps, pi) = total_power(&s, &coeffs, &sys, 0, HopsMethod::Nonlinear);
        assert_eq!((p, ps, pi[0]), (0.0, 0.0, 0.0));
        let rho = reduced_density(&s, 0, HopsMethod::Nonlinear);
        assert!(((rho[0] + rho[3]).re - 1.0).abs() < 1e-14);
        assert!((rho[1] - rho[2].conj()).norm() < 1e-15);
    }

    #[test]
    fn flow_is_interaction_form_with_time_derivative_of_bath_operator() {
        let (mut s, coeffs, sys) = toy_samples();
        // swap ψ^e → −W ψ^e and ξ → ξ̇ to turn the interaction form into the flow
        for sl in 0..2 {
            for j in 0..2 {
                s.first[sl * 2 + j] *= -coeffs.w[sl];
            }
        }
        let flow_expected = {
            let mut s2 = s.clone();
            s2.xi = s.xi_dot.clone();
            interaction_energy(&s2, &coeffs, &sys, 0, 0, HopsMethod::Nonlinear)
        };
        let (orig, _, _) = toy_samples();
        let j = bath_energy_flow(&orig, &coeffs, &sys, 0, 0, HopsMethod::Nonlinear);
        assert!((j - flow_expected).abs() < 1e-14);
    }
}
