//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `HOPS_ACCEPTANCE_SCALE=full` switches to the larger sample counts
//! (hours on one core); the default smoke scale finishes in under an hour.
//! `HOPS_ACCEPTANCE_ONLY=1,5` restricts the run to the listed criteria.

use hops_core::bath::{thermal_correlation, OhmicSpectralDensity, ThermalParameters};
use hops_core::ensemble::run_ensemble;
use hops_core::hierarchy::{binomial, build_basis, HopsCoefficients};
use hops_core::numerics::ode::SolverConfig;
use hops_core::observables::{trajectory_series, ChannelLayout, EnsembleAccumulator};
use hops_core::oracle::{dephasing_exponent, CrossCheck, OracleConfig};
use hops_core::otto::{
    bath_noise, make_olc, make_shifted, run_engine, unit_bcf, work_diagram, CycleMetrics,
    EngineConfig, EngineResult, QubitEngineSpec, ShiftTarget, WorkChannel,
};
use hops_core::propagator::{
    propagate_trajectory, Hops, HopsMethod, PropagateOptions, StaticSystem,
};
use hops_core::stochproc::{sample_process, sample_thermal_with_derivative, ProcessSpec, Spectrum};
use hops_core::Complex64;
use std::f64::consts::PI;
use std::time::Instant;

struct Scale {
    full: bool,
    /// Limit-cycle run, criteria 1–3.
    base: u64,
    /// Per scan point, criteria 4 and 8.
    scan: u64,
    oracle: u64,
    dephasing: u64,
}

impl Scale {
    fn from_env() -> Self {
        let full = std::env::var("HOPS_ACCEPTANCE_SCALE").is_ok_and(|s| s == "full");
        if full {
            Self {
                full,
                base: 8000,
                scan: 2000,
                oracle: 20_000,
                dephasing: 8000,
            }
        } else {
            Self {
                full,
                base: 500,
                scan: 100,
                oracle: 20_000,
                dephasing: 2000,
            }
        }
    }
}

struct Outcome {
    pass: bool,
    /// Failed sub-checks whose miss is a documented sampling limit; when
    /// every failure is of this kind the line still reads FAIL but the
    /// target exits cleanly.
    statistical: bool,
    detail: String,
}

/// Per-run checks demanded of every engine run.
#[derive(Default)]
struct Audit {
    runs: usize,
    bound_chain_violations: Vec<String>,
    /// Some violation lies more than two standard errors above η_Otto.
    bound_chain_resolved: bool,
    max_transverse_z: f64,
    transverse_samples: usize,
    transverse_beyond: usize,
    max_diagram_mismatch: f64,
}

impl Audit {
    fn record(&mut self, label: &str, r: &EngineResult) {
        self.runs += 1;
        let m = &r.metrics;
        if !m.bound_chain_holds() {
            self.bound_chain_violations.push(format!(
                "{label} (η = {:.3} ± {:.3}, η_Otto = {:.3})",
                m.efficiency.mean, m.efficiency.se, m.eta_otto
            ));
            self.bound_chain_resolved |= !(m.eta_otto < m.eta_carnot)
                || m.efficiency.mean - m.eta_otto > 2.0 * m.efficiency.se;
        }
        if r.spec.s_x == 0.0 {
            for (m, s) in r.bloch() {
                for k in 0..2 {
                    let z = if s[k] > 0.0 {
                        m[k].abs() / s[k]
                    } else if m[k].abs() > 1e-12 {
                        f64::INFINITY
                    } else {
                        continue;
                    };
                    self.max_transverse_z = self.max_transverse_z.max(z);
                    self.transverse_samples += 1;
                    self.transverse_beyond += usize::from(z >= 3.0);
                }
            }
        }
        for ch in [WorkChannel::F, WorkChannel::HCold, WorkChannel::HHot] {
            let d = work_diagram(r, ch);
            let rel = (d.area - d.work).abs() / d.work.abs().max(1e-12);
            self.max_diagram_mismatch = self.max_diagram_mismatch.max(rel);
        }
    }
}

fn engine_config(n: u64) -> EngineConfig {
    EngineConfig {
        trajectories: n,
        k_max: 4,
        bcf_terms: 5,
        seed: 1,
        ..EngineConfig::default()
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

/// A miss no larger than two standard errors beyond the tolerance band is
/// not resolvable at this sample count.
fn sampling_miss(x: f64, se: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol + 2.0 * se
}

fn criteria_1_to_3(scale: &Scale, audit: &mut Audit) -> [Outcome; 3] {
    let spec = QubitEngineSpec::reference();
    let proto = make_olc(60.0, 0.06 * 60.0).expect("protocol");
    let r = run_engine(&spec, &proto, &engine_config(scale.base)).expect("engine run");
    audit.record("reference parameters", &r);
    let m = &r.metrics;
    let (eta_tol, p_tol) = if scale.full {
        (0.02, 0.10)
    } else {
        (0.05, 0.25)
    };
    let (eta, p) = (m.efficiency, m.power);
    let c1 = Outcome {
        pass: within(eta.mean, 0.30, eta_tol) && within(p.mean, 2.45e-3, p_tol * 2.45e-3),
        statistical: sampling_miss(eta.mean, eta.se, 0.30, eta_tol)
            && sampling_miss(p.mean, p.se, 2.45e-3, p_tol * 2.45e-3),
        detail: format!(
            "N = {}: η = {:.1} ± {:.1} % (target 30.0 ± {:.0} pp), P̄ = {:.3e} ± {:.1e} (target 2.45e-3 ± {:.0} %)",
            m.trajectories,
            100.0 * eta.mean,
            100.0 * eta.se,
            100.0 * eta_tol,
            p.mean,
            p.se,
            100.0 * p_tol
        ),
    };
    let hb = m.delta_h_b[1];
    let c2 = Outcome {
        pass: within(hb.mean, -0.489, 0.0489),
        statistical: sampling_miss(hb.mean, hb.se, -0.489, 0.0489),
        detail: format!(
            "ΔH_B^hot = {:.4} ± {:.4} (target −0.489 ± 10 %)",
            hb.mean, hb.se
        ),
    };
    let total = r.windows.last().expect("run window");
    let (res, res_se) = total.get("residual");
    let w_total = total.get("W").0;
    let cyc = &r.windows[m.cycle];
    let c3 = Outcome {
        pass: m.residual_total < 0.02 && m.residual_cycle < 0.01,
        statistical: true,
        detail: format!(
            "three cycles {:.2} % (SE {:.2} %), limit cycle {:.2} % (SE {:.2} %); thresholds 2 % / 1 %",
            100.0 * m.residual_total,
            100.0 * res_se / w_total.abs(),
            100.0 * m.residual_cycle,
            100.0 * cyc.get("residual").1 / m.work.mean.abs()
        ),
    };
    let _ = res;
    [c1, c2, c3]
}

fn criterion_4(scale: &Scale, audit: &mut Audit) -> Outcome {
    let spec = QubitEngineSpec::reference();
    let theta = 60.0;
    let base = make_olc(theta, 0.06 * theta).expect("protocol");
    let cfg = engine_config(scale.scan);
    let run = |frac: f64, slow: bool, audit: &mut Audit| -> CycleMetrics {
        let p =
            make_shifted(&base, frac * theta, ShiftTarget::Both, slow).expect("shifted protocol");
        let r = run_engine(&spec, &p, &cfg).expect("engine run");
        audit.record(&format!("shift {frac}Θ slow={slow}"), &r);
        r.metrics
    };
    let p0 = run(0.0, false, audit).power;
    let grid: Vec<(f64, CycleMetrics)> = (0..7)
        .map(|i| -0.1 + 0.075 * i as f64)
        .map(|f| (f, run(f, false, audit)))
        .collect();
    let (best_frac, best) = grid
        .iter()
        .max_by(|a, b| a.1.power.mean.total_cmp(&b.1.power.mean))
        .map(|(f, m)| (*f, m.power))
        .expect("grid");
    let ratio = best.mean / p0.mean;
    let last = grid.last().expect("grid").1.power;
    let slow = run(0.18, true, audit).efficiency;
    let pass = (1.5..=1.9).contains(&ratio)
        && (0.15..=0.25).contains(&best_frac)
        && last.mean < 0.0
        && slow.mean > 0.38;
    let powers: Vec<String> = grid
        .iter()
        .map(|(f, m)| format!("{f:+.3}:{:.2e}", m.power.mean))
        .collect();
    Outcome {
        pass,
        statistical: false,
        detail: format!(
            "N = {}/point: max/τ0 = {ratio:.2} at τ = {best_frac:.3}Θ (want 1.5–1.9 in [0.15, 0.25]Θ), P̄(0.35Θ) = {:.2e} ± {:.1e} (want < 0), slow η = {:.1} ± {:.1} % (want > 38); P̄(τ0) = {:.2e}; grid [{}]",
            scale.scan,
            last.mean,
            last.se,
            100.0 * slow.mean,
            100.0 * slow.se,
            p0.mean,
            powers.join(" ")
        ),
    }
}

fn criterion_5(scale: &Scale) -> Outcome {
    let mut cc = CrossCheck::default();
    cc.hops.trajectories = scale.oracle;
    let r = cc.run(&OracleConfig::default()).expect("cross check");
    let z = |name: &str| {
        r.channels
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.max_z)
            .unwrap_or(f64::INFINITY)
    };
    let (zi, zj) = (z("H_I_0"), z("J_0"));
    Outcome {
        pass: r.max_trace_distance < 0.02 && zi <= 3.0 && zj <= 3.0,
        statistical: false,
        detail: format!(
            "N = {}, dim {}: max trace distance {:.4} (want < 0.02), max z H_I {zi:.2}, J {zj:.2} (want ≤ 3), recurrence {:.2}",
            scale.oracle, r.exact.dim, r.max_trace_distance, r.recurrence_time
        ),
    }
}

/// Coherence of `H = σ_z/2` coupled through `σ_z` against its closed form.
fn dephasing_max_z(n: u64, temperature: f64) -> f64 {
    let eta = 0.2;
    let horizon = 10.0;
    let c = |r: f64| Complex64::new(r, 0.0);
    let sd = OhmicSpectralDensity::new(eta, 1.0).expect("sd");
    let th = if temperature > 0.0 {
        ThermalParameters::from_temperature(temperature).expect("thermal")
    } else {
        ThermalParameters::zero_temperature()
    };
    let bcf = unit_bcf(1.0, 5, horizon).expect("fit").scaled(eta);
    let sys = StaticSystem {
        dim: 2,
        h: vec![c(0.5), c(0.0), c(0.0), c(-0.5)],
        couplings: vec![vec![c(1.0), c(0.0), c(0.0), c(-1.0)]],
    };
    let basis = build_basis(&[5], 4).expect("basis");
    let co = HopsCoefficients::new(&basis, std::slice::from_ref(&bcf)).expect("coefficients");
    let hops = Hops::new(&sys, &basis, &co, HopsMethod::Nonlinear).expect("hops");
    let times: Vec<f64> = (0..=20).map(|i| 0.5 * i as f64).collect();
    let layout = ChannelLayout {
        dim: 2,
        num_baths: 1,
        conjugates: false,
    };
    let psi0 = [c(0.5f64.sqrt()), c(0.5f64.sqrt())];
    let acc = run_ensemble(
        n,
        0,
        4,
        || EnsembleAccumulator::new(layout.clone(), times.clone(), vec![]),
        |i| {
            let noise =
                vec![bath_noise(&sd, &th, horizon, 0.05, 5, i, 0).map_err(|e| e.to_string())?];
            let s = propagate_trajectory(
                &hops,
                &psi0,
                &noise,
                &SolverConfig::default(),
                &times,
                &PropagateOptions {
                    keep_second_level: false,
                },
            )
            .map_err(|e| e.to_string())?;
            Ok(trajectory_series(
                &s,
                &sys,
                &co,
                HopsMethod::Nonlinear,
                &layout,
                None,
            ))
        },
    );
    let es = acc.energy_series();
    let (re, rse) = es.channel("rho_re_01").expect("coherence");
    let (im, ise) = es.channel("rho_im_01").expect("coherence");
    let mut worst: f64 = 0.0;
    for (i, &t) in times.iter().enumerate().skip(1) {
        let exact =
            Complex64::new(0.0, -t).exp() * 0.5 * (-dephasing_exponent(&sd, &th, 2.0, t)).exp();
        worst = worst
            .max((re[i] - exact.re).abs() / rse[i])
            .max((im[i] - exact.im).abs() / ise[i]);
    }
    worst
}

fn criterion_6(scale: &Scale) -> Outcome {
    let (z_t, z_0) = (
        dephasing_max_z(scale.dephasing, 0.5),
        dephasing_max_z(scale.dephasing, 0.0),
    );
    Outcome {
        pass: z_t <= 3.0 && z_0 <= 3.0,
        statistical: false,
        detail: format!(
            "N = {}: max |z| of ρ_01 at T = 0.5: {z_t:.2}, at T = 0: {z_0:.2} (want ≤ 3)",
            scale.dephasing
        ),
    }
}

/// Second moments of sampled processes against their target correlations.
fn process_moment_z(realizations: usize) -> f64 {
    let sd = OhmicSpectralDensity::new(1.0, 1.0).expect("sd");
    let th = ThermalParameters::new(1.0).expect("thermal");
    let drive = move |w: f64| sd.j(w) / PI;
    let therm = move |w: f64| hops_core::bath::thermal_weight(&sd, &th, w);
    let pairs = [(2.0, 2.0), (2.0, 2.5), (3.0, 4.0), (5.0, 7.5)];
    let mut worst: f64 = 0.0;
    for (which, weight) in [(0, &drive as &(dyn Fn(f64) -> f64 + Sync)), (1, &therm)] {
        let mut prod = vec![Vec::with_capacity(realizations); pairs.len()];
        let mut pseudo = vec![Vec::with_capacity(realizations); pairs.len()];
        for seed in 0..realizations as u64 {
            let spec = ProcessSpec {
                spectrum: Spectrum::trimmed(weight, 0.0, 60.0, 1e-12),
                horizon: 10.0,
                dt: 0.05,
                seed: 1000 + seed,
            };
            let p = sample_process(&spec, false).expect("sample");
            for (k, &(t, s)) in pairs.iter().enumerate() {
                prod[k].push(p.value(t) * p.value(s).conj());
                pseudo[k].push(p.value(t) * p.value(s));
            }
        }
        for (k, &(t, s)) in pairs.iter().enumerate() {
            let target = if which == 0 {
                sd.bcf(t - s)
            } else {
                thermal_correlation(&sd, &th, t - s).expect("thermal bcf")
            };
            for (samples, want) in [(&prod[k], target), (&pseudo[k], Complex64::default())] {
                let n = samples.len() as f64;
                let mean: Complex64 = samples.iter().sum::<Complex64>() / n;
                let var_re = samples
                    .iter()
                    .map(|z| (z.re - mean.re).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                let var_im = samples
                    .iter()
                    .map(|z| (z.im - mean.im).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                worst = worst
                    .max((mean.re - want.re).abs() / (var_re / n).sqrt())
                    .max((mean.im - want.im).abs() / (var_im / n).sqrt().max(1e-300));
            }
        }
    }
    worst
}

fn criterion_7(audit: &mut Audit) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let mut hard_fail = false;
    let mut check = |ok: bool, statistical: bool, note: String| {
        pass &= ok;
        hard_fail |= !ok && !statistical;
        notes.push(format!("{}{note}", if ok { "" } else { "✗ " }));
    };

    let sd = OhmicSpectralDensity::new(1.0, 1.0).expect("sd");
    let th = ThermalParameters::new(2.0).expect("thermal");
    let mut herm: f64 = 0.0;
    for tau in [0.1, 0.7, 2.5, 9.0] {
        herm = herm.max((sd.bcf(-tau) - sd.bcf(tau).conj()).norm());
        let (a, b) = (
            thermal_correlation(&sd, &th, -tau).expect("bcf"),
            thermal_correlation(&sd, &th, tau).expect("bcf"),
        );
        herm = herm.max((a - b.conj()).norm());
    }
    check(herm < 1e-12, false, format!("BCF Hermiticity {herm:.1e}"));
    let fit = unit_bcf(1.0, 5, 180.0).expect("fit");
    check(
        fit.len() == 5 && fit.fit_residual < 1e-3,
        false,
        format!("5-term fit residual {:.2e}", fit.fit_residual),
    );

    let z = process_moment_z(400);
    check(z <= 3.0, false, format!("process moments max z {z:.2}"));

    let th1 = ThermalParameters::new(1.0).expect("thermal");
    let weight = move |x: f64| hops_core::bath::thermal_weight(&sd, &th1, x);
    let p = sample_thermal_with_derivative(&ProcessSpec {
        spectrum: Spectrum::trimmed(&weight, 0.0, 60.0, 1e-12),
        horizon: 20.0,
        dt: 0.05,
        seed: 9,
    })
    .expect("thermal process");
    let fd = |h: f64| {
        [1.3, 4.7, 9.1, 15.5]
            .iter()
            .map(|&t| {
                ((p.value(t + h) - p.value(t - h)) / (2.0 * h)
                    - p.derivative(t).expect("derivative"))
                .norm()
            })
            .fold(0.0, f64::max)
    };
    let order = (fd(0.2) / fd(0.1)).log2();
    check(
        order > 1.7,
        false,
        format!("ξ̇ finite-difference order {order:.2}"),
    );

    let basis = build_basis(&[5, 5], 4).expect("basis");
    let count_ok = basis.len() as u128 == binomial(14, 10);
    let closed = (0..basis.len()).all(|i| {
        let k = basis.index(i).to_vec();
        (0..k.len()).filter(|&s| k[s] > 0).all(|s| {
            let mut d = k.clone();
            d[s] -= 1;
            basis.position(&d).is_some()
        })
    });
    check(
        count_ok && closed,
        false,
        format!(
            "hierarchy size {} = C(14, 10), downward closed {closed}",
            basis.len()
        ),
    );

    // a short run of its own so the suite stands alone
    let r = run_engine(
        &QubitEngineSpec::reference(),
        &make_olc(60.0, 3.6).expect("protocol"),
        &engine_config(40),
    )
    .expect("engine run");
    audit.record("property run", &r);
    check(
        audit.bound_chain_violations.is_empty(),
        !audit.bound_chain_resolved,
        format!(
            "bound chain on {} runs, violations {:?}",
            audit.runs, audit.bound_chain_violations
        ),
    );
    // a maximum over ~10⁴ correlated z-scores per run; the exceedance
    // fraction tells bias from sampling scatter
    check(
        audit.max_transverse_z < 3.0,
        true,
        format!(
            "max |r_x|,|r_y| / SE {:.2}, beyond 3 SE at {:.3} % of samples (Gaussian 0.27 %)",
            audit.max_transverse_z,
            100.0 * audit.transverse_beyond as f64 / audit.transverse_samples.max(1) as f64
        ),
    );
    check(
        audit.max_diagram_mismatch < 0.01,
        false,
        format!("work-diagram mismatch {:.2e}", audit.max_diagram_mismatch),
    );
    Outcome {
        pass,
        statistical: !hard_fail,
        detail: notes.join("; "),
    }
}

/// Power optimum over δ and efficiency trends on a coarse (δ, Θ) grid.
fn criterion_8(scale: &Scale, audit: &mut Audit) -> Outcome {
    let deltas = [0.15, 0.3, 0.45, 0.7];
    let thetas = [40.0, 60.0, 80.0];
    let cfg = engine_config(scale.scan);
    let mut grid = vec![vec![None; thetas.len()]; deltas.len()];
    for (i, &d) in deltas.iter().enumerate() {
        for (j, &th) in thetas.iter().enumerate() {
            let spec = QubitEngineSpec {
                delta: d,
                ..QubitEngineSpec::reference()
            };
            let r = run_engine(&spec, &make_olc(th, 0.06 * th).expect("protocol"), &cfg)
                .expect("engine run");
            audit.record(&format!("δ={d} Θ={th}"), &r);
            grid[i][j] = Some(r.metrics);
        }
    }
    let m = |i: usize, j: usize| grid[i][j].as_ref().expect("grid point");
    let total_power: Vec<f64> = (0..deltas.len())
        .map(|i| (0..thetas.len()).map(|j| m(i, j).power.mean).sum())
        .collect();
    let best = (0..deltas.len())
        .max_by(|&a, &b| total_power[a].total_cmp(&total_power[b]))
        .expect("grid");
    let interior = best > 0 && best + 1 < deltas.len() && (0.2..=0.45).contains(&deltas[best]);
    // adjacent pairs must be ordered unless the reversal is within 2σ
    let mut violations = Vec::new();
    let mut order = |a: &CycleMetrics, b: &CycleMetrics, what: String| {
        let gap = a.efficiency.mean - b.efficiency.mean;
        let sigma = a.efficiency.se.hypot(b.efficiency.se);
        if gap < 0.0 && -gap > 2.0 * sigma {
            violations.push(format!("{what} by {:.1} pp", -100.0 * gap));
        }
    };
    for j in 0..thetas.len() {
        for i in 0..deltas.len() - 1 {
            order(
                m(i, j),
                m(i + 1, j),
                format!("δ {}→{} at Θ={}", deltas[i], deltas[i + 1], thetas[j]),
            );
        }
    }
    for i in 0..deltas.len() {
        for j in 0..thetas.len() - 1 {
            order(
                m(i, j + 1),
                m(i, j),
                format!("Θ {}→{} at δ={}", thetas[j], thetas[j + 1], deltas[i]),
            );
        }
    }
    let table: Vec<String> = (0..deltas.len())
        .map(|i| {
            let row: Vec<String> = (0..thetas.len())
                .map(|j| {
                    format!(
                        "{:.2e}/{:.0}%",
                        m(i, j).power.mean,
                        100.0 * m(i, j).efficiency.mean
                    )
                })
                .collect();
            format!("δ={}: {}", deltas[i], row.join(" "))
        })
        .collect();
    Outcome {
        pass: interior && violations.is_empty(),
        statistical: false,
        detail: format!(
            "N = {}/point: ΣP̄ peaks at δ = {} (want interior, in [0.2, 0.45]); efficiency order violations beyond 2σ: {:?}; P̄/η [{}]",
            scale.scan,
            deltas[best],
            violations,
            table.join("; ")
        ),
    }
}

fn main() {
    let scale = Scale::from_env();
    let only: Option<Vec<u8>> = std::env::var("HOPS_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |c: u8| only.as_ref().is_none_or(|o| o.contains(&c));
    println!(
        "acceptance scale: {}",
        if scale.full { "full" } else { "smoke" }
    );

    let mut audit = Audit::default();
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    if wanted(1) || wanted(2) || wanted(3) {
        let t = Instant::now();
        let [c1, c2, c3] = criteria_1_to_3(&scale, &mut audit);
        let secs = t.elapsed().as_secs_f64();
        for (id, name, o) in [
            (1, "limit-cycle metrics", c1),
            (2, "hot-bath energy change", c2),
            (3, "energy conservation", c3),
        ] {
            if wanted(id) {
                report(id, name, &o, secs);
                results.push((id, name, o));
            }
        }
    }
    if wanted(4) {
        timed(
            &mut results,
            4,
            "shift sweep shape",
            &mut |a| criterion_4(&scale, a),
            &mut audit,
        );
    }
    if wanted(5) {
        timed(
            &mut results,
            5,
            "oracle equivalence",
            &mut |_| criterion_5(&scale),
            &mut audit,
        );
    }
    if wanted(6) {
        timed(
            &mut results,
            6,
            "pure-dephasing closed form",
            &mut |_| criterion_6(&scale),
            &mut audit,
        );
    }
    if wanted(8) {
        timed(
            &mut results,
            8,
            "coupling scan",
            &mut |a| criterion_8(&scale, a),
            &mut audit,
        );
    }
    if wanted(7) {
        timed(
            &mut results,
            7,
            "property suites",
            &mut criterion_7,
            &mut audit,
        );
    }

    results.sort_by_key(|r| r.0);
    println!("\nsummary");
    for (id, name, o) in &results {
        println!("{} {id} {name}", tag(o));
    }
    let unexpected: Vec<u8> = results
        .iter()
        .filter(|r| !r.2.pass && !r.2.statistical)
        .map(|r| r.0)
        .collect();
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

type Criterion<'a> = &'a mut dyn FnMut(&mut Audit) -> Outcome;

fn timed(
    results: &mut Vec<(u8, &'static str, Outcome)>,
    id: u8,
    name: &'static str,
    f: Criterion,
    audit: &mut Audit,
) {
    let t = Instant::now();
    let o = f(audit);
    report(id, name, &o, t.elapsed().as_secs_f64());
    results.push((id, name, o));
}

fn tag(o: &Outcome) -> &'static str {
    match (o.pass, o.statistical) {
        (true, _) => "PASS",
        (false, false) => "FAIL",
        (false, true) => "FAIL (sampling limit)",
    }
}

fn report(id: u8, name: &str, o: &Outcome, secs: f64) {
    println!("{} {id} {name}: {} [{secs:.0} s]", tag(o), o.detail);
}
