//! Ensemble runs of the engine and the cycle-level metrics derived from them.

use super::{df_operator, dh_operator, EngineModel, Protocol, QubitEngineSpec, COLD, HOT};
use crate::bath::{
    fit_ohmic, thermal_cutoff, thermal_weight, BathError, ExponentialBcf, FitOptions,
    OhmicSpectralDensity, ThermalParameters,
};
use crate::c64;
use crate::ensemble::run_ensemble;
use crate::hierarchy::{build_basis, HierarchyError, HopsCoefficients};
use crate::numerics::ode::SolverConfig;
use crate::observables::{
    trajectory_series, ChannelLayout, EnergySeries, EnsembleAccumulator, WindowStats,
};
use crate::propagator::{
    propagate_trajectory, BathNoise, Hops, HopsMethod, PropagateOptions, PropagationError,
};
use crate::stochproc::{
    sample_process, stream_seed, Noise, ProcessError, ProcessKind, ProcessSpec, Spectrum,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bath(#[from] BathError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error("all {count} trajectories failed; first: {first}")]
    AllAborted { count: u64, first: String },
}

/// Numerical and ensemble settings of an engine run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub trajectories: u64,
    pub k_max: usize,
    pub bcf_terms: usize,
    /// Window over which the zero-temperature BCF is fitted; defaults to
    /// the protocol horizon.
    pub fit_window: Option<f64>,
    pub method: HopsMethod,
    pub seed: u64,
    /// 0 selects all available cores.
    pub workers: usize,
    pub chunk: u64,
    pub sample_dt: f64,
    pub process_dt: f64,
    /// Pair every noise draw with its negative; `trajectories` must be even.
    pub antithetic: bool,
    pub solver: SolverConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            trajectories: 500,
            k_max: 4,
            bcf_terms: 5,
            fit_window: None,
            method: HopsMethod::Nonlinear,
            seed: 1,
            workers: 0,
            chunk: 4,
            sample_dt: 0.025,
            process_dt: 0.05,
            antithetic: false,
            solver: SolverConfig {
                rtol: 1e-6,
                atol: 1e-8,
                max_step: 0.5,
                ..SolverConfig::default()
            },
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.trajectories < 1 {
            return Err("trajectories must be ≥ 1".into());
        }
        if self.k_max < 1 {
            return Err("k_max must be ≥ 1".into());
        }
        if self.antithetic && self.trajectories % 2 != 0 {
            return Err(format!(
                "antithetic sampling needs an even trajectory count, got {}",
                self.trajectories
            ));
        }
        if self.bcf_terms < 1 {
            return Err("bcf_terms must be ≥ 1".into());
        }
        if let Some(w) = self.fit_window {
            if !(w > 0.0 && w.is_finite()) {
                return Err(format!("fit_window must be positive, got {w}"));
            }
        }
        for (name, v) in [
            ("sample_dt", self.sample_dt),
            ("process_dt", self.process_dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        self.solver.validate()
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn of(w: &WindowStats, name: &str) -> Self {
        let (mean, se) = w.get(name);
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleMetrics {
    /// Zero-based cycle used as the limit cycle.
    pub cycle: usize,
    pub start: f64,
    pub end: f64,
    pub work: Estimate,
    pub power: Estimate,
    pub work_system: Estimate,
    /// `[cold, hot]`.
    pub work_interaction: Vec<Estimate>,
    pub delta_h_s: Estimate,
    pub delta_h_i: Vec<Estimate>,
    pub delta_h_b: Vec<Estimate>,
    pub efficiency: Estimate,
    pub eta_otto: f64,
    pub eta_carnot: f64,
    /// System and interaction energies return within 3 SE over the cycle.
    pub closed: bool,
    /// Relative energy bookkeeping error over the limit cycle.
    pub residual_cycle: f64,
    /// Same over the whole run.
    pub residual_total: f64,
    pub trajectories: u64,
    pub aborted: u64,
}

impl CycleMetrics {
    /// Builds metrics from the statistics of the limit-cycle window and of
    /// the whole run.
    pub fn from_windows(
        spec: &QubitEngineSpec,
        cycle: usize,
        w: &WindowStats,
        total: &WindowStats,
        aborted: u64,
    ) -> Self {
        let work = Estimate::of(w, "W");
        let theta = w.end - w.start;
        let hot_name = format!("dH_B_{HOT}");
        let q = -w.get(&hot_name).0;
        let eta = work.mean / q;
        let var_w = w.cov_of("W", "W");
        let var_q = w.cov_of(&hot_name, &hot_name);
        let cov_wq = -w.cov_of("W", &hot_name);
        let var_eta = var_w / (q * q) + work.mean * work.mean * var_q / q.powi(4)
            - 2.0 * work.mean * cov_wq / q.powi(3);
        let delta_h_s = Estimate::of(w, "dH_S");
        let delta_h_i: Vec<Estimate> = (0..2)
            .map(|n| Estimate::of(w, &format!("dH_I_{n}")))
            .collect();
        let closed = delta_h_s.mean.abs() <= 3.0 * delta_h_s.se
            && delta_h_i.iter().all(|e| e.mean.abs() <= 3.0 * e.se);
        Self {
            cycle,
            start: w.start,
            end: w.end,
            work,
            power: Estimate {
                mean: work.mean / theta,
                se: work.se / theta,
            },
            work_system: Estimate::of(w, "W_S"),
            work_interaction: (0..2)
                .map(|n| Estimate::of(w, &format!("W_I_{n}")))
                .collect(),
            delta_h_s,
            delta_h_i,
            delta_h_b: (0..2)
                .map(|n| Estimate::of(w, &format!("dH_B_{n}")))
                .collect(),
            efficiency: Estimate {
                mean: eta,
                se: var_eta.max(0.0).sqrt(),
            },
            eta_otto: spec.eta_otto(),
            eta_carnot: spec.eta_carnot(),
            closed,
            residual_cycle: (w.get("residual").0 / work.mean).abs(),
            residual_total: (total.get("residual").0 / total.get("W").0).abs(),
            trajectories: w.count,
            aborted,
        }
    }

    /// `η < η_Otto < η_Carnot`.
    pub fn bound_chain_holds(&self) -> bool {
        self.efficiency.mean < self.eta_otto && self.eta_otto < self.eta_carnot
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineResult {
    pub spec: QubitEngineSpec,
    pub protocol: Protocol,
    pub etas: [f64; 2],
    pub bcf: [ExponentialBcf; 2],
    pub basis_size: usize,
    pub series: EnergySeries,
    /// One entry per cycle, then the whole run.
    pub windows: Vec<WindowStats>,
    pub metrics: CycleMetrics,
    pub abort_log: Vec<String>,
}

impl EngineResult {
    /// Ensemble Bloch vector and its standard errors at each sample time.
    pub fn bloch(&self) -> Vec<([f64; 3], [f64; 3])> {
        let s = &self.series;
        let ch = |n: &str| s.channel(n).expect("density channel");
        let (re01, re01_se) = ch("rho_re_01");
        let (im01, im01_se) = ch("rho_im_01");
        let (p0, p0_se) = ch("rho_re_00");
        let (p1, _) = ch("rho_re_11");
        (0..s.times.len())
            .map(|i| {
                (
                    [2.0 * re01[i], -2.0 * im01[i], p0[i] - p1[i]],
                    [2.0 * re01_se[i], 2.0 * im01_se[i], 2.0 * p0_se[i]],
                )
            })
            .collect()
    }
}

type FitKey = (u64, usize, u64);

fn fit_cache() -> &'static Mutex<HashMap<FitKey, ExponentialBcf>> {
    static CACHE: OnceLock<Mutex<HashMap<FitKey, ExponentialBcf>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Exponential fit of the zero-temperature Ohmic BCF for `η̃ = 1`, memoised
/// per process.
pub fn unit_bcf(omega_c: f64, terms: usize, window: f64) -> Result<ExponentialBcf, BathError> {
    let key = (omega_c.to_bits(), terms, window.to_bits());
    if let Some(b) = fit_cache().lock().expect("fit cache").get(&key) {
        return Ok(b.clone());
    }
    let sd = OhmicSpectralDensity::new(1.0, omega_c)?;
    let fit = fit_ohmic(&sd, terms, window, FitOptions::default())?;
    fit_cache()
        .lock()
        .expect("fit cache")
        .insert(key, fit.clone());
    Ok(fit)
}

/// Seeds the fit cache with a previously stored unit fit.
pub fn prime_unit_bcf(
    omega_c: f64,
    terms: usize,
    window: f64,
    bcf: ExponentialBcf,
) -> Result<(), BathError> {
    if bcf.len() != terms {
        return Err(BathError::InvalidParameter(format!(
            "cached fit has {} terms, expected {terms}",
            bcf.len()
        )));
    }
    fit_cache()
        .lock()
        .expect("fit cache")
        .insert((omega_c.to_bits(), terms, window.to_bits()), bcf);
    Ok(())
}

/// Driving and thermal processes of one bath for one trajectory.
pub fn bath_noise(
    sd: &OhmicSpectralDensity,
    thermal: &ThermalParameters,
    horizon: f64,
    dt: f64,
    seed: u64,
    trajectory: u64,
    bath: usize,
) -> Result<BathNoise, ProcessError> {
    if sd.eta_tilde == 0.0 {
        return Ok(BathNoise {
            driving: Noise::Zero,
            thermal: Noise::Zero,
        });
    }
    let drive = |w: f64| if w > 0.0 { sd.j(w) / PI } else { 0.0 };
    let driving = sample_process(
        &ProcessSpec {
            spectrum: Spectrum::trimmed(&drive, 0.0, 60.0 * sd.omega_c, 1e-12),
            horizon,
            dt,
            seed: stream_seed(seed, trajectory, bath, ProcessKind::Driving),
        },
        false,
    )?;
    let thermal = if thermal.is_zero_temperature() {
        Noise::Zero
    } else {
        let weight = |w: f64| thermal_weight(sd, thermal, w);
        let hi = thermal_cutoff(sd, thermal, 1e-12);
        Noise::Grid(sample_process(
            &ProcessSpec {
                spectrum: Spectrum {
                    weight: &weight,
                    omega_min: 0.0,
                    omega_max: hi,
                },
                horizon,
                dt,
                seed: stream_seed(seed, trajectory, bath, ProcessKind::Thermal),
            },
            true,
        )?)
    };
    Ok(BathNoise {
        driving: Noise::Grid(driving),
        thermal,
    })
}

/// Sample grid: `n` points per cycle.
fn sample_grid(proto: &Protocol, dt: f64) -> (Vec<f64>, usize) {
    let per = (proto.theta / dt).round().max(1.0) as usize;
    let n = per * proto.num_cycles;
    let step = proto.theta / per as f64;
    ((0..=n).map(|i| i as f64 * step).collect(), per)
}

/// Propagates the ensemble over `num_cycles` periods from `|↓⟩ ⊗ ρ_cold ⊗
/// ρ_hot` and evaluates the last cycle.
pub fn run_engine(
    spec: &QubitEngineSpec,
    proto: &Protocol,
    cfg: &EngineConfig,
) -> Result<EngineResult, EngineError> {
    spec.validate().map_err(EngineError::Config)?;
    cfg.validate().map_err(EngineError::Config)?;
    if proto.num_cycles < 1 {
        return Err(EngineError::Config("num_cycles must be ≥ 1".into()));
    }
    let etas = spec.etas()?;
    let sds = spec.spectral_densities()?;
    let thermal = spec.thermal()?;
    let unit = unit_bcf(
        spec.omega_c,
        cfg.bcf_terms,
        cfg.fit_window.unwrap_or(proto.horizon()),
    )?;
    let bcf = [unit.scaled(etas[COLD]), unit.scaled(etas[HOT])];
    let basis = build_basis(&[cfg.bcf_terms, cfg.bcf_terms], cfg.k_max)?;
    let coeffs = HopsCoefficients::new(&basis, &bcf)?;
    let model = EngineModel {
        spec: spec.clone(),
        protocol: proto.clone(),
    };
    let hops = Hops::new(&model, &basis, &coeffs, cfg.method)?;
    let (times, per) = sample_grid(proto, cfg.sample_dt);
    let horizon = *times.last().expect("non-empty grid");
    let layout = ChannelLayout {
        dim: 2,
        num_baths: 2,
        conjugates: true,
    };
    let mut windows: Vec<(usize, usize)> = (0..proto.num_cycles)
        .map(|c| (c * per, (c + 1) * per))
        .collect();
    windows.push((0, times.len() - 1));
    let conj = [dh_operator().to_vec(), dh_operator().to_vec()];
    let psi0 = [c64(0.0, 0.0), c64(1.0, 0.0)];
    let opts = PropagateOptions {
        keep_second_level: false,
    };

    let single = |noise: &[BathNoise]| {
        let samples = propagate_trajectory(&hops, &psi0, noise, &cfg.solver, &times, &opts)
            .map_err(|e| e.to_string())?;
        Ok::<_, String>(trajectory_series(
            &samples,
            &model,
            &coeffs,
            cfg.method,
            &layout,
            Some(&conj),
        ))
    };
    // with antithetic pairs one ensemble item is the mean of a pair
    let trajectory = |i: u64| {
        let noise = [COLD, HOT]
            .map(|n| {
                bath_noise(
                    &sds[n],
                    &thermal[n],
                    horizon,
                    cfg.process_dt,
                    cfg.seed,
                    i,
                    n,
                )
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let mut s = single(&noise)?;
        if cfg.antithetic {
            let mirrored: Vec<BathNoise> = noise
                .iter()
                .map(|b| BathNoise {
                    driving: b.driving.negated(),
                    thermal: b.thermal.negated(),
                })
                .collect();
            let m = single(&mirrored)?;
            for (a, b) in s.values.iter_mut().zip(&m.values) {
                *a = 0.5 * (*a + b);
            }
        }
        Ok(s)
    };
    let items = if cfg.antithetic {
        cfg.trajectories / 2
    } else {
        cfg.trajectories
    };
    let acc = run_ensemble(
        items,
        cfg.worker_count(),
        cfg.chunk,
        || EnsembleAccumulator::new(layout.clone(), times.clone(), windows.clone()),
        trajectory,
    );
    if acc.trajectories() == 0 {
        return Err(EngineError::AllAborted {
            count: acc.aborted,
            first: acc.abort_log.first().cloned().unwrap_or_default(),
        });
    }
    let stats: Vec<WindowStats> = (0..windows.len()).map(|k| acc.window(k)).collect();
    let last = proto.num_cycles - 1;
    let per_item = if cfg.antithetic { 2 } else { 1 };
    let mut metrics = CycleMetrics::from_windows(
        spec,
        last,
        &stats[last],
        &stats[windows.len() - 1],
        acc.aborted * per_item,
    );
    metrics.trajectories *= per_item;
    Ok(EngineResult {
        spec: spec.clone(),
        protocol: proto.clone(),
        etas,
        bcf,
        basis_size: basis.len(),
        series: acc.energy_series(),
        windows: stats,
        metrics,
        abort_log: acc.abort_log.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkChannel {
    F,
    HCold,
    HHot,
}

/// Parametric loop `(X, ⟨∂_X H⟩)` over the limit cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkDiagram {
    pub channel: WorkChannel,
    /// `(t, X, ⟨∂_X H⟩)`.
    pub points: Vec<(f64, f64, f64)>,
    /// `∮ ⟨∂_X H⟩ dX` in time order.
    pub area: f64,
    /// Time-integrated power of this channel over the same cycle, the
    /// negative of its extracted work.
    pub work: f64,
}

pub fn work_diagram(result: &EngineResult, channel: WorkChannel) -> WorkDiagram {
    let s = &result.series;
    let p = &result.protocol;
    let w = &result.windows[result.metrics.cycle];
    let (x_of, y, work): (Box<dyn Fn(f64) -> f64>, Vec<f64>, f64) = match channel {
        WorkChannel::F => {
            let k = df_operator(&result.spec)[0].re;
            let rho = s.channel("rho_re_00").expect("population channel").0;
            (
                Box::new(|t| p.f(t).0),
                rho.iter().map(|r| k * r).collect(),
                -w.get("W_S").0,
            )
        }
        WorkChannel::HCold | WorkChannel::HHot => {
            let n = if channel == WorkChannel::HCold {
                COLD
            } else {
                HOT
            };
            let y = s
                .channel(&format!("dH_dh_{n}"))
                .expect("conjugate channel")
                .0
                .to_vec();
            let x: Box<dyn Fn(f64) -> f64> = if n == COLD {
                Box::new(|t| p.h_cold(t).0)
            } else {
                Box::new(|t| p.h_hot(t).0)
            };
            (x, y, -w.get(&format!("W_I_{n}")).0)
        }
    };
    let points: Vec<(f64, f64, f64)> = s
        .times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= w.start - 1e-9 && t <= w.end + 1e-9)
        .map(|(i, &t)| (t, x_of(t), y[i]))
        .collect();
    let area = points
        .windows(2)
        .map(|q| 0.5 * (q[0].2 + q[1].2) * (q[1].1 - q[0].1))
        .sum();
    WorkDiagram {
        channel,
        points,
        area,
        work,
    }
}

/// One scan point outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub label: String,
    pub seed: u64,
    pub metrics: Option<CycleMetrics>,
    pub error: Option<String>,
}

/// Runs every point independently; failures are recorded and the scan goes
/// on. All points share the master seed, so they see the same noise.
pub fn scan(points: &[(String, QubitEngineSpec, Protocol)], cfg: &EngineConfig) -> Vec<ScanRow> {
    points
        .iter()
        .map(|(label, spec, proto)| match run_engine(spec, proto, cfg) {
            Ok(r) => ScanRow {
                label: label.clone(),
                seed: cfg.seed,
                metrics: Some(r.metrics),
                error: None,
            },
            Err(e) => ScanRow {
                label: label.clone(),
                seed: cfg.seed,
                metrics: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}
