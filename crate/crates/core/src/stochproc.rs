//! Stationary Gaussian processes with a prescribed one-sided spectrum, and the
//! memory shift used by the nonlinear hierarchy.
//!
//! A process `z(t) = Σ_k √(S(ω_k) Δω) Y_k e^{−iω_k t}` with independent unit
//! complex normals `Y_k` has `M(z(t) z*(s)) = Σ_k S(ω_k) Δω e^{−iω_k (t−s)}`
//! and vanishing pseudo-correlation. Lines sit at the midpoints of a grid of
//! spacing `Δω = 2π/P` so the sum is evaluated on a time grid by one FFT.

use crate::bath::{BcfTerm, ExponentialBcf};
use crate::{c64, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("negative spectral weight {weight:e} in band [{lo}, {hi}]")]
    NegativeWeight { lo: f64, hi: f64, weight: f64 },
    #[error("invalid process specification: {0}")]
    Invalid(String),
}

/// Which stream a seed belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    Driving = 0,
    Thermal = 1,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for one (trajectory, bath, kind) stream derived from a master seed.
pub fn stream_seed(master: u64, trajectory: u64, bath: usize, kind: ProcessKind) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ trajectory);
    h = splitmix64(h ^ bath as u64);
    splitmix64(h ^ kind as u64)
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    c64(x, y) * std::f64::consts::FRAC_1_SQRT_2
}

/// One-sided spectral weight on `[omega_min, omega_max]`; the process
/// autocorrelation is `∫ S(ω) e^{−iωτ} dω`.
pub struct Spectrum<'a> {
    pub weight: &'a (dyn Fn(f64) -> f64 + Sync),
    pub omega_min: f64,
    pub omega_max: f64,
}

impl<'a> Spectrum<'a> {
    /// Support `[lo, hi]` trimmed to where the weight exceeds `rel` of its
    /// peak, scanning `[lo, hi]` in `n` steps.
    pub fn trimmed(weight: &'a (dyn Fn(f64) -> f64 + Sync), lo: f64, hi: f64, rel: f64) -> Self {
        let n = 20_000;
        let step = (hi - lo) / n as f64;
        let samples: Vec<f64> = (0..=n)
            .map(|i| weight(lo + (i as f64 + 0.5) * step).abs())
            .collect();
        let peak = samples.iter().cloned().fold(0.0, f64::max);
        let last = samples.iter().rposition(|&v| v >= rel * peak).unwrap_or(0);
        let first = samples.iter().position(|&v| v >= rel * peak).unwrap_or(0);
        Self {
            weight,
            omega_min: lo + first as f64 * step,
            omega_max: (lo + (last + 2) as f64 * step).min(hi),
        }
    }
}

pub struct ProcessSpec<'a> {
    pub spectrum: Spectrum<'a>,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
}

/// A sampled realization on `t_j = j·dt`, `t_j ≤ horizon`, with slopes for
/// cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct ProcessRealization {
    pub seed: u64,
    pub dt: f64,
    pub values: Vec<Complex64>,
    slopes: Vec<Complex64>,
    curvature: Option<Vec<Complex64>>,
}

impl ProcessRealization {
    pub fn zero(horizon: f64, dt: f64) -> Self {
        let n = (horizon / dt).ceil() as usize + 1;
        Self {
            seed: 0,
            dt,
            values: vec![Complex64::default(); n],
            slopes: vec![Complex64::default(); n],
            curvature: Some(vec![Complex64::default(); n]),
        }
    }

    pub fn horizon(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    /// The mirrored realization `−z(t)`, equally likely under the Gaussian law.
    pub fn negated(&self) -> Self {
        let neg = |v: &Vec<Complex64>| v.iter().map(|z| -z).collect::<Vec<_>>();
        Self {
            seed: self.seed,
            dt: self.dt,
            values: neg(&self.values),
            slopes: neg(&self.slopes),
            curvature: self.curvature.as_ref().map(neg),
        }
    }

    /// Grid values of the time derivative, when requested at sampling.
    pub fn derivative_values(&self) -> Option<&[Complex64]> {
        self.curvature.as_ref().map(|_| self.slopes.as_slice())
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let x = (t / self.dt).max(0.0);
        let i = (x.floor() as usize).min(self.values.len() - 2);
        (i, x - i as f64)
    }

    fn hermite(
        y0: Complex64,
        y1: Complex64,
        d0: Complex64,
        d1: Complex64,
        h: f64,
        s: f64,
    ) -> Complex64 {
        let s2 = s * s;
        let s3 = s2 * s;
        y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + d0 * (h * (s3 - 2.0 * s2 + s))
            + y1 * (-2.0 * s3 + 3.0 * s2)
            + d1 * (h * (s3 - s2))
    }

    pub fn value(&self, t: f64) -> Complex64 {
        let (i, s) = self.locate(t);
        Self::hermite(
            self.values[i],
            self.values[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            self.dt,
            s,
        )
    }

    pub fn derivative(&self, t: f64) -> Option<Complex64> {
        let c = self.curvature.as_ref()?;
        let (i, s) = self.locate(t);
        Some(Self::hermite(
            self.slopes[i],
            self.slopes[i + 1],
            c[i],
            c[i + 1],
            self.dt,
            s,
        ))
    }
}

fn line_grid(spec: &ProcessSpec) -> Result<(f64, f64, usize, usize), ProcessError> {
    if !(spec.horizon > 0.0 && spec.dt > 0.0) {
        return Err(ProcessError::Invalid(format!(
            "horizon {} and dt {} must be positive",
            spec.horizon, spec.dt
        )));
    }
    let sp = &spec.spectrum;
    if !(sp.omega_max > sp.omega_min) {
        return Err(ProcessError::Invalid(format!(
            "empty spectral band [{}, {}]",
            sp.omega_min, sp.omega_max
        )));
    }
    let period = (4.0 * spec.horizon).max(spec.horizon + 200.0);
    let n_fft = ((period / spec.dt).ceil() as usize).next_power_of_two();
    let dw = 2.0 * PI / period;
    let lines = ((sp.omega_max - sp.omega_min) / dw).ceil() as usize;
    Ok((period, dw, n_fft, lines))
}

/// Draws one realization; derivative grids are produced from the same draw by
/// multiplying each line by `−iω` when `with_derivative` is set.
pub fn sample_process(
    spec: &ProcessSpec,
    with_derivative: bool,
) -> Result<ProcessRealization, ProcessError> {
    let (period, dw, n_fft, lines) = line_grid(spec)?;
    let dt = period / n_fft as f64;
    let sp = &spec.spectrum;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut amp = Vec::with_capacity(lines);
    let mut peak: f64 = 0.0;
    for k in 0..lines {
        let w = sp.omega_min + (k as f64 + 0.5) * dw;
        let s = (sp.weight)(w);
        peak = peak.max(s.abs());
        amp.push((w, s));
    }
    for &(w, s) in &amp {
        if s < -1e-14 * peak.max(1e-300) {
            return Err(ProcessError::NegativeWeight {
                lo: w - 0.5 * dw,
                hi: w + 0.5 * dw,
                weight: s,
            });
        }
    }

    // lines alias onto FFT bins k mod n_fft; the grid values stay exact
    let n_out = (spec.horizon / dt).ceil() as usize + 1;
    let mut bins = vec![vec![Complex64::default(); n_fft]; if with_derivative { 3 } else { 2 }];
    for (k, &(w, s)) in amp.iter().enumerate() {
        let y = complex_normal(&mut rng);
        if s <= 0.0 {
            continue;
        }
        let c = y * (s * dw).sqrt();
        let b = k % n_fft;
        bins[0][b] += c;
        bins[1][b] += c * c64(0.0, -w);
        if with_derivative {
            bins[2][b] += c * (-w * w);
        }
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_fft);
    let base = sp.omega_min + 0.5 * dw;
    let mut out = Vec::with_capacity(bins.len());
    for mut buf in bins {
        fft.process(&mut buf);
        buf.truncate(n_out);
        for (j, v) in buf.iter_mut().enumerate() {
            *v *= c64(0.0, -base * j as f64 * dt).exp();
        }
        out.push(buf);
    }
    let curvature = if with_derivative { out.pop() } else { None };
    let slopes = out.pop().expect("slope grid");
    let values = out.pop().expect("value grid");
    Ok(ProcessRealization {
        seed: spec.seed,
        dt,
        values,
        slopes,
        curvature,
    })
}

/// Thermal process together with its derivative.
pub fn sample_thermal_with_derivative(
    spec: &ProcessSpec,
) -> Result<ProcessRealization, ProcessError> {
    sample_process(spec, true)
}

/// Process made of a few discrete lines `z(t) = Σ_λ c_λ e^{−iω_λ t}`,
/// evaluated exactly at any time.
#[derive(Debug, Clone)]
pub struct LineProcess {
    pub omegas: Vec<f64>,
    pub coeffs: Vec<Complex64>,
}

impl LineProcess {
    /// Draws `c_λ = √weight_λ · Y_λ`.
    pub fn sample(omegas: &[f64], weights: &[f64], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = weights
            .iter()
            .map(|w| complex_normal(&mut rng) * w.max(0.0).sqrt())
            .collect();
        Self {
            omegas: omegas.to_vec(),
            coeffs,
        }
    }

    pub fn value(&self, t: f64) -> Complex64 {
        self.omegas
            .iter()
            .zip(&self.coeffs)
            .map(|(w, c)| c * c64(0.0, -w * t).exp())
            .sum()
    }

    pub fn derivative(&self, t: f64) -> Complex64 {
        self.omegas
            .iter()
            .zip(&self.coeffs)
            .map(|(w, c)| c * c64(0.0, -w) * c64(0.0, -w * t).exp())
            .sum()
    }
}

/// Any noise source the propagator can query.
#[derive(Debug, Clone)]
pub enum Noise {
    Zero,
    Grid(ProcessRealization),
    Lines(LineProcess),
}

impl Noise {
    pub fn value(&self, t: f64) -> Complex64 {
        match self {
            Noise::Zero => Complex64::default(),
            Noise::Grid(p) => p.value(t),
            Noise::Lines(p) => p.value(t),
        }
    }

    pub fn derivative(&self, t: f64) -> Option<Complex64> {
        match self {
            Noise::Zero => Some(Complex64::default()),
            Noise::Grid(p) => p.derivative(t),
            Noise::Lines(p) => Some(p.derivative(t)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Noise::Zero)
    }

    pub fn negated(&self) -> Self {
        match self {
            Noise::Zero => Noise::Zero,
            Noise::Grid(p) => Noise::Grid(p.negated()),
            Noise::Lines(p) => Noise::Lines(LineProcess {
                omegas: p.omegas.clone(),
                coeffs: p.coeffs.iter().map(|c| -c).collect(),
            }),
        }
    }
}

/// Registers `r_μ` with `ṙ_μ = −W̄_μ r_μ + Ḡ_μ ⟨L†⟩_t`; the shift is `Σ r_μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftAccumulator {
    pub registers: Vec<Complex64>,
}

impl ShiftAccumulator {
    pub fn new(terms: usize) -> Self {
        Self {
            registers: vec![Complex64::default(); terms],
        }
    }

    pub fn shift(&self) -> Complex64 {
        self.registers.iter().sum()
    }

    /// Right-hand side of the register equations.
    pub fn rates(
        terms: &[BcfTerm],
        registers: &[Complex64],
        l_dag: Complex64,
        out: &mut [Complex64],
    ) {
        for ((o, r), t) in out.iter_mut().zip(registers).zip(terms) {
            *o = -t.w.conj() * r + t.g.conj() * l_dag;
        }
    }
}

/// Exponential-integrator step, exact for `⟨L†⟩` constant over `dt`.
pub fn shift_update(
    acc: &ShiftAccumulator,
    bcf: &ExponentialBcf,
    expectation_l_dagger: Complex64,
    dt: f64,
) -> ShiftAccumulator {
    assert!(dt > 0.0, "shift step must be positive");
    let registers = acc
        .registers
        .iter()
        .zip(&bcf.terms)
        .map(|(r, t)| {
            let w = t.w.conj();
            let decay = (-w * dt).exp();
            let gain = if (w * dt).norm() < 1e-8 {
                Complex64::from(dt)
            } else {
                (Complex64::from(1.0) - decay) / w
            };
            decay * r + t.g.conj() * expectation_l_dagger * gain
        })
        .collect();
    ShiftAccumulator { registers }
}
