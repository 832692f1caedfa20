//! Per-trajectory time series of all observables and their ensemble
//! accumulation.

use super::{bath_energy_flow, interaction_energy, interaction_form, reduced_density, total_power};
use crate::ensemble::{Accumulate, CovWelford, Welford};
use crate::hierarchy::HopsCoefficients;
use crate::propagator::{HopsMethod, SystemModel, TrajectorySamples};
use crate::Complex64;
use serde::{Deserialize, Serialize};

/// Column layout of a trajectory series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub dim: usize,
    pub num_baths: usize,
    /// Whether `⟨∂_h H⟩` channels (one per bath) are present.
    pub conjugates: bool,
}

impl ChannelLayout {
    pub fn rho_re(&self, i: usize, j: usize) -> usize {
        i * self.dim + j
    }
    pub fn rho_im(&self, i: usize, j: usize) -> usize {
        self.dim * self.dim + i * self.dim + j
    }
    fn base(&self) -> usize {
        2 * self.dim * self.dim
    }
    pub fn h_s(&self) -> usize {
        self.base()
    }
    pub fn p_s(&self) -> usize {
        self.base() + 1
    }
    pub fn power(&self) -> usize {
        self.base() + 2
    }
    /// `∫₀ᵗ P`.
    pub fn work(&self) -> usize {
        self.base() + 3
    }
    /// `ΔH_S + Σ(ΔH_I + ΔH_B) + ∫P`, zero for exact energy bookkeeping.
    pub fn residual(&self) -> usize {
        self.base() + 4
    }
    fn per_bath(&self) -> usize {
        if self.conjugates {
            5
        } else {
            4
        }
    }
    pub fn h_i(&self, n: usize) -> usize {
        self.base() + 5 + n * self.per_bath()
    }
    pub fn flow(&self, n: usize) -> usize {
        self.h_i(n) + 1
    }
    pub fn p_i(&self, n: usize) -> usize {
        self.h_i(n) + 2
    }
    /// `ΔH_B^{(n)} = −∫₀ᵗ J_n`.
    pub fn bath_energy(&self, n: usize) -> usize {
        self.h_i(n) + 3
    }
    pub fn conjugate(&self, n: usize) -> Option<usize> {
        self.conjugates.then(|| self.h_i(n) + 4)
    }
    pub fn len(&self) -> usize {
        self.base() + 5 + self.num_baths * self.per_bath()
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = vec![String::new(); self.len()];
        for i in 0..self.dim {
            for j in 0..self.dim {
                v[self.rho_re(i, j)] = format!("rho_re_{i}{j}");
                v[self.rho_im(i, j)] = format!("rho_im_{i}{j}");
            }
        }
        v[self.h_s()] = "H_S".into();
        v[self.p_s()] = "P_S".into();
        v[self.power()] = "P".into();
        v[self.work()] = "int_P".into();
        v[self.residual()] = "energy_residual".into();
        for n in 0..self.num_baths {
            v[self.h_i(n)] = format!("H_I_{n}");
            v[self.flow(n)] = format!("J_{n}");
            v[self.p_i(n)] = format!("P_I_{n}");
            v[self.bath_energy(n)] = format!("dH_B_{n}");
            if let Some(c) = self.conjugate(n) {
                v[c] = format!("dH_dh_{n}");
            }
        }
        v
    }

    /// Labels of the per-window vector, see [`window_vector`].
    pub fn window_names(&self) -> Vec<String> {
        let mut v = vec!["W".to_string(), "W_S".into()];
        v.extend((0..self.num_baths).map(|n| format!("W_I_{n}")));
        v.push("dH_S".into());
        v.extend((0..self.num_baths).map(|n| format!("dH_I_{n}")));
        v.extend((0..self.num_baths).map(|n| format!("dH_B_{n}")));
        v.push("residual".into());
        v
    }
}

/// Time-major series `values[t·channels + c]` of one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectorySeries {
    pub values: Vec<f64>,
}

fn cumtrapz(times: &[f64], f: impl Fn(usize) -> f64, mut out: impl FnMut(usize, f64)) {
    let mut acc = 0.0;
    out(0, 0.0);
    for i in 1..times.len() {
        acc += 0.5 * (f(i - 1) + f(i)) * (times[i] - times[i - 1]);
        out(i, acc);
    }
}

/// Evaluates every channel of `layout` on one trajectory. `conjugate_ops`
/// gives, per bath, the operator `∂L_n/∂h_n` used for work diagrams.
pub fn trajectory_series(
    samples: &TrajectorySamples,
    system: &dyn SystemModel,
    coeffs: &HopsCoefficients,
    method: HopsMethod,
    layout: &ChannelLayout,
    conjugate_ops: Option<&[Vec<Complex64>]>,
) -> TrajectorySeries {
    let nt = samples.times.len();
    let nc = layout.len();
    let d = layout.dim;
    let mut v = vec![0.0; nt * nc];
    let mut h = vec![Complex64::default(); d * d];
    for i in 0..nt {
        let row = &mut v[i * nc..(i + 1) * nc];
        let rho = reduced_density(samples, i, method);
        for a in 0..d {
            for b in 0..d {
                row[layout.rho_re(a, b)] = rho[a * d + b].re;
                row[layout.rho_im(a, b)] = rho[a * d + b].im;
            }
        }
        system.hamiltonian(samples.times[i], &mut h);
        let mut e = Complex64::default();
        for a in 0..d {
            for b in 0..d {
                e += h[a * d + b] * rho[b * d + a];
            }
        }
        row[layout.h_s()] = e.re;
        let (p, p_s, p_i) = total_power(samples, coeffs, system, i, method);
        row[layout.power()] = p;
        row[layout.p_s()] = p_s;
        for n in 0..layout.num_baths {
            row[layout.h_i(n)] = interaction_energy(samples, coeffs, system, n, i, method);
            row[layout.flow(n)] = bath_energy_flow(samples, coeffs, system, n, i, method);
            row[layout.p_i(n)] = p_i[n];
            if let (Some(c), Some(ops)) = (layout.conjugate(n), conjugate_ops) {
                row[c] = interaction_form(samples, coeffs, n, i, &ops[n], method);
            }
        }
    }
    let times = &samples.times;
    {
        let (w, p) = (layout.work(), layout.power());
        let mut cum = vec![0.0; nt];
        cumtrapz(times, |i| v[i * nc + p], |i, x| cum[i] = x);
        for i in 0..nt {
            v[i * nc + w] = cum[i];
        }
        for n in 0..layout.num_baths {
            let (b, j) = (layout.bath_energy(n), layout.flow(n));
            cumtrapz(times, |i| v[i * nc + j], |i, x| cum[i] = -x);
            for i in 0..nt {
                v[i * nc + b] = cum[i];
            }
        }
    }
    if nt > 0 {
        let first: Vec<f64> = v[..nc].to_vec();
        for i in 0..nt {
            let row = &mut v[i * nc..(i + 1) * nc];
            let mut r = row[layout.work()] + row[layout.h_s()] - first[layout.h_s()];
            for n in 0..layout.num_baths {
                r += row[layout.h_i(n)] - first[layout.h_i(n)] + row[layout.bath_energy(n)];
            }
            row[layout.residual()] = r;
        }
    }
    TrajectorySeries { values: v }
}

/// Changes over the window `[a, b]` (sample indices):
/// `[W, W_S, W_I.., ΔH_S, ΔH_I.., ΔH_B.., residual]`.
pub fn window_vector(layout: &ChannelLayout, values: &[f64], a: usize, b: usize) -> Vec<f64> {
    let nc = layout.len();
    let at = |i: usize, c: usize| values[i * nc + c];
    let delta = |c: usize| at(b, c) - at(a, c);
    let nb = layout.num_baths;
    let mut out = Vec::with_capacity(4 + 3 * nb);
    out.push(delta(layout.work()));
    out.push(f64::NAN);
    out.extend((0..nb).map(|_| f64::NAN));
    out.push(delta(layout.h_s()));
    out.extend((0..nb).map(|n| delta(layout.h_i(n))));
    out.extend((0..nb).map(|n| delta(layout.bath_energy(n))));
    out.push(delta(layout.residual()));
    out
}

/// Ensemble statistics of all channels at all sample times plus the window
/// changes of selected cycles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleAccumulator {
    pub layout: ChannelLayout,
    pub times: Vec<f64>,
    pub series: Welford,
    pub windows: Vec<(usize, usize)>,
    pub window_stats: Vec<CovWelford>,
    pub aborted: u64,
    pub abort_log: Vec<String>,
}

impl EnsembleAccumulator {
    pub fn new(layout: ChannelLayout, times: Vec<f64>, windows: Vec<(usize, usize)>) -> Self {
        let n = times.len() * layout.len();
        let wl = layout.window_names().len();
        Self {
            window_stats: windows.iter().map(|_| CovWelford::new(wl)).collect(),
            layout,
            times,
            series: Welford::new(n),
            windows,
            aborted: 0,
            abort_log: Vec::new(),
        }
    }

    pub fn trajectories(&self) -> u64 {
        self.series.count
    }

    pub fn abort_rate(&self) -> f64 {
        let total = self.series.count + self.aborted;
        if total == 0 {
            0.0
        } else {
            self.aborted as f64 / total as f64
        }
    }

    fn window_values(&self, values: &[f64], a: usize, b: usize) -> Vec<f64> {
        let nc = self.layout.len();
        let mut w = window_vector(&self.layout, values, a, b);
        let trap = |c: usize| {
            (a..b)
                .map(|i| {
                    0.5 * (values[i * nc + c] + values[(i + 1) * nc + c])
                        * (self.times[i + 1] - self.times[i])
                })
                .sum::<f64>()
        };
        w[1] = trap(self.layout.p_s());
        for n in 0..self.layout.num_baths {
            w[2 + n] = trap(self.layout.p_i(n));
        }
        w
    }

    pub fn energy_series(&self) -> EnergySeries {
        let nc = self.layout.len();
        let nt = self.times.len();
        let mut mean = vec![vec![0.0; nt]; nc];
        let mut stderr = vec![vec![0.0; nt]; nc];
        for i in 0..nt {
            for c in 0..nc {
                mean[c][i] = self.series.mean[i * nc + c];
                stderr[c][i] = self.series.stderr(i * nc + c);
            }
        }
        EnergySeries {
            times: self.times.clone(),
            names: self.layout.names(),
            mean,
            stderr,
        }
    }

    pub fn window(&self, k: usize) -> WindowStats {
        let (a, b) = self.windows[k];
        let s = &self.window_stats[k];
        let n = s.mean.len();
        WindowStats {
            start: self.times[a],
            end: self.times[b],
            names: self.layout.window_names(),
            count: s.count,
            mean: s.mean.clone(),
            cov: (0..n * n).map(|i| s.mean_cov(i / n, i % n)).collect(),
        }
    }
}

impl Accumulate for EnsembleAccumulator {
    type Item = TrajectorySeries;

    fn add(&mut self, item: &TrajectorySeries) {
        assert_eq!(
            item.values.len(),
            self.series.mean.len(),
            "series grid mismatch"
        );
        self.series.push(&item.values);
        for k in 0..self.windows.len() {
            let (a, b) = self.windows[k];
            let w = self.window_values(&item.values, a, b);
            self.window_stats[k].push(&w);
        }
    }

    fn merge(&mut self, other: &Self) {
        self.series.merge(&other.series);
        for (a, b) in self.window_stats.iter_mut().zip(&other.window_stats) {
            a.merge(b);
        }
        self.aborted += other.aborted;
        for m in &other.abort_log {
            if self.abort_log.len() < 32 {
                self.abort_log.push(m.clone());
            }
        }
    }

    fn record_abort(&mut self, reason: String) {
        self.aborted += 1;
        if self.abort_log.len() < 32 {
            self.abort_log.push(reason);
        }
    }
}

/// Ensemble means and standard errors of every channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergySeries {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

impl EnergySeries {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn channel(&self, name: &str) -> Option<(&[f64], &[f64])> {
        self.index(name)
            .map(|i| (self.mean[i].as_slice(), self.stderr[i].as_slice()))
    }

    /// CSV with columns `t, <name>, <name>_se, …`.
    pub fn to_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for n in &self.names {
            write!(w, ",{n},{n}_se")?;
        }
        writeln!(w)?;
        for (i, t) in self.times.iter().enumerate() {
            write!(w, "{t}")?;
            for c in 0..self.names.len() {
                write!(w, ",{},{}", self.mean[c][i], self.stderr[c][i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Mean changes over one window and the covariance of those means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowStats {
    pub start: f64,
    pub end: f64,
    pub names: Vec<String>,
    pub count: u64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl WindowStats {
    pub fn index(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no window quantity {name}"))
    }

    pub fn get(&self, name: &str) -> (f64, f64) {
        let i = self.index(name);
        let n = self.names.len();
        (self.mean[i], self.cov[i * n + i].max(0.0).sqrt())
    }

    pub fn cov_of(&self, a: &str, b: &str) -> f64 {
        let n = self.names.len();
        self.cov[self.index(a) * n + self.index(b)]
    }
}
