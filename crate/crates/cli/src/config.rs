//! Run configuration: TOML sections `engine`, `protocol`, `ensemble`,
//! `solver`, `output` and, for scans, `scan`.

use hops_core::numerics::ode::SolverConfig;
use hops_core::otto::{
    make_olc, make_shifted, EngineConfig, Protocol, QubitEngineSpec, ShiftTarget,
};
use hops_core::propagator::HopsMethod;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// One invalid field and why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub theta: f64,
    /// Transition time as a fraction of `theta`.
    pub tau_tr_frac: f64,
    /// Coupling delay as a fraction of `theta`.
    pub shift_frac: f64,
    pub shift_target: ShiftTarget,
    pub slow: bool,
    pub num_cycles: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            theta: 60.0,
            tau_tr_frac: 0.06,
            shift_frac: 0.0,
            shift_target: ShiftTarget::Both,
            slow: false,
            num_cycles: 3,
        }
    }
}

impl ProtocolSection {
    pub fn build(&self) -> Result<Protocol, String> {
        if self.num_cycles < 1 {
            return Err("num_cycles must be ≥ 1".into());
        }
        let mut p =
            make_olc(self.theta, self.tau_tr_frac * self.theta).map_err(|e| e.to_string())?;
        if self.shift_frac != 0.0 || self.slow {
            p = make_shifted(
                &p,
                self.shift_frac * self.theta,
                self.shift_target,
                self.slow,
            )
            .map_err(|e| e.to_string())?;
        }
        p.num_cycles = self.num_cycles;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub trajectories: u64,
    pub k_max: usize,
    pub bcf_terms: usize,
    pub fit_window: Option<f64>,
    pub method: HopsMethod,
    pub seed: u64,
    pub workers: usize,
    pub chunk: u64,
    pub sample_dt: f64,
    pub process_dt: f64,
    pub antithetic: bool,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let e = EngineConfig::default();
        Self {
            trajectories: e.trajectories,
            k_max: e.k_max,
            bcf_terms: e.bcf_terms,
            fit_window: e.fit_window,
            method: e.method,
            seed: e.seed,
            workers: e.workers,
            chunk: e.chunk,
            sample_dt: e.sample_dt,
            process_dt: e.process_dt,
            antithetic: e.antithetic,
        }
    }
}

fn default_solver() -> SolverConfig {
    EngineConfig::default().solver
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// JSON file holding the unit BCF fit; read when it matches, written
    /// otherwise.
    pub bcf_cache: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            bcf_cache: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    ShiftFrac,
    Delta,
    Theta,
    SX,
    TauTrFrac,
    TCold,
    THot,
}

impl ScanAxis {
    pub fn name(self) -> &'static str {
        match self {
            ScanAxis::ShiftFrac => "shift_frac",
            ScanAxis::Delta => "delta",
            ScanAxis::Theta => "theta",
            ScanAxis::SX => "s_x",
            ScanAxis::TauTrFrac => "tau_tr_frac",
            ScanAxis::TCold => "t_cold",
            ScanAxis::THot => "t_hot",
        }
    }

    fn apply(self, cfg: &mut RunConfig, v: f64) {
        match self {
            ScanAxis::ShiftFrac => cfg.protocol.shift_frac = v,
            ScanAxis::Delta => cfg.engine.delta = v,
            ScanAxis::Theta => cfg.protocol.theta = v,
            ScanAxis::SX => cfg.engine.s_x = v,
            ScanAxis::TauTrFrac => cfg.protocol.tau_tr_frac = v,
            ScanAxis::TCold => cfg.engine.t_cold = v,
            ScanAxis::THot => cfg.engine.t_hot = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub axis: ScanAxis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub axis2: Option<ScanAxis>,
    #[serde(default)]
    pub values2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub engine: QubitEngineSpec,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default = "default_solver")]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub scan: Option<ScanSection>,
}

/// One grid point of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub label: String,
    pub coords: Vec<(ScanAxis, f64)>,
    pub config: RunConfig,
}

pub fn parse(text: &str) -> Result<RunConfig, Vec<FieldError>> {
    let de = toml::Deserializer::parse(text)
        .map_err(|e| vec![FieldError::new("", e.message().to_string())])?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let msg = e.inner().message().to_string();
        // serde reports a missing key against its parent table
        if let Some(field) = msg
            .strip_prefix("missing field `")
            .and_then(|r| r.split('`').next())
        {
            path = if path == "." || path.is_empty() {
                field.to_string()
            } else {
                format!("{path}.{field}")
            };
        }
        if path == "." {
            path.clear();
        }
        vec![FieldError::new(path, msg)]
    })
}

pub fn load(path: &Path) -> Result<RunConfig, Vec<FieldError>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![FieldError::new(
            "config",
            format!("{}: {e}", path.display()),
        )]
    })?;
    parse(&text)
}

fn check_engine(spec: &QubitEngineSpec, prefix: &str, errs: &mut Vec<FieldError>) {
    let p = |f: &str| format!("{prefix}engine.{f}");
    if !(spec.omega > 0.0 && spec.omega.is_finite()) {
        errs.push(FieldError::new(
            p("omega"),
            format!("must be positive, got {}", spec.omega),
        ));
    }
    if !(spec.s_x.abs() < 0.5 * spec.omega) {
        errs.push(FieldError::new(
            p("s_x"),
            format!("|s_x| must stay below omega/2, got {}", spec.s_x),
        ));
    }
    if spec.eta.is_none() && !(spec.delta > 0.0 && spec.delta.is_finite()) {
        errs.push(FieldError::new(
            p("delta"),
            format!("must be positive, got {}", spec.delta),
        ));
    }
    if let Some(e) = spec.eta {
        if !(e[0] >= 0.0 && e[1] >= 0.0) {
            errs.push(FieldError::new(
                p("eta"),
                format!("must be non-negative, got {e:?}"),
            ));
        }
    }
    if !(spec.omega_c > 0.0 && spec.omega_c.is_finite()) {
        errs.push(FieldError::new(
            p("omega_c"),
            format!("must be positive, got {}", spec.omega_c),
        ));
    }
    if !(spec.t_cold > 0.0) {
        errs.push(FieldError::new(
            p("t_cold"),
            format!("must be positive, got {}", spec.t_cold),
        ));
    }
    if !(spec.t_hot > spec.t_cold) {
        errs.push(FieldError::new(
            p("t_hot"),
            format!("must exceed t_cold = {}, got {}", spec.t_cold, spec.t_hot),
        ));
    }
}

fn check_protocol(proto: &ProtocolSection, prefix: &str, errs: &mut Vec<FieldError>) {
    let p = |f: &str| format!("{prefix}protocol.{f}");
    let before = errs.len();
    if !(proto.theta > 0.0 && proto.theta.is_finite()) {
        errs.push(FieldError::new(
            p("theta"),
            format!("must be positive, got {}", proto.theta),
        ));
    }
    if !(proto.tau_tr_frac > 0.0 && proto.tau_tr_frac <= 0.125) {
        errs.push(FieldError::new(
            p("tau_tr_frac"),
            format!("must lie in (0, 1/8], got {}", proto.tau_tr_frac),
        ));
    }
    if !(proto.shift_frac.abs() < 0.5) {
        errs.push(FieldError::new(
            p("shift_frac"),
            format!("must lie in (-1/2, 1/2), got {}", proto.shift_frac),
        ));
    }
    if proto.num_cycles < 1 {
        errs.push(FieldError::new(p("num_cycles"), "must be ≥ 1"));
    }
    if errs.len() == before {
        if let Err(e) = proto.build() {
            errs.push(FieldError::new(format!("{prefix}protocol"), e));
        }
    }
}

fn check_ensemble(e: &EnsembleSection, s: &SolverConfig, errs: &mut Vec<FieldError>) {
    let p = |f: &str| format!("ensemble.{f}");
    if e.trajectories < 1 {
        errs.push(FieldError::new(p("trajectories"), "must be ≥ 1"));
    }
    if e.k_max < 1 {
        errs.push(FieldError::new(p("k_max"), "must be ≥ 1"));
    }
    if e.bcf_terms < 1 {
        errs.push(FieldError::new(p("bcf_terms"), "must be ≥ 1"));
    }
    if let Some(w) = e.fit_window {
        if !(w > 0.0 && w.is_finite()) {
            errs.push(FieldError::new(
                p("fit_window"),
                format!("must be positive, got {w}"),
            ));
        }
    }
    for (name, v) in [("sample_dt", e.sample_dt), ("process_dt", e.process_dt)] {
        if !(v > 0.0 && v.is_finite()) {
            errs.push(FieldError::new(
                p(name),
                format!("must be positive, got {v}"),
            ));
        }
    }
    if e.antithetic && e.trajectories % 2 != 0 {
        errs.push(FieldError::new(
            p("trajectories"),
            "must be even with antithetic sampling",
        ));
    }
    if e.chunk < 1 {
        errs.push(FieldError::new(p("chunk"), "must be ≥ 1"));
    }
    if !(s.rtol > 0.0) {
        errs.push(FieldError::new(
            "solver.rtol",
            format!("must be positive, got {}", s.rtol),
        ));
    }
    if !(s.atol > 0.0) {
        errs.push(FieldError::new(
            "solver.atol",
            format!("must be positive, got {}", s.atol),
        ));
    }
    if !(s.max_step > 0.0) {
        errs.push(FieldError::new(
            "solver.max_step",
            format!("must be positive, got {}", s.max_step),
        ));
    }
}

impl RunConfig {
    /// Every validation failure of the run itself (the scan grid excluded).
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        check_engine(&self.engine, "", &mut errs);
        check_protocol(&self.protocol, "", &mut errs);
        check_ensemble(&self.ensemble, &self.solver, &mut errs);
        if self.output.dir.as_os_str().is_empty() {
            errs.push(FieldError::new("output.dir", "must not be empty"));
        }
        errs
    }

    pub fn engine_config(&self) -> EngineConfig {
        let e = &self.ensemble;
        EngineConfig {
            trajectories: e.trajectories,
            k_max: e.k_max,
            bcf_terms: e.bcf_terms,
            fit_window: e.fit_window,
            method: e.method,
            seed: e.seed,
            workers: e.workers,
            chunk: e.chunk,
            sample_dt: e.sample_dt,
            process_dt: e.process_dt,
            antithetic: e.antithetic,
            solver: self.solver,
        }
    }

    /// Grid points of the `scan` section with per-point validation.
    pub fn scan_points(&self) -> Result<Vec<ScanPoint>, Vec<FieldError>> {
        let Some(scan) = &self.scan else {
            return Err(vec![FieldError::new("scan", "section missing")]);
        };
        let mut errs = Vec::new();
        if scan.values.is_empty() {
            errs.push(FieldError::new("scan.values", "empty grid"));
        }
        let second: Vec<Option<f64>> = match scan.axis2 {
            Some(a) if a == scan.axis => {
                errs.push(FieldError::new("scan.axis2", "must differ from scan.axis"));
                vec![None]
            }
            Some(_) if scan.values2.is_empty() => {
                errs.push(FieldError::new("scan.values2", "empty grid"));
                vec![None]
            }
            Some(_) => scan.values2.iter().map(|v| Some(*v)).collect(),
            None if !scan.values2.is_empty() => {
                errs.push(FieldError::new("scan.values2", "given without scan.axis2"));
                vec![None]
            }
            None => vec![None],
        };
        let mut points = Vec::new();
        for (i, &v) in scan.values.iter().enumerate() {
            for (j, w) in second.iter().enumerate() {
                let mut cfg = self.clone();
                cfg.scan = None;
                scan.axis.apply(&mut cfg, v);
                let mut coords = vec![(scan.axis, v)];
                let mut label = format!("{}={v}", scan.axis.name());
                let mut prefix = format!("scan.values[{i}]: ");
                if let (Some(a), Some(w)) = (scan.axis2, w) {
                    a.apply(&mut cfg, *w);
                    coords.push((a, *w));
                    label.push_str(&format!(",{}={w}", a.name()));
                    prefix = format!("scan.values[{i}],values2[{j}]: ");
                }
                check_engine(&cfg.engine, &prefix, &mut errs);
                check_protocol(&cfg.protocol, &prefix, &mut errs);
                points.push(ScanPoint {
                    label,
                    coords,
                    config: cfg,
                });
            }
        }
        if errs.is_empty() {
            Ok(points)
        } else {
            Err(errs)
        }
    }
}
