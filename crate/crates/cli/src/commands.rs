//! Subcommand implementations and artifact writers.

use crate::config::{FieldError, RunConfig, ScanPoint};
use hops_core::bath::{BcfFitDocument, OhmicSpectralDensity};
use hops_core::hierarchy::binomial;
use hops_core::oracle::{CrossCheck, OracleConfig};
use hops_core::otto::{
    prime_unit_bcf, run_engine, unit_bcf, work_diagram, CycleMetrics, EngineResult, WorkChannel,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SCHEMA: &str = "hops-engine/1";

#[derive(Debug)]
pub enum CliError {
    /// Invalid input; exit status 2.
    Config(Vec<FieldError>),
    /// Failure while computing or writing; exit status 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Config(errs) => json!({"status": "error", "kind": "config", "errors": errs}),
            CliError::Runtime(m) => json!({"status": "error", "kind": "runtime", "message": m}),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    writeln!(w).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// Basis size of the two-bath hierarchy, `C(k_max + 2M, 2M)`.
pub fn basis_size(cfg: &RunConfig) -> u128 {
    let m = 2 * cfg.ensemble.bcf_terms as u64;
    binomial(cfg.ensemble.k_max as u64 + m, m)
}

pub fn dry_run(cfg: &RunConfig) -> serde_json::Value {
    let proto = cfg.protocol.build().ok();
    json!({
        "status": "ok",
        "dry_run": true,
        "config": cfg,
        "basis_size": basis_size(cfg).to_string(),
        "state_len": (basis_size(cfg) * 2 + 2 * cfg.ensemble.bcf_terms as u128).to_string(),
        "horizon": proto.map(|p| p.horizon()),
    })
}

fn fit_window(cfg: &RunConfig) -> f64 {
    cfg.ensemble
        .fit_window
        .unwrap_or_else(|| cfg.protocol.theta * cfg.protocol.num_cycles as f64)
}

/// Loads the cached unit fit when it matches the configuration.
fn prime_cache(cfg: &RunConfig) -> Result<bool, CliError> {
    let Some(path) = &cfg.output.bcf_cache else {
        return Ok(false);
    };
    if !path.exists() {
        return Ok(false);
    }
    let doc: BcfFitDocument = read_json(path)?;
    let window = fit_window(cfg);
    let matches = doc.sd.eta_tilde == 1.0
        && doc.sd.omega_c == cfg.engine.omega_c
        && doc.terms.len() == cfg.ensemble.bcf_terms
        && doc.window == Some(window);
    if matches {
        let bcf = doc.to_bcf().map_err(|e| io_err(path, e))?;
        prime_unit_bcf(cfg.engine.omega_c, cfg.ensemble.bcf_terms, window, bcf)
            .map_err(|e| io_err(path, e))?;
    }
    Ok(matches)
}

fn store_cache(cfg: &RunConfig) -> Result<(), CliError> {
    let Some(path) = &cfg.output.bcf_cache else {
        return Ok(());
    };
    let window = fit_window(cfg);
    let bcf = unit_bcf(cfg.engine.omega_c, cfg.ensemble.bcf_terms, window)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let doc = BcfFitDocument {
        terms: bcf.terms,
        residual: bcf.fit_residual,
        sd: OhmicSpectralDensity {
            eta_tilde: 1.0,
            omega_c: cfg.engine.omega_c,
        },
        window: Some(window),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(path, &doc)
}

fn cycle_metrics(r: &EngineResult) -> Vec<CycleMetrics> {
    let total = r.windows.last().expect("run window");
    (0..r.windows.len() - 1)
        .map(|c| CycleMetrics::from_windows(&r.spec, c, &r.windows[c], total, r.metrics.aborted))
        .collect()
}

fn write_bloch(path: &Path, r: &EngineResult) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["t", "r_x", "r_x_se", "r_y", "r_y_se", "r_z", "r_z_se"])
        .map_err(|e| io_err(path, e))?;
    for (t, (m, s)) in r.series.times.iter().zip(r.bloch()) {
        let row = [*t, m[0], s[0], m[1], s[1], m[2], s[2]].map(|v| v.to_string());
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_diagram(
    path: &Path,
    r: &EngineResult,
    ch: WorkChannel,
) -> Result<serde_json::Value, CliError> {
    let d = work_diagram(r, ch);
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["t", "X", "dH_dX"])
        .map_err(|e| io_err(path, e))?;
    for (t, x, y) in &d.points {
        w.write_record([t, x, y].map(|v| v.to_string()))
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(json!({"channel": d.channel, "area": d.area, "work": d.work}))
}

/// Writes every artifact of a finished run into `dir`.
fn write_run(
    dir: &Path,
    cfg: &RunConfig,
    r: &EngineResult,
    wall: f64,
    cache_hit: bool,
) -> Result<(), CliError> {
    create_dir(dir)?;
    let energy = dir.join("energy.csv");
    let f = File::create(&energy).map_err(|e| io_err(&energy, e))?;
    let mut bw = BufWriter::new(f);
    r.series.to_csv(&mut bw).map_err(|e| io_err(&energy, e))?;
    bw.flush().map_err(|e| io_err(&energy, e))?;
    write_bloch(&dir.join("bloch.csv"), r)?;
    let diagrams = vec![
        write_diagram(&dir.join("work_f.csv"), r, WorkChannel::F)?,
        write_diagram(&dir.join("work_h_cold.csv"), r, WorkChannel::HCold)?,
        write_diagram(&dir.join("work_h_hot.csv"), r, WorkChannel::HHot)?,
    ];
    write_json(
        &dir.join("metrics.json"),
        &json!({
            "limit_cycle": r.metrics,
            "bound_chain": r.metrics.bound_chain_holds(),
            "cycles": cycle_metrics(r),
            "work_diagrams": diagrams,
            "windows": r.windows,
        }),
    )?;
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "schema": SCHEMA,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "command": "run",
            "config": cfg,
            "seeds": {
                "master": cfg.ensemble.seed,
                "streams": "splitmix64 chain of (master, trajectory, bath, process kind)",
            },
            "basis_size": r.basis_size,
            "etas": r.etas,
            "bcf": r.bcf,
            "bcf_cache_hit": cache_hit,
            "trajectories": r.metrics.trajectories,
            "aborted": r.metrics.aborted,
            "abort_log": r.abort_log.iter().take(20).collect::<Vec<_>>(),
            "wall_time_s": wall,
            "files": ["energy.csv", "bloch.csv", "work_f.csv", "work_h_cold.csv", "work_h_hot.csv", "metrics.json"],
            "csv_schema": {
                "energy": r.series.names,
                "bloch": ["t", "r_x", "r_x_se", "r_y", "r_y_se", "r_z", "r_z_se"],
                "work": ["t", "X", "dH_dX"],
            },
        }),
    )
}

fn compute(cfg: &RunConfig) -> Result<(EngineResult, f64, bool), CliError> {
    let hit = prime_cache(cfg)?;
    let proto = cfg.protocol.build().map_err(|m| {
        CliError::Config(vec![FieldError {
            path: "protocol".into(),
            message: m,
        }])
    })?;
    let start = Instant::now();
    let r = run_engine(&cfg.engine, &proto, &cfg.engine_config())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let wall = start.elapsed().as_secs_f64();
    if !hit {
        store_cache(cfg)?;
    }
    Ok((r, wall, hit))
}

fn summary(m: &CycleMetrics) -> serde_json::Value {
    json!({
        "W": m.work, "P_bar": m.power, "eta": m.efficiency,
        "dH_B_hot": m.delta_h_b[1], "residual_cycle": m.residual_cycle,
        "residual_total": m.residual_total, "trajectories": m.trajectories, "aborted": m.aborted,
    })
}

pub fn run(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let (r, wall, hit) = compute(cfg)?;
    write_run(&cfg.output.dir, cfg, &r, wall, hit)?;
    Ok(
        json!({"status": "ok", "out": cfg.output.dir, "metrics": summary(&r.metrics), "wall_time_s": wall}),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PointRecord {
    label: String,
    coords: Vec<(String, f64)>,
    config: RunConfig,
    metrics: Option<CycleMetrics>,
    error: Option<String>,
    wall_time_s: f64,
}

fn point_file(dir: &Path, label: &str) -> PathBuf {
    let safe: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    dir.join("points").join(format!("{safe}.json"))
}

const SCAN_COLUMNS: [&str; 19] = [
    "P_bar",
    "P_bar_se",
    "P_S",
    "P_S_se",
    "P_I_cold",
    "P_I_cold_se",
    "P_I_hot",
    "P_I_hot_se",
    "eta",
    "eta_se",
    "W",
    "W_se",
    "dH_B_hot",
    "dH_B_hot_se",
    "residual_cycle",
    "bound_chain",
    "trajectories",
    "aborted",
    "error",
];

fn scan_row(p: &PointRecord) -> Vec<String> {
    let theta = p.config.protocol.theta;
    let mut row = vec![p.label.clone()];
    row.extend(p.coords.iter().map(|c| c.1.to_string()));
    row.push((p.config.protocol.shift_frac * theta).to_string());
    match &p.metrics {
        Some(m) => {
            let per = |e: hops_core::otto::Estimate| {
                [(e.mean / theta).to_string(), (e.se / theta).to_string()]
            };
            row.extend([m.power.mean.to_string(), m.power.se.to_string()]);
            row.extend(per(m.work_system));
            row.extend(per(m.work_interaction[0]));
            row.extend(per(m.work_interaction[1]));
            row.extend(
                [
                    m.efficiency.mean,
                    m.efficiency.se,
                    m.work.mean,
                    m.work.se,
                    m.delta_h_b[1].mean,
                    m.delta_h_b[1].se,
                    m.residual_cycle,
                ]
                .map(|v| v.to_string()),
            );
            row.extend([
                m.bound_chain_holds().to_string(),
                m.trajectories.to_string(),
                m.aborted.to_string(),
                String::new(),
            ]);
        }
        None => {
            row.extend(std::iter::repeat_n(String::new(), SCAN_COLUMNS.len() - 1));
            row.push(p.error.clone().unwrap_or_default());
        }
    }
    row
}

pub fn scan(cfg: &RunConfig, resume: bool) -> Result<serde_json::Value, CliError> {
    let points: Vec<ScanPoint> = cfg.scan_points().map_err(CliError::Config)?;
    let dir = &cfg.output.dir;
    create_dir(&dir.join("points"))?;
    let mut records = Vec::new();
    let mut resumed = Vec::new();
    for p in &points {
        let file = point_file(dir, &p.label);
        if resume && file.exists() {
            if let Ok(rec) = read_json::<PointRecord>(&file) {
                if rec.config == p.config && rec.metrics.is_some() {
                    resumed.push(p.label.clone());
                    records.push(rec);
                    continue;
                }
            }
        }
        let rec = match compute(&p.config) {
            Ok((r, wall, _)) => PointRecord {
                label: p.label.clone(),
                coords: p
                    .coords
                    .iter()
                    .map(|(a, v)| (a.name().to_string(), *v))
                    .collect(),
                config: p.config.clone(),
                metrics: Some(r.metrics),
                error: None,
                wall_time_s: wall,
            },
            Err(e) => PointRecord {
                label: p.label.clone(),
                coords: p
                    .coords
                    .iter()
                    .map(|(a, v)| (a.name().to_string(), *v))
                    .collect(),
                config: p.config.clone(),
                metrics: None,
                error: Some(match e {
                    CliError::Runtime(m) => m,
                    CliError::Config(v) => v
                        .iter()
                        .map(|f| format!("{}: {}", f.path, f.message))
                        .collect::<Vec<_>>()
                        .join("; "),
                }),
                wall_time_s: 0.0,
            },
        };
        write_json(&file, &rec)?;
        records.push(rec);
    }
    let csv_path = dir.join("scan.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let mut header = vec!["label".to_string()];
    header.extend(points[0].coords.iter().map(|c| c.0.name().to_string()));
    header.push("tau".into());
    header.extend(SCAN_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(|e| io_err(&csv_path, e))?;
    for r in &records {
        w.write_record(scan_row(r))
            .map_err(|e| io_err(&csv_path, e))?;
    }
    w.flush().map_err(|e| io_err(&csv_path, e))?;
    let failed: Vec<&str> = records
        .iter()
        .filter(|r| r.metrics.is_none())
        .map(|r| r.label.as_str())
        .collect();
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "schema": SCHEMA,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "command": "scan",
            "config": cfg,
            "points": records.iter().map(|r| &r.label).collect::<Vec<_>>(),
            "resumed": resumed,
            "failed": failed,
            "csv_schema": {"scan": header},
        }),
    )?;
    if failed.len() == records.len() {
        return Err(CliError::Runtime(format!(
            "every scan point failed; first: {}",
            records[0].error.clone().unwrap_or_default()
        )));
    }
    Ok(
        json!({"status": "ok", "out": dir, "points": records.len(), "resumed": resumed.len(), "failed": failed}),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: Option<bool>,
    pub value: f64,
    pub threshold: f64,
    pub note: String,
}

impl CheckLine {
    pub fn render(&self) -> String {
        let tag = match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        format!(
            "{tag} {}: {:.4e} (threshold {:.1e}) {}",
            self.name, self.value, self.threshold, self.note
        )
    }
}

fn read_energy(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| io_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        rows.push(
            rec.iter()
                .map(|v| v.parse::<f64>().unwrap_or(f64::NAN))
                .collect(),
        );
    }
    Ok((header, rows))
}

/// Recomputes the run's consistency criteria from its artifacts.
pub fn check(dir: &Path, depth_threshold: f64) -> Result<(Vec<CheckLine>, bool), CliError> {
    let manifest: serde_json::Value = read_json(&dir.join("manifest.json"))?;
    let cfg: RunConfig = serde_json::from_value(manifest["config"].clone())
        .map_err(|e| io_err(&dir.join("manifest.json"), e))?;
    let metrics: serde_json::Value = read_json(&dir.join("metrics.json"))?;
    let lc: CycleMetrics = serde_json::from_value(metrics["limit_cycle"].clone())
        .map_err(|e| io_err(&dir.join("metrics.json"), e))?;
    let (header, rows) = read_energy(&dir.join("energy.csv"))?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| io_err(&dir.join("energy.csv"), format!("missing column {name}")))
    };
    let (res, int_p, t) = (col("energy_residual")?, col("int_P")?, col("t")?);
    let last = rows
        .last()
        .ok_or_else(|| io_err(&dir.join("energy.csv"), "no rows"))?;
    let at = |time: f64| {
        rows.iter()
            .min_by(|a, b| (a[t] - time).abs().total_cmp(&(b[t] - time).abs()))
            .expect("rows")
    };
    let (a, b) = (at(lc.start), at(lc.end));
    let total_rel = (last[res] / last[int_p]).abs();
    let cycle_rel = ((b[res] - a[res]) / (b[int_p] - a[int_p])).abs();
    let mut lines = vec![
        CheckLine {
            name: "energy conservation over the run".into(),
            pass: Some(total_rel < 0.02),
            value: total_rel,
            threshold: 0.02,
            note: format!("residual {:.4e} ± {:.1e}", last[res], last[res + 1]),
        },
        CheckLine {
            name: "energy conservation over the limit cycle".into(),
            pass: Some(cycle_rel < 0.01),
            value: cycle_rel,
            threshold: 0.01,
            note: format!("cycle {} of {}", lc.cycle + 1, cfg.protocol.num_cycles),
        },
        CheckLine {
            name: "limit-cycle closure (ΔH_S, ΔH_I within 3 SE)".into(),
            pass: Some(lc.closed),
            value: lc.delta_h_s.mean.abs(),
            threshold: 3.0 * lc.delta_h_s.se,
            note: String::new(),
        },
        CheckLine {
            name: "efficiency bound chain η < η_Otto < η_Carnot".into(),
            pass: Some(lc.bound_chain_holds()),
            value: lc.efficiency.mean,
            threshold: lc.eta_otto,
            note: format!("η_Carnot = {:.4}", lc.eta_carnot),
        },
    ];
    let mut companions = Vec::new();
    if let Some(parent) = dir
        .canonicalize()
        .ok()
        .and_then(|d| d.parent().map(Path::to_path_buf))
    {
        for entry in fs::read_dir(&parent).into_iter().flatten().flatten() {
            let other = entry.path();
            let Ok(m) = read_json::<serde_json::Value>(&other.join("manifest.json")) else {
                continue;
            };
            let Ok(oc) = serde_json::from_value::<RunConfig>(m["config"].clone()) else {
                continue;
            };
            let dk = oc.ensemble.k_max as i64 - cfg.ensemble.k_max as i64;
            let mut same = oc.clone();
            same.ensemble.k_max = cfg.ensemble.k_max;
            same.output = cfg.output.clone();
            if dk.abs() == 1 && same == cfg {
                if let Ok(om) = read_json::<serde_json::Value>(&other.join("metrics.json")) {
                    if let Ok(o) = serde_json::from_value::<CycleMetrics>(om["limit_cycle"].clone())
                    {
                        companions.push((oc.ensemble.k_max, o));
                    }
                }
            }
        }
    }
    if companions.is_empty() {
        lines.push(CheckLine {
            name: "hierarchy depth k_max ± 1".into(),
            pass: None,
            value: f64::NAN,
            threshold: depth_threshold,
            note: "no companion runs found".into(),
        });
    }
    for (k, o) in companions {
        let rel = ((o.power.mean - lc.power.mean) / lc.power.mean).abs();
        lines.push(CheckLine {
            name: format!("hierarchy depth k_max = {k} vs {}", cfg.ensemble.k_max),
            pass: Some(rel < depth_threshold),
            value: rel,
            threshold: depth_threshold,
            note: "relative change of P_bar".into(),
        });
    }
    let ok = lines.iter().all(|l| l.pass != Some(false));
    write_json(
        &dir.join("check.json"),
        &json!({"lines": lines, "pass": ok}),
    )?;
    Ok((lines, ok))
}

/// Writes a unit-amplitude Ohmic fit document.
pub fn fit_bcf(
    omega_c: f64,
    terms: usize,
    window: f64,
    out: Option<&Path>,
) -> Result<serde_json::Value, CliError> {
    let mut errs = Vec::new();
    if !(omega_c > 0.0) {
        errs.push(FieldError {
            path: "omega_c".into(),
            message: format!("must be positive, got {omega_c}"),
        });
    }
    if terms < 1 {
        errs.push(FieldError {
            path: "terms".into(),
            message: "must be ≥ 1".into(),
        });
    }
    if !(window > 0.0) {
        errs.push(FieldError {
            path: "window".into(),
            message: format!("must be positive, got {window}"),
        });
    }
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let bcf = unit_bcf(omega_c, terms, window).map_err(|e| CliError::Runtime(e.to_string()))?;
    let doc = BcfFitDocument {
        terms: bcf.terms,
        residual: bcf.fit_residual,
        sd: OhmicSpectralDensity {
            eta_tilde: 1.0,
            omega_c,
        },
        window: Some(window),
    };
    if let Some(path) = out {
        write_json(path, &doc)?;
    }
    serde_json::to_value(&doc).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn oracle(check: &CrossCheck, out: &Path) -> Result<serde_json::Value, CliError> {
    create_dir(out)?;
    let start = Instant::now();
    let report = check
        .run(&OracleConfig::default())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let wall = start.elapsed().as_secs_f64();
    for (name, series) in [
        ("oracle.csv", &report.exact.series),
        ("hops.csv", &report.hops),
    ] {
        let path = out.join(name);
        let f = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(f);
        series.to_csv(&mut w).map_err(|e| io_err(&path, e))?;
        w.flush().map_err(|e| io_err(&path, e))?;
    }
    let summary = json!({
        "schema": SCHEMA,
        "command": "oracle",
        "settings": check,
        "max_trace_distance": report.max_trace_distance,
        "channels": report.channels,
        "dimension": report.exact.dim,
        "configurations": report.exact.configurations,
        "missing_weight": report.exact.missing_weight,
        "leakage": report.exact.leakage,
        "energy_drift": report.exact.energy_drift,
        "recurrence_time": report.recurrence_time,
        "hops_aborted": report.hops_aborted,
        "wall_time_s": wall,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
