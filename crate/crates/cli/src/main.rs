//! `hops-engine`: runs, scans and checks of the HOPS qubit Otto engine.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::CliError;
use config::{FieldError, RunConfig};
use hops_core::oracle::CrossCheck;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hops-engine",
    version,
    about = "Nonperturbative quantum Otto engine via HOPS"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one ensemble and write its artifacts.
    Run(RunArgs),
    /// Run every point of the `[scan]` grid.
    Scan(ScanArgs),
    /// Recompute the consistency criteria of a finished run.
    Check(CheckArgs),
    /// Fit the unit-amplitude Ohmic correlation function.
    FitBcf(FitArgs),
    /// Compare a discretized bath against exact unitary dynamics.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration.
    config: Option<PathBuf>,
    #[arg(long = "config", conflicts_with = "config")]
    config_flag: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    trajectories: Option<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved configuration without computing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    /// Reuse finished points whose configuration is unchanged.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Run directory.
    dir: PathBuf,
    /// Largest relative change of P_bar between hierarchy depths.
    #[arg(long, default_value_t = 1e-3)]
    depth_tolerance: f64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value_t = 1.0)]
    omega_c: f64,
    #[arg(long, default_value_t = 5)]
    terms: usize,
    #[arg(long, default_value_t = 180.0)]
    window: f64,
    /// JSON output file; stdout only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// TOML with cross-check settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    trajectories: Option<u64>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value = "oracle_out")]
    out: PathBuf,
    #[arg(long)]
    dry_run: bool,
}

fn resolve(c: &Common) -> Result<RunConfig, CliError> {
    let path = c
        .config
        .as_deref()
        .or(c.config_flag.as_deref())
        .ok_or_else(|| {
            CliError::Config(vec![FieldError {
                path: "config".into(),
                message: "no configuration file given".into(),
            }])
        })?;
    let mut cfg = config::load(path).map_err(CliError::Config)?;
    if let Some(s) = c.seed {
        cfg.ensemble.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.ensemble.workers = w;
    }
    if let Some(n) = c.trajectories {
        cfg.ensemble.trajectories = n;
    }
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(errs))
    }
}

fn load_cross_check(path: Option<&Path>) -> Result<CrossCheck, CliError> {
    let Some(path) = path else {
        return Ok(CrossCheck::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(vec![FieldError {
            path: "config".into(),
            message: format!("{}: {e}", path.display()),
        }])
    })?;
    let de = toml::Deserializer::parse(&text).map_err(|e| {
        CliError::Config(vec![FieldError {
            path: String::new(),
            message: e.message().to_string(),
        }])
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Config(vec![FieldError {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        }])
    })
}

fn execute(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Run(a) => {
            let cfg = resolve(&a.common)?;
            if a.common.dry_run {
                Ok(commands::dry_run(&cfg))
            } else {
                commands::run(&cfg)
            }
        }
        Command::Scan(a) => {
            let cfg = resolve(&a.common)?;
            let points = cfg.scan_points().map_err(CliError::Config)?;
            if a.common.dry_run {
                let mut v = commands::dry_run(&cfg);
                v["points"] = points.iter().map(|p| p.label.clone()).collect();
                Ok(v)
            } else {
                commands::scan(&cfg, a.resume)
            }
        }
        Command::Check(a) => {
            let (lines, ok) = commands::check(&a.dir, a.depth_tolerance)?;
            for l in &lines {
                println!("{}", l.render());
            }
            if ok {
                Ok(serde_json::json!({"status": "ok", "pass": true}))
            } else {
                Err(CliError::Runtime("one or more checks failed".into()))
            }
        }
        Command::FitBcf(a) => commands::fit_bcf(a.omega_c, a.terms, a.window, a.out.as_deref()),
        Command::Oracle(a) => {
            let mut cc = load_cross_check(a.config.as_deref())?;
            if let Some(s) = a.seed {
                cc.hops.seed = s;
            }
            if let Some(w) = a.workers {
                cc.hops.workers = w;
            }
            if let Some(n) = a.trajectories {
                cc.hops.trajectories = n;
            }
            if let Some(m) = a.modes {
                cc.modes = m;
            }
            if let Some(h) = a.horizon {
                cc.horizon = h;
            }
            if a.dry_run {
                Ok(serde_json::json!({"status": "ok", "dry_run": true, "settings": cc}))
            } else {
                commands::oracle(&cc, &a.out)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(v) => {
            // a closed pipe on stdout is not an error of the computation
            let _ = writeln!(
                std::io::stdout(),
                "{}",
                serde_json::to_string_pretty(&v).expect("json")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
