//! Command-line driver: config parsing, run execution, file outputs.
//!
//! Configs are line-oriented `key = value` text. Top-level keys set the
//! physics, grid, time window, and integrator; the sections `[initial]`,
//! `[loads]`, and `[forcing]` hold expression-valued entries (see the expr
//! module for the grammar). Full-line comments start with `#`. Unknown keys
//! are errors rather than warnings so a typo cannot silently revert a
//! parameter to its default.
//!
//! ```text
//! D  = 1.0          # stiffness
//! Lx = 1.0
//! Ly = 1.0
//! Nx = 10
//! Ny = 10
//! nu = 0.3
//! t0 = 0.0
//! tf = 1.0
//! ns = 101
//!
//! [initial]
//! vinit = x
//! ```
//!
//! Every run writes a `run.json` metadata record embedding the exact config
//! text (so a run can be reproduced from its outputs alone) plus solver
//! statistics. Numeric outputs are CSV with floats printed at 17 significant
//! digits; identical configs produce byte-identical files.

use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::diagnostics::{
    energy_series, find_critical_flow, spectrum_summary, DiagnosticsError, EnergySample, FlowAxis,
    StabilityReport,
};
use crate::expr::{Expr, Var};
use crate::ghost::{BoundaryLoads, LoadFn};
use crate::integrator::{
    initial_state, integrate, IntegratorConfig, IntegratorError, Method, SolverStats, TimeGrid,
};
use crate::mesh::{ExtendedField, GridSpec, MeshError};
use crate::operator::{assemble, ForcingSpec, OperatorError, PlateParams};

/// Environment variable overriding the configured output directory.
pub const OUTDIR_ENV: &str = "PLATE2D_OUTDIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value', got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown section '[{name}]' (expected [initial], [loads], or [forcing])")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key '{key}' ({place})")]
    UnknownKey { line: usize, key: String, place: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value for '{key}': {detail}")]
    BadValue { line: usize, key: String, detail: String },
    #[error("missing required key '{key}'")]
    MissingKey { key: &'static str },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Params(#[from] OperatorError),
    #[error(transparent)]
    Time(#[from] IntegratorError),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config '{path}': {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("cannot write '{path}': {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("invalid --bracket '{0}': expected two comma-separated numbers 'lo,hi'")]
    BadBracket(String),
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub params: PlateParams,
    pub tgrid: TimeGrid,
    pub integrator: IntegratorConfig,
    pub energies: bool,
    pub snapshots: bool,
    pub winit: Expr,
    pub vinit: Expr,
    pub g_n: Option<Expr>,
    pub g_s: Option<Expr>,
    pub g_e: Option<Expr>,
    pub h_n: Option<Expr>,
    pub h_s: Option<Expr>,
    pub h_e: Option<Expr>,
    pub forcing: Option<Expr>,
    pub outdir: String,
    /// The exact text this config was parsed from (embedded in run.json).
    pub source: String,
}

fn load_fn(e: &Option<Expr>) -> LoadFn {
    match e {
        None => LoadFn::Zero,
        Some(e) => match e.as_constant() {
            Some(c) if c == 0.0 => LoadFn::Zero,
            Some(c) => LoadFn::Const(c),
            None => {
                let e = e.clone();
                LoadFn::Func(Arc::new(move |x, y| e.eval(x, y, 0.0)))
            }
        },
    }
}

impl RunConfig {
    pub fn loads(&self) -> BoundaryLoads {
        BoundaryLoads {
            g_n: load_fn(&self.g_n),
            g_s: load_fn(&self.g_s),
            g_e: load_fn(&self.g_e),
            h_n: load_fn(&self.h_n),
            h_s: load_fn(&self.h_s),
            h_e: load_fn(&self.h_e),
        }
    }

    pub fn forcing_spec(&self) -> ForcingSpec {
        match &self.forcing {
            None => ForcingSpec::Zero,
            Some(e) => match e.as_constant() {
                Some(c) if c == 0.0 => ForcingSpec::Zero,
                _ => {
                    let e = e.clone();
                    ForcingSpec::Func(Arc::new(move |x, y, t| e.eval(x, y, t)))
                }
            },
        }
    }

    pub fn initial(&self) -> Result<Vec<f64>, IntegratorError> {
        initial_state(
            &self.grid,
            |x, y| self.winit.eval(x, y, 0.0),
            |x, y| self.vinit.eval(x, y, 0.0),
        )
    }
}

/// Raw key/value entries with source line numbers, consumed key by key so
/// that leftovers can be reported as unknown.
struct RawEntries {
    map: BTreeMap<(String, String), (usize, String)>,
}

impl RawEntries {
    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.map.remove(&(section.to_string(), key.to_string()))
    }

    fn f64_opt(&mut self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| ConfigError::BadValue {
                    line,
                    key: key.to_string(),
                    detail: format!("'{v}' is not a number"),
                }),
        }
    }

    fn f64_req(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        self.f64_opt("", key)?.ok_or(ConfigError::MissingKey { key })
    }

    fn usize_req(&mut self, key: &'static str) -> Result<usize, ConfigError> {
        match self.take("", key) {
            None => Err(ConfigError::MissingKey { key }),
            Some((line, v)) => v.parse::<usize>().map_err(|_| ConfigError::BadValue {
                line,
                key: key.to_string(),
                detail: format!("'{v}' is not a non-negative integer"),
            }),
        }
    }

    fn bool_opt(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take("", key) {
            None => Ok(default),
            Some((_, v)) if v == "true" => Ok(true),
            Some((_, v)) if v == "false" => Ok(false),
            Some((line, v)) => Err(ConfigError::BadValue {
                line,
                key: key.to_string(),
                detail: format!("'{v}' is not 'true' or 'false'"),
            }),
        }
    }

    fn expr_opt(
        &mut self,
        section: &str,
        key: &str,
        allowed: &[Var],
    ) -> Result<Option<Expr>, ConfigError> {
        match self.take(section, key) {
            None => Ok(None),
            Some((line, v)) => {
                let e = Expr::parse(&v).map_err(|err| ConfigError::BadValue {
                    line,
                    key: key.to_string(),
                    detail: err.to_string(),
                })?;
                for var in [Var::X, Var::Y, Var::T] {
                    if e.uses_var(var) && !allowed.contains(&var) {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_string(),
                            detail: format!("variable '{var}' is not available here"),
                        });
                    }
                }
                Ok(Some(e))
            }
        }
    }
}

fn split_entries(text: &str) -> Result<RawEntries, ConfigError> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(ConfigError::Syntax { line: line_no, text: line.to_string() });
            };
            let name = name.trim().to_string();
            if !["initial", "loads", "forcing"].contains(&name.as_str()) {
                return Err(ConfigError::UnknownSection { line: line_no, name });
            }
            section = name;
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(ConfigError::Syntax { line: line_no, text: line.to_string() });
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line: line_no, text: line.to_string() });
        }
        if map
            .insert((section.clone(), key.clone()), (line_no, value))
            .is_some()
        {
            return Err(ConfigError::DuplicateKey { line: line_no, key });
        }
    }
    Ok(RawEntries { map })
}

/// Parse and validate a configuration from its text form.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut raw = split_entries(text)?;

    let d = raw.f64_req("D")?;
    let lx = raw.f64_req("Lx")?;
    let ly = raw.f64_req("Ly")?;
    let nx = raw.usize_req("Nx")?;
    let ny = raw.usize_req("Ny")?;
    let nu = raw.f64_req("nu")?;
    let t0 = raw.f64_req("t0")?;
    let tf = raw.f64_req("tf")?;
    let ns = raw.usize_req("ns")?;
    let k0 = raw.f64_opt("", "k0")?.unwrap_or(0.0);
    let k1 = raw.f64_opt("", "k1")?.unwrap_or(0.0);
    let a1 = raw.f64_opt("", "a1")?.unwrap_or(0.0);
    let a2 = raw.f64_opt("", "a2")?.unwrap_or(0.0);
    let energies = raw.bool_opt("energies", true)?;
    let snapshots = raw.bool_opt("snapshots", false)?;
    let rel_tol = raw.f64_opt("", "rel_tol")?.unwrap_or(1e-6);
    let abs_tol = raw.f64_opt("", "abs_tol")?.unwrap_or(1e-9);
    let max_step = raw.f64_opt("", "max_step")?;
    let initial_step = raw.f64_opt("", "initial_step")?;
    let method = match raw.take("", "method") {
        None => Method::ImplicitTrapezoid,
        Some((_, v)) if v == "trapezoid" => Method::ImplicitTrapezoid,
        Some((_, v)) if v == "rk4" => Method::ExplicitRk4,
        Some((line, v)) => {
            return Err(ConfigError::BadValue {
                line,
                key: "method".to_string(),
                detail: format!("'{v}' is not 'trapezoid' or 'rk4'"),
            })
        }
    };
    let outdir = raw
        .take("", "outdir")
        .map(|(_, v)| v)
        .unwrap_or_else(|| ".".to_string());

    let xy = [Var::X, Var::Y];
    let xyt = [Var::X, Var::Y, Var::T];
    let winit = raw.expr_opt("initial", "winit", &xy)?.unwrap_or(Expr::Num(0.0));
    let vinit = raw.expr_opt("initial", "vinit", &xy)?.unwrap_or(Expr::Num(0.0));
    let g_n = raw.expr_opt("loads", "g_n", &xy)?;
    let g_s = raw.expr_opt("loads", "g_s", &xy)?;
    let g_e = raw.expr_opt("loads", "g_e", &xy)?;
    let h_n = raw.expr_opt("loads", "h_n", &xy)?;
    let h_s = raw.expr_opt("loads", "h_s", &xy)?;
    let h_e = raw.expr_opt("loads", "h_e", &xy)?;
    let forcing = raw.expr_opt("forcing", "f", &xyt)?;

    if let Some(((section, key), (line, _))) =
        raw.map.iter().min_by_key(|(_, (line, _))| *line)
    {
        let place = if section.is_empty() {
            "top level".to_string()
        } else {
            format!("section [{section}]")
        };
        return Err(ConfigError::UnknownKey { line: *line, key: key.clone(), place });
    }

    let grid = GridSpec::new(lx, ly, nx, ny)?;
    let params = PlateParams::new(d, nu, k0, k1, a1, a2)?;
    let tgrid = TimeGrid::new(t0, tf, ns)?;
    let integrator = IntegratorConfig { method, rel_tol, abs_tol, max_step, initial_step };
    integrator.validate()?;

    Ok(RunConfig {
        grid,
        params,
        tgrid,
        integrator,
        energies,
        snapshots,
        winit,
        vinit,
        g_n,
        g_s,
        g_e,
        h_n,
        h_s,
        h_e,
        forcing,
        outdir,
        source: text.to_string(),
    })
}

/// Read a configuration file and parse it.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|source| CliError::ReadConfig { path: path.to_path_buf(), source })?;
    Ok(parse_config(&text)?)
}

#[derive(Debug, Parser)]
#[command(
    name = "plate2d",
    version,
    about = "Finite-difference simulator for a cantilevered rectangular plate"
)]
pub struct Cli {
    /// Suppress progress output (result values still print).
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the plate in time and write energy/snapshot files.
    Simulate {
        /// Path to the run configuration.
        config: PathBuf,
    },
    /// Locate the critical flow parameter by bisection on the spectral
    /// abscissa of the assembled system.
    Stability {
        config: PathBuf,
        /// Flow parameter to vary.
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Bracket 'lo,hi' with a stable lo (abscissa < 0) and unstable hi.
        #[arg(long)]
        bracket: String,
    },
    /// Run one simulation per listed value of a flow parameter.
    Sweep {
        config: PathBuf,
        /// Flow parameter to vary.
        #[arg(long, value_enum)]
        param: AxisArg,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    A1,
    A2,
}

impl From<AxisArg> for FlowAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::A1 => FlowAxis::A1,
            AxisArg::A2 => FlowAxis::A2,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config } => cmd_simulate(&config, cli.quiet),
        Command::Stability { config, axis, bracket } => {
            cmd_stability(&config, axis.into(), &bracket, cli.quiet)
        }
        Command::Sweep { config, param, values } => {
            cmd_sweep(&config, param.into(), &values, cli.quiet)
        }
    }
}

fn resolve_outdir(cfg: &RunConfig) -> PathBuf {
    env::var_os(OUTDIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(&cfg.outdir))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn write_text(path: &Path, build: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    build(&mut buf).map_err(|source| CliError::Write { path: path.to_path_buf(), source })?;
    fs::write(path, buf).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn write_energy_csv(path: &Path, series: &[EnergySample]) -> Result<(), CliError> {
    write_text(path, |buf| {
        writeln!(buf, "t,U,K,E")?;
        for s in series {
            writeln!(buf, "{:.16e},{:.16e},{:.16e},{:.16e}", s.t, s.u, s.k, s.e)?;
        }
        Ok(())
    })
}

fn write_frame(path: &Path, grid: &GridSpec, w_unknowns: &[f64]) -> Result<(), CliError> {
    let field = ExtendedField::from_unknowns(grid, w_unknowns);
    write_text(path, |buf| {
        for j in 0..grid.ny as isize {
            for i in 0..grid.nx as isize {
                if i > 0 {
                    write!(buf, ",")?;
                }
                write!(buf, "{:.16e}", field.get(i, j))?;
            }
            writeln!(buf)?;
        }
        Ok(())
    })
}

fn write_run_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json serialization");
    text.push('\n');
    fs::write(path, text).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

struct SimOutcome {
    stats: SolverStats,
    series: Vec<EnergySample>,
    outputs: Vec<String>,
}

/// Assemble, integrate, and write the outputs of one simulation into
/// `outdir`. On integration failure a `run.json` with status "failed" is
/// still written before the error propagates.
fn execute_simulation(
    cfg: &RunConfig,
    outdir: &Path,
    command: &str,
) -> Result<SimOutcome, CliError> {
    create_dir(outdir)?;
    let loads = cfg.loads();
    let forcing = cfg.forcing_spec();
    let system = assemble(&cfg.params, &cfg.grid, &loads, &forcing)?;
    let y0 = cfg.initial()?;

    let base_meta = |status: &str| {
        json!({
            "tool": "plate2d",
            "command": command,
            "status": status,
            "config_text": cfg.source,
            "grid": cfg.grid,
            "params": cfg.params,
            "time": cfg.tgrid,
            "integrator": cfg.integrator,
        })
    };

    let traj = match integrate(&system, &y0, &cfg.tgrid, &cfg.integrator) {
        Ok(traj) => traj,
        Err(err) => {
            let mut meta = base_meta("failed");
            meta["error"] = json!(err.to_string());
            meta["outputs"] = json!([]);
            write_run_json(&outdir.join("run.json"), &meta)?;
            return Err(err.into());
        }
    };

    let series = energy_series(&traj, &cfg.grid, &cfg.params, &loads)?;
    let mut outputs = Vec::new();
    if cfg.energies {
        write_energy_csv(&outdir.join("energy.csv"), &series)?;
        outputs.push("energy.csv".to_string());
    }
    if cfg.snapshots {
        let n = cfg.grid.n_unknowns();
        for (k, state) in traj.states.iter().enumerate() {
            let name = format!("frame_{k:06}.csv");
            write_frame(&outdir.join(&name), &cfg.grid, &state[..n])?;
            outputs.push(name);
        }
    }

    let mut meta = base_meta("ok");
    meta["stats"] = json!(traj.stats);
    meta["outputs"] = json!(outputs);
    meta["samples"] = json!(traj.times.len());
    write_run_json(&outdir.join("run.json"), &meta)?;

    Ok(SimOutcome { stats: traj.stats, series, outputs })
}

fn cmd_simulate(config: &Path, quiet: bool) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let outdir = resolve_outdir(&cfg);
    let outcome = execute_simulation(&cfg, &outdir, "simulate")?;
    if !quiet {
        let e0 = outcome.series.first().map(|s| s.e).unwrap_or(0.0);
        let ef = outcome.series.last().map(|s| s.e).unwrap_or(0.0);
        println!(
            "wrote {} file(s) to {} (steps {}, rejections {}, E: {:.6e} -> {:.6e})",
            outcome.outputs.len() + 1,
            outdir.display(),
            outcome.stats.steps,
            outcome.stats.rejections,
            e0,
            ef
        );
    }
    Ok(())
}

fn parse_bracket(text: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::BadBracket(text.to_string()));
    }
    let lo = parts[0].trim().parse::<f64>();
    let hi = parts[1].trim().parse::<f64>();
    match (lo, hi) {
        (Ok(lo), Ok(hi)) => Ok((lo, hi)),
        _ => Err(CliError::BadBracket(text.to_string())),
    }
}

fn write_stability_csv(path: &Path, report: &StabilityReport) -> Result<(), CliError> {
    write_text(path, |buf| {
        writeln!(buf, "value,abscissa")?;
        if let Some(critical) = &report.critical {
            for it in &critical.iterates {
                writeln!(buf, "{:.16e},{:.16e}", it.value, it.abscissa)?;
            }
        }
        Ok(())
    })
}

fn cmd_stability(
    config: &Path,
    axis: FlowAxis,
    bracket: &str,
    quiet: bool,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let bracket = parse_bracket(bracket)?;
    let outdir = resolve_outdir(&cfg);
    create_dir(&outdir)?;
    let report = find_critical_flow(&cfg.params, &cfg.grid, axis, bracket)?;
    write_stability_csv(&outdir.join("stability.csv"), &report)?;
    let meta = json!({
        "tool": "plate2d",
        "command": "stability",
        "status": "ok",
        "config_text": cfg.source,
        "grid": cfg.grid,
        "params": cfg.params,
        "report": report,
    });
    write_run_json(&outdir.join("run.json"), &meta)?;
    let critical = report.critical.as_ref().expect("search result has critical data");
    println!(
        "critical {} = {:.12e} (abscissa {:.3e} at midpoint, bracket [{:.12e}, {:.12e}], {} evaluations)",
        critical.axis,
        critical.value,
        report.spectrum.abscissa,
        critical.lo,
        critical.hi,
        critical.iterates.len()
    );
    if critical.non_monotone && !quiet {
        println!("warning: abscissa moved non-monotonically during bisection (sign-based bracket remains valid)");
    }
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    axis: FlowAxis,
    values: &[f64],
    quiet: bool,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let outdir = resolve_outdir(&cfg);
    create_dir(&outdir)?;
    let mut rows = Vec::new();
    for (k, &value) in values.iter().enumerate() {
        let sub_name = format!("sweep_{k:03}");
        let sub = outdir.join(&sub_name);
        let sub_cfg = RunConfig { params: axis.apply_to(&cfg.params, value), ..cfg.clone() };
        let system = assemble(
            &sub_cfg.params,
            &sub_cfg.grid,
            &sub_cfg.loads(),
            &sub_cfg.forcing_spec(),
        )?;
        let abscissa = spectrum_summary(&system).abscissa;
        let outcome = execute_simulation(&sub_cfg, &sub, "sweep")?;
        let final_e = outcome.series.last().map(|s| s.e).unwrap_or(0.0);
        if !quiet {
            println!(
                "{} = {:.6e}: abscissa {:.6e}, final E {:.6e} ({})",
                axis, value, abscissa, final_e, sub_name
            );
        }
        rows.push((k, value, abscissa, final_e, sub_name));
    }
    write_text(&outdir.join("sweep.csv"), |buf| {
        writeln!(buf, "index,param,value,abscissa,final_e,subdir")?;
        for (k, value, abscissa, final_e, sub_name) in &rows {
            writeln!(
                buf,
                "{},{},{:.16e},{:.16e},{:.16e},{}",
                k,
                axis.name(),
                value,
                abscissa,
                final_e,
                sub_name
            )?;
        }
        Ok(())
    })
}
