//! Command-line driver: `poisson`, `control`, `sparsa`, `sweep`, `verify`.
//!
//! Exit codes: 0 success, 1 solver failure, 2 configuration error.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::fem::{assemble, read_field, write_field, FemSystem, TriMesh};
use crate::l0::{
    gap_of_field, solve_l0_penalized, InitPolicy, L0PenaltyConfig, L0Solution, SelectionMode,
    ZeroSignPolicy,
};
use crate::measure::weighted_l0;
use crate::problems::{control_reduced, prototype_load, ControlConfig, PoissonProblem, SmoothProblem};
use crate::sparsa::{lumped_l1_weights, sparsa_solve, SparsaConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "l0dc", version, about = "Support-constrained optimization on P1 finite elements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Poisson prototype with a support constraint.
    Poisson(PoissonArgs),
    /// Reduced optimal control problem with a support constraint.
    Control(ControlArgs),
    /// Weighted L1 baseline solved by SpaRSA.
    Sparsa(SparsaArgs),
    /// Grid of independent Poisson solves.
    Sweep(SweepArgs),
    /// Recompute l0 and gap of a field file and compare with a run CSV.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct MeshArgs {
    /// Structured mesh with n × n cells.
    #[arg(long)]
    pub n: Option<usize>,
    /// Mesh file (overrides --n).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// key=value configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Accepted for reproducibility records; all solvers are deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct PenaltyArgs {
    #[arg(long = "K")]
    pub k: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Budget schedule factor λ in (0, 1).
    #[arg(long)]
    pub schedule: Option<f64>,
    /// zero | plus | minus | sign_of_load
    #[arg(long)]
    pub zero_sign: Option<String>,
    /// unconstrained | zero
    #[arg(long)]
    pub u0: Option<String>,
    /// Start from a field file (all nodes).
    #[arg(long)]
    pub u0_file: Option<PathBuf>,
    /// greedy | exact
    #[arg(long)]
    pub selection: Option<String>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct OutputArgs {
    /// Run summary CSV (stdout when omitted).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Per-iteration CSV.
    #[arg(long)]
    pub log_csv: Option<PathBuf>,
    /// Solution field file.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Scaled-gradient (multiplier) field file.
    #[arg(long)]
    pub multiplier: Option<PathBuf>,
    /// Re-read the written field and check l0 and gap against the run.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct PoissonArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ControlArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Desired state as a field file (all nodes).
    #[arg(long)]
    pub yd_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SparsaArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// L1 penalty β.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    pub ns: Vec<usize>,
    #[arg(long = "Ks", value_delimiter = ',', default_value = "0.25")]
    pub ks: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1e9")]
    pub rhos: Vec<f64>,
    /// Schedule factors; `none` disables the schedule.
    #[arg(long, value_delimiter = ',', default_value = "none")]
    pub schedules: Vec<String>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long = "K")]
    pub k: Option<f64>,
    /// Run CSV whose first row is checked.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
        }
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn solver_err(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}

/// Formats a float with 12 significant digits.
pub fn fmt_float(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.11e}")
    }
}

/// Parses a `key=value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<HashMap<String, String>, String> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value", i + 1));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct Settings {
    file: HashMap<String, String>,
    used: std::cell::RefCell<Vec<&'static str>>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                parse_config(&text).map_err(config_err)?
            }
            None => HashMap::new(),
        };
        Ok(Self {
            file,
            used: Default::default(),
        })
    }

    /// Flag value, else config file value, else `default`.
    fn get<T: std::str::FromStr>(&self, key: &'static str, flag: Option<T>, default: T) -> Result<T, CliError> {
        self.used.borrow_mut().push(key);
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| config_err(format!("cannot parse `{key}={raw}`"))),
            None => Ok(default),
        }
    }

    fn get_opt<T: std::str::FromStr>(&self, key: &'static str, flag: Option<T>) -> Result<Option<T>, CliError> {
        self.used.borrow_mut().push(key);
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(raw) if raw == "none" => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| config_err(format!("cannot parse `{key}={raw}`"))),
            None => Ok(None),
        }
    }

    fn reject_unknown(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let mut unknown: Vec<&String> = self.file.keys().filter(|k| !used.contains(&k.as_str())).collect();
        unknown.sort();
        match unknown.first() {
            Some(k) => Err(config_err(format!("unknown configuration key `{k}`"))),
            None => Ok(()),
        }
    }
}

const DEFAULT_N: usize = 64;
const MAX_DEFAULT_N: usize = 128;

fn build_system(
    settings: &Settings,
    mesh: &MeshArgs,
    load: impl Fn(f64, f64) -> f64,
) -> Result<(FemSystem, usize), CliError> {
    let _seed: Option<u64> = settings.get_opt("seed", mesh.seed)?;
    let mesh_path: Option<String> =
        settings.get_opt("mesh", mesh.mesh.as_ref().map(|p| p.display().to_string()))?;
    let n: usize = settings.get("n", mesh.n, DEFAULT_N)?;
    let tri = match mesh_path {
        Some(p) => TriMesh::import(&p).map_err(|e| config_err(format!("{p}: {e}")))?,
        None => {
            if mesh.n.is_none() && n > MAX_DEFAULT_N {
                return Err(config_err(format!("n = {n} exceeds {MAX_DEFAULT_N}; pass --n to override")));
            }
            TriMesh::structured(n).map_err(config_err)?
        }
    };
    let label = (1.0 / tri.h_target).round() as usize;
    let system = assemble(&tri, load).map_err(config_err)?;
    Ok((system, label))
}

fn penalty_config(
    settings: &Settings,
    args: &PenaltyArgs,
    system: &FemSystem,
) -> Result<L0PenaltyConfig, CliError> {
    let base = L0PenaltyConfig::default();
    let zero_sign: ZeroSignPolicy = settings
        .get("zero_sign", args.zero_sign.clone(), "zero".to_string())?
        .parse()
        .map_err(config_err)?;
    let selection = match settings.get("selection", args.selection.clone(), "greedy".to_string())?.as_str() {
        "greedy" => SelectionMode::Greedy,
        "exact" => SelectionMode::Exact,
        other => return Err(config_err(format!("unknown selection `{other}`"))),
    };
    let u0_file: Option<String> =
        settings.get_opt("u0_file", args.u0_file.as_ref().map(|p| p.display().to_string()))?;
    let init = match u0_file {
        Some(path) => {
            let full = read_field(&path).map_err(|e| config_err(format!("{path}: {e}")))?;
            if full.len() != system.num_nodes() {
                return Err(config_err(format!(
                    "{path}: field has {} values, mesh has {} nodes",
                    full.len(),
                    system.num_nodes()
                )));
            }
            InitPolicy::Custom(system.restrict(&full))
        }
        None => match settings.get("u0", args.u0.clone(), "unconstrained".to_string())?.as_str() {
            "unconstrained" => InitPolicy::UnconstrainedSolve,
            "zero" => InitPolicy::Zero,
            other => return Err(config_err(format!("unknown u0 policy `{other}`"))),
        },
    };
    let cfg = L0PenaltyConfig {
        k: settings.get("K", args.k, base.k)?,
        rho: settings.get("rho", args.rho, base.rho)?,
        schedule_lambda: settings.get_opt("schedule", args.schedule)?,
        zero_sign,
        init,
        selection,
        max_dc_iter: settings.get("max_iter", args.max_iter, base.max_dc_iter)?,
        ..base
    };
    cfg.validate(system).map_err(config_err)?;
    Ok(cfg)
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| solver_err(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn iteration_csv(sol: &L0Solution) -> String {
    let mut out = String::from("k,K_k,objective,gap,newton_iters,residual\n");
    for row in &sol.log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.k,
            fmt_float(row.budget),
            fmt_float(row.objective),
            fmt_float(row.gap),
            row.newton_iters,
            fmt_float(row.residual)
        );
    }
    out
}

fn write_outputs(
    system: &FemSystem,
    sol: &L0Solution,
    output: &OutputArgs,
    k: f64,
    row: &str,
    header: &str,
) -> Result<(), CliError> {
    emit(output.csv.as_deref(), &format!("{header}\n{row}\n"))?;
    if let Some(p) = &output.log_csv {
        emit(Some(p), &iteration_csv(sol))?;
    }
    if let Some(p) = &output.multiplier {
        write_field(p, &system.embed(&sol.report.scaled_gradient)).map_err(solver_err)?;
    }
    if let Some(p) = &output.field {
        write_field(p, &sol.u_full(system)).map_err(solver_err)?;
        if output.verify {
            let back = read_field(p).map_err(solver_err)?;
            check_field(system, &back, k, sol.l0, sol.gap.gap)?;
        }
    } else if output.verify {
        check_field(system, &sol.u_full(system), k, sol.l0, sol.gap.gap)?;
    }
    Ok(())
}

fn check_field(system: &FemSystem, u_full: &[f64], k: f64, l0: f64, gap: f64) -> Result<(), CliError> {
    let (l0_again, gap_again) = gap_of_field(system, u_full, k).map_err(solver_err)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-11 * (1.0 + a.abs().max(b.abs()));
    if close(l0, l0_again) && close(gap, gap_again.gap) {
        Ok(())
    } else {
        Err(solver_err(format!(
            "verification failed: l0 {l0} vs {l0_again}, gap {gap} vs {}",
            gap_again.gap
        )))
    }
}

const POISSON_HEADER: &str = "n,K,rho,f,l0,gap,dc_iters,ssn_iters,selection_mode,K_reductions";

fn poisson_row(n: usize, cfg: &L0PenaltyConfig, sol: &L0Solution) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        n,
        fmt_float(cfg.k),
        fmt_float(cfg.rho),
        fmt_float(sol.objective),
        fmt_float(sol.l0),
        fmt_float(sol.gap.gap),
        sol.dc_iters,
        sol.newton_iters,
        sol.selection.as_str(),
        if cfg.schedule_lambda.is_some() {
            sol.schedule_reductions.to_string()
        } else {
            String::new()
        }
    )
}

fn cmd_poisson(args: &PoissonArgs) -> Result<(), CliError> {
    let settings = Settings::load(args.mesh.config.as_deref())?;
    let (system, n) = build_system(&settings, &args.mesh, prototype_load)?;
    let cfg = penalty_config(&settings, &args.penalty, &system)?;
    settings.reject_unknown()?;
    let system = Arc::new(system);
    let problem = PoissonProblem::new(system.clone()).map_err(solver_err)?;
    let sol = solve_l0_penalized(&problem, &cfg).map_err(solver_err)?;
    let row = poisson_row(n, &cfg, &sol);
    write_outputs(&system, &sol, &args.output, cfg.k, &row, POISSON_HEADER)
}

fn cmd_control(args: &ControlArgs) -> Result<(), CliError> {
    let settings = Settings::load(args.mesh.config.as_deref())?;
    let (system, n) = build_system(&settings, &args.mesh, |_, _| 0.0)?;
    let defaults = ControlConfig::default();
    let alpha = settings.get("alpha", args.alpha, defaults.alpha)?;
    let beta = settings.get("beta", args.beta, defaults.beta)?;
    let yd_file: Option<String> =
        settings.get_opt("yd_file", args.yd_file.as_ref().map(|p| p.display().to_string()))?;
    let desired = match yd_file {
        Some(p) => Some(read_field(&p).map_err(|e| config_err(format!("{p}: {e}")))?),
        None => None,
    };
    let cfg = penalty_config(&settings, &args.penalty, &system)?;
    settings.reject_unknown()?;
    let system = Arc::new(system);
    let problem = control_reduced(system.clone(), &ControlConfig { alpha, beta, desired }).map_err(config_err)?;
    let sol = solve_l0_penalized(&problem, &cfg).map_err(solver_err)?;
    let header = format!("{POISSON_HEADER},alpha,beta,tracking_error");
    let row = format!(
        "{},{},{},{}",
        poisson_row(n, &cfg, &sol),
        fmt_float(alpha),
        fmt_float(beta),
        fmt_float(problem.tracking_error(&sol.u))
    );
    write_outputs(&system, &sol, &args.output, cfg.k, &row, &header)
}

fn cmd_sparsa(args: &SparsaArgs) -> Result<(), CliError> {
    let settings = Settings::load(args.mesh.config.as_deref())?;
    let (system, n) = build_system(&settings, &args.mesh, prototype_load)?;
    let beta: f64 = settings.get("sparsa_beta", args.beta, 4.36)?;
    if !(beta >= 0.0) {
        return Err(config_err(format!("beta must be nonnegative, got {beta}")));
    }
    let sparsa_cfg = SparsaConfig {
        max_iter: settings.get("max_iter", args.max_iter, SparsaConfig::default().max_iter)?,
        ..SparsaConfig::default()
    };
    settings.reject_unknown()?;
    let system = Arc::new(system);
    let problem = PoissonProblem::new(system.clone()).map_err(solver_err)?;
    let weights =
        lumped_l1_weights(beta, &system.restrict(&system.basis_integral)).map_err(config_err)?;
    let u0 = problem.unconstrained_minimizer().map_err(solver_err)?;
    let r = sparsa_solve(problem.hessian(), problem.q_smooth(), &weights, &sparsa_cfg, &u0)
        .map_err(solver_err)?;
    let l0 = weighted_l0(&system.w_of_free(&r.u), system.element_space()).map_err(solver_err)?;
    let text = format!(
        "n,beta,f,l0,iterations\n{},{},{},{},{}\n",
        n,
        fmt_float(beta),
        fmt_float(problem.value(&r.u)),
        fmt_float(l0),
        r.iterations
    );
    emit(args.csv.as_deref(), &text)?;
    if let Some(p) = &args.field {
        write_field(p, &system.embed(&r.u)).map_err(solver_err)?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let schedules: Vec<Option<f64>> = args
        .schedules
        .iter()
        .map(|s| match s.as_str() {
            "none" => Ok(None),
            v => v.parse().map(Some).map_err(|_| config_err(format!("bad schedule `{v}`"))),
        })
        .collect::<Result<_, _>>()?;
    let mut grid = Vec::new();
    for &n in &args.ns {
        for &k in &args.ks {
            for &rho in &args.rhos {
                for &lambda in &schedules {
                    grid.push((n, k, rho, lambda));
                }
            }
        }
    }
    let run = |&(n, k, rho, lambda): &(usize, f64, f64, Option<f64>)| -> Result<String, CliError> {
        let mesh = TriMesh::structured(n).map_err(config_err)?;
        let system = Arc::new(assemble(&mesh, prototype_load).map_err(config_err)?);
        let cfg = L0PenaltyConfig {
            k,
            rho,
            schedule_lambda: lambda,
            ..L0PenaltyConfig::default()
        };
        cfg.validate(&system).map_err(config_err)?;
        let problem = PoissonProblem::new(system).map_err(solver_err)?;
        let sol = solve_l0_penalized(&problem, &cfg).map_err(solver_err)?;
        Ok(format!(
            "{},{}",
            poisson_row(n, &cfg, &sol),
            lambda.map_or(String::new(), fmt_float)
        ))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(config_err)?;
    let rows: Vec<Result<String, CliError>> = pool.install(|| grid.par_iter().map(run).collect());
    let mut text = format!("{POISSON_HEADER},lambda\n");
    for row in rows {
        text.push_str(&row?);
        text.push('\n');
    }
    emit(args.csv.as_deref(), &text)
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let settings = Settings::load(args.mesh.config.as_deref())?;
    let (system, _) = build_system(&settings, &args.mesh, |_, _| 0.0)?;
    let k = settings.get("K", args.k, 0.25)?;
    settings.reject_unknown()?;
    let field = read_field(&args.field).map_err(config_err)?;
    if field.len() != system.num_nodes() {
        return Err(config_err(format!(
            "field has {} values, mesh has {} nodes",
            field.len(),
            system.num_nodes()
        )));
    }
    let (l0, gap) = gap_of_field(&system, &field, k).map_err(solver_err)?;
    println!("l0,gap\n{},{}", fmt_float(l0), fmt_float(gap.gap));
    if let Some(csv) = &args.csv {
        let text = std::fs::read_to_string(csv).map_err(|e| config_err(format!("{}: {e}", csv.display())))?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        let row: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        let column = |name: &str| -> Result<f64, CliError> {
            let i = header
                .iter()
                .position(|h| *h == name)
                .ok_or_else(|| config_err(format!("CSV has no `{name}` column")))?;
            row.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| config_err(format!("CSV `{name}` value missing")))
        };
        let (l0_row, gap_row) = (column("l0")?, column("gap")?);
        // The CSV carries 12 significant digits.
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(b.abs()) + 1e-300;
        if !close(l0_row, l0) || !close(gap_row, gap.gap) {
            return Err(solver_err(format!(
                "CSV row (l0 {l0_row}, gap {gap_row}) disagrees with field (l0 {l0}, gap {})",
                gap.gap
            )));
        }
    }
    Ok(())
}

pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Poisson(a) => cmd_poisson(a),
        Command::Control(a) => cmd_control(a),
        Command::Sparsa(a) => cmd_sparsa(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("l0dc: {e}");
            e.code()
        }
    }
}

/// Parses `args` and runs the selected command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}
