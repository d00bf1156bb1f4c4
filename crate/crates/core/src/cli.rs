//! Command-line front end.
//!
//! Every subcommand that writes `--out FILE` also writes
//! `FILE.manifest.json` recording the arguments, the resolved problem, seeds,
//! version, wall-clock time and SHA-256 digests of the outputs. `replay`
//! re-runs a manifest and checks the digests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::game::{self, PayoffMatrix, DEFAULT_TOL};
use crate::hamiltonian;
use crate::montecarlo::{self, RandomizationDevice, StrategyProfile};
use crate::partition::{self, Partition, PartitionError, PartitionParams, StudyRegion, SweepOrientation};
use crate::pde::{self, HamiltonianMode, SchemeError, SchemeParams, SpaceGrid, ValueField};
use crate::problem::{self, Problem};

pub const THREADS_ENV: &str = "MIXEDVALUE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or inputs; exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Failure while computing or writing; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<problem::ProblemError> for CliError {
    fn from(e: problem::ProblemError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        match e {
            SchemeError::Problem(p) => p.into(),
            SchemeError::CflLimit { .. } | SchemeError::InvalidParams(_) | SchemeError::FieldSize { .. } => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<PartitionError> for CliError {
    fn from(e: PartitionError) -> Self {
        match e {
            PartitionError::Scheme(s) => s.into(),
            PartitionError::Problem(p) => p.into(),
            PartitionError::Invalid(_) | PartitionError::MeshTooCoarse { .. } | PartitionError::InvalidSpec(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<montecarlo::McError> for CliError {
    fn from(e: montecarlo::McError) -> Self {
        use montecarlo::McError::*;
        match e {
            Problem(p) => p.into(),
            NotClassical(_) | Profile(_) | Invalid(_) => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<game::GameError> for CliError {
    fn from(e: game::GameError) -> Self {
        match e {
            game::GameError::GapNotReached { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "mixedvalue", version, about = "Mixed-strategy values of zero-sum stochastic differential games")]
pub struct Cli {
    /// Worker threads (falls back to MIXEDVALUE_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a matrix game given as CSV (one row per line).
    Game(GameArgs),
    /// Tabulate H⁻, H⁺ and the relaxed Hamiltonian over a (p, A) grid.
    Hamiltonian(HamiltonianArgs),
    /// Solve the HJBI equation with the explicit monotone scheme.
    SolvePde(SolvePdeArgs),
    /// Backward induction over a time partition.
    SolvePartition(SolvePartitionArgs),
    /// Partition values against the PDE value for several meshes.
    Converge(ConvergeArgs),
    /// Monte Carlo estimate of the expected payoff under a strategy profile.
    Simulate(SimulateArgs),
    /// Sup-norm gaps between the pure lower, pure upper and mixed values.
    GapReport(GapReportArgs),
    /// Re-run a manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GameArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProblemArg {
    /// Catalog name or path to a JSON problem file.
    #[arg(long)]
    pub problem: String,
}

#[derive(Debug, Args)]
pub struct HamiltonianArgs {
    #[command(flatten)]
    pub problem: ProblemArg,
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    /// State, comma separated (defaults to the origin).
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub y: f64,
    /// `start:stop:count` for p along the first axis.
    #[arg(long, default_value = "-2:2:9")]
    pub p: String,
    /// `start:stop:count` for the diagonal of A.
    #[arg(long, default_value = "0:2:3")]
    pub a: String,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Relaxed,
    #[value(name = "pure_lower")]
    PureLower,
    #[value(name = "pure_upper")]
    PureUpper,
}

impl From<ModeArg> for HamiltonianMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Relaxed => HamiltonianMode::Relaxed,
            ModeArg::PureLower => HamiltonianMode::PureLower,
            ModeArg::PureUpper => HamiltonianMode::PureUpper,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolvePdeArgs {
    #[command(flatten)]
    pub problem: ProblemArg,
    /// Nodes per axis (defaults to the problem's).
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub dt_safety: f64,
    #[arg(long, value_enum, default_value = "relaxed")]
    pub mode: ModeArg,
    /// Write every time level, not just t = 0.
    #[arg(long)]
    pub all_levels: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrientationArg {
    Lower,
    Upper,
    Both,
}

#[derive(Debug, Args)]
pub struct SolvePartitionArgs {
    #[command(flatten)]
    pub problem: ProblemArg,
    #[arg(long)]
    pub nx: Option<usize>,
    /// Uniform partition with this many intervals.
    #[arg(long, conflicts_with = "times")]
    pub n_steps: Option<usize>,
    /// Explicit partition times, comma separated, from 0 to T.
    #[arg(long)]
    pub times: Option<String>,
    #[arg(long, value_enum, default_value = "both")]
    pub orientation: OrientationArg,
    #[arg(long, value_enum, default_value = "relaxed")]
    pub mode: ModeArg,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub dt_safety: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    Interior,
    Full,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub problem: ProblemArg,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long, default_value = "2,4,8,16,32")]
    pub meshes: String,
    #[arg(long, value_enum, default_value = "interior")]
    pub region: RegionArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub problem: ProblemArg,
    #[arg(long, default_value_t = 16)]
    pub n_steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    /// `saddle`, `uniform`, or `file PATH` (a JSON strategy profile).
    #[arg(long, num_args = 1..=2, default_values = ["saddle"])]
    pub profile: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial state, comma separated (defaults to the origin).
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub euler_substeps: usize,
    /// Grid for the saddle profile (defaults to the problem's).
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GapReportArgs {
    #[command(flatten)]
    pub problem: ProblemArg,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub dt_safety: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where replayed outputs go (defaults to a sibling `.replay` file).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Reproducibility record written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub version: String,
    /// Resolved problem configuration, if the command used one.
    pub config: Option<serde_json::Value>,
    pub seeds: Vec<u64>,
    /// Grid, partition and scheme parameters actually used.
    pub parameters: serde_json::Value,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// What a subcommand produced, before it is written.
struct Output {
    body: String,
    config: Option<serde_json::Value>,
    seeds: Vec<u64>,
    parameters: serde_json::Value,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Validation(format!("{THREADS_ENV}={v} is not a thread count"))),
        _ => Ok(None),
    }
}

/// Runs a parsed command.
pub fn run(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    let threads = thread_count(cli.threads)?;
    if threads == Some(0) {
        return Err(CliError::Validation("--threads must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let threads = pool.current_num_threads();
    pool.install(|| execute(cli.command, argv, threads))
}

fn execute(command: Command, argv: &[String], threads: usize) -> Result<(), CliError> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let (name, out, output) = match command {
        Command::Replay(args) => return replay(&args),
        Command::Game(a) => ("game", a.out.clone(), cmd_game(&a)?),
        Command::Hamiltonian(a) => ("hamiltonian", a.out.clone(), cmd_hamiltonian(&a)?),
        Command::SolvePde(a) => ("solve-pde", a.out.clone(), cmd_solve_pde(&a)?),
        Command::SolvePartition(a) => ("solve-partition", a.out.clone(), cmd_solve_partition(&a)?),
        Command::Converge(a) => ("converge", a.out.clone(), cmd_converge(&a)?),
        Command::Simulate(a) => ("simulate", a.out.clone(), cmd_simulate(&a)?),
        Command::GapReport(a) => ("gap-report", a.out.clone(), cmd_gap_report(&a)?),
    };
    match out {
        None => {
            print!("{}", output.body);
            Ok(())
        }
        Some(path) => {
            std::fs::write(&path, &output.body).map_err(|e| io_err(&path, e))?;
            let manifest = RunManifest {
                subcommand: name.to_string(),
                argv: argv.to_vec(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                config: output.config,
                seeds: output.seeds,
                parameters: output.parameters,
                threads,
                started_unix,
                wall_clock_seconds: started.elapsed().as_secs_f64(),
                outputs: vec![OutputDigest {
                    path: path.display().to_string(),
                    sha256: sha256_hex(output.body.as_bytes()),
                }],
            };
            let mpath = manifest_path(&path);
            let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&mpath, e))?;
            std::fs::write(&mpath, text + "\n").map_err(|e| io_err(&mpath, e))?;
            log::info!("wrote {} and {}", path.display(), mpath.display());
            Ok(())
        }
    }
}

fn load(arg: &ProblemArg) -> Result<(Problem, serde_json::Value), CliError> {
    let prob = problem::resolve(&arg.problem).map_err(|e| CliError::Validation(format!("problem `{}`: {e}", arg.problem)))?;
    for w in &prob.warnings {
        eprintln!("warning: {w}");
    }
    let config = serde_json::to_value(&prob.config).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok((prob, config))
}

fn grid_for(prob: &Problem, nx: Option<usize>) -> Result<SpaceGrid, CliError> {
    let nx = nx.unwrap_or(prob.default_nx);
    if nx < 3 {
        return Err(CliError::Validation(format!("--nx must be at least 3, got {nx}")));
    }
    Ok(SpaceGrid::new(prob, nx))
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| CliError::Validation(format!("--{flag}: cannot parse `{p}`"))))
        .collect()
}

fn parse_range(flag: &str, s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Validation(format!("--{flag}: expected start:stop:count, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    Ok(match n {
        0 => return Err(bad()),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    })
}

fn state_arg(flag: &str, prob: &Problem, s: Option<&str>) -> Result<Vec<f64>, CliError> {
    match s {
        None => Ok(vec![0.0; prob.d]),
        Some(s) => {
            let x: Vec<f64> = parse_list(flag, s)?;
            if x.len() != prob.d {
                return Err(CliError::Validation(format!("--{flag} needs {} coordinates, got {}", prob.d, x.len())));
            }
            Ok(x)
        }
    }
}

fn json_string<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| CliError::Runtime(e.to_string()))
}

fn to_value<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

/// Reads a matrix from CSV: one row per non-empty line, comma separated.
pub fn read_matrix_csv(path: &Path) -> Result<PayoffMatrix, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| CliError::Validation(format!("{}:{}: {e}", path.display(), line_no + 1)))?;
        rows.push(row);
    }
    PayoffMatrix::from_rows(&rows).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct GameReport {
    rows: usize,
    cols: usize,
    value: f64,
    mu: Vec<f64>,
    nu: Vec<f64>,
    duality_gap: f64,
    pure_lower: f64,
    pure_upper: f64,
}

fn cmd_game(a: &GameArgs) -> Result<Output, CliError> {
    let m = read_matrix_csv(&a.matrix)?;
    let sol = game::solve_game(&m, a.tol)?;
    let (pure_lower, pure_upper) = game::pure_minimax(&m);
    let report = GameReport {
        rows: m.rows(),
        cols: m.cols(),
        value: sol.value,
        mu: sol.mu_star.weights().to_vec(),
        nu: sol.nu_star.weights().to_vec(),
        duality_gap: sol.duality_gap,
        pure_lower,
        pure_upper,
    };
    Ok(Output {
        body: json_string(&report)?,
        config: None,
        seeds: vec![],
        parameters: serde_json::json!({ "matrix": a.matrix.display().to_string(), "tol": a.tol }),
    })
}

fn cmd_hamiltonian(a: &HamiltonianArgs) -> Result<Output, CliError> {
    let (prob, config) = load(&a.problem)?;
    let x = state_arg("x", &prob, a.x.as_deref())?;
    let ps = parse_range("p", &a.p)?;
    let avals = parse_range("a", &a.a)?;
    let rows = hamiltonian::scan(&prob, a.t, &x, a.y, &ps, &avals, a.tol).map_err(|e| match e {
        hamiltonian::HamiltonianError::Problem(p) => CliError::from(p),
        hamiltonian::HamiltonianError::Game(g) => CliError::from(g),
        other => CliError::Validation(other.to_string()),
    })?;
    let mut body = String::from("t,x,p,a,h_minus,h_plus,h_relaxed,gap\n");
    for r in &rows {
        let _ = writeln!(body, "{},{},{},{},{},{},{},{}", r.t, r.x, r.p, r.a, r.h_minus, r.h_plus, r.h_relaxed, r.gap);
    }
    Ok(Output {
        body,
        config: Some(config),
        seeds: vec![],
        parameters: serde_json::json!({ "t": a.t, "x": x, "y": a.y, "p": ps, "a": avals, "tol": a.tol }),
    })
}

fn coord_header(d: usize) -> &'static str {
    if d == 1 {
        "t,x1"
    } else {
        "t,x1,x2"
    }
}

fn write_coords(body: &mut String, grid: &SpaceGrid, t: f64, node: usize) {
    let x = grid.point(node);
    if grid.d == 1 {
        let _ = write!(body, "{t},{}", x[0]);
    } else {
        let _ = write!(body, "{t},{},{}", x[0], x[1]);
    }
}

fn fields_csv(grid: &SpaceGrid, header: &[&str], columns: &[&[ValueField]]) -> String {
    let mut body = String::from(coord_header(grid.d));
    for h in header {
        body.push(',');
        body.push_str(h);
    }
    body.push('\n');
    let levels = columns[0].len();
    for level in 0..levels {
        let t = columns[0][level].t;
        for node in 0..grid.len() {
            write_coords(&mut body, grid, t, node);
            for col in columns {
                let _ = write!(body, ",{}", col[level].values[node]);
            }
            body.push('\n');
        }
    }
    body
}

fn cmd_solve_pde(a: &SolvePdeArgs) -> Result<Output, CliError> {
    let (prob, config) = load(&a.problem)?;
    let grid = grid_for(&prob, a.nx)?;
    let params = SchemeParams { cfl_safety: a.dt_safety, mode: a.mode.into(), ..SchemeParams::default() };
    let dt = params.resolve_dt(&prob, &grid)?;
    let levels = if a.all_levels {
        pde::solve(&prob, &grid, &params)?
    } else {
        vec![pde::solve_initial(&prob, &grid, &params)?]
    };
    let steps = pde::step_count(prob.horizon, dt);
    Ok(Output {
        body: fields_csv(&grid, &["value"], &[&levels]),
        config: Some(config),
        seeds: vec![],
        parameters: serde_json::json!({
            "nx": grid.n[0], "dt": prob.horizon / steps as f64, "steps": steps,
            "scheme": to_value(&params),
        }),
    })
}

fn partition_from(prob: &Problem, n_steps: Option<usize>, times: Option<&str>) -> Result<Partition, CliError> {
    Ok(match (n_steps, times) {
        (_, Some(list)) => Partition::from_times(parse_list("times", list)?, prob.horizon)?,
        (Some(n), None) => Partition::uniform(n, prob.horizon)?,
        (None, None) => return Err(CliError::Validation("give --n-steps or --times".into())),
    })
}

fn cmd_solve_partition(a: &SolvePartitionArgs) -> Result<Output, CliError> {
    let (prob, config) = load(&a.problem)?;
    let grid = grid_for(&prob, a.nx)?;
    let pi = partition_from(&prob, a.n_steps, a.times.as_deref())?;
    let params = PartitionParams {
        scheme: SchemeParams { cfl_safety: a.dt_safety, mode: a.mode.into(), ..SchemeParams::default() },
        substeps: a.substeps,
        record_profile: false,
    };
    let orientations: &[(SweepOrientation, &str)] = match a.orientation {
        OrientationArg::Lower => &[(SweepOrientation::Lower, "w_pi")],
        OrientationArg::Upper => &[(SweepOrientation::Upper, "u_pi")],
        OrientationArg::Both => &[(SweepOrientation::Lower, "w_pi"), (SweepOrientation::Upper, "u_pi")],
    };
    let mut columns = Vec::new();
    let mut substeps = Vec::new();
    for (o, _) in orientations {
        let r = partition::dpp_sweep(&prob, &grid, &pi, &params, *o)?;
        substeps = r.substeps;
        columns.push(r.levels);
    }
    let header: Vec<&str> = orientations.iter().map(|o| o.1).collect();
    let cols: Vec<&[ValueField]> = columns.iter().map(|c| c.as_slice()).collect();
    Ok(Output {
        body: fields_csv(&grid, &header, &cols),
        config: Some(config),
        seeds: vec![],
        parameters: serde_json::json!({
            "nx": grid.n[0], "partition": pi.times(), "substeps": substeps, "params": to_value(&params),
        }),
    })
}

fn cmd_converge(a: &ConvergeArgs) -> Result<Output, CliError> {
    let (prob, config) = load(&a.problem)?;
    let grid = grid_for(&prob, a.nx)?;
    let meshes: Vec<usize> = parse_list("meshes", &a.meshes)?;
    if meshes.contains(&0) {
        return Err(CliError::Validation("--meshes entries must be positive".into()));
    }
    let params = PartitionParams::default();
    let steps = partition::aligned_reference_steps(&prob, &grid, &params, &meshes);
    let reference = partition::reference_value(&prob, &grid, &params, steps)?;
    let region = match a.region {
        RegionArg::Interior => StudyRegion::Interior,
        RegionArg::Full => StudyRegion::Full,
    };
    let rows = partition::convergence_study(&prob, &grid, &meshes, &params, &reference, region)?;
    let mut body = String::from("n,mesh,w_vs_v,u_vs_v,w_vs_u,time_modulus,lipschitz\n");
    for r in &rows {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{}",
            r.n, r.mesh, r.w_vs_v, r.u_vs_v, r.w_vs_u, r.time_modulus, r.lipschitz
        );
    }
    Ok(Output {
        body,
        config: Some(config),
        seeds: vec![],
        parameters: serde_json::json!({
            "nx": grid.n[0], "meshes": meshes, "reference_steps": steps, "region": format!("{:?}", a.region).to_lowercase(),
            "lipschitz_bound": prob.bounds.value_lipschitz, "time_modulus_bound": prob.time_modulus_bound(),
        }),
    })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Output, CliError> {
    let (prob, config) = load(&a.problem)?;
    montecarlo::check_classical(&prob)?;
    if a.n_steps == 0 {
        return Err(CliError::Validation("--n-steps must be positive".into()));
    }
    let pi = Partition::uniform(a.n_steps, prob.horizon)?;
    let x0 = state_arg("x0", &prob, a.x0.as_deref())?;
    let profile = match a.profile.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["saddle"] => {
            let grid = grid_for(&prob, a.nx)?;
            let params = PartitionParams { record_profile: true, ..PartitionParams::default() };
            partition::dpp_sweep(&prob, &grid, &pi, &params, SweepOrientation::Lower)?
                .profile
                .expect("profile was requested")
        }
        ["uniform"] => StrategyProfile::uniform(&prob, &pi),
        ["file", path] => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{path}: {e}")))?;
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{path}: {e}")))?
        }
        other => {
            return Err(CliError::Validation(format!(
                "--profile expects saddle, uniform or `file PATH`, got {}",
                other.join(" ")
            )))
        }
    };
    let device = RandomizationDevice::new(a.seed);
    let ens = montecarlo::simulate(&prob, &pi, &profile, &x0, a.paths, a.euler_substeps, &device)?;
    let (mean, se) = montecarlo::estimate_payoff(&ens, &prob)?;
    Ok(Output {
        body: format!("estimate,std_error,paths,seed\n{mean},{se},{},{}\n", a.paths, a.seed),
        config: Some(config),
        seeds: vec![a.seed],
        parameters: serde_json::json!({
            "partition": pi.times(), "x0": x0, "euler_substeps": a.euler_substeps,
            "profile": a.profile, "nx": a.nx.unwrap_or(prob.default_nx),
        }),
    })
}

fn cmd_gap_report(a: &GapReportArgs) -> Result<Output, CliError> {
    let (prob, config) = load(&a.problem)?;
    let grid = grid_for(&prob, a.nx)?;
    let params = SchemeParams { cfl_safety: a.dt_safety, ..SchemeParams::default() };
    let rep = pde::gap_report(&prob, &grid, &params)?;
    let mask = match &rep.window {
        Some(w) => grid.window_mask(w),
        None => vec![true; grid.len()],
    };
    let sup = |f: &ValueField| f.values.iter().zip(&mask).filter(|(_, m)| **m).fold(0.0f64, |s, (v, _)| s.max(v.abs()));
    let mut body = String::from("metric,value\n");
    for (k, v) in [
        ("pure_gap", rep.pure_gap),
        ("mixed_vs_lower", rep.mixed_vs_lower),
        ("mixed_vs_upper", rep.mixed_vs_upper),
        ("sup_abs_lower", sup(&rep.lower)),
        ("sup_abs_mixed", sup(&rep.mixed)),
        ("sup_abs_upper", sup(&rep.upper)),
    ] {
        let _ = writeln!(body, "{k},{v}");
    }
    Ok(Output {
        body,
        config: Some(config),
        seeds: vec![],
        parameters: serde_json::json!({ "nx": grid.n[0], "window": rep.window, "scheme": to_value(&params) }),
    })
}

fn replay(a: &ReplayArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| CliError::Validation(format!("{}: {e}", a.manifest.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", a.manifest.display())))?;
    let original = manifest
        .outputs
        .first()
        .ok_or_else(|| CliError::Validation("manifest lists no outputs".into()))?;
    let target = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.replay", original.path)));
    let mut argv = manifest.argv.clone();
    let pos = argv
        .iter()
        .position(|s| s == "--out")
        .filter(|&i| i + 1 < argv.len())
        .ok_or_else(|| CliError::Validation("manifest argv has no --out".into()))?;
    argv[pos + 1] = target.display().to_string();
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Validation(e.to_string()))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Validation("cannot replay a replay".into()));
    }
    run(cli, &argv)?;
    let bytes = std::fs::read(&target).map_err(|e| io_err(&target, e))?;
    let digest = sha256_hex(&bytes);
    if digest == original.sha256 {
        println!("replay ok: {} reproduces {} ({digest})", target.display(), original.path);
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "replay mismatch: {} has sha256 {digest}, manifest records {}",
            target.display(),
            original.sha256
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_range("p", "-1:1:3").unwrap(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(parse_range("p", "2:5:1").unwrap(), vec![2.0]);
        assert!(parse_range("p", "1:2").is_err());
        assert_eq!(parse_list::<usize>("meshes", "2, 4,8").unwrap(), vec![2, 4, 8]);
        assert!(parse_list::<usize>("meshes", "2,x").is_err());
    }

    #[test]
    fn digest_and_manifest_path() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(manifest_path(Path::new("out/v.csv")), PathBuf::from("out/v.csv.manifest.json"));
    }

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(dispatch(["mixedvalue", "frobnicate"]), 2);
        assert_eq!(dispatch(["mixedvalue"]), 2);
    }

    #[test]
    fn error_classes() {
        assert_eq!(CliError::from(problem::ProblemError::MissingKey("d")).exit_code(), 2);
        assert_eq!(CliError::from(SchemeError::NonFinite { node: 0, t: 0.0 }).exit_code(), 1);
        assert_eq!(CliError::from(montecarlo::McError::NotClassical("y")).exit_code(), 2);
    }
}
