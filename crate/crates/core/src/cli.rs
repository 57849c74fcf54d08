//! The `geosched` command line.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 invalid input.
//!
//! Every JSON file written carries a `manifest` object. Everything in it
//! except `timing` is a pure function of the command line and input bytes.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::combinatorics::TspSolver;
use crate::evaluation::{compare_baselines, evaluate_assignment, Assignment};
use crate::netmodel::{generate_scenario, symmetrize, NetworkProfile, ScenarioCase, ScenarioSpec};
use crate::scheduler::{evolve, LocalSearchKind, ScheduleConfig};
use crate::workload::{load_workload, validate_workload, WorkloadSpec};
use crate::CommGraph;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INVALID: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "geosched",
    version,
    about = "Communication-aware scheduling of pipeline and data parallel training"
)]
pub struct Cli {
    /// Worker threads for parallel cost evaluation; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate network profiles.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Search for a low-cost partition.
    Schedule(ScheduleArgs),
    /// Score a fixed assignment without re-optimizing it.
    Eval(EvalArgs),
    /// Compare the scheduler against KL refinement and random layouts.
    Compare(CompareArgs),
}

#[derive(Debug, Subcommand)]
pub enum ScenarioAction {
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseArg {
    Preset(ScenarioCase),
    Custom,
}

fn parse_case(s: &str) -> Result<CaseArg, String> {
    if s == "custom" {
        return Ok(CaseArg::Custom);
    }
    s.parse::<u8>()
        .ok()
        .and_then(ScenarioCase::from_number)
        .map(CaseArg::Preset)
        .ok_or_else(|| format!("expected 1, 2, 3, 4, 5 or custom, got {s:?}"))
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Preset number 1-5, or `custom` together with --spec.
    #[arg(long, value_parser = parse_case)]
    pub case: CaseArg,
    /// Scenario spec JSON for `--case custom`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the seed (presets default to 0, specs to their own).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LocalSearchArg {
    Ours,
    Kl,
    None,
}

impl From<LocalSearchArg> for LocalSearchKind {
    fn from(a: LocalSearchArg) -> Self {
        match a {
            LocalSearchArg::Ours => LocalSearchKind::Ours,
            LocalSearchArg::Kl => LocalSearchKind::Kl,
            LocalSearchArg::None => LocalSearchKind::None,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TspArg {
    Exact,
    Heuristic,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub workload: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub pop: usize,
    #[arg(long, default_value_t = 1000)]
    pub gens: usize,
    #[arg(long, value_enum, default_value_t = LocalSearchArg::Ours)]
    pub local_search: LocalSearchArg,
    #[arg(long, default_value_t = 8)]
    pub max_passes: usize,
    /// Stop after this many generations without improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_enum, default_value_t = TspArg::Exact)]
    pub tsp: TspArg,
}

impl SearchArgs {
    fn config(&self) -> ScheduleConfig {
        ScheduleConfig {
            pop_size: self.pop,
            generations: self.gens,
            local_search: self.local_search.into(),
            max_passes: self.max_passes,
            seed: self.seed,
            patience: self.patience,
            tsp: match self.tsp {
                TspArg::Exact => TspSolver::Exact,
                TspArg::Heuristic => TspSolver::Heuristic,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of best and mean population cost per generation.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub assignment: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub random_trials: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Invalid(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
            Failure::Invalid(_) => EXIT_INVALID,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Invalid(m) => m,
        }
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

#[derive(Debug, Clone, Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

/// Provenance of one run, embedded in every JSON output.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: Vec<String>,
    inputs: Vec<InputDigest>,
    seeds: Vec<u64>,
    version: &'static str,
    timing: Timing,
}

#[derive(Debug, Serialize)]
struct Timing {
    wall_clock_s: f64,
}

struct Session {
    command: Vec<String>,
    inputs: Vec<InputDigest>,
    seeds: Vec<u64>,
    started: Instant,
}

impl Session {
    fn read(&mut self, path: &Path) -> CmdResult<Vec<u8>> {
        let bytes = fs::read(path)
            .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    fn manifest(&self) -> RunManifest {
        RunManifest {
            command: self.command.clone(),
            inputs: self.inputs.clone(),
            seeds: self.seeds.clone(),
            version: env!("CARGO_PKG_VERSION"),
            timing: Timing {
                wall_clock_s: self.started.elapsed().as_secs_f64(),
            },
        }
    }

    fn with_manifest(&self, payload: impl Serialize) -> CmdResult<String> {
        let mut value = serde_json::to_value(payload).map_err(crate::Error::from)?;
        let manifest = serde_json::to_value(self.manifest()).map_err(crate::Error::from)?;
        match &mut value {
            Value::Object(map) => {
                map.insert("manifest".into(), manifest);
            }
            other => {
                value = json!({ "result": other.take(), "manifest": manifest });
            }
        }
        Ok(serde_json::to_string_pretty(&value).map_err(crate::Error::from)? + "\n")
    }
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents)
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn emit(stdout: &mut dyn Write, line: &str) -> CmdResult {
    writeln!(stdout, "{line}").map_err(|e| Failure::Io(format!("cannot write output: {e}")))
}

fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8], what: &Path) -> CmdResult<T> {
    serde_json::from_slice(bytes).map_err(|e| Failure::Invalid(format!("{}: {e}", what.display())))
}

fn load_problem(s: &mut Session, p: &ProblemArgs) -> CmdResult<(CommGraph, WorkloadSpec)> {
    let profile_bytes = s.read(&p.scenario)?;
    let profile = NetworkProfile::from_json_slice(&profile_bytes)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", p.scenario.display())))?;
    let workload_bytes = s.read(&p.workload)?;
    let w = load_workload(&workload_bytes)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", p.workload.display())))?;
    validate_workload(&w, profile.n())?;
    Ok((symmetrize(&profile), w))
}

fn cmd_gen(s: &mut Session, a: &GenArgs, stdout: &mut dyn Write) -> CmdResult {
    let mut spec = match (a.case, &a.spec) {
        (CaseArg::Custom, Some(path)) => {
            let bytes = s.read(path)?;
            parse_json::<ScenarioSpec>(&bytes, path)?
        }
        (CaseArg::Custom, None) => {
            return Err(Failure::Usage("--case custom requires --spec".into()))
        }
        (CaseArg::Preset(_), Some(_)) => {
            return Err(Failure::Usage(
                "--spec is only valid with --case custom".into(),
            ))
        }
        (CaseArg::Preset(case), None) => {
            ScenarioSpec::preset(case, 0).expect("numbered cases have presets")
        }
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    s.seeds.push(spec.seed);
    let profile = generate_scenario(&spec)?;
    let text = s.with_manifest(profile.to_file())?;
    match &a.out {
        Some(path) => write_file(path, &text),
        None => emit(stdout, text.trim_end()),
    }
}

fn cmd_schedule(s: &mut Session, a: &ScheduleArgs, stdout: &mut dyn Write) -> CmdResult {
    let (g, w) = load_problem(s, &a.problem)?;
    let cfg = a.search.config();
    s.seeds.push(cfg.seed);
    let result = evolve(&g, &w, &cfg)?;
    if let Some(path) = &a.out {
        let payload = json!({ "config": cfg, "result": result });
        write_file(path, &s.with_manifest(payload)?)?;
    }
    if let Some(path) = &a.trace {
        write_file(path, &result.trace_csv())?;
    }
    emit(stdout, &result.best_cost.total.to_string())
}

fn cmd_eval(s: &mut Session, a: &EvalArgs, stdout: &mut dyn Write) -> CmdResult {
    let (g, w) = load_problem(s, &a.problem)?;
    let bytes = s.read(&a.assignment)?;
    let assignment: Assignment = parse_json(&bytes, &a.assignment)?;
    let cost = evaluate_assignment(&g, &assignment, &w)?;
    if let Some(path) = &a.out {
        write_file(path, &s.with_manifest(&cost)?)?;
    }
    emit(
        stdout,
        &serde_json::to_string(&cost).map_err(crate::Error::from)?,
    )
}

fn cmd_compare(s: &mut Session, a: &CompareArgs, stdout: &mut dyn Write) -> CmdResult {
    let (g, w) = load_problem(s, &a.problem)?;
    let cfg = a.search.config();
    s.seeds.push(cfg.seed);
    let trials = usize::try_from(a.random_trials)
        .map_err(|_| Failure::Usage("--random-trials is too large".into()))?;
    let report = compare_baselines(&g, &w, &cfg, trials)?;
    if let Some(path) = &a.out {
        write_file(path, &s.with_manifest(&report)?)?;
    }
    emit(stdout, &report.speedup_vs_mean_random.to_string())
}

fn dispatch(cli: &Cli, s: &mut Session, stdout: &mut Vec<u8>) -> CmdResult {
    match &cli.command {
        Command::Scenario {
            action: ScenarioAction::Gen(a),
        } => cmd_gen(s, a, stdout),
        Command::Schedule(a) => cmd_schedule(s, a, stdout),
        Command::Eval(a) => cmd_eval(s, a, stdout),
        Command::Compare(a) => cmd_compare(s, a, stdout),
    }
}

/// Usage line of the deepest subcommand named in `args`.
fn usage_for(args: &[OsString]) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let mut cur = &mut cmd;
    for a in args.iter().skip(1) {
        let Some(name) = a.to_str() else { break };
        if cur.find_subcommand(name).is_none() {
            continue;
        }
        cur = cur.find_subcommand_mut(name).expect("just found");
    }
    cur.render_usage().to_string()
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if e.use_stderr() {
                let text = e.render().to_string();
                eprint!("{text}");
                if !text.contains("Usage:") {
                    eprintln!("\n{}", usage_for(&args));
                }
            } else {
                let _ = write!(stdout, "{e}");
            }
            return code;
        }
    };
    let mut session = Session {
        // the program name is dropped so that manifests do not depend on
        // how the binary was invoked
        command: args
            .iter()
            .skip(1)
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        inputs: Vec::new(),
        seeds: Vec::new(),
        started: Instant::now(),
    };

    // buffered so the command can run inside a pool that needs `Send`
    let mut buffer = Vec::new();
    let outcome = match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, &mut session, &mut buffer)),
            Err(e) => Err(Failure::Io(format!("cannot start thread pool: {e}"))),
        },
        None => dispatch(&cli, &mut session, &mut buffer),
    }
    .and_then(|()| {
        stdout
            .write_all(&buffer)
            .map_err(|e| Failure::Io(format!("cannot write output: {e}")))
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}
