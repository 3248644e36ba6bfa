//! The `tom` command line: conflict detection over merge scenarios, UUT
//! selection, benchmark construction, test replay and dependency dumps.
//!
//! Every subcommand is also callable as a function returning its exit code,
//! which is how the integration tests drive it.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tom_core::depgraph::extract_dependencies;
use tom_core::minilang::{run_test, Value, DEFAULT_BUDGET};
use tom_core::scenario::{
    build_conflict_3way, build_conflict_octopus, load_fix_input, load_scenario, load_script, load_version,
    write_scenario, MergeScenario, MutationOperator, Role, ScenarioManifest,
};
use tom_core::testgen::{detect, ConflictReport, Criteria, GenConfig};
use tom_core::uut_select::{select_uuts, SelectionConfig};

pub const SCHEMA: &str = "tom-report/1";

/// Exit code for a run that found nothing to report.
pub const EXIT_OK: i32 = 0;
/// Exit code for conflicts found or assertions failed.
pub const EXIT_FOUND: i32 = 1;
/// Exit code for usage, input and precondition errors.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tom", version, about = "Generate tests that reveal semantic merge conflicts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for conflict-revealing tests on every generation target.
    Detect(DetectArgs),
    /// Print the units under test selected for one version.
    SelectUuts(SelectArgs),
    /// Build conflict scenarios from a bug fix by mutation and merging.
    GenBench(GenBenchArgs),
    /// Replay a `.mlgtest` script on one version.
    RunTest(RunTestArgs),
    /// Dump the dependency graph of one version.
    Deps(DepsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriteriaArg {
    Diffline,
    Multi,
}

impl From<CriteriaArg> for Criteria {
    fn from(c: CriteriaArg) -> Self {
        match c {
            CriteriaArg::Diffline => Criteria::DiffLine,
            CriteriaArg::Multi => Criteria::Multi,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    /// Impact propagation depth.
    #[arg(long, default_value_t = 5)]
    pub depth: usize,
    /// Maximum number of units under test.
    #[arg(long, default_value_t = 3)]
    pub max_uuts: usize,
}

impl SelectionArgs {
    fn config(&self) -> SelectionConfig {
        SelectionConfig { max_depth: self.depth, max_uuts: self.max_uuts }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    /// Scenario manifest.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Candidate evaluations per generation target.
    #[arg(long, default_value_t = 2000)]
    pub budget: usize,
    /// Interpreter steps per test execution.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub exec_budget: u64,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[arg(long, value_enum, default_value_t = CriteriaArg::Diffline)]
    pub criteria: CriteriaArg,
    /// Stop after the first conflict-revealing test (default).
    #[arg(long, conflicts_with = "exhaust")]
    pub stop_first: bool,
    /// Spend the whole budget on every target.
    #[arg(long)]
    pub exhaust: bool,
    #[arg(long, default_value_t = 5)]
    pub stability_runs: usize,
    #[arg(long, default_value_t = 20)]
    pub population: usize,
    /// Worker threads for candidate evaluation (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Report path; the report goes to standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl DetectArgs {
    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            seed: self.seed,
            exec_budget: self.exec_budget,
            search_budget: self.budget,
            population: self.population,
            criteria: self.criteria.into(),
            stability_runs: self.stability_runs,
            stop_first: !self.exhaust,
            selection: self.selection.config(),
            jobs: self.jobs,
            ..GenConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Version to select for: `merge`, `ancestor` or `parentK`.
    #[arg(long, default_value = "merge")]
    pub target: Role,
    #[command(flatten)]
    pub selection: SelectionArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenBenchArgs {
    /// Manifest naming the buggy and fixed versions and the fix test.
    #[arg(long)]
    pub fix_manifest: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Maximum number of 3-way scenarios.
    #[arg(long, default_value_t = 10)]
    pub limit: usize,
    /// Also extend each 3-way scenario into an octopus scenario.
    #[arg(long)]
    pub octopus: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunTestArgs {
    /// The `.mlgtest` script.
    #[arg(long)]
    pub test: PathBuf,
    /// Directory of `.mlg` files to run on.
    #[arg(long, conflicts_with_all = ["scenario", "role"], required_unless_present = "scenario")]
    pub version: Option<PathBuf>,
    /// Scenario manifest; combine with `--role`.
    #[arg(long, requires = "role")]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub role: Option<Role>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub exec_budget: u64,
    /// Print the outcome as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Json,
    Dot,
}

#[derive(Debug, Clone, Args)]
pub struct DepsArgs {
    #[arg(long)]
    pub version: PathBuf,
    #[arg(long, value_enum, default_value_t = GraphFormat::Json)]
    pub format: GraphFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub seed: u64,
    pub search_budget: usize,
    pub exec_budget: u64,
    pub max_depth: usize,
    pub max_uuts: usize,
    pub criteria: Criteria,
    pub stop_first: bool,
    pub stability_runs: usize,
    pub population: usize,
}

impl From<&GenConfig> for ConfigEcho {
    fn from(c: &GenConfig) -> Self {
        Self {
            seed: c.seed,
            search_budget: c.search_budget,
            exec_budget: c.exec_budget,
            max_depth: c.selection.max_depth,
            max_uuts: c.selection.max_uuts,
            criteria: c.criteria,
            stop_first: c.stop_first,
            stability_runs: c.stability_runs,
            population: c.population,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub load_ms: f64,
    pub detect_ms: f64,
}

/// The JSON document `tom detect` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub tool_version: String,
    pub scenario: String,
    pub config: ConfigEcho,
    pub report: ConflictReport,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub assertion: String,
    pub actual: Value,
    pub passed: bool,
}

/// What `tom run-test --json` prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub observations: Vec<(String, Value)>,
    pub assertions: Vec<AssertionOutcome>,
    pub passed: bool,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli, out),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Detect(a) => cmd_detect(a, out),
        Command::SelectUuts(a) => cmd_select_uuts(a, out),
        Command::GenBench(a) => cmd_gen_bench(a, out),
        Command::RunTest(a) => cmd_run_test(a, out),
        Command::Deps(a) => cmd_deps(a, out),
    };
    result.unwrap_or_else(|message| {
        eprintln!("tom: {message}");
        EXIT_ERROR
    })
}

type CmdResult = Result<i32, String>;

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    writeln!(out, "{text}").map_err(|e| e.to_string())
}

fn scenario(path: &Path) -> Result<MergeScenario, String> {
    load_scenario(path).map_err(|e| e.to_string())
}

pub fn cmd_detect(args: &DetectArgs, out: &mut dyn Write) -> CmdResult {
    let config = args.gen_config();
    config.validate().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let scenario = scenario(&args.scenario)?;
    let loaded = Instant::now();
    let report = detect(&scenario, &config).map_err(|e| e.to_string())?;
    let done = Instant::now();
    let doc = ReportDocument {
        schema: SCHEMA.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: scenario.id.clone(),
        config: (&config).into(),
        timing: Timing {
            load_ms: (loaded - started).as_secs_f64() * 1e3,
            detect_ms: (done - loaded).as_secs_f64() * 1e3,
        },
        report,
    };
    match &args.out {
        Some(path) => {
            let text = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())?;
            std::fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
            for t in &doc.report.targets {
                let _ = writeln!(out, "{}: {} conflict test(s)", t.target, t.conflicts.len());
            }
        }
        None => write_json(out, &doc)?,
    }
    Ok(if doc.report.has_conflicts() { EXIT_FOUND } else { EXIT_OK })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UutEntry {
    pub entity: String,
    pub signature: String,
    pub depth: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UutListing {
    pub target: Role,
    pub uuts: Vec<UutEntry>,
    pub fallback_used: bool,
}

pub fn cmd_select_uuts(args: &SelectArgs, out: &mut dyn Write) -> CmdResult {
    let config = args.selection.config();
    config.validate().map_err(|e| e.to_string())?;
    let s = scenario(&args.scenario)?;
    let target = s.version(args.target).ok_or_else(|| format!("scenario has no {} version", args.target))?;
    let others: Vec<_> = s.roles().into_iter().filter(|r| *r != args.target).filter_map(|r| s.version(r)).collect();
    let sel = select_uuts(target, &others, config).map_err(|e| e.to_string())?;
    let listing = UutListing {
        target: args.target,
        uuts: sel
            .uuts
            .iter()
            .map(|u| UutEntry { entity: u.id.to_string(), signature: u.id.signature(), depth: u.depth })
            .collect(),
        fallback_used: sel.fallback_used,
    };
    write_json(out, &listing)?;
    Ok(EXIT_OK)
}

pub fn cmd_gen_bench(args: &GenBenchArgs, out: &mut dyn Write) -> CmdResult {
    let input = load_fix_input(&args.fix_manifest).map_err(|e| e.to_string())?;
    let bench =
        build_conflict_3way(&input, &MutationOperator::ALL, args.seed, args.limit).map_err(|e| e.to_string())?;
    let mut emitted = Vec::new();
    for built in &bench.scenarios {
        emitted.push(built.scenario.clone());
        if args.octopus {
            if let Some(o) = build_conflict_octopus(built, &input, &bench.mutants, args.seed) {
                emitted.push(o);
            }
        }
    }
    for s in &emitted {
        let dir = args.out_dir.join(&s.id);
        let manifest = write_scenario(s, &dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        writeln!(out, "{}", manifest.display()).map_err(|e| e.to_string())?;
    }
    Ok(EXIT_OK)
}

/// Resolves the version directory a `run-test` invocation names.
fn version_dir(args: &RunTestArgs) -> Result<(PathBuf, String), String> {
    if let Some(dir) = &args.version {
        return Ok((dir.clone(), "version".to_string()));
    }
    let manifest = args.scenario.as_ref().ok_or("either --version or --scenario is required")?;
    let role = args.role.ok_or("--scenario requires --role")?;
    let text = std::fs::read_to_string(manifest).map_err(|e| format!("{}: {e}", manifest.display()))?;
    let m: ScenarioManifest =
        serde_json::from_str(&text).map_err(|e| format!("{}: invalid manifest: {e}", manifest.display()))?;
    let rel = match role {
        Role::Merge => Some(m.merge),
        Role::Ancestor => m.ancestor,
        Role::Parent(k) => m.parents.get(k - 1).cloned(),
    }
    .ok_or_else(|| format!("scenario has no {role} version"))?;
    Ok((manifest.parent().unwrap_or(Path::new(".")).join(rel), role.to_string()))
}

pub fn cmd_run_test(args: &RunTestArgs, out: &mut dyn Write) -> CmdResult {
    let script = load_script(&args.test).map_err(|e| e.to_string())?;
    let (dir, role) = version_dir(args)?;
    let program = load_version(&dir, &role).map_err(|e| e.to_string())?;
    let result = run_test(&program, &script.test, args.exec_budget);
    let v = &result.valuation;
    let observations = (0..v.len()).map(|i| (v.point(i).to_string(), v.value(i))).collect();
    let assertions: Vec<AssertionOutcome> = script
        .assertions
        .iter()
        .map(|a| AssertionOutcome {
            assertion: a.to_string(),
            actual: a.actual(&result).unwrap_or(Value::Unobserved),
            passed: a.holds(&result),
        })
        .collect();
    let passed = assertions.iter().all(|a| a.passed);
    let outcome = RunOutcome { observations, assertions, passed };
    if args.json {
        write_json(out, &outcome)?;
    } else {
        let mut text = String::new();
        for (point, value) in &outcome.observations {
            text.push_str(&format!("{point} = {value}\n"));
        }
        for a in &outcome.assertions {
            let verdict = if a.passed { "ok" } else { "FAILED" };
            text.push_str(&format!("{} ... {verdict} (actual {})\n", a.assertion, a.actual));
        }
        write!(out, "{text}").map_err(|e| e.to_string())?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_FOUND })
}

pub fn cmd_deps(args: &DepsArgs, out: &mut dyn Write) -> CmdResult {
    let program = load_version(&args.version, "version").map_err(|e| e.to_string())?;
    let graph = extract_dependencies(&program);
    match args.format {
        GraphFormat::Json => write_json(out, &graph)?,
        GraphFormat::Dot => write!(out, "{}", graph.to_dot()).map_err(|e| e.to_string())?,
    }
    Ok(EXIT_OK)
}
