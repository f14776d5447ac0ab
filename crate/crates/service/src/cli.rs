use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use argus_core::apulse::SolverConfig;
use argus_core::bench::{self, SolverKind, SweepConfig};
use argus_core::io;
use argus_core::planner::{PlanResult, Scenario};
use argus_core::replan::{self, RepairOptions};
use argus_core::risk::RiskField;
use argus_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "argus",
    version,
    about = "Risk-aware route planning for ground vehicles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan a mission and write the result JSON.
    Plan(PlanArgs),
    /// Emit the risk rasters for a scenario.
    Riskfield(RiskfieldArgs),
    /// Repair a planned path after a threat event.
    Patch(PatchArgs),
    /// Run a benchmark sweep.
    Bench(BenchArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Write the bundled demo scenario files.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub terrain: PathBuf,
    #[arg(long)]
    pub threats: Option<PathBuf>,
    #[arg(long)]
    pub mobility: Option<PathBuf>,
}

impl ScenarioArgs {
    pub fn load(&self) -> Result<Scenario, Error> {
        let terrain = io::load_grid(&self.terrain)?;
        let mobility = match &self.mobility {
            Some(p) => io::load_mobility(p)?,
            None => Default::default(),
        };
        let threats = match &self.threats {
            Some(p) => io::load_threats(p)?,
            None => Vec::new(),
        };
        Scenario::new(terrain, mobility, threats)
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub timeout_s: Option<f64>,
    #[arg(long)]
    pub bucket_target: Option<u32>,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(t) = self.timeout_s {
            cfg.timeout_s = Some(t);
        }
        if let Some(b) = self.bucket_target {
            cfg.bucket_count_target = b;
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct WaypointArgs {
    /// Also export the path as a waypoint file.
    #[arg(long)]
    pub waypoints: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub decimate: usize,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub mission: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub waypoints: WaypointArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct RiskfieldArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0.0)]
    pub formation_width: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PatchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Result file of the plan being executed.
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub event: PathBuf,
    #[arg(long, default_value_t = argus_core::planner::DEFAULT_REPLAN_SLACK)]
    pub slack: f64,
    #[arg(long)]
    pub safety_margin_m: Option<f64>,
    /// Comparison report JSON; the repaired result goes to `--result-out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub result_out: Option<PathBuf>,
    #[command(flatten)]
    pub waypoints: WaypointArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![32, 64, 128, 256])]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.25, 0.5])]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1])]
    pub seeds: Vec<u64>,
    /// Single seed; shorthand for `--seeds N`.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threats: Option<usize>,
    #[arg(long, default_value_t = 60.0)]
    pub timeout_s: f64,
    #[arg(long, default_value_t = bench::DEFAULT_ORACLE_MAX_NODES)]
    pub oracle_max_nodes: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec!["apulse".to_string(), "label_correcting".to_string()])]
    pub solvers: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub bucket_target: Option<u32>,
    /// CSV report path; the text tables go to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, env = "ARGUS_STATE_DIR")]
    pub state_dir: Option<PathBuf>,
    /// Concurrent solves; defaults to the number of logical cores.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = 600.0)]
    pub timeout_s: f64,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Shape { .. } | Error::Validation { .. } | Error::Io { .. } => {
            2
        }
        Error::InfeasibleBudget { .. } | Error::NoPath { .. } | Error::EmptyGraph => 3,
        Error::ResourceExhausted { .. } => 4,
        Error::Domain(_) | Error::OracleTooLarge { .. } => 1,
    }
}

pub const EXIT_TIMEOUT: u8 = 4;

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => io::write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_waypoints(
    scenario: &Scenario,
    result: &PlanResult,
    args: &WaypointArgs,
) -> Result<(), Error> {
    if let Some(p) = &args.waypoints {
        let text = io::export_waypoints(&scenario.terrain, &result.path, args.decimate)?;
        io::write_file(p, &text)?;
    }
    Ok(())
}

fn status_of(result: &PlanResult) -> u8 {
    if result.anytime {
        eprintln!("warning: solver limit reached, result is the best path found so far");
        EXIT_TIMEOUT
    } else {
        0
    }
}

pub fn run_plan(args: &PlanArgs) -> Result<u8, Error> {
    let scenario = args.scenario.load()?;
    let mission = io::load_mission(&args.mission)?;
    let result = scenario.plan(&mission, &args.solver.config())?;
    emit(args.out.as_deref(), &io::to_json(&result))?;
    write_waypoints(&scenario, &result, &args.waypoints)?;
    Ok(status_of(&result))
}

pub fn run_riskfield(args: &RiskfieldArgs) -> Result<u8, Error> {
    let scenario = args.scenario.load()?;
    let field = RiskField::compute(&scenario.terrain, &scenario.threats, args.formation_width)?;
    emit(args.out.as_deref(), &io::to_json(&field))?;
    Ok(0)
}

pub fn run_patch(args: &PatchArgs) -> Result<u8, Error> {
    let scenario = args.scenario.load()?;
    let original = io::load_result(&args.result)?;
    let event = io::load_event(&args.event)?;
    let prepared = scenario.prepare(original.formation_width_m)?;
    let update = replan::apply_event(
        &scenario.terrain,
        &scenario.threats,
        &prepared.field,
        &prepared.graph,
        &event,
    )?;
    let options = RepairOptions {
        safety_margin_m: args.safety_margin_m,
        solver: args.solver.config(),
    };
    let report = replan::compare_repair_vs_full(
        &scenario.terrain,
        &update,
        &original,
        &event,
        args.slack,
        &options,
    )?;
    eprint!("{}", report.table.render());
    if report.repair.full_replan_used {
        eprintln!("patch window infeasible; used full replan");
    }
    emit(args.out.as_deref(), &io::to_json(&report))?;
    if let Some(p) = &args.result_out {
        io::save_result(&report.repair.result, p)?;
    }
    write_waypoints(&scenario, &report.repair.result, &args.waypoints)?;
    Ok(status_of(&report.repair.result))
}

pub fn run_bench(args: &BenchArgs) -> Result<u8, Error> {
    let mut solver = SolverConfig::default();
    if let Some(b) = args.bucket_target {
        solver.bucket_count_target = b;
    }
    let config = SweepConfig {
        sizes: args.sizes.clone(),
        alphas: args.alphas.clone(),
        seeds: args.seed.map_or_else(|| args.seeds.clone(), |s| vec![s]),
        n_threats: args.threats,
        timeout_s: args.timeout_s,
        oracle_max_nodes: args.oracle_max_nodes,
        solvers: args
            .solvers
            .iter()
            .map(|s| s.parse::<SolverKind>())
            .collect::<Result<_, _>>()?,
        workers: args.workers,
        solver,
    };
    let report = bench::run_sweep(&config)?;
    println!("baseline: {}", report.baseline);
    println!();
    print!("{}", report.runtime_table());
    println!();
    print!("{}", report.optimality_table());
    if let Some(p) = &args.out {
        io::write_file(p, &report.to_csv())?;
    }
    if report.budget_violations() > 0 {
        return Err(Error::Domain(format!(
            "{} runs exceeded their budget",
            report.budget_violations()
        )));
    }
    Ok(0)
}

pub fn run_demo(args: &DemoArgs) -> Result<u8, Error> {
    let (scenario, request) = bench::demo_scenario()?;
    let write = |name: &str, text: String| io::write_file(&args.out_dir.join(name), &text);
    write("terrain.json", io::to_json(&scenario.terrain))?;
    write("mobility.json", io::to_json(&scenario.mobility))?;
    write("threats.json", io::to_json(&scenario.threats))?;
    write("mission.json", io::to_json(&request))?;
    write("scenario.json", io::to_json(&scenario))?;
    eprintln!("demo scenario written to {}", args.out_dir.display());
    Ok(0)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> ExitCode {
    let outcome = match &cli.command {
        Command::Plan(a) => run_plan(a),
        Command::Riskfield(a) => run_riskfield(a),
        Command::Patch(a) => run_patch(a),
        Command::Bench(a) => run_bench(a),
        Command::Demo(a) => run_demo(a),
        Command::Serve(a) => crate::http::serve(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
