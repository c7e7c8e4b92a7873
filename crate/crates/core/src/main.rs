//! Command-line front end: load a scenario, run the requested checks, and
//! write the verdict report plus optional trajectory dumps.
//!
//! Exit codes: 0 every requested check completed (regardless of outcome),
//! 1 some check came back inconclusive, 2 execution error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use noninc::runner::{self, RunConfig};
use noninc::scenario;
use noninc::verdict::{AssumptionId, ConditionId};

#[derive(Parser, Debug)]
#[command(
    name = "noninc",
    about = "Checks whether a scalar function is nonincreasing along solutions of a constrained differential inclusion",
    version
)]
struct Cli {
    /// Scenario file (TOML; see docs/scenario-format.md)
    scenario: PathBuf,

    /// Root seed override
    #[arg(long)]
    seed: Option<u64>,

    /// Integrator step override
    #[arg(long)]
    dt: Option<f64>,

    /// Simulation horizon override
    #[arg(long)]
    horizon: Option<f64>,

    /// Grid resolution override (points per axis)
    #[arg(long)]
    grid: Option<usize>,

    /// Also dump one trajectory CSV per oracle start
    #[arg(long)]
    emit_trajectories: bool,

    /// Comma-separated condition/assumption ids to check, replacing the
    /// scenario's request (e.g. COND-GRAD,M1,M2)
    #[arg(long, value_delimiter = ',')]
    check: Option<Vec<String>>,

    /// Run the monotonicity oracle even if the scenario requests none
    #[arg(long)]
    oracle: bool,

    /// Worker threads for grid evaluation (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,

    /// Suppress the summary on stdout
    #[arg(long)]
    quiet: bool,

    /// Omit timestamps so reruns are byte-identical
    #[arg(long)]
    reproducible: bool,

    /// Output directory for the report and CSV files (default: alongside
    /// the scenario file)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(inconclusive) => {
            if inconclusive {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, String> {
    let scenario = scenario::load_scenario(&cli.scenario).map_err(|e| e.to_string())?;

    let mut config = RunConfig {
        seed: cli.seed,
        dt: cli.dt,
        horizon: cli.horizon,
        grid: cli.grid,
        emit_trajectories: cli.emit_trajectories,
        force_oracle: cli.oracle,
        reproducible: cli.reproducible,
        ..RunConfig::default()
    };
    if let Some(ids) = &cli.check {
        let mut conditions = Vec::new();
        let mut assumptions = Vec::new();
        for id in ids {
            if let Some(c) = ConditionId::parse(id) {
                conditions.push(c);
            } else if let Some(a) = AssumptionId::parse(id) {
                assumptions.push(a);
            } else {
                return Err(format!("unknown check id `{id}`"));
            }
        }
        config.conditions = Some(conditions);
        config.assumptions = Some(assumptions);
    }

    let artifacts = if let Some(jobs) = cli.jobs {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| runner::run(&scenario, &config))
    } else {
        runner::run(&scenario, &config)
    };

    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cli.scenario.parent().map(|p| p.to_path_buf()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|e| format!("cannot create {}: {e}", out_dir.display()))?;

    let report_path = out_dir.join(format!("{}.verdict", scenario.name));
    std::fs::write(&report_path, &artifacts.report)
        .map_err(|e| format!("cannot write {}: {e}", report_path.display()))?;
    for (name, body) in &artifacts.trajectories {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }

    if !cli.quiet {
        print!("{}", summarize(&artifacts.report));
        println!("report: {}", report_path.display());
        for (name, _) in &artifacts.trajectories {
            println!("trajectory: {}", out_dir.join(name).display());
        }
    }
    Ok(artifacts.inconclusive_present)
}

/// One line per check from the report body.
fn summarize(report: &str) -> String {
    let mut out = String::new();
    let mut current_id: Option<String> = None;
    let mut section = "";
    for line in report.lines() {
        if line.starts_with("[[condition]]") || line.starts_with("[[assumption]]") {
            section = "check";
            current_id = None;
        } else if line.starts_with("[oracle]") {
            section = "oracle";
        } else if line.starts_with("[conclusion]") {
            section = "conclusion";
        } else if line.starts_with("[[") || line.starts_with('[') {
            section = "";
        }
        if let Some(id) = line.strip_prefix("id = ") {
            current_id = Some(id.trim_matches('"').to_string());
        }
        if let Some(v) = line.strip_prefix("verdict = ") {
            match section {
                "check" => {
                    if let Some(id) = &current_id {
                        out.push_str(&format!("{id}: {}\n", v.trim_matches('"')));
                    }
                }
                "oracle" => out.push_str(&format!("oracle: {}\n", v.trim_matches('"'))),
                _ => {}
            }
        }
        if section == "conclusion" {
            if let Some(v) = line.strip_prefix("direction = ") {
                out.push_str(&format!("conclusion: {}\n", v.trim_matches('"')));
            }
        }
    }
    out
}
