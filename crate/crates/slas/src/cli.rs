//! The `slas` command line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slas_core::sim::{PolicyKind, Randomization};
use slas_core::Scenario;

use crate::csvlog;
use crate::plot;
use crate::report::{EventsFile, MonteCarloReport, PolicyReport, RunReport, TableRowJson};
use crate::runner::{monte_carlo, run_policies, ClockKind, EpisodeRun, RunOptions};
use crate::scenario::{load_scenario, Override, ScenarioError, ScenarioFile};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_UNWRITABLE: u8 = 2;
pub const EXIT_INVALID_SCENARIO: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "slas", version, about = "Speed and lane advisory planning on a simulated highway")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode with one policy.
    Run(Common),
    /// Run several policies on the same world.
    Compare(Common),
    /// Randomized campaign with a mean/std table per policy.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        runs: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormulationArg {
    Binary,
    Integer,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file, or the name of a built-in scenario.
    #[arg(long, default_value = "case_study")]
    pub scenario: String,
    /// Policies, comma separated: slas, mobil, nochange.
    #[arg(long, value_delimiter = ',')]
    pub policy: Vec<PolicyKind>,
    /// Base seed; replaces `sim.seed` from the scenario.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: $SLAS_OUT_DIR/<command> or slas-out/<command>].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted scenario override, e.g. planner.gamma2=100. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<Override>,
    #[arg(long, value_enum)]
    pub formulation: Option<FormulationArg>,
    /// Add all lane-adjacency rows up front instead of on violation.
    #[arg(long)]
    pub eager_lane_constraints: bool,
    /// Solver budget per planner tick in milliseconds.
    #[arg(long)]
    pub budget_ms: Option<u64>,
    /// Record the branch-and-bound trace into events.json.
    #[arg(long)]
    pub trace: bool,
    /// Measure the solver budget in wall time instead of work units.
    #[arg(long)]
    pub wall_clock: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cannot write {path}: {reason}")]
    Output { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Scenario(_) => EXIT_INVALID_SCENARIO,
            CliError::Output { .. } => EXIT_UNWRITABLE,
        }
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug)]
pub struct Completed {
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Any collision, fallback or solver error in any episode.
    pub failed: bool,
}

impl Common {
    fn all_overrides(&self) -> Vec<Override> {
        let mut ovs = self.overrides.clone();
        let mut push = |key: &str, value: serde_json::Value| {
            ovs.push(Override {
                key: key.to_string(),
                value,
            })
        };
        if let Some(f) = self.formulation {
            let name = match f {
                FormulationArg::Binary => "binary",
                FormulationArg::Integer => "integer",
            };
            push("planner.formulation", name.into());
        }
        if self.eager_lane_constraints {
            push("planner.lazy_lane_constraints", false.into());
        }
        if let Some(ms) = self.budget_ms {
            push("planner.time_limit_s", (ms as f64 / 1000.0).into());
        }
        if let Some(seed) = self.seed {
            push("sim.seed", seed.into());
        }
        ovs
    }

    fn load(&self) -> Result<(ScenarioFile, Scenario, Vec<Override>), CliError> {
        let ovs = self.all_overrides();
        let (file, sc) = load_scenario(&self.scenario, &ovs)?;
        Ok((file, sc, ovs))
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            clock: if self.wall_clock { ClockKind::Wall } else { ClockKind::Work },
            trace: self.trace,
            ..RunOptions::default()
        }
    }

    fn out_dir(&self, command: &str) -> PathBuf {
        match &self.out {
            Some(p) => p.clone(),
            None => std::env::var_os("SLAS_OUT_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("slas-out"))
                .join(command),
        }
    }
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| out_err(path, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<(), String>) -> Result<String, CliError> {
    let file = fs::File::create(path).map_err(|e| out_err(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| out_err(path, e))?;
    w.flush().map_err(|e| out_err(path, e))?;
    Ok(path.display().to_string())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<String, CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| e.to_string())?;
        writeln!(w).map_err(|e| e.to_string())
    })
}

fn episode_failed(run: &EpisodeRun) -> bool {
    run.log.collided()
        || run.log.fallbacks() > 0
        || run
            .log
            .samples
            .iter()
            .filter_map(|s| s.solver.as_ref())
            .any(|s| s.status == slas_core::SolveStatus::Error)
}

/// `episode.csv` and `events.json` for one episode into `dir`.
fn write_episode(dir: &Path, run: &EpisodeRun, artifacts: &mut Vec<String>) -> Result<(), CliError> {
    artifacts.push(write_file(&dir.join("episode.csv"), |w| {
        csvlog::write_episode(w, &run.log.samples).map_err(|e| e.to_string())
    })?);
    artifacts.push(write_json(&dir.join("events.json"), &EventsFile::new(&run.log, &run.trace))?);
    Ok(())
}

fn write_plots(dir: &Path, runs: &[EpisodeRun], artifacts: &mut Vec<String>) -> Result<(), CliError> {
    let plots = dir.join("plots");
    create_dir(&plots)?;
    let logs: Vec<_> = runs.iter().map(|r| &r.log).collect();
    for (stem, chart) in plot::all_charts(&logs) {
        let path = plots.join(format!("{stem}.svg"));
        fs::write(&path, chart.to_svg()).map_err(|e| out_err(&path, e))?;
        artifacts.push(path.display().to_string());
    }
    Ok(())
}

fn print_metrics(runs: &[EpisodeRun]) {
    for r in runs {
        let m = &r.metrics;
        let tt = m.travel_time.map_or("incomplete".to_string(), |t| format!("{t:.2} s"));
        println!(
            "{:<9} travel time {tt:>10}  mean headway {:6.2} m  min distance {:6.2} m  lane changes {}{}",
            r.log.policy.name(),
            m.mean_headway,
            m.min_distance_to_closest,
            m.lane_changes,
            if m.collided { "  COLLISION" } else { "" }
        );
    }
}

fn cmd_episodes(common: &Common, command: &str, default: &[PolicyKind], min_policies: usize) -> Result<Completed, CliError> {
    let kinds = if common.policy.is_empty() {
        default.to_vec()
    } else {
        common.policy.clone()
    };
    if kinds.len() < min_policies {
        return Err(CliError::Usage(format!("{command} needs at least {min_policies} policies")));
    }
    if command == "run" && kinds.len() != 1 {
        return Err(CliError::Usage("run takes exactly one policy; use compare for several".into()));
    }
    let (file, sc, ovs) = common.load()?;
    let out = common.out_dir(command);
    create_dir(&out)?;
    println!("seed: {}", sc.seed);
    let runs = run_policies(&sc, &kinds, &common.options());
    let mut artifacts = Vec::new();
    if let [run] = &runs[..] {
        write_episode(&out, run, &mut artifacts)?;
    } else {
        for run in &runs {
            let dir = out.join(run.log.policy.name());
            create_dir(&dir)?;
            write_episode(&dir, run, &mut artifacts)?;
        }
    }
    write_plots(&out, &runs, &mut artifacts)?;
    let policies: Vec<PolicyReport> = runs.iter().map(|r| PolicyReport::new(&r.log, &r.metrics)).collect();
    let summary_path = out.join("summary.json");
    artifacts.push(summary_path.display().to_string());
    let report = RunReport {
        seed: sc.seed,
        scenario: file,
        overrides: ovs.iter().map(ToString::to_string).collect(),
        ratios: RunReport::ratios(&policies),
        policies,
        artifacts,
    };
    write_json(&summary_path, &report)?;
    print_metrics(&runs);
    for r in &report.ratios {
        let tt = r.travel_time_improvement_pct.map_or("n/a".to_string(), |p| format!("{p:.1}%"));
        println!("{} vs {}: travel time {tt}, headway {:.1}%", r.reference, r.other, r.headway_improvement_pct);
    }
    println!("wrote {}", out.display());
    Ok(Completed {
        out_dir: out,
        seed: sc.seed,
        failed: runs.iter().any(episode_failed),
    })
}

fn cmd_montecarlo(common: &Common, runs: usize) -> Result<Completed, CliError> {
    if runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let kinds = if common.policy.is_empty() {
        PolicyKind::ALL.to_vec()
    } else {
        common.policy.clone()
    };
    let (file, sc, ovs) = common.load()?;
    let out = common.out_dir("montecarlo");
    create_dir(&out)?;
    println!("seed: {}", sc.seed);
    let mc = monte_carlo(&sc, runs, sc.seed, &kinds, &Randomization::default(), &common.options());
    for run in &mc.skipped {
        eprintln!("warning: run {run} skipped, no valid randomized world");
    }
    let mut artifacts = Vec::new();
    let rows: Vec<(String, _)> = mc.table.iter().map(|(k, row)| (k.name().to_string(), row.clone())).collect();
    artifacts.push(write_file(&out.join("montecarlo.csv"), |w| {
        csvlog::write_table(w, &rows).map_err(|e| e.to_string())
    })?);
    artifacts.push(write_file(&out.join("runs.csv"), |w| write_runs(w, &mc).map_err(|e| e.to_string()))?);
    let summary_path = out.join("summary.json");
    artifacts.push(summary_path.display().to_string());
    let logs: Vec<_> = mc.logs().collect();
    let report = MonteCarloReport {
        seed: sc.seed,
        runs,
        skipped_runs: mc.skipped.clone(),
        scenario: file,
        overrides: ovs.iter().map(ToString::to_string).collect(),
        table: rows.iter().map(|(p, r)| TableRowJson::new(p, r)).collect(),
        collisions: logs.iter().filter(|l| l.collided()).count(),
        fallbacks: logs.iter().map(|l| l.fallbacks()).sum(),
        infeasible_after_first_feasible: logs.iter().map(|l| l.infeasible_after_first_feasible()).sum(),
        artifacts,
    };
    write_json(&summary_path, &report)?;
    println!("{:<9} {:>5} {:>9} {:>17} {:>17} {:>17}", "policy", "runs", "excluded", "travel time", "long jerk", "lat jerk");
    for (name, row) in &rows {
        println!(
            "{name:<9} {:>5} {:>9} {:>8.2} ± {:<6.2} {:>8.3} ± {:<6.3} {:>8.3} ± {:<6.3}",
            row.runs,
            row.excluded,
            row.columns[0].mean,
            row.columns[0].std,
            row.long_jerk.mean,
            row.long_jerk.std,
            row.columns[6].mean,
            row.columns[6].std
        );
    }
    println!("wrote {}", out.display());
    let failed = mc.runs.iter().flat_map(|r| &r.episodes).any(episode_failed);
    Ok(Completed {
        out_dir: out,
        seed: sc.seed,
        failed,
    })
}

/// Per-run figures behind the Monte Carlo table.
fn write_runs(w: &mut dyn Write, mc: &crate::runner::McOutcome) -> Result<(), csv::Error> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record([
        "run",
        "seed",
        "policy",
        "travel_time_s",
        "mean_headway_m",
        "min_distance_to_closest_m",
        "long_jerk",
        "lat_jerk",
        "lane_changes",
        "collided",
        "fallbacks",
    ])?;
    for run in &mc.runs {
        for e in &run.episodes {
            let m = &e.metrics;
            c.write_record([
                run.run.to_string(),
                run.seed.to_string(),
                e.log.policy.name().to_string(),
                m.travel_time.map(|t| t.to_string()).unwrap_or_default(),
                m.mean_headway.to_string(),
                m.min_distance_to_closest.to_string(),
                m.long_jerk.mean.to_string(),
                m.lat_jerk.mean.to_string(),
                m.lane_changes.to_string(),
                m.collided.to_string(),
                e.log.fallbacks().to_string(),
            ])?;
        }
    }
    c.flush()?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<Completed, CliError> {
    match &cli.command {
        Command::Run(c) => cmd_episodes(c, "run", &[PolicyKind::Slas], 1),
        Command::Compare(c) => cmd_episodes(c, "compare", &PolicyKind::ALL, 2),
        Command::Montecarlo { common, runs } => cmd_montecarlo(common, *runs),
    }
}

/// Parse `args`, run the command and map the outcome to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(done) if done.failed => {
            eprintln!("error: an episode ended in a collision or a planner error");
            ExitCode::from(EXIT_FAILURE)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
