//! Command implementations behind the `amap` binary: batch trial runs with
//! JSONL traces, imagined-layout figures and trace replays.

pub mod jsonl;
pub mod summary;
pub mod svg;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use abstract_map::grammar::{parse_clause_set, GrammarError};
use abstract_map::navigator::NavigatorError;
use abstract_map::trace::{imagine_events, ImagineCause};
use abstract_map::world::ScenarioError;
use abstract_map::{load_world, run_trial, AbstractMap, Event, MapError, PrepositionLexicon, Scenario, SolverConfig, Toponym, TrialConfig};
use clap::Args;
use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::jsonl::TraceError;
use crate::summary::{summarise, TrialRow};
use crate::svg::{render_imagine, render_replay, Layout, ReplayError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("invalid scenario {path}: {source}")]
    Scenario { path: PathBuf, source: ScenarioError },
    #[error("{path}: {source}")]
    Clauses { path: PathBuf, source: GrammarError },
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("trial {goal} seed {seed}: {source}")]
    Trial { goal: String, seed: u64, source: NavigatorError },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        1
    }
}

/// How a command that ran to completion went.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// A single requested trial ran but did not find its goal.
    TrialFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Done => 0,
            Outcome::TrialFailed => 2,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Goal toponym for a single goal.
    #[arg(long, conflicts_with = "all_goals")]
    pub goal: Option<String>,
    /// Run every goal listed in the scenario.
    #[arg(long)]
    pub all_goals: bool,
    /// Single seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Run seeds 1 to N.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: Option<u64>,
    /// Output directory for traces, snapshots and the summary.
    #[arg(long, value_name = "DIR")]
    pub trace: Option<PathBuf>,
    /// Write a replay snapshot after every K-th relaxation.
    #[arg(long, value_name = "K", value_parser = clap::value_parser!(u64).range(1..))]
    pub svg_every: Option<u64>,
    /// Distance budget per trial in metres.
    #[arg(long, value_name = "M")]
    pub max_distance: Option<f64>,
}

#[derive(Args, Clone, Debug)]
pub struct ImagineArgs {
    /// Clause set JSON file.
    #[arg(long)]
    pub clauses: PathBuf,
    /// SVG output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of the energy history.
    #[arg(long)]
    pub energy: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
pub struct ReplayArgs {
    /// JSONL trace file.
    #[arg(long)]
    pub trace: PathBuf,
    /// SVG output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Show the trial as of the K-th relaxation (counting from 1).
    #[arg(long, value_name = "K")]
    pub frame: Option<usize>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_owned(), source })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write { path: path.to_owned(), source })
}

/// File-name form of a toponym: anything outside `[A-Za-z0-9_-]` becomes `_`.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn trace_file_name(goal: &str, seed: u64) -> String {
    format!("trace_{}_{seed}.jsonl", file_stem(goal))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = read(path)?;
    load_world(&text).map_err(|source| CliError::Scenario { path: path.to_owned(), source })
}

struct Job<'a> {
    scenario: &'a Scenario,
    goal: Toponym,
    seed: u64,
    dir: &'a Path,
    svg_every: Option<u64>,
    max_distance: Option<f64>,
}

fn run_one(job: &Job) -> Result<TrialRow, CliError> {
    let started = Instant::now();
    let mut config = TrialConfig::new(job.goal.clone(), job.seed);
    if let Some(m) = job.max_distance {
        config.distance_budget = m;
    }
    let (result, events) = run_trial(job.scenario, &config, &SolverConfig::default()).map_err(|source| CliError::Trial {
        goal: job.goal.to_string(),
        seed: job.seed,
        source,
    })?;
    let name = trace_file_name(job.goal.as_str(), job.seed);
    let path = job.dir.join(&name);
    jsonl::write_trace(&path, &events).map_err(|source| CliError::Write { path, source })?;

    if let Some(every) = job.svg_every {
        let relaxations = events.iter().filter(|e| matches!(e.event, Event::Imagine { .. })).count();
        for k in (every as usize..=relaxations).step_by(every as usize) {
            let svg = render_replay(&events, Some(k))?;
            let path = job.dir.join(format!("snap_{}_{}_{k:04}.svg", file_stem(job.goal.as_str()), job.seed));
            write(&path, &svg)?;
        }
    }
    info!(
        "{} seed {}: {} after {:.2} m ({}), {:.2} s wall",
        job.goal,
        job.seed,
        if result.success { "found" } else { "not found" },
        result.distance,
        result.end.as_str(),
        started.elapsed().as_secs_f64()
    );
    Ok(TrialRow {
        goal: job.goal.to_string(),
        seed: job.seed,
        success: result.success,
        end: result.end.as_str().to_owned(),
        distance: result.distance,
        cues_observed: result.cue_observations.len(),
        explorations: result.exploration_steps_fired,
        trace: name,
    })
}

/// Runs one trial or a goals × seeds batch, writing a trace per trial and
/// `summary.json` into the trace directory.
pub fn cmd_run(args: &RunArgs) -> Result<Outcome, CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let goals: Vec<Toponym> = match (&args.goal, args.all_goals) {
        (Some(name), _) => {
            let goal = Toponym::new(name.as_str()).map_err(|e| CliError::Usage(e.to_string()))?;
            if !scenario.mentions(&goal) {
                return Err(CliError::Usage(format!("goal {goal:?} appears nowhere in {}", args.scenario.display())));
            }
            vec![goal]
        }
        (None, true) if scenario.goals.is_empty() => {
            return Err(CliError::Usage(format!("{} lists no goals", args.scenario.display())));
        }
        (None, true) => scenario.goals.clone(),
        (None, false) => return Err(CliError::Usage("one of --goal NAME or --all-goals is required".into())),
    };
    let seeds: Vec<u64> = match (args.seed, args.seeds) {
        (Some(s), _) => vec![s],
        (None, Some(n)) => (1..=n).collect(),
        (None, None) => vec![1],
    };
    let dir = args
        .trace
        .as_deref()
        .ok_or_else(|| CliError::Usage("--trace DIR is required".into()))?;
    fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_owned(), source })?;

    let jobs: Vec<Job> = goals
        .iter()
        .flat_map(|goal| {
            seeds.iter().map(|&seed| Job {
                scenario: &scenario,
                goal: goal.clone(),
                seed,
                dir,
                svg_every: args.svg_every,
                max_distance: args.max_distance,
            })
        })
        .collect();
    let single = jobs.len() == 1;
    let rows = jobs.par_iter().map(run_one).collect::<Result<Vec<_>, _>>()?;

    let summary = summarise(scenario.name(), rows);
    let text = serde_json::to_string_pretty(&summary).expect("summary always serialises") + "\n";
    write(&dir.join("summary.json"), &text)?;
    info!("{} of {} trials found their goal", summary.successes, summary.trials);
    if single && summary.successes == 0 {
        return Ok(Outcome::TrialFailed);
    }
    Ok(Outcome::Done)
}

/// Relaxes a clause set on an empty map and draws the result.
pub fn cmd_imagine(args: &ImagineArgs) -> Result<Outcome, CliError> {
    let text = read(&args.clauses)?;
    let clauses = if text.trim().is_empty() {
        Vec::new()
    } else {
        parse_clause_set(&text, &PrepositionLexicon::default()).map_err(|source| CliError::Clauses {
            path: args.clauses.clone(),
            source,
        })?
    };
    let mut map = AbstractMap::default();
    let report = map.add_symbolic_spatial_info(&clauses)?;
    let svg = match &report {
        Some(report) => {
            if !report.settled {
                warn!("layout had not settled after {:.1} s simulated", report.sim_time);
            }
            let [layout, energy] = imagine_events(0.0, ImagineCause::Preload, report, &map, None);
            let samples = match &energy.event {
                Event::Energy { samples } => samples.as_slice(),
                _ => &[],
            };
            let caption = format!(
                "{} clauses, {} places, {} after {} steps ({:.2} s simulated)",
                clauses.len(),
                map.system().len(),
                if report.settled { "settled" } else { "unsettled" },
                report.steps,
                report.sim_time
            );
            render_imagine(Layout::of(&layout.event).as_ref(), samples, &caption)
        }
        None => render_imagine(None, &[], ""),
    };
    write(&args.out, &svg)?;
    if let Some(path) = &args.energy {
        let mut csv = String::from("t,kinetic,potential,total\n");
        for s in report.iter().flat_map(|r| &r.energy) {
            let e = s.energy;
            csv.push_str(&format!("{},{},{},{}\n", s.t, e.kinetic, e.potential, e.kinetic + e.potential));
        }
        write(path, &csv)?;
    }
    Ok(Outcome::Done)
}

/// Draws a recorded trial, optionally as of an earlier relaxation.
pub fn cmd_replay(args: &ReplayArgs) -> Result<Outcome, CliError> {
    let events = jsonl::read_trace(&args.trace).map_err(|source| CliError::Trace {
        path: args.trace.clone(),
        source,
    })?;
    let svg = render_replay(&events, args.frame)?;
    write(&args.out, &svg)?;
    Ok(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_names_are_file_safe() {
        assert_eq!(trace_file_name("Polar Bear", 3), "trace_Polar_Bear_3.jsonl");
        assert_eq!(trace_file_name("Isla's office/2", 1), "trace_Isla_s_office_2_1.jsonl");
        assert_eq!(trace_file_name("Lion", 10), "trace_Lion_10.jsonl");
    }
}
