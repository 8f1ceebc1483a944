//! Trial loop: drive toward the imagined goal, fold in cues as they come
//! into view, stretch the map when the goal is not where it was expected.

use log::{debug, info};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::grammar::{hierarchy_to_clauses, Clause, GrammarError, PrepositionLexicon, Toponym};
use crate::map::{AbstractMap, ImagineReport, MapError};
use crate::solver::{SolverConfig, SolverError};
use crate::trace::{imagine_events, Event, ImagineCause, TraceEvent};
use crate::world::{
    advance_robot, centre_of_explored_mass, explored_region, nearest_frontier, plan_step, sense, PlanStep, RobotState, Scenario,
    CONTROL_TICK,
};

pub const DEFAULT_GOAL_REACH_RADIUS: f64 = 1.0;
pub const DEFAULT_DISTANCE_BUDGET: f64 = 500.0;
/// Ticks without movement before the trial is abandoned.
const STALL_TICKS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavigatorError {
    #[error("scenario cannot run this trial: {0}")]
    ScenarioInvalid(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialConfig {
    pub goal: Toponym,
    pub goal_reach_radius: f64,
    pub distance_budget: f64,
    pub seed: u64,
}

impl TrialConfig {
    pub fn new(goal: Toponym, seed: u64) -> Self {
        Self {
            goal,
            goal_reach_radius: DEFAULT_GOAL_REACH_RADIUS,
            distance_budget: DEFAULT_DISTANCE_BUDGET,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialEnd {
    GoalObserved,
    BudgetExhausted,
    NoProgress,
    SolverDiverged,
}

impl TrialEnd {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialEnd::GoalObserved => "goal label observed",
            TrialEnd::BudgetExhausted => "distance budget exhausted",
            TrialEnd::NoProgress => "no progress",
            TrialEnd::SolverDiverged => "solver diverged",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub success: bool,
    pub end: TrialEnd,
    pub distance: f64,
    /// Cue ids in detection order with the odometry at detection.
    pub cue_observations: Vec<(String, f64)>,
    pub exploration_steps_fired: u32,
    pub elapsed_sim_time: f64,
    pub final_exploration_factor: f64,
}

struct Trial<'a> {
    scenario: &'a Scenario,
    config: &'a TrialConfig,
    map: AbstractMap,
    robot: RobotState,
    trace: Vec<TraceEvent>,
    t: f64,
    cues: Vec<(String, f64)>,
    explorations: u32,
}

impl Trial<'_> {
    fn emit(&mut self, event: Event) {
        self.trace.push(TraceEvent { t: self.t, event });
    }

    fn record_imagine(&mut self, cause: ImagineCause, report: &ImagineReport) {
        let events = imagine_events(self.t, cause, report, &self.map, Some(&self.config.goal));
        self.trace.extend(events);
    }

    fn emit_pose(&mut self) {
        let r = &self.robot;
        let event = Event::Pose {
            x: r.position.x,
            y: r.position.y,
            heading: r.heading,
            odometry: r.odometry,
        };
        self.emit(event);
    }

    fn preload(&mut self) -> Result<(), MapError> {
        let hierarchy = &self.scenario.hierarchy;
        for node in hierarchy.nodes() {
            let level = hierarchy.level(node).expect("node exists");
            self.map.declare_level(node.clone(), level)?;
        }
        let clauses: Vec<Clause> = hierarchy_to_clauses(hierarchy)?
            .into_iter()
            .map(Clause::Relational)
            .collect();
        if let Some(report) = self.map.add_symbolic_spatial_info(&clauses)? {
            self.record_imagine(ImagineCause::Preload, &report);
        }
        Ok(())
    }

    fn goal_estimate(&self) -> Option<Vec2> {
        self.map.imagined_location(&self.config.goal).ok()
    }

    fn fire_exploration(&mut self) -> Result<(), MapError> {
        let report = self.map.on_goal_not_found()?;
        self.explorations += 1;
        let factor = self.map.exploration();
        let event = Event::Exploration {
            factor: factor.value(),
            failures: factor.failures(),
        };
        self.emit(event);
        self.record_imagine(ImagineCause::Exploration, &report);
        debug!("goal not found, exploration factor now {}", self.map.exploration().value());
        Ok(())
    }

    fn finish(mut self, end: TrialEnd) -> (TrialResult, Vec<TraceEvent>) {
        let success = end == TrialEnd::GoalObserved;
        let distance = self.robot.odometry;
        self.emit(Event::Goal {
            success,
            distance,
            reason: end.as_str().to_owned(),
        });
        info!(
            "trial {} seed {}: {} after {:.2} m",
            self.config.goal,
            self.config.seed,
            end.as_str(),
            distance
        );
        let result = TrialResult {
            success,
            end,
            distance,
            cue_observations: self.cues,
            exploration_steps_fired: self.explorations,
            elapsed_sim_time: self.t,
            final_exploration_factor: self.map.exploration().value(),
        };
        (result, self.trace)
    }

    /// Runs until an end condition; `Err` only for solver breakdowns.
    fn drive(&mut self) -> Result<TrialEnd, MapError> {
        let radius = self.config.goal_reach_radius;
        let budget = self.config.distance_budget;
        let world = &self.scenario.world;
        let mut armed = true;
        // imagined goal when the last exploration step fired
        let mut disarmed_at: Option<Vec2> = None;
        let mut stalled = 0;

        loop {
            let seen = sense(world, &mut self.robot);
            for obs in &seen.detections {
                self.cues.push((obs.cue_id.clone(), self.robot.odometry));
                let event = Event::Cue {
                    id: obs.cue_id.clone(),
                    x: obs.pose.position.x,
                    y: obs.pose.position.y,
                    heading: obs.pose.heading,
                    clauses: obs.clauses.clone(),
                };
                self.emit(event);
                let report = self.map.observe_cue(obs)?;
                self.record_imagine(ImagineCause::Cue, &report);
                armed = true;
                disarmed_at = None;
                let labels_goal = obs
                    .clauses
                    .iter()
                    .any(|c| matches!(c, Clause::Locational(l) if l.is_label() && l.toponym == self.config.goal));
                if labels_goal {
                    return Ok(TrialEnd::GoalObserved);
                }
            }
            match explored_region(&world.map, &self.robot) {
                Some((centre, reach)) if reach > 0.0 => self.map.set_explored_region(centre, reach)?,
                _ => self.map.set_explored_centre(centre_of_explored_mass(&world.map, &self.robot))?,
            }

            let mut goal = self.goal_estimate();
            if let (Some(g), Some(prev)) = (goal, disarmed_at) {
                if g.distance(prev) > radius {
                    armed = true;
                    disarmed_at = None;
                }
            }
            if armed && goal.is_some_and(|g| g.distance(self.robot.position) <= radius) {
                self.fire_exploration()?;
                armed = false;
                goal = self.goal_estimate();
                disarmed_at = goal;
            }

            // once the goal was missed at its imagined spot, search elsewhere
            // until the estimate moves or a new cue arrives
            let mut step = match goal {
                Some(g) if armed => plan_step(&world.map, &self.robot, g).unwrap_or(PlanStep::Stuck),
                _ => PlanStep::Stuck,
            };
            if step == PlanStep::Stuck && armed && goal.is_some() {
                // the imagined goal cannot be approached any closer
                self.fire_exploration()?;
                armed = false;
                disarmed_at = self.goal_estimate();
            }
            if matches!(step, PlanStep::Stuck | PlanStep::Arrived) {
                step = match nearest_frontier(&world.map, &self.robot) {
                    Some(cell) => plan_step(&world.map, &self.robot, world.map.centre(cell)).unwrap_or(PlanStep::Stuck),
                    None => PlanStep::Stuck,
                };
            }
            let PlanStep::Waypoint(waypoint) = step else {
                return Ok(TrialEnd::NoProgress);
            };

            let remaining = budget - self.robot.odometry;
            let moved = advance_robot(&world.map, &mut self.robot, waypoint, CONTROL_TICK, remaining);
            self.t += CONTROL_TICK;
            self.emit_pose();
            if self.robot.odometry >= budget - 1e-9 {
                return Ok(TrialEnd::BudgetExhausted);
            }
            stalled = if moved > 0.0 { 0 } else { stalled + 1 };
            if stalled >= STALL_TICKS {
                return Ok(TrialEnd::NoProgress);
            }
        }
    }
}

/// Runs one navigation trial from the scenario's start pose with no prior
/// knowledge beyond the place hierarchy.
pub fn run_trial(
    scenario: &Scenario,
    config: &TrialConfig,
    solver: &SolverConfig,
) -> Result<(TrialResult, Vec<TraceEvent>), NavigatorError> {
    if !(config.goal_reach_radius > 0.0 && config.distance_budget > 0.0) {
        return Err(NavigatorError::ScenarioInvalid(
            "goal reach radius and distance budget must be positive".into(),
        ));
    }
    if !scenario.mentions(&config.goal) {
        return Err(NavigatorError::ScenarioInvalid(format!(
            "goal {} appears nowhere in the scenario",
            config.goal
        )));
    }
    let solver = SolverConfig {
        rng_seed: config.seed,
        ..solver.clone()
    };
    solver.validate().map_err(MapError::from)?;

    let mut trial = Trial {
        scenario,
        config,
        map: AbstractMap::new(PrepositionLexicon::default(), solver),
        robot: RobotState::new(&scenario.world.map, scenario.robot_start),
        trace: Vec::new(),
        t: 0.0,
        cues: Vec::new(),
        explorations: 0,
    };
    trial.emit(Event::World {
        scenario: scenario.doc.clone(),
        goal: config.goal.clone(),
        seed: config.seed,
    });
    trial.emit_pose();

    let outcome = trial.preload().and_then(|_| trial.drive());
    let end = match outcome {
        Ok(end) => end,
        Err(MapError::Solver(SolverError::NonFiniteState(at))) => {
            log::warn!("imagination diverged at t = {at}");
            TrialEnd::SolverDiverged
        }
        Err(other) => return Err(other.into()),
    };
    Ok(trial.finish(end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::load_world;

    fn corridor(cues: serde_json::Value, goals: serde_json::Value) -> Scenario {
        let mut grid = vec!["#".repeat(40)];
        grid.extend((0..6).map(|_| format!("#{}#", ".".repeat(38))));
        grid.push("#".repeat(40));
        let doc = serde_json::json!({
            "name": "corridor",
            "resolution": 0.25,
            "grid": grid,
            "origin": [0, 2],
            "robot_start": [0.6, 1.0],
            "hierarchy": {"nodes": [{"name": "Hall", "level": 2}, {"name": "Den", "level": 1}],
                          "edges": [["Hall", "Den"]]},
            "cues": cues,
            "goals": goals,
        });
        load_world(&doc.to_string()).unwrap()
    }

    #[test]
    fn rejects_unknown_goal() {
        let s = corridor(serde_json::json!([]), serde_json::json!([]));
        let cfg = TrialConfig::new(Toponym::new("Nowhere").unwrap(), 1);
        assert!(matches!(
            run_trial(&s, &cfg, &SolverConfig::default()),
            Err(NavigatorError::ScenarioInvalid(_))
        ));
    }

    #[test]
    fn never_labelled_goal_exhausts_budget() {
        let s = corridor(serde_json::json!([]), serde_json::json!([]));
        let mut cfg = TrialConfig::new(Toponym::new("Den").unwrap(), 1);
        cfg.distance_budget = 20.0;
        let (result, trace) = run_trial(&s, &cfg, &SolverConfig::default()).unwrap();
        assert!(!result.success);
        assert!(result.distance <= cfg.distance_budget + 1e-9);
        assert!(result.exploration_steps_fired >= 1);
        assert!(result.final_exploration_factor > 1.0);
        assert!(matches!(trace.last().unwrap().event, Event::Goal { success: false, .. }));
    }
}
