//! The abstract map: clauses in, imagined spatial layout out.
//!
//! Relational clauses become springs (layout prepositions) or hierarchy
//! edges (containment prepositions, each edge a weak distance spring).
//! Observed cues add fixed anchors with stiff springs, refine the per-level
//! scale estimates, and reset the exploration factor. Every change ends with
//! one relaxation of the spring-mass system.

use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use log::debug;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{wrap_angle, Vec2};
use crate::grammar::{
    Clause, Containment, Frame, GrammarError, LocationalClause, Lookup, PrepositionLexicon,
    RelationalClause, Role, SpringTemplate, TemplateKind, Toponym,
};
use crate::hierarchy::{HierarchyError, HierarchyGraph};
use crate::model::{Expansion, PointMass, SpringKind, SpringOrigin, SpringSpec, SystemState, OBSERVATION_STIFFNESS};
use crate::solver::{self, EnergySample, SolverConfig, SolverError, SpringDraft};

/// Stiffness of springs generated from hierarchy edges.
pub const HIERARCHY_STIFFNESS: f64 = 0.01;
pub const DEFAULT_EXPLORATION_STEP: f64 = 1.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("unknown toponym {0}")]
    UnknownToponym(String),
    #[error("observation pose is not finite")]
    NonFinitePose,
    #[error("explored centre is not finite")]
    NonFiniteCentre,
    #[error("expansion reach must be positive, got {0}")]
    InvalidReach(f64),
    #[error("scaling weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("scaling ratio must be positive, got {0}")]
    NonPositiveRatio(f64),
    #[error("exploration step must exceed 1, got {0}")]
    InvalidExplorationStep(f64),
}

impl From<crate::model::ModelError> for MapError {
    fn from(err: crate::model::ModelError) -> Self {
        MapError::Solver(err.into())
    }
}

/// Unordered pair of hierarchy levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LevelPair(u32, u32);

impl LevelPair {
    pub fn new(a: u32, b: u32) -> Self {
        Self(a.min(b), a.max(b))
    }

    pub fn levels(self) -> (u32, u32) {
        (self.0, self.1)
    }
}

/// Weighted arithmetic mean of observed/assumed length ratios, stiffness as
/// the weight. `None` without observations.
pub fn weighted_mean_ratio(observations: &[(f64, f64)]) -> Option<f64> {
    if observations.is_empty() {
        return None;
    }
    let (num, den) = observations
        .iter()
        .fold((0.0, 0.0), |(n, d), &(k, ratio)| (n + k * ratio, d + k));
    Some(num / den)
}

/// Per level-pair distance scales.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalingFactors {
    observations: BTreeMap<LevelPair, Vec<(f64, f64)>>,
}

impl ScalingFactors {
    /// Assumed spacing between places on levels `(a, b)` before any
    /// observation. Levels above 3 use the level-3 values.
    pub fn default_scale(pair: LevelPair) -> f64 {
        let (a, b) = pair.levels();
        match (a.clamp(1, 3), b.clamp(1, 3)) {
            (1, 1) => 4.0,
            (1, 2) => 5.0,
            (1, 3) => 20.0,
            (2, 2) => 15.0,
            (2, 3) => 15.0,
            _ => 50.0,
        }
    }

    pub fn observations(&self, pair: LevelPair) -> &[(f64, f64)] {
        self.observations.get(&pair).map_or(&[], Vec::as_slice)
    }

    /// Weighted-mean scaling error, 1 when nothing has been observed.
    pub fn ratio(&self, pair: LevelPair) -> f64 {
        weighted_mean_ratio(self.observations(pair)).unwrap_or(1.0)
    }

    pub fn current(&self, pair: LevelPair) -> f64 {
        Self::default_scale(pair) * self.ratio(pair)
    }

    pub fn observe(&mut self, pair: LevelPair, stiffness: f64, ratio: f64) -> Result<(), MapError> {
        if !(stiffness.is_finite() && stiffness > 0.0) {
            return Err(MapError::NonPositiveWeight(stiffness));
        }
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(MapError::NonPositiveRatio(ratio));
        }
        self.observations.entry(pair).or_default().push((stiffness, ratio));
        Ok(())
    }
}

/// Multiplicative stretch applied to imagined distance springs after each
/// failed arrival at the goal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExplorationFactor {
    step: f64,
    failures: u32,
}

impl ExplorationFactor {
    pub fn new(step: f64) -> Result<Self, MapError> {
        if !(step.is_finite() && step > 1.0) {
            return Err(MapError::InvalidExplorationStep(step));
        }
        Ok(Self { step, failures: 0 })
    }

    pub fn value(&self) -> f64 {
        self.step.powi(self.failures as i32)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn failures(&self) -> u32 {
        self.failures
    }

    fn expand(&mut self) {
        self.failures += 1;
    }

    fn reset(&mut self) {
        self.failures = 0;
    }
}

impl Default for ExplorationFactor {
    fn default() -> Self {
        Self {
            step: DEFAULT_EXPLORATION_STEP,
            failures: 0,
        }
    }
}

/// Pose of a cue in the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            heading,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.heading.is_finite()
    }

    /// Maps a cue-local point into the world frame.
    pub fn transform(&self, local: Vec2) -> Vec2 {
        self.position + local.rotate(self.heading)
    }
}

/// A cue as seen by the robot.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub cue_id: String,
    pub pose: Pose,
    pub clauses: Vec<Clause>,
}

#[derive(Clone, Debug, PartialEq)]
enum LengthRule {
    /// Observation springs keep their measured length.
    Fixed,
    /// Imagined distance: multiplier × scale(levels) × exploration factor.
    Scaled {
        multiplier: f64,
        between: (Toponym, Toponym),
        counted_for_scaling: bool,
    },
}

/// Summary of one relaxation.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagineReport {
    pub settled: bool,
    pub steps: usize,
    pub sim_time: f64,
    pub energy: Vec<EnergySample>,
}

#[derive(Clone, Debug)]
pub struct AbstractMap {
    lexicon: PrepositionLexicon,
    solver: SolverConfig,
    rng: ChaCha8Rng,
    clauses: Vec<Clause>,
    hierarchy: HierarchyGraph,
    scaling: ScalingFactors,
    exploration: ExplorationFactor,
    system: SystemState,
    springs: Vec<SpringSpec>,
    drafts: Vec<SpringDraft>,
    rules: Vec<LengthRule>,
    hierarchy_springs: IndexMap<(Toponym, Toponym), usize>,
    anchors: IndexMap<(String, u64, u64), usize>,
    anchor_names: HashSet<Toponym>,
    observed_springs: HashSet<String>,
    labels: IndexMap<Toponym, Vec2>,
    explored_centre: Option<Vec2>,
    explored_reach: f64,
    last_report: Option<ImagineReport>,
}

impl Default for AbstractMap {
    fn default() -> Self {
        Self::new(PrepositionLexicon::default(), SolverConfig::default())
    }
}

impl AbstractMap {
    pub fn new(lexicon: PrepositionLexicon, solver: SolverConfig) -> Self {
        Self {
            lexicon,
            rng: solver.rng(),
            solver,
            clauses: Vec::new(),
            hierarchy: HierarchyGraph::new(),
            scaling: ScalingFactors::default(),
            exploration: ExplorationFactor::default(),
            system: SystemState::new(),
            springs: Vec::new(),
            drafts: Vec::new(),
            rules: Vec::new(),
            hierarchy_springs: IndexMap::new(),
            anchors: IndexMap::new(),
            anchor_names: HashSet::new(),
            observed_springs: HashSet::new(),
            labels: IndexMap::new(),
            explored_centre: None,
            explored_reach: f64::INFINITY,
            last_report: None,
        }
    }

    pub fn with_exploration_step(mut self, step: f64) -> Result<Self, MapError> {
        self.exploration = ExplorationFactor::new(step)?;
        Ok(self)
    }

    pub fn lexicon(&self) -> &PrepositionLexicon {
        &self.lexicon
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn hierarchy(&self) -> &HierarchyGraph {
        &self.hierarchy
    }

    pub fn scaling(&self) -> &ScalingFactors {
        &self.scaling
    }

    pub fn exploration(&self) -> &ExplorationFactor {
        &self.exploration
    }

    pub fn system(&self) -> &SystemState {
        &self.system
    }

    pub fn springs(&self) -> &[SpringSpec] {
        &self.springs
    }

    pub fn explored_centre(&self) -> Option<Vec2> {
        self.explored_centre
    }

    pub fn last_report(&self) -> Option<&ImagineReport> {
        self.last_report.as_ref()
    }

    pub fn hierarchy_spring_count(&self) -> usize {
        self.hierarchy_springs.len()
    }

    /// Positions of observed labels.
    pub fn labels(&self) -> &IndexMap<Toponym, Vec2> {
        &self.labels
    }

    pub fn is_anchor(&self, toponym: &Toponym) -> bool {
        self.anchor_names.contains(toponym)
    }

    /// Fixes the hierarchy level of a place (1 = rooms).
    pub fn declare_level(&mut self, toponym: Toponym, level: u32) -> Result<(), MapError> {
        self.hierarchy.add_node(toponym, Some(level))?;
        self.hierarchy.check_levels()?;
        self.refresh_natural_lengths();
        Ok(())
    }

    pub fn level_of(&self, toponym: &Toponym) -> u32 {
        self.hierarchy.level(toponym).unwrap_or(1)
    }

    fn level_pair(&self, a: &Toponym, b: &Toponym) -> LevelPair {
        LevelPair::new(self.level_of(a), self.level_of(b))
    }

    /// Natural length the spring at `index` would have right now.
    fn scaled_length(&self, multiplier: f64, between: &(Toponym, Toponym)) -> f64 {
        multiplier * self.scaling.current(self.level_pair(&between.0, &between.1)) * self.exploration.value()
    }

    fn refresh_natural_lengths(&mut self) {
        for i in 0..self.springs.len() {
            if let LengthRule::Scaled {
                multiplier,
                ref between,
                ..
            } = self.rules[i]
            {
                let length = self.scaled_length(multiplier, between);
                let kind = SpringKind::Distance {
                    natural_length: length,
                };
                self.springs[i].kind = kind;
                self.drafts[i].kind = kind;
            }
        }
    }

    /// Adds clauses and re-imagines. An empty list changes nothing.
    pub fn add_symbolic_spatial_info(&mut self, clauses: &[Clause]) -> Result<Option<ImagineReport>, MapError> {
        if clauses.is_empty() {
            return Ok(None);
        }
        let mut staged = Vec::new();
        let mut locational = Vec::new();
        for clause in clauses {
            match clause {
                Clause::Relational(rel) => self.stage_relational(rel, None, &mut staged)?,
                Clause::Locational(loc) => locational.push(Clause::Locational(loc.clone())),
            }
        }
        self.clauses.extend(clauses.iter().filter(|c| matches!(c, Clause::Relational(_))).cloned());
        if !locational.is_empty() {
            // free-standing locational clauses behave like a cue at the world origin
            let obs = Observation {
                cue_id: "world".to_owned(),
                pose: Pose::new(0.0, 0.0, 0.0),
                clauses: locational,
            };
            return self.observe_with(&obs, staged).map(Some);
        }
        self.commit(staged)?;
        self.imagine().map(Some)
    }

    /// Folds a cue observation into the map and re-imagines once.
    pub fn observe_cue(&mut self, observation: &Observation) -> Result<ImagineReport, MapError> {
        self.observe_with(observation, Vec::new())
    }

    fn observe_with(
        &mut self,
        observation: &Observation,
        mut staged: Vec<(SpringDraft, LengthRule)>,
    ) -> Result<ImagineReport, MapError> {
        if !observation.pose.is_finite() {
            return Err(MapError::NonFinitePose);
        }
        let cue_anchor = self.ensure_anchor(&observation.cue_id, observation.pose.position)?;
        for clause in &observation.clauses {
            match clause {
                Clause::Locational(loc) => self.stage_locational(observation, loc, &mut staged)?,
                Clause::Relational(rel) => {
                    self.stage_relational(rel, Some(&cue_anchor), &mut staged)?
                }
            }
            self.clauses.push(clause.clone());
        }
        self.commit(staged)?;
        self.exploration.reset();
        self.update_scaling_from_labels()?;
        self.refresh_natural_lengths();
        self.imagine()
    }

    fn ensure_anchor(&mut self, cue_id: &str, point: Vec2) -> Result<Toponym, MapError> {
        let key = (cue_id.to_owned(), point.x.to_bits(), point.y.to_bits());
        if let Some(&i) = self.anchors.get(&key) {
            return Ok(self.system.mass(i).toponym.clone());
        }
        let existing = self.anchors.keys().filter(|(id, _, _)| id == cue_id).count();
        let name = if existing == 0 {
            format!("@{cue_id}")
        } else {
            format!("@{cue_id}#{existing}")
        };
        let toponym = Toponym::new(name)?;
        let index = self.system.push(PointMass::fixed(toponym.clone(), point))?;
        self.anchors.insert(key, index);
        self.anchor_names.insert(toponym.clone());
        Ok(toponym)
    }

    fn stage_locational(
        &mut self,
        observation: &Observation,
        clause: &LocationalClause,
        staged: &mut Vec<(SpringDraft, LengthRule)>,
    ) -> Result<(), MapError> {
        let local = Vec2::new(clause.x, clause.y);
        let (point, heading) = match clause.frame {
            Frame::World => (local, 0.0),
            Frame::Cue => (observation.pose.transform(local), observation.pose.heading),
        };
        let anchor = self.ensure_anchor(&observation.cue_id, point)?;
        if let Some(range) = clause.range {
            let key = format!("d|{anchor}|{}|{}", clause.toponym, range.to_bits());
            if self.observed_springs.insert(key) {
                staged.push((
                    SpringDraft {
                        kind: SpringKind::Distance {
                            natural_length: range,
                        },
                        endpoints: vec![clause.toponym.clone(), anchor.clone()],
                        stiffness: OBSERVATION_STIFFNESS,
                        origin: SpringOrigin::Observation,
                    },
                    LengthRule::Fixed,
                ));
            }
            if range == 0.0 {
                self.labels.entry(clause.toponym.clone()).or_insert(point);
            }
        }
        if let Some(bearing) = clause.bearing {
            let angle = wrap_angle(heading + bearing).ok_or(MapError::NonFinitePose)?;
            let key = format!("a|{anchor}|{}|{}", clause.toponym, angle.to_bits());
            if self.observed_springs.insert(key) {
                staged.push((
                    SpringDraft {
                        kind: SpringKind::AbsoluteAngle {
                            natural_angle: angle,
                        },
                        endpoints: vec![clause.toponym.clone(), anchor],
                        stiffness: OBSERVATION_STIFFNESS,
                        origin: SpringOrigin::Observation,
                    },
                    LengthRule::Fixed,
                ));
            }
        }
        Ok(())
    }

    /// Converts a relational clause into staged springs. Containment clauses
    /// extend the hierarchy instead. `default_context` stands in for a
    /// missing context; without one, context-dependent templates are dropped.
    fn stage_relational(
        &mut self,
        clause: &RelationalClause,
        default_context: Option<&Toponym>,
        staged: &mut Vec<(SpringDraft, LengthRule)>,
    ) -> Result<(), MapError> {
        match self.lexicon.lookup(&clause.preposition, clause.referents.len())? {
            Lookup::Hierarchy(containment) => {
                for referent in &clause.referents {
                    let (parent, child) = match containment {
                        Containment::FigureIsChild => (referent, &clause.figure),
                        Containment::FigureIsParent => (&clause.figure, referent),
                    };
                    self.stage_hierarchy_edge(parent.clone(), child.clone(), staged)?;
                }
            }
            Lookup::Springs(templates) => {
                let context = clause.context.as_ref().or(default_context);
                for template in &templates {
                    if let Some(draft) = self.bind_template(template, clause, context) {
                        staged.push(draft);
                    }
                }
            }
        }
        Ok(())
    }

    fn stage_hierarchy_edge(
        &mut self,
        parent: Toponym,
        child: Toponym,
        staged: &mut Vec<(SpringDraft, LengthRule)>,
    ) -> Result<(), MapError> {
        if !self.hierarchy.add_edge(parent.clone(), child.clone())? {
            return Ok(());
        }
        let between = (child.clone(), parent.clone());
        let length = self.scaled_length(1.0, &between);
        staged.push((
            SpringDraft {
                kind: SpringKind::Distance {
                    natural_length: length,
                },
                endpoints: vec![child, parent],
                stiffness: HIERARCHY_STIFFNESS,
                origin: SpringOrigin::Hierarchy,
            },
            LengthRule::Scaled {
                multiplier: 1.0,
                between,
                counted_for_scaling: false,
            },
        ));
        Ok(())
    }

    fn bind_template(
        &self,
        template: &SpringTemplate,
        clause: &RelationalClause,
        context: Option<&Toponym>,
    ) -> Option<(SpringDraft, LengthRule)> {
        let endpoints: Vec<Toponym> = template
            .endpoints
            .iter()
            .map(|role| match role {
                Role::Figure => Some(clause.figure.clone()),
                Role::Referent(i) => clause.referents.get(*i).cloned(),
                Role::Context => context.cloned(),
            })
            .collect::<Option<_>>()?;
        let distinct: HashSet<&Toponym> = endpoints.iter().collect();
        if distinct.len() != endpoints.len() {
            debug!("dropping degenerate {:?} spring for {:?}", template.kind, clause.preposition);
            return None;
        }
        Some(match template.kind {
            TemplateKind::Distance { multiplier } => {
                let between = (endpoints[0].clone(), endpoints[1].clone());
                (
                    SpringDraft {
                        kind: SpringKind::Distance {
                            natural_length: self.scaled_length(multiplier, &between),
                        },
                        endpoints,
                        stiffness: template.stiffness,
                        origin: SpringOrigin::Template,
                    },
                    LengthRule::Scaled {
                        multiplier,
                        between,
                        counted_for_scaling: false,
                    },
                )
            }
            TemplateKind::AbsoluteAngle { angle } => (
                SpringDraft {
                    kind: SpringKind::AbsoluteAngle {
                        natural_angle: angle,
                    },
                    endpoints,
                    stiffness: template.stiffness,
                    origin: SpringOrigin::Template,
                },
                LengthRule::Fixed,
            ),
            TemplateKind::RelativeAngle { angle } => (
                SpringDraft {
                    kind: SpringKind::RelativeAngle {
                        natural_angle: angle,
                    },
                    endpoints,
                    stiffness: template.stiffness,
                    origin: SpringOrigin::Template,
                },
                LengthRule::Fixed,
            ),
        })
    }

    fn commit(&mut self, staged: Vec<(SpringDraft, LengthRule)>) -> Result<(), MapError> {
        if staged.is_empty() {
            return Ok(());
        }
        let (drafts, rules): (Vec<_>, Vec<_>) = staged.into_iter().unzip();
        let first = self.springs.len();
        solver::add_clauses(
            &drafts,
            &self.drafts,
            &mut self.system,
            &mut self.springs,
            &self.solver,
            &mut self.rng,
        )?;
        for (offset, (draft, rule)) in drafts.into_iter().zip(rules).enumerate() {
            if draft.origin == SpringOrigin::Hierarchy {
                self.hierarchy_springs.insert(
                    (draft.endpoints[1].clone(), draft.endpoints[0].clone()),
                    first + offset,
                );
            }
            self.drafts.push(draft);
            self.rules.push(rule);
        }
        Ok(())
    }

    /// Feeds every not-yet-counted imagined distance spring whose endpoints
    /// both carry observed labels into the scaling statistics.
    fn update_scaling_from_labels(&mut self) -> Result<(), MapError> {
        for i in 0..self.rules.len() {
            let LengthRule::Scaled {
                multiplier,
                ref between,
                counted_for_scaling: false,
            } = self.rules[i]
            else {
                continue;
            };
            let (Some(&pa), Some(&pb)) = (self.labels.get(&between.0), self.labels.get(&between.1)) else {
                continue;
            };
            let pair = self.level_pair(&between.0, &between.1);
            let assumed = multiplier * ScalingFactors::default_scale(pair);
            let observed = pa.distance(pb);
            if observed > 0.0 && assumed > 0.0 {
                self.scaling
                    .observe(pair, self.springs[i].stiffness, observed / assumed)?;
                debug!("scale {pair:?} observed ratio {}", observed / assumed);
            }
            if let LengthRule::Scaled {
                counted_for_scaling, ..
            } = &mut self.rules[i]
            {
                *counted_for_scaling = true;
            }
        }
        Ok(())
    }

    /// Records one weighted scale observation for a level pair.
    pub fn update_scaling_factor(&mut self, pair: LevelPair, stiffness: f64, ratio: f64) -> Result<(), MapError> {
        self.scaling.observe(pair, stiffness, ratio)?;
        self.refresh_natural_lengths();
        Ok(())
    }

    /// Stretches imagined distances by one exploration step and re-imagines.
    pub fn on_goal_not_found(&mut self) -> Result<ImagineReport, MapError> {
        self.exploration.expand();
        self.refresh_natural_lengths();
        self.imagine()
    }

    pub fn imagined_location(&self, goal: &Toponym) -> Result<Vec2, MapError> {
        self.system
            .get(goal)
            .map(|m| m.position)
            .ok_or_else(|| MapError::UnknownToponym(goal.to_string()))
    }

    pub fn set_explored_centre(&mut self, centre: Option<Vec2>) -> Result<(), MapError> {
        if centre.is_some_and(|c| !c.is_finite()) {
            return Err(MapError::NonFiniteCentre);
        }
        self.explored_centre = centre;
        self.explored_reach = f64::INFINITY;
        Ok(())
    }

    /// Like [`set_explored_centre`](Self::set_explored_centre), but the
    /// expansion push fades out at `reach` metres from the centre.
    pub fn set_explored_region(&mut self, centre: Vec2, reach: f64) -> Result<(), MapError> {
        if !centre.is_finite() {
            return Err(MapError::NonFiniteCentre);
        }
        if !(reach > 0.0) {
            return Err(MapError::InvalidReach(reach));
        }
        self.explored_centre = Some(centre);
        self.explored_reach = reach;
        Ok(())
    }

    pub fn explored_reach(&self) -> f64 {
        self.explored_reach
    }

    /// Relaxes the current system from its present state.
    pub fn imagine(&mut self) -> Result<ImagineReport, MapError> {
        let expansion = self.explored_centre.map(|centre| Expansion {
            centre,
            reach: self.explored_reach,
        });
        let out = solver::imagine(&self.system, &self.springs, expansion, &self.solver)?;
        if !out.settled {
            debug!("imagination hit the time cap after {} steps", out.steps);
        }
        self.system = out.state;
        let report = ImagineReport {
            settled: out.settled,
            steps: out.steps,
            sim_time: out.sim_time,
            energy: out.energy,
        };
        self.last_report = Some(report.clone());
        Ok(report)
    }
}
