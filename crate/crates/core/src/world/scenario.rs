//! Scenario documents: a grid, cues, a place hierarchy and goals.

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CuePlacement, World, WorldError, WorldMap, DEFAULT_RESOLUTION};
use crate::geometry::Vec2;
use crate::grammar::{Clause, Toponym};
use crate::hierarchy::{HierarchyError, HierarchyGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario does not match the schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Grid(#[from] WorldError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("cue {0:?} is not on a free cell")]
    CueOnWall(String),
    #[error("cue id {0:?} is used twice")]
    DuplicateCue(String),
    #[error("robot start is not on a free cell")]
    StartBlocked,
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("no cue carries a label for goal {0:?}")]
    GoalUnreachableByLabel(String),
}

fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub name: Toponym,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyDoc {
    #[serde(default)]
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub edges: Vec<(Toponym, Toponym)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueDoc {
    pub id: String,
    pub pos: [f64; 2],
    #[serde(default)]
    pub heading: f64,
    #[serde(default)]
    pub clauses: Vec<Clause>,
}

/// Scenario file as written on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub name: String,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    pub grid: Vec<String>,
    pub origin: [f64; 2],
    pub robot_start: [f64; 2],
    #[serde(default)]
    pub hierarchy: HierarchyDoc,
    #[serde(default)]
    pub cues: Vec<CueDoc>,
    #[serde(default)]
    pub goals: Vec<Toponym>,
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub world: World,
    pub hierarchy: HierarchyGraph,
    pub robot_start: Vec2,
    pub goals: Vec<Toponym>,
}

fn point(p: [f64; 2], what: &'static str) -> Result<Vec2, ScenarioError> {
    let v = Vec2::new(p[0], p[1]);
    v.is_finite().then_some(v).ok_or(ScenarioError::NonFinite(what))
}

impl Scenario {
    pub fn from_doc(doc: ScenarioDoc) -> Result<Self, ScenarioError> {
        let origin = point(doc.origin, "origin")?;
        let map = WorldMap::from_rows(&doc.grid, doc.resolution, origin)?;

        let robot_start = point(doc.robot_start, "robot_start")?;
        if !map.is_free_at(robot_start) {
            return Err(ScenarioError::StartBlocked);
        }

        let mut hierarchy = HierarchyGraph::new();
        for node in &doc.hierarchy.nodes {
            hierarchy.add_node(node.name.clone(), node.level)?;
        }
        for (parent, child) in &doc.hierarchy.edges {
            hierarchy.add_edge(parent.clone(), child.clone())?;
        }

        let mut ids = IndexSet::new();
        let mut cues = Vec::with_capacity(doc.cues.len());
        for cue in &doc.cues {
            if !ids.insert(cue.id.as_str()) {
                return Err(ScenarioError::DuplicateCue(cue.id.clone()));
            }
            let position = point(cue.pos, "cue position")?;
            if !cue.heading.is_finite() {
                return Err(ScenarioError::NonFinite("cue heading"));
            }
            if !map.is_free_at(position) {
                return Err(ScenarioError::CueOnWall(cue.id.clone()));
            }
            cues.push(CuePlacement {
                id: cue.id.clone(),
                position,
                heading: cue.heading,
                clauses: cue.clauses.clone(),
            });
        }

        for goal in &doc.goals {
            let labelled = cues.iter().any(|cue| {
                cue.clauses
                    .iter()
                    .any(|c| matches!(c, Clause::Locational(l) if l.is_label() && &l.toponym == goal))
            });
            if !labelled {
                return Err(ScenarioError::GoalUnreachableByLabel(goal.to_string()));
            }
        }

        Ok(Self {
            goals: doc.goals.clone(),
            world: World { map, cues },
            hierarchy,
            robot_start,
            doc,
        })
    }

    pub fn name(&self) -> &str {
        &self.doc.name
    }

    /// Whether `toponym` appears in the hierarchy or in any cue payload.
    pub fn mentions(&self, toponym: &Toponym) -> bool {
        self.hierarchy.contains(toponym)
            || self.world.cues.iter().any(|cue| {
                cue.clauses.iter().any(|c| match c {
                    Clause::Locational(l) => &l.toponym == toponym,
                    Clause::Relational(r) => {
                        &r.figure == toponym
                            || r.referents.contains(toponym)
                            || r.context.as_ref() == Some(toponym)
                    }
                })
            })
    }

    /// Cue ids carrying a label for `toponym`.
    pub fn label_cues<'a>(&'a self, toponym: &'a Toponym) -> impl Iterator<Item = &'a CuePlacement> + 'a {
        self.world.cues.iter().filter(move |cue| {
            cue.clauses
                .iter()
                .any(|c| matches!(c, Clause::Locational(l) if l.is_label() && &l.toponym == toponym))
        })
    }
}

/// Parses and validates a scenario JSON document.
pub fn load_world(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    Scenario::from_doc(doc)
}
