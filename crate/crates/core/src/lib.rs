//! Symbolic navigation with malleable spring-mass spatial models.
//!
//! Structured spatial-language clauses ("the Lion is past the Giraffe",
//! "the Lion is in the African Safari", a signboard arrow) are turned into a
//! spring-mass system whose relaxed layout is the robot's current guess of
//! where unseen places are. Observations pin places to the world, refine
//! distance scales, and the guess is re-imagined.

pub mod geometry;
pub mod grammar;
pub mod hierarchy;
pub mod map;
pub mod model;
pub mod navigator;
pub mod solver;
pub mod trace;
pub mod world;

pub use geometry::{wrap_angle, Vec2};
pub use grammar::{Clause, Frame, LocationalClause, PrepositionLexicon, RelationalClause, Toponym};
pub use hierarchy::HierarchyGraph;
pub use map::{AbstractMap, ImagineReport, MapError, Observation, Pose};
pub use model::{PointMass, SpringKind, SpringOrigin, SpringSpec, SystemState};
pub use solver::SolverConfig;
pub use navigator::{run_trial, TrialConfig, TrialEnd, TrialResult};
pub use trace::{Event, TraceEvent};
pub use world::{load_world, Scenario};
