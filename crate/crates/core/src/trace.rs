//! Trial trace records, one JSON object per line.

use serde::{Deserialize, Serialize};

use crate::grammar::{Clause, Toponym};
use crate::map::{AbstractMap, ImagineReport};
use crate::model::{SpringKind, SpringOrigin};
use crate::world::ScenarioDoc;

/// Energy samples kept per relaxation.
pub const MAX_ENERGY_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Robot clock in seconds.
    pub t: f64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImagineCause {
    Preload,
    Cue,
    Exploration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassRecord {
    pub name: Toponym,
    pub x: f64,
    pub y: f64,
    pub fixed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpringStyle {
    Distance,
    Angle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpringRecord {
    pub style: SpringStyle,
    pub observation: bool,
    /// Mass indices into the accompanying mass list.
    pub ends: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Event {
    /// Trial header: the scenario and trial parameters.
    World {
        scenario: ScenarioDoc,
        goal: Toponym,
        seed: u64,
    },
    Pose {
        x: f64,
        y: f64,
        heading: f64,
        odometry: f64,
    },
    Cue {
        id: String,
        x: f64,
        y: f64,
        heading: f64,
        clauses: Vec<Clause>,
    },
    Imagine {
        cause: ImagineCause,
        settled: bool,
        steps: usize,
        sim_time: f64,
        kinetic: f64,
        potential: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goal: Option<[f64; 2]>,
        masses: Vec<MassRecord>,
        springs: Vec<SpringRecord>,
    },
    /// Energy history of the preceding relaxation as (time, kinetic,
    /// potential) rows.
    Energy { samples: Vec<[f64; 3]> },
    Exploration { factor: f64, failures: u32 },
    Goal {
        success: bool,
        distance: f64,
        reason: String,
    },
}

/// Keeps at most `limit` evenly spaced items, always including the last.
pub fn downsample<T: Clone>(items: &[T], limit: usize) -> Vec<T> {
    if items.len() <= limit {
        return items.to_vec();
    }
    if limit < 2 {
        return items.last().into_iter().take(limit).cloned().collect();
    }
    let last = items.len() - 1;
    (0..limit)
        .map(|k| items[k * last / (limit - 1)].clone())
        .collect()
}

/// Snapshot of the map after a relaxation, plus its energy history.
pub fn imagine_events(
    t: f64,
    cause: ImagineCause,
    report: &ImagineReport,
    map: &AbstractMap,
    goal: Option<&Toponym>,
) -> [TraceEvent; 2] {
    let masses = map
        .system()
        .masses()
        .iter()
        .map(|m| MassRecord {
            name: m.toponym.clone(),
            x: m.position.x,
            y: m.position.y,
            fixed: m.fixed,
        })
        .collect();
    let springs = map
        .springs()
        .iter()
        .map(|s| SpringRecord {
            style: match s.kind {
                SpringKind::Distance { .. } => SpringStyle::Distance,
                _ => SpringStyle::Angle,
            },
            observation: s.origin == SpringOrigin::Observation,
            ends: s.endpoints().collect(),
        })
        .collect();
    let last = report.energy.last().map(|s| s.energy);
    let samples = downsample(&report.energy, MAX_ENERGY_SAMPLES)
        .iter()
        .map(|s| [s.t, s.energy.kinetic, s.energy.potential])
        .collect();
    [
        TraceEvent {
            t,
            event: Event::Imagine {
                cause,
                settled: report.settled,
                steps: report.steps,
                sim_time: report.sim_time,
                kinetic: last.map_or(0.0, |e| e.kinetic),
                potential: last.map_or(0.0, |e| e.potential),
                goal: goal
                    .and_then(|g| map.imagined_location(g).ok())
                    .map(|p| [p.x, p.y]),
                masses,
                springs,
            },
        },
        TraceEvent {
            t,
            event: Event::Energy { samples },
        },
    ]
}
