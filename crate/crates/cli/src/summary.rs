//! Batch summary: one row per trial and per-goal distance statistics.

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub goal: String,
    pub seed: u64,
    pub success: bool,
    pub end: String,
    pub distance: f64,
    pub cues_observed: usize,
    pub explorations: u32,
    pub trace: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoalRow {
    pub goal: String,
    pub trials: usize,
    pub successes: usize,
    pub mean_distance: f64,
    pub min_distance: f64,
    pub max_distance: f64,
    pub distances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub trials: usize,
    pub successes: usize,
    pub mean_distance: f64,
    pub goals: Vec<GoalRow>,
    pub runs: Vec<TrialRow>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Groups rows by goal in first-seen order. Distances cover every trial,
/// failed ones included.
pub fn summarise(scenario: &str, runs: Vec<TrialRow>) -> Summary {
    let mut goals: Vec<GoalRow> = Vec::new();
    for run in &runs {
        let row = match goals.iter_mut().position(|g| g.goal == run.goal) {
            Some(i) => &mut goals[i],
            None => {
                goals.push(GoalRow {
                    goal: run.goal.clone(),
                    trials: 0,
                    successes: 0,
                    mean_distance: 0.0,
                    min_distance: f64::INFINITY,
                    max_distance: f64::NEG_INFINITY,
                    distances: Vec::new(),
                });
                goals.last_mut().expect("just pushed")
            }
        };
        row.trials += 1;
        row.successes += usize::from(run.success);
        row.min_distance = row.min_distance.min(run.distance);
        row.max_distance = row.max_distance.max(run.distance);
        row.distances.push(run.distance);
    }
    for g in &mut goals {
        g.mean_distance = mean(&g.distances);
    }
    let all: Vec<f64> = runs.iter().map(|r| r.distance).collect();
    Summary {
        scenario: scenario.to_owned(),
        trials: runs.len(),
        successes: runs.iter().filter(|r| r.success).count(),
        mean_distance: mean(&all),
        goals,
        runs,
    }
}
