//! Fixed-step RK4 integration of the spring-mass system, settling
//! detection, and placement of newly introduced point masses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::Vec2;
use crate::grammar::Toponym;
use crate::model::{
    accelerations_into, energy_of, Energy, Expansion, ModelError, PointMass, SpringKind, SpringOrigin,
    SpringSpec, SystemState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("integration diverged to a non-finite state at t = {0}")]
    NonFiniteState(f64),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub step: f64,
    pub accel_threshold: f64,
    pub velocity_threshold: f64,
    pub max_sim_time: f64,
    pub placement_descent_steps: usize,
    pub placement_learning_rate: f64,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step: 0.02,
            accel_threshold: 0.1,
            velocity_threshold: 0.1,
            max_sim_time: 300.0,
            placement_descent_steps: 200,
            placement_learning_rate: 0.05,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.step > 0.0) {
            return Err(SolverError::InvalidConfig("step must be positive"));
        }
        if !(self.accel_threshold > 0.0 && self.velocity_threshold > 0.0) {
            return Err(SolverError::InvalidConfig("settling thresholds must be positive"));
        }
        if !(self.max_sim_time >= self.step) {
            return Err(SolverError::InvalidConfig("max_sim_time must cover one step"));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }
}

/// Scratch buffers for one RK4 step.
#[derive(Default)]
struct Workspace {
    acc: Vec<Vec2>,
    pos: Vec<Vec2>,
    vel: Vec<Vec2>,
    dx: [Vec<Vec2>; 4],
    dv: [Vec<Vec2>; 4],
}

fn rk4_in_place(
    masses: &[PointMass],
    positions: &mut [Vec2],
    velocities: &mut [Vec2],
    springs: &[SpringSpec],
    expansion: Option<Expansion>,
    h: f64,
    ws: &mut Workspace,
) {
    let n = masses.len();
    let stage_offsets = [0.0, 0.5 * h, 0.5 * h, h];
    for stage in 0..4 {
        ws.pos.clear();
        ws.vel.clear();
        if stage == 0 {
            ws.pos.extend_from_slice(positions);
            ws.vel.extend_from_slice(velocities);
        } else {
            let dt = stage_offsets[stage];
            for i in 0..n {
                ws.pos.push(positions[i] + ws.dx[stage - 1][i] * dt);
                ws.vel.push(velocities[i] + ws.dv[stage - 1][i] * dt);
            }
        }
        accelerations_into(masses, &ws.pos, &ws.vel, springs, expansion, &mut ws.acc);
        ws.dx[stage].clear();
        ws.dx[stage].extend(
            masses
                .iter()
                .zip(&ws.vel)
                .map(|(m, &v)| if m.fixed { Vec2::ZERO } else { v }),
        );
        ws.dv[stage].clear();
        ws.dv[stage].extend_from_slice(&ws.acc);
    }
    for (i, m) in masses.iter().enumerate() {
        if m.fixed {
            continue;
        }
        let dx = ws.dx[0][i] + (ws.dx[1][i] + ws.dx[2][i]) * 2.0 + ws.dx[3][i];
        let dv = ws.dv[0][i] + (ws.dv[1][i] + ws.dv[2][i]) * 2.0 + ws.dv[3][i];
        positions[i] += dx * (h / 6.0);
        velocities[i] += dv * (h / 6.0);
    }
}

/// One classical Runge–Kutta step of length `h` from time `t`.
pub fn rk4_step(
    t: f64,
    state: &SystemState,
    springs: &[SpringSpec],
    centre: Option<Vec2>,
    h: f64,
) -> Result<SystemState, SolverError> {
    if !(h > 0.0) {
        return Err(SolverError::InvalidConfig("step must be positive"));
    }
    let mut positions = state.positions();
    let mut velocities = state.velocities();
    rk4_in_place(
        state.masses(),
        &mut positions,
        &mut velocities,
        springs,
        centre.map(Expansion::unbounded),
        h,
        &mut Workspace::default(),
    );
    let mut next = state.clone();
    next.set_kinematics(&positions, &velocities);
    if !next.is_finite() {
        return Err(SolverError::NonFiniteState(t + h));
    }
    Ok(next)
}

fn settled_raw(masses: &[PointMass], velocities: &[Vec2], accelerations: &[Vec2], cfg: &SolverConfig) -> bool {
    masses
        .iter()
        .zip(velocities.iter().zip(accelerations))
        .filter(|(m, _)| !m.fixed)
        .all(|(_, (v, a))| a.norm() < cfg.accel_threshold && v.norm() < cfg.velocity_threshold)
}

/// True iff every free mass is below both the acceleration and velocity
/// thresholds.
pub fn settled(state: &SystemState, accelerations: &[Vec2], cfg: &SolverConfig) -> bool {
    settled_raw(state.masses(), &state.velocities(), accelerations, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    pub energy: Energy,
}

/// Result of relaxing the system.
#[derive(Clone, Debug)]
pub struct Imagination {
    pub state: SystemState,
    /// False when `max_sim_time` ran out first; `state` is then the last
    /// integrated state.
    pub settled: bool,
    pub steps: usize,
    pub sim_time: f64,
    pub energy: Vec<EnergySample>,
}

/// Integrates until the system settles or `max_sim_time` elapses.
pub fn imagine(
    initial: &SystemState,
    springs: &[SpringSpec],
    expansion: Option<Expansion>,
    cfg: &SolverConfig,
) -> Result<Imagination, SolverError> {
    cfg.validate()?;
    for spring in springs {
        spring.validate_for(initial.len())?;
    }
    let masses = initial.masses();
    let mut positions = initial.positions();
    let mut velocities = initial.velocities();
    let mut ws = Workspace::default();
    let mut acc = Vec::new();
    let mut t = 0.0;
    let mut steps = 0;
    let mut energy = Vec::new();

    let settled = loop {
        accelerations_into(masses, &positions, &velocities, springs, expansion, &mut acc);
        energy.push(EnergySample {
            t,
            energy: energy_of(masses, &positions, &velocities, springs),
        });
        if settled_raw(masses, &velocities, &acc, cfg) {
            break true;
        }
        if t >= cfg.max_sim_time {
            break false;
        }
        rk4_in_place(masses, &mut positions, &mut velocities, springs, expansion, cfg.step, &mut ws);
        steps += 1;
        t = steps as f64 * cfg.step;
        if positions.iter().chain(&velocities).any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteState(t));
        }
    };

    let mut state = initial.clone();
    state.set_kinematics(&positions, &velocities);
    Ok(Imagination {
        state,
        settled,
        steps,
        sim_time: t,
        energy,
    })
}

fn attached_potential(springs: &[&SpringSpec], positions: &[Vec2]) -> f64 {
    springs.iter().map(|s| s.potential(positions)).sum()
}

fn attached_gradient(springs: &[&SpringSpec], positions: &[Vec2], target: usize) -> Vec2 {
    let mut force = Vec2::ZERO;
    for spring in springs {
        let f = spring.force(positions);
        if spring.a == target {
            force += f.a;
        }
        if spring.b == target {
            force += f.b;
        }
        if spring.c == Some(target) {
            force += f.c.unwrap_or_default();
        }
    }
    -force
}

/// Chooses a starting position for mass `target` by gradient descent on the
/// potential of the springs attached to it.
///
/// Only springs whose other endpoints are all in `placed` contribute. The
/// descent starts at the centroid of placed neighbours (or of all placed
/// masses, or the origin) plus a 0.1 m seeded jitter, and returns the lowest
/// energy point it visits.
pub fn initial_placement<R: Rng>(
    target: usize,
    springs: &[SpringSpec],
    positions: &[Vec2],
    placed: &[bool],
    cfg: &SolverConfig,
    rng: &mut R,
) -> Vec2 {
    let attached: Vec<&SpringSpec> = springs
        .iter()
        .filter(|s| s.touches(target) && s.endpoints().all(|e| e == target || placed[e]))
        .collect();

    let neighbours: Vec<Vec2> = {
        let mut seen = Vec::new();
        for s in &attached {
            for e in s.endpoints().filter(|&e| e != target) {
                if !seen.contains(&e) {
                    seen.push(e);
                }
            }
        }
        seen.into_iter().map(|e| positions[e]).collect()
    };
    let anchor_points: Vec<Vec2> = if neighbours.is_empty() {
        positions
            .iter()
            .zip(placed)
            .filter(|(_, &p)| p)
            .map(|(&x, _)| x)
            .collect()
    } else {
        neighbours
    };
    let centroid = if anchor_points.is_empty() {
        Vec2::ZERO
    } else {
        anchor_points.iter().fold(Vec2::ZERO, |acc, &p| acc + p) / anchor_points.len() as f64
    };
    let jitter = Vec2::from_polar(0.1, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
    let start = centroid + jitter;
    if attached.is_empty() {
        return start;
    }

    let mut scratch = positions.to_vec();
    scratch[target] = start;
    let mut energy = attached_potential(&attached, &scratch);
    let mut best = (energy, start);
    let mut rate = cfg.placement_learning_rate;
    for _ in 0..cfg.placement_descent_steps {
        let current = scratch[target];
        let grad = attached_gradient(&attached, &scratch, target);
        if grad.norm() == 0.0 {
            break;
        }
        // backtrack so a steep angular gradient near a neighbour cannot throw
        // the point far away
        let mut accepted = false;
        for _ in 0..30 {
            scratch[target] = current - grad * rate;
            let trial = attached_potential(&attached, &scratch);
            if trial <= energy {
                energy = trial;
                accepted = true;
                break;
            }
            rate *= 0.5;
        }
        if !accepted {
            scratch[target] = current;
            break;
        }
        if energy < best.0 {
            best = (energy, scratch[target]);
        }
        rate = (rate * 1.5).min(cfg.placement_learning_rate);
    }
    best.1
}

/// A spring whose endpoints are named rather than indexed, so it can mention
/// masses that do not exist yet.
#[derive(Clone, Debug, PartialEq)]
pub struct SpringDraft {
    pub kind: SpringKind,
    pub endpoints: Vec<Toponym>,
    pub stiffness: f64,
    pub origin: SpringOrigin,
}

impl SpringDraft {
    fn resolve(&self, state: &SystemState) -> Result<SpringSpec, SolverError> {
        let idx = |t: &Toponym| {
            state
                .index_of(t)
                .ok_or_else(|| ModelError::UnknownToponym(t.to_string()))
        };
        let spec = match (self.kind, self.endpoints.as_slice()) {
            (SpringKind::Distance { natural_length }, [a, b]) => {
                SpringSpec::distance(idx(a)?, idx(b)?, natural_length, self.stiffness, self.origin)?
            }
            (SpringKind::AbsoluteAngle { natural_angle }, [a, b]) => {
                SpringSpec::absolute_angle(idx(a)?, idx(b)?, natural_angle, self.stiffness, self.origin)?
            }
            (SpringKind::RelativeAngle { natural_angle }, [a, b, c]) => SpringSpec::relative_angle(
                idx(a)?,
                idx(b)?,
                idx(c)?,
                natural_angle,
                self.stiffness,
                self.origin,
            )?,
            _ => return Err(ModelError::InvalidParameter("endpoint count does not match spring kind").into()),
        };
        Ok(spec)
    }
}

/// Order in which new toponyms get placed: descending total attached
/// stiffness, ties by name.
pub fn placement_order(new: &[Toponym], springs: &[SpringDraft]) -> Vec<Toponym> {
    let mut weighted: Vec<(f64, &Toponym)> = new
        .iter()
        .map(|t| {
            let weight = springs
                .iter()
                .filter(|s| s.endpoints.contains(t))
                .map(|s| s.stiffness)
                .sum();
            (weight, t)
        })
        .collect();
    weighted.sort_by(|(wa, a), (wb, b)| wb.total_cmp(wa).then_with(|| a.cmp(b)));
    weighted.into_iter().map(|(_, t)| t.clone()).collect()
}

/// Appends `drafts` to `springs`, creating and placing any masses they
/// introduce. Existing masses are not touched.
///
/// `existing_drafts` describes the springs already in `springs`, so the
/// stiffness ranking counts every spring attached to a new mass.
pub fn add_clauses<R: Rng>(
    drafts: &[SpringDraft],
    existing_drafts: &[SpringDraft],
    state: &mut SystemState,
    springs: &mut Vec<SpringSpec>,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<Vec<Toponym>, SolverError> {
    if drafts.is_empty() {
        return Ok(Vec::new());
    }
    let mut new: Vec<Toponym> = Vec::new();
    for draft in drafts {
        for t in &draft.endpoints {
            if state.index_of(t).is_none() && !new.contains(t) {
                new.push(t.clone());
            }
        }
    }
    let all: Vec<SpringDraft> = existing_drafts.iter().chain(drafts).cloned().collect();
    let order = placement_order(&new, &all);

    let first_new = state.len();
    for t in &order {
        state.push(PointMass::free(t.clone(), Vec2::ZERO))?;
    }
    let mut placed: Vec<bool> = (0..state.len()).map(|i| i < first_new).collect();
    let resolved: Vec<SpringSpec> = all
        .iter()
        .map(|d| d.resolve(state))
        .collect::<Result<_, _>>()?;
    let mut positions = state.positions();
    for i in first_new..state.len() {
        positions[i] = initial_placement(i, &resolved, &positions, &placed, cfg, rng);
        state.set_position(i, positions[i]);
        placed[i] = true;
    }
    springs.extend(resolved.into_iter().skip(existing_drafts.len()));
    Ok(order)
}
