//! Point masses, springs, and the forces and energies of the spring-mass
//! system.
//!
//! Every spring force is the exact negative gradient of a quadratic
//! potential:
//!
//! * distance: `U = ½K(|d| − r_n)²`
//! * absolute angle: `U = ½K·wrap(θ_AB − θ_n)²`, `θ_AB` the heading of `A − B`
//! * relative angle: `U = ½K·wrap(φ − θ_n)²`, `φ` the signed (CCW positive)
//!   angle from `C − B` to `A − B`
//!
//! Angle springs go slack (zero force, zero potential gradient) when an arm is
//! shorter than [`ANGLE_EPSILON`].

use indexmap::IndexMap;
use thiserror::Error;

use crate::geometry::{wrap_angle, Vec2};
use crate::grammar::Toponym;

pub const POINT_MASS: f64 = 1.0;
pub const FRICTION_COEFFICIENT: f64 = 0.1;
pub const EXPANSION_COEFFICIENT: f64 = 0.01;
pub const OBSERVATION_STIFFNESS: f64 = 2.5;
pub const ANGLE_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("toponym {0} is already registered")]
    DuplicateToponym(String),
    #[error("unknown toponym {0}")]
    UnknownToponym(String),
    #[error("spring endpoint index {0} out of range")]
    EndpointOutOfRange(usize),
    #[error("spring endpoints must be distinct")]
    RepeatedEndpoint,
    #[error("invalid spring parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("non-finite state")]
    NonFinite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointMass {
    pub toponym: Toponym,
    pub mass: f64,
    pub fixed: bool,
    pub position: Vec2,
    pub velocity: Vec2,
}

impl PointMass {
    pub fn free(toponym: Toponym, position: Vec2) -> Self {
        Self {
            toponym,
            mass: POINT_MASS,
            fixed: false,
            position,
            velocity: Vec2::ZERO,
        }
    }

    pub fn fixed(toponym: Toponym, position: Vec2) -> Self {
        Self {
            fixed: true,
            ..Self::free(toponym, position)
        }
    }
}

/// Ordered point masses plus the toponym → index map.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SystemState {
    masses: Vec<PointMass>,
    index: IndexMap<Toponym, usize>,
}

impl SystemState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn push(&mut self, mass: PointMass) -> Result<usize, ModelError> {
        if self.index.contains_key(&mass.toponym) {
            return Err(ModelError::DuplicateToponym(mass.toponym.to_string()));
        }
        if !mass.position.is_finite() || !mass.velocity.is_finite() {
            return Err(ModelError::NonFinite);
        }
        let i = self.masses.len();
        self.index.insert(mass.toponym.clone(), i);
        let mut mass = mass;
        if mass.fixed {
            mass.velocity = Vec2::ZERO;
        }
        self.masses.push(mass);
        Ok(i)
    }

    pub fn index_of(&self, toponym: &Toponym) -> Option<usize> {
        self.index.get(toponym).copied()
    }

    pub fn get(&self, toponym: &Toponym) -> Option<&PointMass> {
        self.index_of(toponym).map(|i| &self.masses[i])
    }

    pub fn masses(&self) -> &[PointMass] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> &PointMass {
        &self.masses[i]
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.masses.iter().map(|m| m.position).collect()
    }

    pub fn velocities(&self) -> Vec<Vec2> {
        self.masses.iter().map(|m| m.velocity).collect()
    }

    /// Overwrites positions and velocities; fixed masses keep theirs.
    pub fn set_kinematics(&mut self, positions: &[Vec2], velocities: &[Vec2]) {
        for ((m, &p), &v) in self.masses.iter_mut().zip(positions).zip(velocities) {
            if !m.fixed {
                m.position = p;
                m.velocity = v;
            }
        }
    }

    pub fn set_position(&mut self, i: usize, position: Vec2) {
        self.masses[i].position = position;
    }

    pub fn is_finite(&self) -> bool {
        self.masses
            .iter()
            .all(|m| m.position.is_finite() && m.velocity.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpringKind {
    Distance { natural_length: f64 },
    AbsoluteAngle { natural_angle: f64 },
    RelativeAngle { natural_angle: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpringOrigin {
    Template,
    Hierarchy,
    Observation,
}

/// One spring. `a` is the figure, `b` the referent (the vertex for relative
/// angles) and `c` the context of a relative-angle spring.
#[derive(Clone, Debug, PartialEq)]
pub struct SpringSpec {
    pub kind: SpringKind,
    pub a: usize,
    pub b: usize,
    pub c: Option<usize>,
    pub stiffness: f64,
    pub origin: SpringOrigin,
}

/// Forces on a spring's endpoints, in endpoint order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpringForce {
    pub a: Vec2,
    pub b: Vec2,
    pub c: Option<Vec2>,
}

impl SpringForce {
    const ZERO: SpringForce = SpringForce {
        a: Vec2::ZERO,
        b: Vec2::ZERO,
        c: None,
    };

    pub fn total(&self) -> Vec2 {
        self.a + self.b + self.c.unwrap_or_default()
    }
}

fn check_stiffness(stiffness: f64, origin: SpringOrigin) -> Result<(), ModelError> {
    if !(stiffness.is_finite() && stiffness > 0.0) {
        return Err(ModelError::InvalidParameter("stiffness must be positive"));
    }
    match origin {
        SpringOrigin::Observation if stiffness != OBSERVATION_STIFFNESS => Err(
            ModelError::InvalidParameter("observation springs use the observation stiffness"),
        ),
        SpringOrigin::Template | SpringOrigin::Hierarchy if stiffness > 1.0 => Err(
            ModelError::InvalidParameter("imagined springs are at most unit stiffness"),
        ),
        _ => Ok(()),
    }
}

fn check_angle(angle: f64) -> Result<f64, ModelError> {
    wrap_angle(angle).ok_or(ModelError::InvalidParameter("natural angle must be finite"))
}

impl SpringSpec {
    pub fn distance(
        a: usize,
        b: usize,
        natural_length: f64,
        stiffness: f64,
        origin: SpringOrigin,
    ) -> Result<Self, ModelError> {
        check_stiffness(stiffness, origin)?;
        if !(natural_length.is_finite() && natural_length >= 0.0) {
            return Err(ModelError::InvalidParameter("natural length must be non-negative"));
        }
        if a == b {
            return Err(ModelError::RepeatedEndpoint);
        }
        Ok(Self {
            kind: SpringKind::Distance { natural_length },
            a,
            b,
            c: None,
            stiffness,
            origin,
        })
    }

    pub fn absolute_angle(
        a: usize,
        b: usize,
        natural_angle: f64,
        stiffness: f64,
        origin: SpringOrigin,
    ) -> Result<Self, ModelError> {
        check_stiffness(stiffness, origin)?;
        if a == b {
            return Err(ModelError::RepeatedEndpoint);
        }
        Ok(Self {
            kind: SpringKind::AbsoluteAngle {
                natural_angle: check_angle(natural_angle)?,
            },
            a,
            b,
            c: None,
            stiffness,
            origin,
        })
    }

    pub fn relative_angle(
        a: usize,
        vertex: usize,
        c: usize,
        natural_angle: f64,
        stiffness: f64,
        origin: SpringOrigin,
    ) -> Result<Self, ModelError> {
        check_stiffness(stiffness, origin)?;
        if a == vertex || a == c || vertex == c {
            return Err(ModelError::RepeatedEndpoint);
        }
        Ok(Self {
            kind: SpringKind::RelativeAngle {
                natural_angle: check_angle(natural_angle)?,
            },
            a,
            b: vertex,
            c: Some(c),
            stiffness,
            origin,
        })
    }

    pub fn endpoints(&self) -> impl Iterator<Item = usize> {
        [Some(self.a), Some(self.b), self.c].into_iter().flatten()
    }

    pub fn touches(&self, i: usize) -> bool {
        self.endpoints().any(|e| e == i)
    }

    /// Checks endpoint indices against a system of `len` masses.
    pub fn validate_for(&self, len: usize) -> Result<(), ModelError> {
        if let Some(bad) = self.endpoints().find(|&e| e >= len) {
            return Err(ModelError::EndpointOutOfRange(bad));
        }
        Ok(())
    }

    pub fn is_distance(&self) -> bool {
        matches!(self.kind, SpringKind::Distance { .. })
    }

    /// Signed deviation of the measured quantity from its natural value
    /// (metres for distance springs, wrapped radians for angles). `None` for
    /// slack angle springs.
    pub fn deviation(&self, positions: &[Vec2]) -> Option<f64> {
        let (pa, pb) = (positions[self.a], positions[self.b]);
        match self.kind {
            SpringKind::Distance { natural_length } => Some((pa - pb).norm() - natural_length),
            SpringKind::AbsoluteAngle { natural_angle } => {
                let arm = pa - pb;
                (arm.norm() >= ANGLE_EPSILON).then(|| wrapped_delta(arm.angle() - natural_angle))
            }
            SpringKind::RelativeAngle { natural_angle } => {
                let pc = positions[self.c.expect("relative-angle spring has a context")];
                let (u, v) = (pc - pb, pa - pb);
                (u.norm() >= ANGLE_EPSILON && v.norm() >= ANGLE_EPSILON)
                    .then(|| wrapped_delta(u.cross(v).atan2(u.dot(v)) - natural_angle))
            }
        }
    }

    pub fn potential(&self, positions: &[Vec2]) -> f64 {
        self.deviation(positions)
            .map_or(0.0, |delta| 0.5 * self.stiffness * delta * delta)
    }

    pub fn force(&self, positions: &[Vec2]) -> SpringForce {
        let (pa, pb) = (positions[self.a], positions[self.b]);
        let k = self.stiffness;
        match self.kind {
            SpringKind::Distance { natural_length } => {
                let d = pb - pa;
                let len = d.norm();
                if len == 0.0 {
                    return SpringForce::ZERO;
                }
                let on_a = d * (k * (len - natural_length) / len);
                SpringForce {
                    a: on_a,
                    b: -on_a,
                    c: None,
                }
            }
            SpringKind::AbsoluteAngle { natural_angle } => {
                let arm = pa - pb;
                let len2 = arm.norm_squared();
                if len2.sqrt() < ANGLE_EPSILON {
                    return SpringForce::ZERO;
                }
                let delta = wrapped_delta(arm.angle() - natural_angle);
                // ∂θ/∂A = perp(arm)/|arm|²
                let on_a = arm.perp() * (-k * delta / len2);
                SpringForce {
                    a: on_a,
                    b: -on_a,
                    c: None,
                }
            }
            SpringKind::RelativeAngle { natural_angle } => {
                let pc = positions[self.c.expect("relative-angle spring has a context")];
                let (u, v) = (pc - pb, pa - pb);
                let (u2, v2) = (u.norm_squared(), v.norm_squared());
                if u2.sqrt() < ANGLE_EPSILON || v2.sqrt() < ANGLE_EPSILON {
                    return SpringForce {
                        c: Some(Vec2::ZERO),
                        ..SpringForce::ZERO
                    };
                }
                let delta = wrapped_delta(u.cross(v).atan2(u.dot(v)) - natural_angle);
                // ∂φ/∂A = perp(v)/|v|², ∂φ/∂C = −perp(u)/|u|², B balances.
                let on_a = v.perp() * (-k * delta / v2);
                let on_c = u.perp() * (k * delta / u2);
                SpringForce {
                    a: on_a,
                    b: -(on_a + on_c),
                    c: Some(on_c),
                }
            }
        }
    }
}

fn wrapped_delta(angle: f64) -> f64 {
    wrap_angle(angle).unwrap_or(0.0)
}

pub fn wrap(angle: f64) -> Result<f64, ModelError> {
    wrap_angle(angle).ok_or(ModelError::NonFinite)
}

/// Forces exerted by `spring` on its endpoints in `state`.
pub fn spring_force(spring: &SpringSpec, state: &SystemState) -> SpringForce {
    spring.force(&state.positions())
}

pub fn friction_force(mass: &PointMass) -> Vec2 {
    if mass.fixed {
        return Vec2::ZERO;
    }
    mass.velocity * -FRICTION_COEFFICIENT
}

/// Outward push away from the centre of explored space.
pub fn expansion_force(mass: &PointMass, centre: Option<Vec2>) -> Vec2 {
    match centre {
        Some(c) if !mass.fixed => (mass.position - c) * EXPANSION_COEFFICIENT,
        _ => Vec2::ZERO,
    }
}

/// Push away from the centre of explored space. Within `reach` the force is
/// `c·(x − C)` tapered by `1 − |x − C| / reach`; beyond it there is none.
/// An infinite reach gives the plain linear push of [`expansion_force`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expansion {
    pub centre: Vec2,
    pub reach: f64,
}

impl Expansion {
    pub fn unbounded(centre: Vec2) -> Self {
        Self {
            centre,
            reach: f64::INFINITY,
        }
    }

    pub fn force_at(&self, position: Vec2) -> Vec2 {
        let offset = position - self.centre;
        let r = offset.norm();
        if r >= self.reach {
            return Vec2::ZERO;
        }
        offset * (EXPANSION_COEFFICIENT * (1.0 - r / self.reach))
    }
}

/// Accelerations for raw kinematic arrays; the shared kernel of
/// [`motion_model`] and the integrator.
pub(crate) fn accelerations_into(
    masses: &[PointMass],
    positions: &[Vec2],
    velocities: &[Vec2],
    springs: &[SpringSpec],
    expansion: Option<Expansion>,
    out: &mut Vec<Vec2>,
) {
    out.clear();
    out.resize(masses.len(), Vec2::ZERO);
    for spring in springs {
        let f = spring.force(positions);
        out[spring.a] += f.a;
        out[spring.b] += f.b;
        if let (Some(c), Some(fc)) = (spring.c, f.c) {
            out[c] += fc;
        }
    }
    for (i, m) in masses.iter().enumerate() {
        if m.fixed {
            out[i] = Vec2::ZERO;
            continue;
        }
        let mut total = out[i] - velocities[i] * FRICTION_COEFFICIENT;
        if let Some(field) = expansion {
            total += field.force_at(positions[i]);
        }
        out[i] = total / m.mass;
    }
}

/// Acceleration of every mass (zero for fixed masses) at the current state.
/// The system is autonomous, so `t` only labels the evaluation.
pub fn motion_model(
    _t: f64,
    state: &SystemState,
    springs: &[SpringSpec],
    centre: Option<Vec2>,
) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(state.len());
    accelerations_into(
        state.masses(),
        &state.positions(),
        &state.velocities(),
        springs,
        centre.map(Expansion::unbounded),
        &mut out,
    );
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Energy {
    pub kinetic: f64,
    pub potential: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

pub(crate) fn energy_of(masses: &[PointMass], positions: &[Vec2], velocities: &[Vec2], springs: &[SpringSpec]) -> Energy {
    let kinetic = masses
        .iter()
        .zip(velocities)
        .filter(|(m, _)| !m.fixed)
        .map(|(m, v)| 0.5 * m.mass * v.norm_squared())
        .sum();
    let potential = springs.iter().map(|s| s.potential(positions)).sum();
    Energy { kinetic, potential }
}

pub fn total_energy(state: &SystemState, springs: &[SpringSpec]) -> Energy {
    energy_of(state.masses(), &state.positions(), &state.velocities(), springs)
}
