//! Desk-scale grid world: occupancy grid, cues, robot kinematics and
//! sensing.

mod planner;
mod scenario;

pub use planner::{nearest_frontier, plan_path, plan_step, PlanStep};
pub use scenario::{load_world, Scenario, ScenarioDoc, ScenarioError};

use indexmap::IndexSet;
use thiserror::Error;

use crate::geometry::{wrap_angle, Vec2};
use crate::grammar::{make_locational, Clause, Frame};
use crate::map::{Observation, Pose};

pub const DEFAULT_RESOLUTION: f64 = 0.25;
pub const SENSOR_RANGE: f64 = 4.0;
pub const ROBOT_SPEED: f64 = 0.5;
pub const CONTROL_TICK: f64 = 0.1;
const RAY_COUNT: usize = 360;
/// Distance kept from a wall face when motion is clipped.
const WALL_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("grid must be rectangular and at least 3x3")]
    BadShape,
    #[error("grid border cell ({col}, {row}) must be a wall")]
    OpenBorder { col: usize, row: usize },
    #[error("unexpected grid character {0:?}")]
    BadCell(char),
    #[error("resolution must be positive")]
    BadResolution,
    #[error("target is not finite")]
    NonFiniteTarget,
    #[error("robot cannot make progress")]
    NoProgress,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

/// Occupancy grid. `origin` is the top-left corner and row 0 the top
/// (max-y) row: cell `(c, r)` spans `x ∈ [origin.x + c·res, origin.x + (c+1)·res)`
/// and `y ∈ (origin.y − (r+1)·res, origin.y − r·res]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldMap {
    resolution: f64,
    origin: Vec2,
    width: usize,
    height: usize,
    walls: Vec<bool>,
}

impl WorldMap {
    pub fn from_rows<S: AsRef<str>>(rows: &[S], resolution: f64, origin: Vec2) -> Result<Self, WorldError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(WorldError::BadResolution);
        }
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().chars().count());
        if height < 3 || width < 3 || rows.iter().any(|r| r.as_ref().chars().count() != width) {
            return Err(WorldError::BadShape);
        }
        let mut walls = Vec::with_capacity(width * height);
        for row in rows {
            for ch in row.as_ref().chars() {
                walls.push(match ch {
                    '#' => true,
                    '.' => false,
                    other => return Err(WorldError::BadCell(other)),
                });
            }
        }
        let map = Self {
            resolution,
            origin,
            width,
            height,
            walls,
        };
        for row in 0..height {
            for col in 0..width {
                let border = row == 0 || col == 0 || row + 1 == height || col + 1 == width;
                if border && !map.is_wall(Cell::new(col, row)) {
                    return Err(WorldError::OpenBorder { col, row });
                }
            }
        }
        Ok(map)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.walls.len()
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_of_index(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.walls[self.index(cell)]
    }

    fn checked_cell(&self, i: i64, row: i64) -> Option<Cell> {
        (i >= 0 && row >= 0 && (i as usize) < self.width && (row as usize) < self.height)
            .then(|| Cell::new(i as usize, row as usize))
    }

    fn grid_coords(&self, p: Vec2) -> (f64, f64) {
        // second coordinate grows downwards, in rows
        ((p.x - self.origin.x) / self.resolution, (self.origin.y - p.y) / self.resolution)
    }

    pub fn cell_at(&self, p: Vec2) -> Option<Cell> {
        let (u, w) = self.grid_coords(p);
        self.checked_cell(u.floor() as i64, w.floor() as i64)
    }

    pub fn is_free_at(&self, p: Vec2) -> bool {
        self.cell_at(p).is_some_and(|c| !self.is_wall(c))
    }

    pub fn centre(&self, cell: Cell) -> Vec2 {
        Vec2::new(
            self.origin.x + (cell.col as f64 + 0.5) * self.resolution,
            self.origin.y - (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn neighbours8(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        const OFFSETS: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        OFFSETS.iter().filter_map(move |&(dc, dr)| {
            let (c, r) = (cell.col as i64 + dc, cell.row as i64 + dr);
            (c >= 0 && r >= 0 && (c as usize) < self.width && (r as usize) < self.height)
                .then(|| Cell::new(c as usize, r as usize))
        })
    }

    /// Cells touched by the segment `a → b` in order, with the segment
    /// parameter in [0, 1] at which each is entered. Passing exactly through a
    /// corner reports both side cells. Stops where the segment leaves the
    /// grid.
    pub fn traverse(&self, a: Vec2, b: Vec2) -> Vec<(Cell, f64)> {
        let (u0, w0) = self.grid_coords(a);
        let (u1, w1) = self.grid_coords(b);
        let (du, dw) = (u1 - u0, w1 - w0);
        let (mut i, mut j) = (u0.floor() as i64, w0.floor() as i64);
        let mut out = Vec::new();
        let Some(first) = self.checked_cell(i, j) else {
            return out;
        };
        out.push((first, 0.0));

        let axis = |d: f64, start: f64, idx: i64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, ((idx + 1) as f64 - start) / d, 1.0 / d)
            } else if d < 0.0 {
                (-1, (start - idx as f64) / -d, 1.0 / -d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (si, mut tmax_u, tdelta_u) = axis(du, u0, i);
        let (sj, mut tmax_w, tdelta_w) = axis(dw, w0, j);
        const TIE: f64 = 1e-12;

        loop {
            let t = tmax_u.min(tmax_w);
            if t > 1.0 {
                break;
            }
            if (tmax_u - tmax_w).abs() <= TIE {
                for (ci, cj) in [(i + si, j), (i, j + sj)] {
                    if let Some(cell) = self.checked_cell(ci, cj) {
                        out.push((cell, t));
                    }
                }
                i += si;
                j += sj;
                tmax_u += tdelta_u;
                tmax_w += tdelta_w;
            } else if tmax_u < tmax_w {
                i += si;
                tmax_u += tdelta_u;
            } else {
                j += sj;
                tmax_w += tdelta_w;
            }
            match self.checked_cell(i, j) {
                Some(cell) => out.push((cell, t)),
                None => break,
            }
        }
        out
    }

    /// True when the segment `a → b` crosses no wall cell.
    pub fn line_of_sight(&self, a: Vec2, b: Vec2) -> bool {
        let cells = self.traverse(a, b);
        !cells.is_empty() && cells.iter().all(|(c, _)| !self.is_wall(*c))
    }
}

/// A navigation cue: its pose and the clauses it communicates, written in
/// its own frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CuePlacement {
    pub id: String,
    pub position: Vec2,
    pub heading: f64,
    pub clauses: Vec<Clause>,
}

impl CuePlacement {
    pub fn pose(&self) -> Pose {
        Pose {
            position: self.position,
            heading: self.heading,
        }
    }

    /// Payload with cue-frame locational clauses expressed in the world
    /// frame.
    pub fn world_clauses(&self) -> Vec<Clause> {
        let pose = self.pose();
        self.clauses
            .iter()
            .map(|clause| match clause {
                Clause::Locational(loc) if loc.frame == Frame::Cue => {
                    let p = pose.transform(Vec2::new(loc.x, loc.y));
                    let bearing = loc
                        .bearing
                        .map(|b| wrap_angle(b + self.heading).unwrap_or(b));
                    Clause::Locational(
                        make_locational(loc.toponym.clone(), Frame::World, p.x, p.y, loc.range, bearing)
                            .expect("transform of a valid clause is valid"),
                    )
                }
                other => other.clone(),
            })
            .collect()
    }

    pub fn observation(&self) -> Observation {
        Observation {
            cue_id: self.id.clone(),
            pose: self.pose(),
            clauses: self.world_clauses(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub map: WorldMap,
    pub cues: Vec<CuePlacement>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub position: Vec2,
    pub heading: f64,
    pub odometry: f64,
    pub explored: Vec<bool>,
    pub observed_cues: IndexSet<String>,
}

impl RobotState {
    pub fn new(map: &WorldMap, position: Vec2) -> Self {
        Self {
            position,
            heading: 0.0,
            odometry: 0.0,
            explored: vec![false; map.cell_count()],
            observed_cues: IndexSet::new(),
        }
    }

    pub fn is_explored(&self, map: &WorldMap, cell: Cell) -> bool {
        self.explored[map.index(cell)]
    }

    pub fn explored_count(&self) -> usize {
        self.explored.iter().filter(|&&e| e).count()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SenseResult {
    pub newly_explored: Vec<Cell>,
    pub detections: Vec<Observation>,
}

/// 360° exploration raycast plus cue detection within [`SENSOR_RANGE`].
///
/// Rays mark every cell they cross, including the wall cell that stops them.
/// A cue is detected once per trial, when within range with a wall-free
/// line of sight.
pub fn sense(world: &World, robot: &mut RobotState) -> SenseResult {
    let map = &world.map;
    let mut result = SenseResult::default();
    for k in 0..RAY_COUNT {
        let angle = (k as f64).to_radians();
        let end = robot.position + Vec2::from_polar(SENSOR_RANGE, angle);
        for (cell, _) in map.traverse(robot.position, end) {
            let idx = map.index(cell);
            if !robot.explored[idx] {
                robot.explored[idx] = true;
                result.newly_explored.push(cell);
            }
            if map.is_wall(cell) {
                break;
            }
        }
    }
    for cue in &world.cues {
        if robot.observed_cues.contains(&cue.id) {
            continue;
        }
        if cue.position.distance(robot.position) <= SENSOR_RANGE
            && map.line_of_sight(robot.position, cue.position)
        {
            robot.observed_cues.insert(cue.id.clone());
            result.detections.push(cue.observation());
        }
    }
    result
}

/// Centroid of the centres of all explored cells.
pub fn centre_of_explored_mass(map: &WorldMap, robot: &RobotState) -> Option<Vec2> {
    let (sum, count) = robot
        .explored
        .iter()
        .enumerate()
        .filter(|(_, &e)| e)
        .fold((Vec2::ZERO, 0usize), |(s, n), (i, _)| (s + map.centre(map.cell_of_index(i)), n + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Centre of explored mass together with the distance from it to the
/// furthest explored cell centre.
pub fn explored_region(map: &WorldMap, robot: &RobotState) -> Option<(Vec2, f64)> {
    let centre = centre_of_explored_mass(map, robot)?;
    let reach = robot
        .explored
        .iter()
        .enumerate()
        .filter(|(_, &e)| e)
        .map(|(i, _)| map.centre(map.cell_of_index(i)).distance(centre))
        .fold(0.0, f64::max);
    Some((centre, reach))
}

/// Drives toward `waypoint` for `dt` seconds at [`ROBOT_SPEED`], never
/// travelling further than `max_distance`. Motion stops short of the first
/// wall cell on the way, and that cell is marked explored. Returns the
/// distance moved.
pub fn advance_robot(map: &WorldMap, robot: &mut RobotState, waypoint: Vec2, dt: f64, max_distance: f64) -> f64 {
    let to = waypoint - robot.position;
    let remaining = to.norm();
    if remaining < 1e-12 || !(dt > 0.0) || !(max_distance > 0.0) {
        return 0.0;
    }
    let dir = to / remaining;
    let step = (ROBOT_SPEED * dt).min(remaining).min(max_distance);
    let dest = robot.position + dir * step;
    let mut allowed = step;
    if let Some(&(wall, t)) = map.traverse(robot.position, dest).iter().find(|(c, _)| map.is_wall(*c)) {
        robot.explored[map.index(wall)] = true;
        allowed = (t * step - WALL_MARGIN).max(0.0);
    }
    let next = robot.position + dir * allowed;
    if allowed <= 0.0 || !map.is_free_at(next) {
        return 0.0;
    }
    let moved = next.distance(robot.position);
    robot.position = next;
    robot.odometry += moved;
    robot.heading = dir.angle();
    moved
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{Toponym, LocationalClause};
    use approx::assert_relative_eq;

    fn open_room(size: usize) -> WorldMap {
        let mut rows = Vec::new();
        for r in 0..size {
            let row: String = (0..size)
                .map(|c| if r == 0 || c == 0 || r + 1 == size || c + 1 == size { '#' } else { '.' })
                .collect();
            rows.push(row);
        }
        WorldMap::from_rows(&rows, 1.0, Vec2::new(0.0, size as f64)).unwrap()
    }

    #[test]
    fn cell_geometry() {
        let map = WorldMap::from_rows(&["###", "#.#", "###"], 0.5, Vec2::new(1.0, 2.0)).unwrap();
        assert_eq!(map.cell_at(Vec2::new(1.0, 2.0)), Some(Cell::new(0, 0)));
        assert_eq!(map.cell_at(Vec2::new(1.6, 1.4)), Some(Cell::new(1, 1)));
        assert_eq!(map.centre(Cell::new(1, 1)), Vec2::new(1.75, 1.25));
        assert_eq!(map.cell_at(Vec2::new(0.9, 2.0)), None);
        assert_eq!(map.cell_at(Vec2::new(1.0, 2.1)), None);
        assert_eq!(map.cell_at(Vec2::new(2.4, 0.6)), Some(Cell::new(2, 2)));
        assert_eq!(map.cell_at(map.centre(Cell::new(2, 2))), Some(Cell::new(2, 2)));
    }

    #[test]
    fn grid_validation() {
        assert_eq!(WorldMap::from_rows(&["##", "##"], 1.0, Vec2::ZERO), Err(WorldError::BadShape));
        assert_eq!(
            WorldMap::from_rows(&["###", "#..", "###"], 1.0, Vec2::ZERO),
            Err(WorldError::OpenBorder { col: 2, row: 1 })
        );
        assert_eq!(
            WorldMap::from_rows(&["###", "#x#", "###"], 1.0, Vec2::ZERO),
            Err(WorldError::BadCell('x'))
        );
    }

    #[test]
    fn traverse_covers_corner_crossings() {
        let map = open_room(6);
        // diagonal through exact cell corners
        let cells: Vec<Cell> = map
            .traverse(map.centre(Cell::new(1, 4)) - Vec2::new(0.5, 0.5) + Vec2::new(0.0, 0.0), map.centre(Cell::new(3, 2)))
            .into_iter()
            .map(|(c, _)| c)
            .collect();
        assert!(cells.contains(&Cell::new(2, 4)) && cells.contains(&Cell::new(1, 3)));
        assert_eq!(*cells.last().unwrap(), Cell::new(3, 2));
    }

    #[test]
    fn traverse_enter_times_are_monotone() {
        let map = open_room(10);
        let cells = map.traverse(Vec2::new(1.3, 2.2), Vec2::new(7.9, 6.4));
        assert!(cells.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(cells.iter().all(|(_, t)| (0.0..=1.0).contains(t)));
    }

    fn world_with_cue(map: WorldMap, at: Vec2) -> World {
        World {
            map,
            cues: vec![CuePlacement {
                id: "c".into(),
                position: at,
                heading: 0.0,
                clauses: vec![],
            }],
        }
    }

    #[test]
    fn cue_detection_range() {
        let map = open_room(12);
        let start = map.centre(Cell::new(2, 5));
        let near = world_with_cue(map.clone(), start + Vec2::new(3.0, 0.0));
        let mut robot = RobotState::new(&map, start);
        assert_eq!(sense(&near, &mut robot).detections.len(), 1);
        // reported once
        assert!(sense(&near, &mut robot).detections.is_empty());

        let far = world_with_cue(map.clone(), start + Vec2::new(5.0, 0.0));
        let mut robot = RobotState::new(&map, start);
        assert!(sense(&far, &mut robot).detections.is_empty());
    }

    #[test]
    fn cue_behind_wall_hidden() {
        let rows = [
            "#######", "#..#..#", "#..#..#", "#..#..#", "#######",
        ];
        let map = WorldMap::from_rows(&rows, 1.0, Vec2::new(0.0, 5.0)).unwrap();
        let start = map.centre(Cell::new(1, 2));
        let cue = map.centre(Cell::new(4, 2));
        assert!(start.distance(cue) <= SENSOR_RANGE);
        let world = world_with_cue(map.clone(), cue);
        let mut robot = RobotState::new(&map, start);
        let res = sense(&world, &mut robot);
        assert!(res.detections.is_empty());
        assert!(robot.is_explored(&map, Cell::new(3, 2)));
        assert!(!robot.is_explored(&map, Cell::new(4, 2)));
    }

    #[test]
    fn detection_transforms_payload() {
        let map = open_room(8);
        let lion = Toponym::new("Lion").unwrap();
        let clause = make_locational(lion, Frame::Cue, 1.0, 0.0, None, Some(std::f64::consts::FRAC_PI_2)).unwrap();
        let cue = CuePlacement {
            id: "sign".into(),
            position: Vec2::new(3.0, 3.0),
            heading: std::f64::consts::FRAC_PI_2,
            clauses: vec![Clause::Locational(clause)],
        };
        let Clause::Locational(LocationalClause { frame, x, y, bearing, .. }) = &cue.world_clauses()[0] else {
            panic!()
        };
        assert_eq!(*frame, Frame::World);
        assert_relative_eq!(*x, 3.0, epsilon = 1e-12);
        assert_relative_eq!(*y, 4.0, epsilon = 1e-12);
        assert_relative_eq!(bearing.unwrap(), std::f64::consts::PI, epsilon = 1e-12);
        let _ = map;
    }

    #[test]
    fn centre_of_explored() {
        let map = open_room(5);
        let mut robot = RobotState::new(&map, map.centre(Cell::new(2, 2)));
        assert_eq!(centre_of_explored_mass(&map, &robot), None);
        robot.explored[map.index(Cell::new(1, 1))] = true;
        robot.explored[map.index(Cell::new(3, 1))] = true;
        assert_eq!(
            centre_of_explored_mass(&map, &robot),
            Some((map.centre(Cell::new(1, 1)) + map.centre(Cell::new(3, 1))) / 2.0)
        );
        for c in [Cell::new(1, 2), Cell::new(3, 2)] {
            robot.explored[map.index(c)] = true;
        }
        let unit_square = [Cell::new(1, 1), Cell::new(3, 1), Cell::new(1, 2), Cell::new(3, 2)]
            .iter()
            .fold(Vec2::ZERO, |s, &c| s + map.centre(c))
            / 4.0;
        assert_eq!(centre_of_explored_mass(&map, &robot), Some(unit_square));
    }

    #[test]
    fn advance_examples() {
        let map = open_room(10);
        let start = Vec2::new(2.5, 5.5);
        let mut robot = RobotState::new(&map, start);
        let moved = advance_robot(&map, &mut robot, start + Vec2::new(1.0, 0.0), 0.2, f64::INFINITY);
        assert_relative_eq!(moved, 0.1, epsilon = 1e-12);
        assert_relative_eq!(robot.odometry, 0.1, epsilon = 1e-12);

        let here = robot.position;
        assert_eq!(advance_robot(&map, &mut robot, here, 0.2, f64::INFINITY), 0.0);

        // wall at x ∈ [9, 10)
        let mut near_wall = RobotState::new(&map, Vec2::new(8.95, 5.5));
        let moved = advance_robot(&map, &mut near_wall, Vec2::new(12.0, 5.5), 0.2, f64::INFINITY);
        assert!(moved < 0.1 && moved > 0.0);
        assert!(map.is_free_at(near_wall.position));
        assert!(near_wall.is_explored(&map, Cell::new(9, 4)));
    }

    #[test]
    fn advance_respects_budget() {
        let map = open_room(10);
        let mut robot = RobotState::new(&map, Vec2::new(2.5, 5.5));
        let moved = advance_robot(&map, &mut robot, Vec2::new(6.0, 5.5), 0.1, 0.01);
        assert_relative_eq!(moved, 0.01, epsilon = 1e-12);
    }
}
