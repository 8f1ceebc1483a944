//! Grid planning over explored free space.
//!
//! Only cells that are both explored and free are passable. Moves are
//! 8-connected at cost 1 (straight) or √2 (diagonal); diagonal moves may not
//! cut a blocked corner. When the target lies in unexplored space the robot
//! drives straight at it if the line into unseen space is clear, and
//! otherwise heads for the frontier cell with the lowest path cost plus
//! straight-line distance to the target.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Cell, RobotState, WorldError, WorldMap};
use crate::geometry::Vec2;

/// How many path cells ahead the waypoint may skip.
const LOOKAHEAD: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlanStep {
    /// Drive straight toward this point.
    Waypoint(Vec2),
    /// The robot stands on the target.
    Arrived,
    /// The target cannot be approached any further.
    Stuck,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    g: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then larger g (deeper), then lower index
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.col.abs_diff(b.col) as f64;
    let dy = a.row.abs_diff(b.row) as f64;
    dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)
}

/// Legal moves out of `cell` with their costs.
fn moves<'a>(
    map: &'a WorldMap,
    passable: &'a dyn Fn(Cell) -> bool,
    cell: Cell,
) -> impl Iterator<Item = (Cell, f64)> + 'a {
    map.neighbours8(cell).filter_map(move |n| {
        if !passable(n) {
            return None;
        }
        if n.col != cell.col && n.row != cell.row {
            let side_a = Cell::new(n.col, cell.row);
            let side_b = Cell::new(cell.col, n.row);
            if !passable(side_a) || !passable(side_b) {
                return None;
            }
            Some((n, std::f64::consts::SQRT_2))
        } else {
            Some((n, 1.0))
        }
    })
}

fn unwind(map: &WorldMap, parent: &[usize], goal: usize) -> Vec<Cell> {
    let mut path = vec![map.cell_of_index(goal)];
    let mut at = goal;
    while parent[at] != usize::MAX {
        at = parent[at];
        path.push(map.cell_of_index(at));
    }
    path.reverse();
    path
}

/// A* shortest path from `start` to `goal` through passable cells. Returns
/// the cells (both ends included) and the path cost in cells.
pub fn plan_path(
    map: &WorldMap,
    passable: &dyn Fn(Cell) -> bool,
    start: Cell,
    goal: Cell,
) -> Option<(Vec<Cell>, f64)> {
    if !passable(start) || !passable(goal) {
        return None;
    }
    let n = map.cell_count();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let s = map.index(start);
    g[s] = 0.0;
    open.push(Entry {
        f: octile(start, goal),
        g: 0.0,
        index: s,
    });
    let target = map.index(goal);
    while let Some(Entry { g: cost, index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        if index == target {
            return Some((unwind(map, &parent, index), cost));
        }
        closed[index] = true;
        for (next, step) in moves(map, passable, map.cell_of_index(index)) {
            let ni = map.index(next);
            let candidate = cost + step;
            if candidate < g[ni] - 1e-12 {
                g[ni] = candidate;
                parent[ni] = index;
                open.push(Entry {
                    f: candidate + octile(next, goal),
                    g: candidate,
                    index: ni,
                });
            }
        }
    }
    None
}

/// Uniform-cost flood from `start`.
fn flood(map: &WorldMap, passable: &dyn Fn(Cell) -> bool, start: Cell) -> (Vec<f64>, Vec<usize>) {
    let n = map.cell_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut open = BinaryHeap::new();
    let s = map.index(start);
    dist[s] = 0.0;
    open.push(Entry {
        f: 0.0,
        g: 0.0,
        index: s,
    });
    while let Some(Entry { f: cost, index, .. }) = open.pop() {
        if cost > dist[index] {
            continue;
        }
        for (next, step) in moves(map, passable, map.cell_of_index(index)) {
            let ni = map.index(next);
            let candidate = cost + step;
            if candidate < dist[ni] - 1e-12 {
                dist[ni] = candidate;
                parent[ni] = index;
                open.push(Entry {
                    f: candidate,
                    g: candidate,
                    index: ni,
                });
            }
        }
    }
    (dist, parent)
}

fn orthogonal(map: &WorldMap, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
    map.neighbours8(cell)
        .filter(move |n| n.col == cell.col || n.row == cell.row)
}

/// Keeps a point inside the grid's outer cells.
fn clamp_to_grid(map: &WorldMap, p: Vec2) -> Vec2 {
    let res = map.resolution();
    let o = map.origin();
    let min_x = o.x + 0.5 * res;
    let max_x = o.x + (map.width() as f64 - 0.5) * res;
    let max_y = o.y - 0.5 * res;
    let min_y = o.y - (map.height() as f64 - 0.5) * res;
    Vec2::new(p.x.clamp(min_x, max_x), p.y.clamp(min_y, max_y))
}

/// Furthest path cell (within the lookahead) visible from `from` through
/// passable cells.
fn lookahead(map: &WorldMap, passable: &dyn Fn(Cell) -> bool, from: Vec2, path: &[Cell]) -> usize {
    let last = path.len().saturating_sub(1).min(LOOKAHEAD);
    (1..=last)
        .rev()
        .find(|&k| {
            let cells = map.traverse(from, map.centre(path[k]));
            !cells.is_empty() && cells.iter().all(|(c, _)| passable(*c))
        })
        .unwrap_or(1.min(last))
}

/// Reachable frontier cell closest by path cost, if any. A frontier cell
/// is explored free space with an unexplored orthogonal neighbour.
pub fn nearest_frontier(map: &WorldMap, robot: &RobotState) -> Option<Cell> {
    let start = map.cell_at(robot.position)?;
    let passable = |c: Cell| c == start || (robot.explored[map.index(c)] && !map.is_wall(c));
    let (dist, _) = flood(map, &passable, start);
    (0..map.cell_count())
        .filter(|&i| dist[i].is_finite())
        .map(|i| map.cell_of_index(i))
        .filter(|&c| orthogonal(map, c).any(|n| !robot.explored[map.index(n)]))
        .min_by(|&a, &b| dist[map.index(a)].total_cmp(&dist[map.index(b)]))
}

/// One planning decision toward `target`.
pub fn plan_step(map: &WorldMap, robot: &RobotState, target: Vec2) -> Result<PlanStep, WorldError> {
    if !target.is_finite() {
        return Err(WorldError::NonFiniteTarget);
    }
    let start = map.cell_at(robot.position).ok_or(WorldError::NoProgress)?;
    let passable = |c: Cell| c == start || (robot.explored[map.index(c)] && !map.is_wall(c));
    let target = clamp_to_grid(map, target);
    let target_cell = map.cell_at(target).expect("clamped into the grid");

    if passable(target_cell) {
        if let Some((path, _)) = plan_path(map, &passable, start, target_cell) {
            return Ok(follow(map, &passable, robot.position, &path, Some(target)));
        }
    }

    let line = map.traverse(robot.position, target);
    let exit_at = line.iter().position(|(c, _)| !robot.explored[map.index(*c)]);
    if let Some(k) = exit_at {
        // open line of sight into unseen space: drive straight at it
        if line[..k].iter().all(|(c, _)| passable(*c)) {
            return Ok(PlanStep::Waypoint(target));
        }
    }

    let (dist, parent) = flood(map, &passable, start);
    let reachable = |c: Cell| dist[map.index(c)].is_finite();
    // frontier minimising known path cost plus straight-line remainder
    let res = map.resolution();
    let frontier = (0..map.cell_count())
        .map(|i| map.cell_of_index(i))
        .filter(|&c| reachable(c) && orthogonal(map, c).any(|n| !robot.explored[map.index(n)]))
        .map(|c| (c, dist[map.index(c)] * res + map.centre(c).distance(target)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(c, _)| c);
    let goal = match frontier {
        Some(g) if g == start => {
            // step into the unexplored neighbour facing the target
            let into = orthogonal(map, start)
                .filter(|n| !robot.explored[map.index(*n)])
                .min_by(|a, b| map.centre(*a).distance(target).total_cmp(&map.centre(*b).distance(target)))
                .expect("frontier cell has an unexplored neighbour");
            return Ok(PlanStep::Waypoint(map.centre(into)));
        }
        Some(g) => g,
        None => {
            let nearest = (0..map.cell_count())
                .map(|i| map.cell_of_index(i))
                .filter(|&c| reachable(c))
                .min_by(|&a, &b| {
                    map.centre(a)
                        .distance(target)
                        .total_cmp(&map.centre(b).distance(target))
                        .then(dist[map.index(a)].total_cmp(&dist[map.index(b)]))
                })
                .unwrap_or(start);
            if nearest == start {
                return Ok(PlanStep::Stuck);
            }
            nearest
        }
    };

    let path = unwind(map, &parent, map.index(goal));
    Ok(follow(map, &passable, robot.position, &path, None))
}

/// Next waypoint along `path`; `finish` is the exact point to end on.
fn follow(
    map: &WorldMap,
    passable: &dyn Fn(Cell) -> bool,
    position: Vec2,
    path: &[Cell],
    finish: Option<Vec2>,
) -> PlanStep {
    let goal = *path.last().expect("path holds at least the start");
    if path.len() == 1 {
        return match finish {
            Some(p) if p.distance(position) > 1e-9 => PlanStep::Waypoint(p),
            Some(_) => PlanStep::Arrived,
            None => PlanStep::Waypoint(map.centre(goal)),
        };
    }
    let k = lookahead(map, passable, position, path);
    if k + 1 == path.len() {
        if let Some(p) = finish {
            if map.traverse(position, p).iter().all(|(c, _)| passable(*c)) {
                return PlanStep::Waypoint(p);
            }
        }
    }
    PlanStep::Waypoint(map.centre(path[k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn grid(rows: &[&str]) -> WorldMap {
        WorldMap::from_rows(rows, 1.0, Vec2::new(0.0, rows.len() as f64)).unwrap()
    }

    fn free(map: &WorldMap) -> impl Fn(Cell) -> bool + '_ {
        |c| !map.is_wall(c)
    }

    #[test]
    fn straight_corridor_cost() {
        let map = grid(&["#######", "#.....#", "#######"]);
        let (path, cost) = plan_path(&map, &free(&map), Cell::new(1, 1), Cell::new(5, 1)).unwrap();
        assert_eq!(cost, 4.0);
        assert_eq!(path.len(), 5);
    }

    #[test]
    fn no_corner_cutting() {
        let map = grid(&["####", "#..#", "#.##", "####"]);
        assert!(plan_path(&map, &free(&map), Cell::new(2, 1), Cell::new(1, 2)).is_some());
        let (_, cost) = plan_path(&map, &free(&map), Cell::new(2, 1), Cell::new(1, 2)).unwrap();
        assert_eq!(cost, 2.0);
    }

    #[test]
    fn blocked_goal() {
        let map = grid(&["#####", "#.#.#", "#####"]);
        assert!(plan_path(&map, &free(&map), Cell::new(1, 1), Cell::new(3, 1)).is_none());
    }

    /// Breadth-first search on 4-connected moves; gives an upper bound.
    fn bfs4(map: &WorldMap, s: Cell, g: Cell) -> Option<usize> {
        let mut seen = vec![false; map.cell_count()];
        let mut q = VecDeque::from([(s, 0)]);
        seen[map.index(s)] = true;
        while let Some((c, d)) = q.pop_front() {
            if c == g {
                return Some(d);
            }
            for n in orthogonal(map, c) {
                if !map.is_wall(n) && !seen[map.index(n)] {
                    seen[map.index(n)] = true;
                    q.push_back((n, d + 1));
                }
            }
        }
        None
    }

    #[test]
    fn matches_connectivity_of_bfs() {
        let map = grid(&[
            "##########",
            "#....#...#",
            "#.##.#.#.#",
            "#.#..#.#.#",
            "#.#.##.#.#",
            "#...#..#.#",
            "##########",
        ]);
        for s in [Cell::new(1, 1), Cell::new(3, 3)] {
            for g in [Cell::new(8, 5), Cell::new(6, 1), Cell::new(4, 1)] {
                let a = plan_path(&map, &free(&map), s, g).map(|(_, c)| c);
                let b = bfs4(&map, s, g);
                assert_eq!(a.is_some(), b.is_some());
                if let (Some(a), Some(b)) = (a, b) {
                    assert!(a <= b as f64 + 1e-9);
                }
            }
        }
    }

    fn explored_all(map: &WorldMap, at: Vec2) -> RobotState {
        let mut r = RobotState::new(map, at);
        r.explored.iter_mut().for_each(|e| *e = true);
        r
    }

    #[test]
    fn direct_waypoint_and_arrival() {
        let map = grid(&["#######", "#.....#", "#.....#", "#######"]);
        let at = map.centre(Cell::new(1, 1));
        let robot = explored_all(&map, at);
        let target = map.centre(Cell::new(5, 2));
        assert_eq!(plan_step(&map, &robot, target), Ok(PlanStep::Waypoint(target)));
        assert_eq!(plan_step(&map, &robot, at), Ok(PlanStep::Arrived));
    }

    #[test]
    fn heads_for_frontier_toward_target() {
        let map = grid(&["#########", "#.......#", "#.......#", "#########"]);
        let at = map.centre(Cell::new(1, 1));
        let mut robot = RobotState::new(&map, at);
        for col in 0..4 {
            for row in 0..4 {
                robot.explored[map.index(Cell::new(col, row))] = true;
            }
        }
        let target = map.centre(Cell::new(7, 1));
        assert_eq!(plan_step(&map, &robot, target), Ok(PlanStep::Waypoint(target)));

        // the straight line is blocked by a known wall; go round via the frontier
        let map = grid(&["#########", "#...#...#", "#.......#", "#########"]);
        let mut robot = RobotState::new(&map, at);
        for col in 0..5 {
            for row in 0..4 {
                robot.explored[map.index(Cell::new(col, row))] = true;
            }
        }
        let step = plan_step(&map, &robot, map.centre(Cell::new(7, 1))).unwrap();
        let PlanStep::Waypoint(w) = step else { panic!("{step:?}") };
        assert_ne!(map.cell_at(w).unwrap().row, 1);
    }

    #[test]
    fn enclosed_target_is_stuck() {
        let map = grid(&["#######", "#..#..#", "#######"]);
        let at = map.centre(Cell::new(1, 1));
        let robot = explored_all(&map, map.centre(Cell::new(2, 1)));
        let _ = at;
        assert_eq!(plan_step(&map, &robot, map.centre(Cell::new(5, 1))), Ok(PlanStep::Stuck));
    }
}
