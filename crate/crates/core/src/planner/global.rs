use serde::Serialize;

use super::graph::{shortest_paths_from, ExplorationGraph};
use super::local::{volumetric_gain, LocalPlan};
use super::{PlannerConfig, PlannerError};
use crate::geometry::Vec3;
use crate::mapping::OccupancyMap;
use crate::vehicle::{segment_in_free_space, UnknownPolicy};

/// Sparse graph of places the robot has been or could go, rooted at home
/// (vertex 0).
#[derive(Debug, Clone)]
pub struct GlobalGraph {
    graph: ExplorationGraph,
    robot_vertex: usize,
}

impl GlobalGraph {
    pub fn new(home: Vec3) -> Self {
        Self {
            graph: ExplorationGraph::new(home),
            robot_vertex: 0,
        }
    }

    pub fn home(&self) -> usize {
        0
    }

    pub fn graph(&self) -> &ExplorationGraph {
        &self.graph
    }

    /// Vertex most recently recorded as the robot's position.
    pub fn robot_vertex(&self) -> usize {
        self.robot_vertex
    }

    pub fn frontiers(&self) -> Vec<usize> {
        self.graph.vertices().iter().filter(|v| v.is_frontier).map(|v| v.id).collect()
    }

    fn within(&self, p: &Vec3, r: f64) -> Option<usize> {
        self.graph.nearest(p).filter(|&(_, d)| d < r).map(|(id, _)| id)
    }

    /// Link `id` to every other vertex within the edge radius through free
    /// space. Returns how many edges were added.
    fn connect(&mut self, id: usize, map: &OccupancyMap, cfg: &PlannerConfig) -> usize {
        let p = self.graph.vertex(id).position;
        let mut added = 0;
        for other in 0..self.graph.vertex_count() {
            if other == id || self.graph.has_edge(id, other) {
                continue;
            }
            let q = self.graph.vertex(other).position;
            if (q - p).norm() <= cfg.edge_radius
                && segment_in_free_space(&p, &q, &cfg.robot_cuboid, map, UnknownPolicy::Strict)
            {
                self.graph.add_edge(id, other);
                added += 1;
            }
        }
        added
    }

    /// Record the robot at `p`. A vertex within ½ρ is reused; otherwise a
    /// new one is linked to its free neighbours. Either way it is joined to
    /// the previous robot vertex, since the robot just flew between them.
    pub fn add_robot_position(&mut self, p: &Vec3, map: &OccupancyMap, cfg: &PlannerConfig) -> usize {
        let id = match self.within(p, 0.5 * cfg.rho) {
            Some(id) => id,
            None => {
                let id = self.graph.add_vertex(*p);
                self.connect(id, map, cfg);
                id
            }
        };
        if id != self.robot_vertex {
            self.graph.add_edge(id, self.robot_vertex);
        }
        self.robot_vertex = id;
        id
    }

    /// Append a path that starts at the robot and whose consecutive points
    /// are joined by free edges. Points within ½ρ of an existing vertex
    /// merge into it; edges whose endpoints moved by merging are re-checked,
    /// and the path is cut at the first one that fails.
    fn append_path(&mut self, start: &Vec3, points: &[(Vec3, f64)], map: &OccupancyMap, cfg: &PlannerConfig) {
        let frontier_min = cfg.frontier_gain_threshold * cfg.epsilon_g;
        let mut prev = self.robot_vertex;
        let mut prev_point = *start;
        for &(p, gain) in points {
            let merged = self.within(&p, 0.5 * cfg.rho);
            let target = merged.map_or(p, |id| self.graph.vertex(id).position);
            let q = self.graph.vertex(prev).position;
            let known_free = merged.is_none() && q == prev_point;
            let linked = merged.is_some_and(|m| m == prev || self.graph.has_edge(prev, m));
            if !linked && !known_free && !segment_in_free_space(&q, &target, &cfg.robot_cuboid, map, UnknownPolicy::Strict) {
                break;
            }
            let id = match merged {
                Some(id) => id,
                None => {
                    let id = self.graph.add_vertex(p);
                    self.connect(id, map, cfg);
                    id
                }
            };
            if id != prev {
                self.graph.add_edge(id, prev);
            }
            if gain > 0.0 {
                let v = self.graph.vertex_mut(id);
                v.volumetric_gain = gain;
                v.is_frontier = gain > frontier_min;
            }
            prev = id;
            prev_point = p;
        }
    }

    /// Recompute the gain of every frontier whose sensing range overlaps
    /// the voxels changed since the map's last reset, and demote those no
    /// longer above threshold. Gains elsewhere cannot have changed.
    pub fn recheck_frontiers(&mut self, map: &OccupancyMap, cfg: &PlannerConfig) {
        let Some((lo, hi)) = map.changed_keys() else {
            return;
        };
        let lattice = map.lattice();
        let (cmin, cmax) = (lattice.min_corner(&lo), lattice.min_corner(&hi) + Vec3::repeat(lattice.edge));
        let frontier_min = cfg.frontier_gain_threshold * cfg.epsilon_g;
        let r = cfg.gain_sensor.range;
        for id in self.frontiers() {
            let p = self.graph.vertex(id).position;
            if (0..3).any(|a| p[a] + r < cmin[a] || p[a] - r > cmax[a]) {
                continue;
            }
            let g = volumetric_gain(&p, 0.0, map, cfg);
            let v = self.graph.vertex_mut(id);
            v.volumetric_gain = g;
            v.is_frontier = g > frontier_min;
        }
    }

    /// Demote frontiers within `radius` of `p`.
    pub fn demote_near(&mut self, p: &Vec3, radius: f64) {
        for id in self.frontiers() {
            if (self.graph.vertex(id).position - p).norm() <= radius {
                self.graph.vertex_mut(id).is_frontier = false;
            }
        }
    }

    fn path_positions(&self, ids: &[usize]) -> Vec<Vec3> {
        ids.iter().map(|&v| self.graph.vertex(v).position).collect()
    }
}

/// Merge a local planning round into the global graph: the robot's
/// position, the best path, and a few other high-gain paths to distinct
/// leaves. Frontiers are then re-checked against the current map.
pub fn update_global_graph(global: &mut GlobalGraph, local: &LocalPlan, robot: &Vec3, map: &OccupancyMap, cfg: &PlannerConfig) {
    global.add_robot_position(robot, map, cfg);
    let frontier_min = cfg.frontier_gain_threshold * cfg.epsilon_g;
    let mut chosen: Vec<Vec3> = Vec::new();
    if let Some(best) = &local.best {
        let pts: Vec<(Vec3, f64)> = best
            .waypoints
            .iter()
            .zip(&best.ids)
            .skip(1)
            .map(|(p, &v)| (*p, local.gains.gains[v]))
            .collect();
        global.append_path(robot, &pts, map, cfg);
        chosen.push(local.graph.vertex(best.leaf).position);
    }
    let mut extras: Vec<usize> = local
        .leaves
        .iter()
        .copied()
        .filter(|&l| local.gains.gains[l] > frontier_min && Some(l) != local.best.as_ref().map(|b| b.leaf))
        .collect();
    extras.sort_by(|&a, &b| local.gains.gains[b].total_cmp(&local.gains.gains[a]).then(a.cmp(&b)));
    let mut added = 0;
    for leaf in extras {
        if added == cfg.extra_global_paths {
            break;
        }
        let p = local.graph.vertex(leaf).position;
        if chosen.iter().any(|c| (c - p).norm() < 2.0 * cfg.rho) {
            continue;
        }
        let ids = local.tree.path_to(leaf).expect("leaf reachable");
        let pts: Vec<(Vec3, f64)> = ids
            .iter()
            .skip(1)
            .map(|&v| (local.graph.vertex(v).position, local.gains.gains[v]))
            .collect();
        global.append_path(robot, &pts, map, cfg);
        chosen.push(p);
        added += 1;
    }
    global.recheck_frontiers(map, cfg);
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalPath {
    pub target: usize,
    pub ids: Vec<usize>,
    /// Starts at the robot position.
    pub waypoints: Vec<Vec3>,
    pub length: f64,
    pub score: f64,
}

/// Pick the frontier maximising gain × exploration time left after getting
/// there and reserving the trip home. `None` means no usable frontier.
pub fn plan_global_reposition(
    global: &GlobalGraph,
    robot: &Vec3,
    remaining_endurance: f64,
    nominal_speed: f64,
    _cfg: &PlannerConfig,
) -> Option<GlobalPath> {
    let g = global.graph();
    let start = global.robot_vertex();
    let offset = (g.vertex(start).position - robot).norm();
    let from_robot = shortest_paths_from(g, start);
    let from_home = shortest_paths_from(g, global.home());
    let mut best: Option<(usize, f64)> = None;
    for f in global.frontiers() {
        if !from_robot.dist[f].is_finite() || !from_home.dist[f].is_finite() {
            continue;
        }
        let t_reach = (offset + from_robot.dist[f]) / nominal_speed;
        let t_home = from_home.dist[f] / nominal_speed;
        let t_remain = remaining_endurance - t_reach - t_home;
        if t_remain <= 0.0 {
            continue;
        }
        let score = g.vertex(f).volumetric_gain * t_remain;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((f, score));
        }
    }
    best.map(|(target, score)| {
        let ids = from_robot.path_to(target).expect("reachable");
        let mut waypoints = vec![*robot];
        waypoints.extend(global.path_positions(&ids));
        GlobalPath {
            target,
            length: offset + from_robot.dist[target],
            ids,
            waypoints,
            score,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum HomingDecision {
    Continue { time_home: f64 },
    ReturnNow(GlobalPath),
}

/// Shortest route home from the robot, starting at its position.
pub fn home_path(global: &GlobalGraph, robot: &Vec3) -> Result<GlobalPath, PlannerError> {
    let g = global.graph();
    let start = global.robot_vertex();
    let offset = (g.vertex(start).position - robot).norm();
    let tree = shortest_paths_from(g, start);
    let ids = tree.path_to(global.home()).ok_or(PlannerError::NotConnectable(*robot))?;
    let mut waypoints = vec![*robot];
    waypoints.extend(global.path_positions(&ids));
    Ok(GlobalPath {
        target: global.home(),
        length: offset + tree.dist[global.home()],
        ids,
        waypoints,
        score: 0.0,
    })
}

/// Return home now iff the endurance left is no more than the flight time
/// home plus `margin` (inclusive).
pub fn check_homing(
    global: &GlobalGraph,
    robot: &Vec3,
    elapsed: f64,
    endurance: f64,
    nominal_speed: f64,
    margin: f64,
) -> Result<HomingDecision, PlannerError> {
    let path = home_path(global, robot)?;
    let time_home = path.length / nominal_speed;
    if endurance - elapsed <= time_home + margin {
        Ok(HomingDecision::ReturnNow(path))
    } else {
        Ok(HomingDecision::Continue { time_home })
    }
}

/// Greedy line-of-sight shortcut: from each kept waypoint jump to the
/// farthest later one reachable by a free straight segment.
pub fn shortcut_path(path: &[Vec3], map: &OccupancyMap, cfg: &PlannerConfig) -> Vec<Vec3> {
    if path.len() < 3 {
        return path.to_vec();
    }
    let mut out = vec![path[0]];
    let mut i = 0;
    while i < path.len() - 1 {
        let mut j = path.len() - 1;
        while j > i + 1 && !segment_in_free_space(&path[i], &path[j], &cfg.robot_cuboid, map, UnknownPolicy::Strict) {
            j -= 1;
        }
        out.push(path[j]);
        i = j;
    }
    out
}
