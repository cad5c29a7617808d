use rand::Rng;

use super::graph::{shortest_paths, ExplorationGraph, ShortestPaths};
use super::{PlannerConfig, PlannerError};
use crate::geometry::{Aabb, Pose, Vec3};
use crate::mapping::{OccupancyMap, VoxelState};
use crate::vehicle::{cuboid_in_free_space, segment_in_free_space, UnknownPolicy};

/// Sample quantile by nearest rank on sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let i = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[i]
}

/// Sampling box centred on the robot. Its half-extent per axis is the
/// 5th-95th percentile span of nearby hit points, clamped to half the
/// configured min/max box sizes. Only points inside the largest allowed box
/// count as nearby.
pub fn compute_local_box(cloud: &[Vec3], robot: &Vec3, cfg: &PlannerConfig) -> Aabb {
    let lb = &cfg.local_box;
    let (half_min, half_max) = (lb.min_extent / 2.0, lb.max_extent / 2.0);
    let near: Vec<&Vec3> = cloud
        .iter()
        .filter(|p| (0..3).all(|a| (p[a] - robot[a]).abs() <= half_max[a]))
        .collect();
    let mut half = half_min;
    if !near.is_empty() {
        for a in 0..3 {
            let mut v: Vec<f64> = near.iter().map(|p| p[a]).collect();
            v.sort_by(f64::total_cmp);
            let span = quantile(&v, 0.95) - quantile(&v, 0.05);
            half[a] = span.clamp(half_min[a], half_max[a]);
        }
    }
    Aabb {
        min: robot - half,
        max: robot + half,
    }
}

/// Random graph of collision-free vertices in `bbox`, rooted at the robot.
pub fn build_local_graph<R: Rng + ?Sized>(
    map: &OccupancyMap,
    bbox: &Aabb,
    robot: &Vec3,
    cfg: &PlannerConfig,
    policy: UnknownPolicy,
    rng: &mut R,
) -> Result<ExplorationGraph, PlannerError> {
    let geom = &cfg.robot_cuboid;
    if !cuboid_in_free_space(robot, geom, map, policy) {
        return Err(PlannerError::RootNotFree(*robot));
    }
    let mut g = ExplorationGraph::new(*robot);
    let r2 = cfg.edge_radius * cfg.edge_radius;
    for _ in 0..cfg.num_samples {
        let p = Vec3::new(
            rng.random_range(bbox.min.x..=bbox.max.x),
            rng.random_range(bbox.min.y..=bbox.max.y),
            rng.random_range(bbox.min.z..=bbox.max.z),
        );
        if !cuboid_in_free_space(&p, geom, map, policy) {
            continue;
        }
        let id = g.add_vertex(p);
        for other in 0..id {
            let q = g.vertex(other).position;
            if (q - p).norm_squared() <= r2 && segment_in_free_space(&q, &p, geom, map, policy) {
                g.add_edge(other, id);
            }
        }
    }
    g.retain_root_component();
    Ok(g)
}

/// ε_G times the number of Unknown voxels seen from `position`.
pub fn volumetric_gain(position: &Vec3, yaw: f64, map: &OccupancyMap, cfg: &PlannerConfig) -> f64 {
    let count = map.count_unknown_in_frustum(&Pose::new(*position, yaw), &cfg.gain_sensor);
    cfg.epsilon_g * count as f64
}

/// Discounted sum of per-vertex gains along a path.
pub fn exploration_gain(gains: &[f64], distances: &[f64], lambda: f64) -> f64 {
    gains.iter().zip(distances).map(|(g, d)| g * (-lambda * d).exp()).sum()
}

fn travel_yaw(tree: &ShortestPaths, graph: &ExplorationGraph, v: usize) -> f64 {
    match tree.parent[v] {
        Some(p) => {
            let d = graph.vertex(v).position - graph.vertex(p).position;
            d.y.atan2(d.x)
        }
        None => 0.0,
    }
}

/// Per-vertex gains from one planning round. Vertices never evaluated
/// carry zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafGains {
    pub gains: Vec<f64>,
    /// Number of exact frustum evaluations performed.
    pub evaluations: usize,
}

/// Greedy radius clustering: leaves are visited in id order and adopt the
/// gain of the first representative within ρ, otherwise they are evaluated
/// and become representatives. Sets `cluster_rep` on the graph.
pub fn cluster_and_evaluate(
    graph: &mut ExplorationGraph,
    tree: &ShortestPaths,
    leaves: &[usize],
    map: &OccupancyMap,
    cfg: &PlannerConfig,
) -> LeafGains {
    let mut gains = vec![0.0; graph.vertex_count()];
    let mut reps: Vec<usize> = Vec::new();
    let mut evaluations = 0;
    for &leaf in leaves {
        let p = graph.vertex(leaf).position;
        let rep = reps
            .iter()
            .copied()
            .find(|&r| (graph.vertex(r).position - p).norm() <= cfg.rho);
        let (gain, rep) = match rep {
            Some(r) => (gains[r], r),
            None => {
                evaluations += 1;
                reps.push(leaf);
                (volumetric_gain(&p, travel_yaw(tree, graph, leaf), map, cfg), leaf)
            }
        };
        gains[leaf] = gain;
        let v = graph.vertex_mut(leaf);
        v.volumetric_gain = gain;
        v.cluster_rep = Some(rep);
    }
    LeafGains { gains, evaluations }
}

fn evaluate_all(graph: &mut ExplorationGraph, tree: &ShortestPaths, map: &OccupancyMap, cfg: &PlannerConfig) -> LeafGains {
    let n = graph.vertex_count();
    let mut gains = vec![0.0; n];
    for v in 0..n {
        gains[v] = volumetric_gain(&graph.vertex(v).position, travel_yaw(tree, graph, v), map, cfg);
        graph.vertex_mut(v).volumetric_gain = gains[v];
    }
    LeafGains { gains, evaluations: n }
}

/// Distance from `p` to the nearest Occupied voxel centre, capped at
/// `radius`.
pub fn min_clearance(p: &Vec3, map: &OccupancyMap, radius: f64) -> f64 {
    let lattice = map.lattice();
    let r = Vec3::repeat(radius);
    let (lo, hi) = lattice.keys_overlapping(&(p - r), &(p + r));
    let mut best2 = radius * radius;
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let k = [x, y, z];
                if map.state(&k) == VoxelState::Occupied {
                    let d2 = (lattice.center_of(&k) - p).norm_squared();
                    if d2 < best2 {
                        best2 = d2;
                    }
                }
            }
        }
    }
    best2.sqrt()
}

/// Move each interior waypoint to the nearby candidate with the largest
/// clearance, if that strictly improves on where it is. Candidates lie on
/// the axis and horizontal-diagonal directions, one voxel apart, out to half
/// the edge radius, and must keep both adjacent edges collision-free.
pub fn improve_path_safety(path: &[Vec3], map: &OccupancyMap, cfg: &PlannerConfig, policy: UnknownPolicy) -> Vec<Vec3> {
    let mut out = path.to_vec();
    if out.len() < 3 {
        return out;
    }
    let e = map.voxel_edge();
    let steps = ((0.5 * cfg.edge_radius) / e).floor() as usize;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let dirs = [
        Vec3::x(),
        -Vec3::x(),
        Vec3::y(),
        -Vec3::y(),
        Vec3::z(),
        -Vec3::z(),
        Vec3::new(s, s, 0.0),
        Vec3::new(s, -s, 0.0),
        Vec3::new(-s, s, 0.0),
        Vec3::new(-s, -s, 0.0),
    ];
    let geom = &cfg.robot_cuboid;
    for i in 1..out.len() - 1 {
        let (prev, next) = (out[i - 1], out[i + 1]);
        let mut best = out[i];
        let mut best_c = min_clearance(&best, map, cfg.clearance_radius);
        for d in &dirs {
            for k in 1..=steps {
                let c = out[i] + d * (k as f64 * e);
                let cl = min_clearance(&c, map, cfg.clearance_radius);
                if cl > best_c
                    && cuboid_in_free_space(&c, geom, map, policy)
                    && segment_in_free_space(&prev, &c, geom, map, policy)
                    && segment_in_free_space(&c, &next, geom, map, policy)
                {
                    best = c;
                    best_c = cl;
                }
            }
        }
        out[i] = best;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestPath {
    pub leaf: usize,
    /// Vertex ids from the root to the leaf.
    pub ids: Vec<usize>,
    /// Safety-improved waypoints, starting at the robot.
    pub waypoints: Vec<Vec3>,
    pub gain: f64,
}

/// Result of one local planning round. `best` is `None` when no path
/// reaches the gain threshold.
#[derive(Debug, Clone)]
pub struct LocalPlan {
    pub bbox: Aabb,
    pub graph: ExplorationGraph,
    pub tree: ShortestPaths,
    pub leaves: Vec<usize>,
    pub gains: LeafGains,
    /// ExplorationGain of every leaf, aligned with `leaves`.
    pub leaf_scores: Vec<f64>,
    /// Highest ExplorationGain found, whether or not it passed.
    pub best_gain: f64,
    pub best_leaf: Option<usize>,
    pub best: Option<BestPath>,
    pub policy: UnknownPolicy,
}

impl LocalPlan {
    pub fn path_positions(&self, leaf: usize) -> Vec<Vec3> {
        self.tree
            .path_to(leaf)
            .unwrap_or_default()
            .into_iter()
            .map(|v| self.graph.vertex(v).position)
            .collect()
    }
}

/// One local planning round: box, graph, shortest paths, gains, argmax,
/// safety. Ties on gain go to the shorter path, then the smaller leaf id.
pub fn plan_local<R: Rng + ?Sized>(
    map: &OccupancyMap,
    robot: &Vec3,
    cloud: &[Vec3],
    cfg: &PlannerConfig,
    policy: UnknownPolicy,
    rng: &mut R,
) -> Result<LocalPlan, PlannerError> {
    let bbox = compute_local_box(cloud, robot, cfg);
    let mut graph = build_local_graph(map, &bbox, robot, cfg, policy, rng)?;
    let tree = shortest_paths(&graph);
    let leaves = tree.leaves();
    let gains = if cfg.leaf_only_gain {
        cluster_and_evaluate(&mut graph, &tree, &leaves, map, cfg)
    } else {
        evaluate_all(&mut graph, &tree, map, cfg)
    };
    let mut leaf_scores = Vec::with_capacity(leaves.len());
    let mut best_leaf: Option<usize> = None;
    let mut best_gain = 0.0;
    for &leaf in &leaves {
        let ids = tree.path_to(leaf).expect("leaf reachable");
        let g: Vec<f64> = ids.iter().map(|&v| gains.gains[v]).collect();
        let d: Vec<f64> = ids.iter().map(|&v| tree.dist[v]).collect();
        let score = exploration_gain(&g, &d, cfg.lambda_discount);
        leaf_scores.push(score);
        let better = match best_leaf {
            None => true,
            Some(b) => score > best_gain || (score == best_gain && tree.dist[leaf] < tree.dist[b]),
        };
        if better {
            best_leaf = Some(leaf);
            best_gain = score;
        }
    }
    let best = best_leaf.filter(|_| best_gain >= cfg.gain_threshold * cfg.epsilon_g).map(|leaf| {
        let ids = tree.path_to(leaf).expect("leaf reachable");
        let raw: Vec<Vec3> = ids.iter().map(|&v| graph.vertex(v).position).collect();
        BestPath {
            leaf,
            ids,
            waypoints: improve_path_safety(&raw, map, cfg, policy),
            gain: best_gain,
        }
    });
    Ok(LocalPlan {
        bbox,
        graph,
        tree,
        leaves,
        gains,
        leaf_scores,
        best_gain,
        best_leaf,
        best,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{GainSensorModel, MapBounds, MapConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn map_with(extent: f64, fill: f32) -> OccupancyMap {
        let cfg = MapConfig {
            bounds: MapBounds {
                extent: Vec3::repeat(extent),
                shift_margin: 1.0,
            },
            ..MapConfig::default()
        };
        let mut m = OccupancyMap::new(cfg, &Vec3::zeros()).unwrap();
        let keys: Vec<_> = m.keys().collect();
        for k in keys {
            m.set_log_odds(&k, fill);
        }
        m
    }

    #[test]
    fn empty_cloud_gives_min_box() {
        let cfg = PlannerConfig::default();
        let b = compute_local_box(&[], &Vec3::new(1.0, 2.0, 3.0), &cfg);
        assert_eq!(b.extent(), cfg.local_box.min_extent);
        assert_eq!(b.center(), Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn exploration_gain_discount() {
        assert_eq!(exploration_gain(&[2.0, 3.0], &[1.0, 2.0], 0.0), 5.0);
        let g = exploration_gain(&[2.0, 3.0], &[1.0, 2.0], 0.5);
        assert!((g - (2.0 * (-0.5f64).exp() + 3.0 * (-1.0f64).exp())).abs() < 1e-12);
        assert!((g - 2.317).abs() < 1e-3);
    }

    #[test]
    fn free_map_has_no_gain() {
        let m = map_with(6.0, -2.0);
        let cfg = PlannerConfig {
            num_samples: 60,
            gain_sensor: GainSensorModel {
                range: 0.5,
                ..GainSensorModel::default()
            },
            ..PlannerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plan = plan_local(&m, &Vec3::new(0.1, 0.1, 0.1), &[], &cfg, UnknownPolicy::Strict, &mut rng).unwrap();
        assert!(plan.graph.vertex_count() > 1);
        assert_eq!(plan.best_gain, 0.0);
        assert!(plan.best.is_none());
    }

    #[test]
    fn occupied_root_is_an_error() {
        let m = map_with(6.0, 3.0);
        let cfg = PlannerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = build_local_graph(&m, &Aabb::from_center_extent(&Vec3::zeros(), &Vec3::repeat(4.0)), &Vec3::zeros(), &cfg, UnknownPolicy::Optimistic, &mut rng);
        assert!(matches!(r, Err(PlannerError::RootNotFree(_))));
    }

    #[test]
    fn nearby_leaves_share_one_evaluation() {
        let m = map_with(6.0, 0.0);
        let mut g = ExplorationGraph::new(Vec3::zeros());
        let a = g.add_vertex(Vec3::new(1.0, 0.0, 0.0));
        let b = g.add_vertex(Vec3::new(1.0, 0.1, 0.0));
        g.add_edge(0, a);
        g.add_edge(0, b);
        let tree = shortest_paths(&g);
        let cfg = PlannerConfig::default();
        let lg = cluster_and_evaluate(&mut g, &tree, &[a, b], &m, &cfg);
        assert_eq!(lg.evaluations, 1);
        assert_eq!(lg.gains[a], lg.gains[b]);
        assert!(lg.gains[a] > 0.0);
        assert_eq!(g.vertex(b).cluster_rep, Some(a));
    }
}
