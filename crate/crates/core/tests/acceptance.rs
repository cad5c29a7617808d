//! End-to-end acceptance checks. Each test prints one
//! `ACCEPTANCE C<n> PASS|FAIL` line.

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use owl_core::artifacts::{logit, score_artifacts, ArtifactConfig, HypothesisSet, ReportSource};
use owl_core::control::{control_step, ControllerConfig, ControllerState, Estimate, Reference};
use owl_core::geometry::{Pose, Vec3, VoxelKey};
use owl_core::mapping::{GainSensorModel, LogOddsParams, MapBounds, MapConfig, OccupancyMap, VoxelState};
use owl_core::mission::{run_mission, MissionConfig, MissionOutcome, MissionResult};
use owl_core::planner::{plan_local, shortest_paths, ExplorationGraph, PlannerConfig};
use owl_core::sensing::DetectionNoise;
use owl_core::vehicle::{step_dynamics, RobotGeometry, RobotState, UnknownPolicy};
use owl_core::world::{ArtifactClass, Cell, WorldGrid};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Written straight to stdout so the line shows even when output is captured.
fn verdict(n: u32, pass: bool, detail: &str) {
    let line = format!("ACCEPTANCE C{n} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn scenario(name: &str) -> MissionConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    MissionConfig::load(&path).expect("bundled scenario loads")
}

struct TimedRun {
    result: MissionResult,
    wall: Duration,
}

fn run_timed(cfg: &MissionConfig) -> TimedRun {
    let t0 = Instant::now();
    let result = run_mission(cfg).expect("mission runs");
    TimedRun {
        result,
        wall: t0.elapsed(),
    }
}

fn run_seeds(name: &str, noise: Option<DetectionNoise>) -> Vec<TimedRun> {
    SEEDS
        .iter()
        .map(|&s| {
            let mut cfg = scenario(name);
            cfg.master_seed = s;
            if let Some(n) = noise {
                cfg.detection_noise = n;
            }
            run_timed(&cfg)
        })
        .collect()
}

fn lokken_runs() -> &'static [TimedRun] {
    static RUNS: OnceLock<Vec<TimedRun>> = OnceLock::new();
    RUNS.get_or_init(|| run_seeds("lokken", None))
}

fn map_20(seed: u64) -> OccupancyMap {
    let cfg = MapConfig {
        voxel_edge: 0.2,
        bounds: MapBounds {
            extent: Vec3::repeat(4.0),
            shift_margin: 1.0,
        },
        log_odds: LogOddsParams::default(),
    };
    let mut m = OccupancyMap::new(cfg, &Vec3::repeat(2.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys: Vec<VoxelKey> = m.keys().collect();
    assert_eq!(keys.len(), 20 * 20 * 20);
    for k in keys {
        let u: f64 = rng.random();
        let l = if u < 0.08 {
            2.0
        } else if u < 0.5 {
            -1.5
        } else {
            0.0
        };
        m.set_log_odds(&k, l);
    }
    m
}

/// Does the segment pass through the open interior of voxel `k`?
fn segment_crosses_voxel(a: &Vec3, b: &Vec3, k: &VoxelKey, edge: f64) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for ax in 0..3 {
        let lo = k[ax] as f64 * edge;
        let hi = lo + edge;
        let d = b[ax] - a[ax];
        if d == 0.0 {
            if a[ax] <= lo || a[ax] >= hi {
                return false;
            }
            continue;
        }
        let (mut u, mut v) = ((lo - a[ax]) / d, (hi - a[ax]) / d);
        if u > v {
            std::mem::swap(&mut u, &mut v);
        }
        t0 = t0.max(u);
        t1 = t1.min(v);
    }
    t1 > t0
}

fn oracle_in_frustum(view: &Pose, s: &GainSensorModel, c: &Vec3) -> bool {
    let w = c - view.position;
    let (sy, cy) = view.yaw.sin_cos();
    let d = Vec3::new(cy * w.x + sy * w.y, -sy * w.x + cy * w.y, w.z);
    let r = d.norm();
    if r > s.range {
        return false;
    }
    if r == 0.0 {
        return true;
    }
    if (d.z / r).asin().abs().to_degrees() > s.fov_elevation_deg / 2.0 {
        return false;
    }
    s.fov_azimuth_deg >= 360.0 || d.y.atan2(d.x).abs().to_degrees() <= s.fov_azimuth_deg / 2.0
}

fn oracle_unknown_count(m: &OccupancyMap, view: &Pose, s: &GainSensorModel) -> usize {
    let e = m.voxel_edge();
    let lo = ((view.position - Vec3::repeat(s.range)) / e).map(|v| v.floor() as i64 - 1);
    let hi = ((view.position + Vec3::repeat(s.range)) / e).map(|v| v.ceil() as i64 + 1);
    let mut count = 0;
    for z in lo.z..=hi.z {
        for y in lo.y..=hi.y {
            for x in lo.x..=hi.x {
                let k = [x, y, z];
                let c = Vec3::new((x as f64 + 0.5) * e, (y as f64 + 0.5) * e, (z as f64 + 0.5) * e);
                if m.state(&k) != VoxelState::Unknown || !oracle_in_frustum(view, s, &c) {
                    continue;
                }
                let (blo, bhi) = (
                    ((view.position.min_by(&c)) / e).map(|v| v.floor() as i64),
                    ((view.position.max_by(&c)) / e).map(|v| v.floor() as i64),
                );
                let mut blocked = false;
                'scan: for bz in blo.z..=bhi.z {
                    for by in blo.y..=bhi.y {
                        for bx in blo.x..=bhi.x {
                            let b = [bx, by, bz];
                            if b != k
                                && m.state(&b) == VoxelState::Occupied
                                && segment_crosses_voxel(&view.position, &c, &b, e)
                            {
                                blocked = true;
                                break 'scan;
                            }
                        }
                    }
                }
                if !blocked {
                    count += 1;
                }
            }
        }
    }
    count
}

trait MinMax {
    fn min_by(&self, o: &Vec3) -> Vec3;
    fn max_by(&self, o: &Vec3) -> Vec3;
}

impl MinMax for Vec3 {
    fn min_by(&self, o: &Vec3) -> Vec3 {
        self.zip_map(o, f64::min)
    }
    fn max_by(&self, o: &Vec3) -> Vec3 {
        self.zip_map(o, f64::max)
    }
}

#[test]
fn c1_gain_matches_exhaustive_enumeration() {
    let t0 = Instant::now();
    let mut mismatches = 0;
    let mut total = 0;
    for seed in 0..50u64 {
        let m = map_20(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for _ in 0..4 {
            let view = Pose::new(
                Vec3::new(rng.random_range(0.1..3.9), rng.random_range(0.1..3.9), rng.random_range(0.1..3.9)),
                rng.random_range(-3.14..3.14),
            );
            let s = GainSensorModel {
                fov_azimuth_deg: if rng.random_bool(0.5) { 360.0 } else { rng.random_range(30.0..300.0) },
                fov_elevation_deg: rng.random_range(20.0..180.0),
                range: rng.random_range(0.8..3.0),
            };
            let got = m.count_unknown_in_frustum(&view, &s);
            let want = oracle_unknown_count(&m, &view, &s);
            total += want;
            if got != want {
                mismatches += 1;
                eprintln!("seed {seed}: {got} != {want} at {view:?} {s:?}");
            }
        }
    }
    let elapsed = t0.elapsed();
    let pass = mismatches == 0 && total > 0 && elapsed < Duration::from_secs(60);
    verdict(1, pass, &format!("mismatches={mismatches} unknown_total={total} wall={elapsed:.2?}"));
    assert!(pass);
}

/// Shortest distance by enumerating every simple path from vertex 0.
fn brute_force_distances(n: usize, edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    let mut best = vec![f64::INFINITY; n];
    let mut on_path = vec![false; n];
    fn dfs(v: usize, d: f64, adj: &[Vec<(usize, f64)>], on_path: &mut [bool], best: &mut [f64]) {
        best[v] = best[v].min(d);
        on_path[v] = true;
        for &(u, w) in &adj[v] {
            if !on_path[u] {
                dfs(u, d + w, adj, on_path, best);
            }
        }
        on_path[v] = false;
    }
    dfs(0, 0.0, &adj, &mut on_path, &mut best);
    best
}

#[test]
fn c2_dijkstra_matches_brute_force() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=10);
        let mut g = ExplorationGraph::new(Vec3::zeros());
        for i in 1..n {
            g.add_vertex(Vec3::new(i as f64, 0.0, 0.0));
        }
        let p = rng.random_range(0.1..0.9);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(p) {
                    // Dyadic weights keep every path sum exact.
                    let w = rng.random_range(1..=64) as f64 / 8.0;
                    g.add_edge_weighted(a, b, w);
                    edges.push((a, b, w));
                }
            }
        }
        let got = shortest_paths(&g).dist;
        let want = brute_force_distances(n, &edges);
        if got != want {
            mismatches += 1;
            eprintln!("{got:?} != {want:?} for {edges:?}");
        }
    }
    let elapsed = t0.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(30);
    verdict(2, pass, &format!("mismatches={mismatches} wall={elapsed:.2?}"));
    assert!(pass);
}

fn rand_vec(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

#[test]
fn c3_control_law_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    for _ in 0..1000 {
        let cfg = ControllerConfig {
            kp: rand_vec(&mut rng, 5.0).abs(),
            ki: rand_vec(&mut rng, 2.0).abs(),
            kd: rand_vec(&mut rng, 5.0).abs(),
            kp_yaw: rng.random_range(0.0..4.0),
            ..ControllerConfig::default()
        };
        let r = Reference {
            position: rand_vec(&mut rng, 10.0),
            yaw: rng.random_range(-3.1..3.1),
            velocity: rand_vec(&mut rng, 2.0),
        };
        let est = Estimate {
            position: rand_vec(&mut rng, 10.0),
            yaw: rng.random_range(-3.1..3.1),
            velocity: rand_vec(&mut rng, 2.0),
        };
        let integral = rand_vec(&mut rng, 0.9);
        let prev = rand_vec(&mut rng, 5.0);
        let dt = rng.random_range(0.001..0.1);
        let mut state = ControllerState {
            integral,
            prev_error: Some(prev),
        };
        let (a, yr) = control_step(&mut state, &r, &est, dt, &cfg);
        for ax in 0..3 {
            let e = r.position[ax] - est.position[ax];
            let i = (integral[ax] + 0.5 * dt * (prev[ax] + e)).clamp(cfg.i_min[ax], cfg.i_max[ax]);
            let want = cfg.kp[ax] * e + cfg.ki[ax] * i + cfg.kd[ax] * (r.velocity[ax] - est.velocity[ax]);
            if want != 0.0 {
                worst = worst.max(rel(a[ax], want));
            }
        }
        let mut dyaw = r.yaw - est.yaw;
        while dyaw > std::f64::consts::PI {
            dyaw -= 2.0 * std::f64::consts::PI;
        }
        while dyaw <= -std::f64::consts::PI {
            dyaw += 2.0 * std::f64::consts::PI;
        }
        let want_yr = cfg.kp_yaw * dyaw;
        if want_yr != 0.0 {
            worst = worst.max(rel(yr, want_yr));
        }
    }
    let cfg = ControllerConfig::default();
    let mut state = ControllerState::default();
    let mut clamp_ok = true;
    for _ in 0..100_000 {
        let r = Reference {
            position: rand_vec(&mut rng, 50.0),
            yaw: 0.0,
            velocity: Vec3::zeros(),
        };
        let est = Estimate {
            position: rand_vec(&mut rng, 50.0),
            yaw: 0.0,
            velocity: Vec3::zeros(),
        };
        control_step(&mut state, &r, &est, rng.random_range(0.001..0.1), &cfg);
        clamp_ok &= (0..3).all(|a| state.integral[a] >= cfg.i_min[a] && state.integral[a] <= cfg.i_max[a]);
    }
    let pass = worst <= 1e-12 && clamp_ok;
    verdict(3, pass, &format!("worst_rel_err={worst:.3e} clamp_ok={clamp_ok}"));
    assert!(pass);
}

fn open_box_world(n: usize, edge: f64) -> WorldGrid {
    let mut cells = vec![Cell::Solid; n * n * n];
    for z in 1..n - 1 {
        for y in 1..n - 1 {
            for x in 1..n - 1 {
                cells[x + n * (y + n * z)] = Cell::Air;
            }
        }
    }
    WorldGrid::new(Vec3::zeros(), edge, [n, n, n], cells, vec![]).unwrap()
}

#[test]
fn c4_step_response_rejects_constant_disturbance() {
    let t0 = Instant::now();
    let world = open_box_world(50, 0.2);
    let geom = RobotGeometry::default();
    let cfg = ControllerConfig::default();
    let defaults = MissionConfig::default();
    let dt = defaults.dt;
    let start = Vec3::new(3.0, 5.0, 5.0);
    let target = start + Vec3::new(1.0, 0.0, 0.0);
    let disturbance = Vec3::new(0.2, -0.2, 0.2);
    let mut s = RobotState::at_rest(start, 0.0);
    let mut ctrl = ControllerState::default();
    let r = Reference {
        position: target,
        yaw: 0.0,
        velocity: Vec3::zeros(),
    };
    let steps = (30.0 / dt).round() as usize;
    let mut last_outside = 0.0;
    let mut contacts = 0;
    for _ in 0..steps {
        let est = Estimate {
            position: s.position,
            yaw: s.yaw,
            velocity: s.velocity,
        };
        let (a, yr) = control_step(&mut ctrl, &r, &est, dt, &cfg);
        let (next, events) = step_dynamics(&s, &(a + disturbance), yr, dt, defaults.vehicle_speed_limit, &world, &geom);
        contacts += events.len();
        s = next;
        if (s.position - target).norm() > 0.02 {
            last_outside = s.time;
        }
    }
    let final_err = (s.position - target).norm();
    let wall = t0.elapsed();
    let pass = last_outside < 30.0 - dt && final_err < 2e-3 && contacts == 0 && wall < Duration::from_secs(5);
    verdict(
        4,
        pass,
        &format!("settled_at={last_outside:.2}s final_err={final_err:.2e} integral={:?} wall={wall:.2?}", ctrl.integral.as_slice()),
    );
    assert!(pass);
}

/// Solid rock with a 0.8 m square corridor along +x. The first `known`
/// metres are mapped Free, the next stretch is still Unknown.
fn corridor_map(known: f64, unknown: f64) -> (OccupancyMap, Vec<Vec3>) {
    let cfg = MapConfig {
        voxel_edge: 0.2,
        bounds: MapBounds {
            extent: Vec3::new(24.0, 8.0, 8.0),
            shift_margin: 1.0,
        },
        log_odds: LogOddsParams::default(),
    };
    let mut m = OccupancyMap::new(cfg, &Vec3::new(10.0, 0.4, 0.4)).unwrap();
    let keys: Vec<VoxelKey> = m.keys().collect();
    let kx_known = (known / 0.2).round() as i64;
    let kx_end = ((known + unknown) / 0.2).round() as i64;
    let mut cloud = Vec::new();
    let lattice = m.lattice();
    for k in keys {
        let inside = (0..4).contains(&k[1]) && (0..4).contains(&k[2]) && (0..kx_end).contains(&k[0]);
        let l = match (inside, k[0] < kx_known) {
            (true, true) => -2.0,
            (true, false) => 0.0,
            (false, _) => 3.5,
        };
        m.set_log_odds(&k, l);
        let wall = !inside && (-1..=4).contains(&k[1]) && (-1..=4).contains(&k[2]) && (0..kx_known).contains(&k[0]);
        if wall {
            cloud.push(lattice.center_of(&k));
        }
    }
    (m, cloud)
}

#[test]
fn c5_narrow_passage_needs_the_exact_cuboid() {
    let t0 = Instant::now();
    let (map, cloud) = corridor_map(8.0, 4.0);
    let robot = Vec3::new(1.0, 0.4, 0.4);
    let base = PlannerConfig {
        robot_cuboid: RobotGeometry::default(),
        num_samples: 1000,
        local_box: owl_core::planner::LocalBoxParams {
            min_extent: Vec3::repeat(1.0),
            max_extent: Vec3::new(16.0, 4.0, 4.0),
        },
        ..PlannerConfig::default()
    };
    let inside = |p: &Vec3| p.y > 0.0 && p.y < 0.8 && p.z > 0.0 && p.z < 0.8 && p.x > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let exact = plan_local(&map, &robot, &cloud, &base, UnknownPolicy::Optimistic, &mut rng).unwrap();
    let traverses = exact
        .best
        .as_ref()
        .is_some_and(|b| b.waypoints.iter().all(inside) && b.waypoints.last().unwrap().x > 6.0);

    let inflated_cfg = PlannerConfig {
        robot_cuboid: RobotGeometry::default().inflated(0.1),
        ..base.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inflated = plan_local(&map, &robot, &cloud, &inflated_cfg, UnknownPolicy::Optimistic, &mut rng);
    let inflated_blocked = match &inflated {
        Err(_) => true,
        Ok(p) => p.best.is_none(),
    };
    // Past a 0.21 m margin the cuboid is wider than the corridor.
    let too_wide_cfg = PlannerConfig {
        robot_cuboid: RobotGeometry::default().inflated(0.22),
        ..base.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let too_wide_blocked = plan_local(&map, &robot, &cloud, &too_wide_cfg, UnknownPolicy::Optimistic, &mut rng)
        .map_or(true, |p| p.best.is_none());
    let wall = t0.elapsed();
    let inflated_reach = inflated
        .as_ref()
        .ok()
        .and_then(|p| p.best.as_ref())
        .map_or(0.0, |b| b.waypoints.last().unwrap().x);
    let pass = traverses && inflated_blocked && wall < Duration::from_secs(10);
    verdict(
        5,
        pass,
        &format!(
            "exact_path={traverses} exact_reach={:.2} inflated_blocked={inflated_blocked} inflated_reach={inflated_reach:.2} margin_0.22_blocked={too_wide_blocked} wall={wall:.2?}",
            exact.best.as_ref().map_or(0.0, |b| b.waypoints.last().unwrap().x)
        ),
    );
    // The exact cuboid must get through. A 0.58 m cuboid also fits a 0.8 m
    // corridor, so the inflated half is reported but not asserted.
    assert!(traverses && too_wide_blocked && wall < Duration::from_secs(10));
}

#[test]
fn c6_narrow_tunnel_mission() {
    let runs = lokken_runs();
    let n = runs.len() as f64;
    let dist = runs.iter().map(|r| r.result.metrics.travelled_distance).sum::<f64>() / n;
    let explored = runs.iter().map(|r| r.result.metrics.explored_fraction).sum::<f64>() / n;
    let collisions: usize = runs.iter().map(|r| r.result.metrics.collision_count).sum();
    let slowest = runs.iter().map(|r| r.wall).max().unwrap();
    for (s, r) in SEEDS.iter().zip(runs) {
        let m = &r.result.metrics;
        println!(
            "  seed {s}: distance={:.1} explored={:.3} collisions={} outcome={:?} home_dist={:.2} wall={:.1?}",
            m.travelled_distance, m.explored_fraction, m.collision_count, m.outcome, m.final_distance_to_home, r.wall
        );
    }
    let pass = dist > 200.0 && explored >= 0.8 && collisions == 0 && slowest < Duration::from_secs(300);
    verdict(
        6,
        pass,
        &format!("mean_distance={dist:.1} mean_explored={explored:.3} collisions={collisions} slowest={slowest:.1?}"),
    );
    assert!(pass);
}

#[test]
fn c7_wide_gallery_mission_returns_home() {
    let runs = run_seeds("hagerbach", None);
    let mut ok = 0;
    for (s, r) in SEEDS.iter().zip(&runs) {
        let m = &r.result.metrics;
        let good = m.homing_triggered && m.outcome == MissionOutcome::Landed && m.final_distance_to_home < 2.0;
        ok += good as usize;
        println!(
            "  seed {s}: homing={} at {:?} outcome={:?} home_dist={:.2} distance={:.1} wall={:.1?}",
            m.homing_triggered, m.homing_time, m.outcome, m.final_distance_to_home, m.travelled_distance, r.wall
        );
    }
    let pass = ok >= 4;
    verdict(7, pass, &format!("homed={ok}/5"));
    assert!(pass);
}

/// Freeze count from closed-form log-odds sums over the class sequence.
fn freeze_oracle(classes: &[usize], cfg: &ArtifactConfig) -> Option<usize> {
    let n_classes = ArtifactClass::COUNT;
    let mut hits = vec![0usize; n_classes];
    for (n, &c) in classes.iter().enumerate() {
        hits[c] += 1;
        let seen = n + 1;
        for k in 0..n_classes {
            let h = (cfg.p_true_pos[k] / cfg.p_false_pos[k]).ln();
            let m = ((1.0 - cfg.p_true_pos[k]) / (1.0 - cfg.p_false_pos[k])).ln();
            let l = logit(cfg.prior) + hits[k] as f64 * h + (seen - hits[k]) as f64 * m;
            if l >= logit(cfg.freeze_posterior[k]) {
                return Some(seen);
            }
        }
    }
    None
}

#[test]
fn c8_artifact_localization() {
    // Noise-free camera reports from the narrow-tunnel runs.
    let runs = lokken_runs();
    let world = scenario("lokken").load_world().unwrap().0;
    let truth = world.artifacts();
    let mut worst: f64 = 0.0;
    let mut camera_reports = 0;
    let mut wrong_class = 0;
    for r in runs {
        for rep in r.result.reports.iter().filter(|r| r.source == ReportSource::Camera) {
            camera_reports += 1;
            let nearest = truth
                .iter()
                .min_by(|a, b| (a.center - rep.location).norm().total_cmp(&(b.center - rep.location).norm()))
                .unwrap();
            worst = worst.max((nearest.center - rep.location).norm());
            wrong_class += (nearest.class != rep.class) as usize;
        }
    }
    let clean_ok = camera_reports > 0 && worst <= 0.4 && wrong_class == 0;

    // Noisy detections, pooled over seeds.
    let noise = DetectionNoise {
        p_miss: 0.2,
        p_misclass: 0.1,
        ..DetectionNoise::default()
    };
    let noisy = run_seeds("lokken", Some(noise));
    let (mut tp, mut fp, mut gt) = (0, 0, 0);
    for (s, r) in SEEDS.iter().zip(&noisy) {
        let sc = score_artifacts(&r.result.reports, truth, 2.0);
        println!(
            "  noisy seed {s}: tp={} fp={} dup={} precision={:.2} recall={:.2}",
            sc.true_positives, sc.false_positives, sc.duplicates, sc.precision, sc.recall
        );
        tp += sc.true_positives;
        fp += sc.false_positives;
        gt += sc.ground_truth;
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = tp as f64 / gt as f64;
    let noisy_ok = precision >= 0.9 && recall >= 0.8;

    // Bayes freeze count against the closed-form oracle.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut freeze_mismatch = 0;
    for _ in 0..2000 {
        let mut cfg = ArtifactConfig::default();
        cfg.prior = rng.random_range(0.05..0.95);
        for c in 0..ArtifactClass::COUNT {
            cfg.p_false_pos[c] = rng.random_range(0.01..0.5);
            cfg.p_true_pos[c] = rng.random_range(cfg.p_false_pos[c] + 0.01..0.99);
            cfg.freeze_posterior[c] = rng.random_range(0.6..0.999);
        }
        let main = rng.random_range(0..ArtifactClass::COUNT);
        let p_other = rng.random_range(0.0..0.4);
        let classes: Vec<usize> = (0..40)
            .map(|_| if rng.random_bool(p_other) { rng.random_range(0..ArtifactClass::COUNT) } else { main })
            .collect();
        let mut set = HypothesisSet::default();
        let mut frozen_at = None;
        for (i, &c) in classes.iter().enumerate() {
            set.update(ArtifactClass::from_index(c).unwrap(), &Vec3::zeros(), &cfg);
            if set.hypotheses[0].frozen {
                frozen_at = Some(i + 1);
                break;
            }
        }
        if frozen_at != freeze_oracle(&classes, &cfg) {
            freeze_mismatch += 1;
        }
    }
    let freeze_ok = freeze_mismatch == 0;
    let pass = clean_ok && noisy_ok && freeze_ok;
    verdict(
        8,
        pass,
        &format!(
            "camera_reports={camera_reports} worst_error={worst:.3} wrong_class={wrong_class} noisy_precision={precision:.3} noisy_recall={recall:.3} freeze_mismatches={freeze_mismatch}"
        ),
    );
    assert!(pass);
}

#[test]
fn c9_map_shift_keeps_retained_voxels() {
    let cfg = MapConfig {
        voxel_edge: 0.2,
        bounds: MapBounds {
            extent: Vec3::new(20.0, 20.0, 12.0),
            shift_margin: 5.0,
        },
        log_odds: LogOddsParams::default(),
    };
    let start = Vec3::new(0.0, 0.0, 2.0);
    let mut map = OccupancyMap::new(cfg, &start).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let keys: Vec<VoxelKey> = map.keys().collect();
    for k in keys {
        map.set_log_odds(&k, rng.random_range(-2.0f32..3.5));
    }
    let mut shifts = 0;
    let mut mismatches = 0;
    let mut fresh_not_unknown = 0;
    let mut margin_violations = 0;
    let steps = 30.0 / 0.05;
    for i in 1..=steps as usize {
        let robot = start + Vec3::new(0.05 * i as f64, 0.0, 0.0);
        let before = map.clone();
        let delta = map.maybe_shift(&robot);
        if delta == [0; 3] {
            continue;
        }
        shifts += 1;
        let (old_min, new_min, dims) = (before.window_min(), map.window_min(), map.dims());
        let lo: [i64; 3] = std::array::from_fn(|a| old_min[a].max(new_min[a]));
        let hi: [i64; 3] = std::array::from_fn(|a| (old_min[a] + dims[a] as i64).min(new_min[a] + dims[a] as i64));
        for _ in 0..1000 {
            let k: VoxelKey = std::array::from_fn(|a| rng.random_range(lo[a]..hi[a]));
            if before.log_odds(&k) != map.log_odds(&k) {
                mismatches += 1;
            }
        }
        for _ in 0..200 {
            let k: VoxelKey = std::array::from_fn(|a| rng.random_range(new_min[a]..new_min[a] + dims[a] as i64));
            if !before.contains_key(&k) && map.log_odds(&k) != Some(0.0) {
                fresh_not_unknown += 1;
            }
        }
        let b = map.window_box();
        if (0..3).any(|a| robot[a] - b.min[a] < 5.0 || b.max[a] - robot[a] < 5.0) {
            margin_violations += 1;
        }
        // Keep later shifts meaningful: give the exposed voxels content too.
        let keys: Vec<VoxelKey> = map.keys().filter(|k| !before.contains_key(k)).collect();
        for k in keys {
            map.set_log_odds(&k, rng.random_range(-2.0f32..3.5));
        }
    }
    let pass = shifts >= 1 && mismatches == 0 && fresh_not_unknown == 0 && margin_violations == 0;
    verdict(
        9,
        pass,
        &format!("shifts={shifts} mismatches={mismatches} fresh_not_unknown={fresh_not_unknown} margin_violations={margin_violations}"),
    );
    assert!(pass);
}

#[test]
fn c10_runs_are_byte_identical() {
    let first = &lokken_runs()[0].result;
    let mut cfg = scenario("lokken");
    cfg.master_seed = SEEDS[0];
    let second = run_mission(&cfg).expect("mission runs");
    let same_traj = first.trajectory_csv == second.trajectory_csv;
    let same_metrics = serde_json::to_string(&first.metrics).unwrap() == serde_json::to_string(&second.metrics).unwrap();
    let pass = same_traj && same_metrics && !first.trajectory_csv.is_empty();
    verdict(10, pass, &format!("trajectory_bytes={} identical={same_traj} metrics_identical={same_metrics}", first.trajectory_csv.len()));
    assert!(pass);
}
