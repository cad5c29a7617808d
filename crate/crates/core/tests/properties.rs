use proptest::prelude::*;

use owl_core::artifacts::{score_artifacts, ArtifactReport, ReportSource};
use owl_core::control::{control_step, ControllerConfig, ControllerState, Estimate, Reference};
use owl_core::geometry::{Pose, Vec3, VoxelKey};
use owl_core::mapping::{map_from_str, map_to_string, LogOddsParams, MapBounds, MapConfig, OccupancyMap, VoxelState};
use owl_core::planner::{check_homing, GlobalGraph, HomingDecision, PlannerConfig};
use owl_core::sensing::PointCloud;
use owl_core::vehicle::{cuboid_in_free_space, segment_in_free_space, RobotGeometry, UnknownPolicy};
use owl_core::world::{world_from_str, world_to_string, ArtifactClass, Cell, GroundTruthArtifact, WorldGrid};

fn map(extent: f64) -> OccupancyMap {
    let cfg = MapConfig {
        voxel_edge: 0.2,
        bounds: MapBounds {
            extent: Vec3::repeat(extent),
            shift_margin: 1.0,
        },
        log_odds: LogOddsParams::default(),
    };
    OccupancyMap::new(cfg, &Vec3::zeros()).unwrap()
}

fn filled(extent: f64, values: &[f32]) -> OccupancyMap {
    let mut m = map(extent);
    let keys: Vec<VoxelKey> = m.keys().collect();
    for (i, k) in keys.iter().enumerate() {
        m.set_log_odds(k, values[i % values.len()]);
    }
    m
}

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_odds_stay_clamped(rays in prop::collection::vec((vec3(2.5), any::<bool>()), 1..40), repeats in 1usize..30) {
        let mut m = map(6.0);
        let pose = Pose::new(Vec3::new(0.05, 0.07, 0.03), 0.0);
        let cloud = PointCloud {
            stamp: 0.0,
            origin_pose: pose,
            points: rays.iter().map(|r| r.0).collect(),
            hit_mask: rays.iter().map(|r| r.1).collect(),
        };
        for _ in 0..repeats {
            m.integrate_scan(&cloud, &pose);
        }
        let p = *m.params();
        let keys: Vec<VoxelKey> = m.keys().collect();
        for k in keys {
            let l = m.log_odds(&k).unwrap();
            prop_assert!(l >= p.l_min && l <= p.l_max);
        }
    }

    #[test]
    fn shifting_keeps_every_retained_voxel(dx in -12i64..12, dy in -12i64..12, dz in -12i64..12, seed in any::<u32>()) {
        let values: Vec<f32> = (0..97).map(|i| ((i as u32).wrapping_mul(2654435761).wrapping_add(seed) % 550) as f32 / 100.0 - 2.0).collect();
        let before = filled(4.0, &values);
        let mut after = before.clone();
        after.shift_window([dx, dy, dz]);
        let keys: Vec<VoxelKey> = after.keys().collect();
        for k in keys {
            match before.log_odds(&k) {
                Some(l) => prop_assert_eq!(after.log_odds(&k), Some(l)),
                None => prop_assert_eq!(after.log_odds(&k), Some(0.0)),
            }
        }
    }

    #[test]
    fn strict_free_implies_optimistic_free(center in vec3(1.5), values in prop::collection::vec(prop_oneof![Just(-2.0f32), Just(0.0), Just(3.0)], 1..20)) {
        let m = filled(6.0, &values);
        let geom = RobotGeometry::default();
        if cuboid_in_free_space(&center, &geom, &m, UnknownPolicy::Strict) {
            prop_assert!(cuboid_in_free_space(&center, &geom, &m, UnknownPolicy::Optimistic));
        }
        let big = geom.inflated(0.1);
        if cuboid_in_free_space(&center, &big, &m, UnknownPolicy::Optimistic) {
            prop_assert!(cuboid_in_free_space(&center, &geom, &m, UnknownPolicy::Optimistic));
        }
    }

    #[test]
    fn segment_check_covers_its_endpoints(a in vec3(1.5), b in vec3(1.5), values in prop::collection::vec(prop_oneof![Just(-2.0f32), Just(3.0)], 1..12)) {
        let m = filled(6.0, &values);
        let geom = RobotGeometry::default();
        if segment_in_free_space(&a, &b, &geom, &m, UnknownPolicy::Strict) {
            prop_assert!(cuboid_in_free_space(&a, &geom, &m, UnknownPolicy::Strict));
            prop_assert!(cuboid_in_free_space(&b, &geom, &m, UnknownPolicy::Strict));
            let mid = (a + b) / 2.0;
            prop_assert!(cuboid_in_free_space(&mid, &geom, &m, UnknownPolicy::Strict));
        }
    }

    #[test]
    fn map_dump_round_trips_states(values in prop::collection::vec(-2.0f32..3.5, 1..50)) {
        let m = filled(4.0, &values);
        let dump = map_from_str(&map_to_string(&m)).unwrap();
        let keys: Vec<VoxelKey> = m.keys().collect();
        prop_assert_eq!(dump.states.len(), keys.len());
        let [nx, ny, _] = dump.dims;
        for k in keys {
            let i = (k[0] - dump.window_min[0]) as usize
                + nx * ((k[1] - dump.window_min[1]) as usize + ny * (k[2] - dump.window_min[2]) as usize);
            prop_assert_eq!(dump.states[i], m.state(&k));
        }
    }

    #[test]
    fn proportional_command_is_linear(e in vec3(5.0), k in -6i32..6, negative in any::<bool>()) {
        // Power-of-two scales keep the products exact.
        let alpha = if negative { -(2f64.powi(k)) } else { 2f64.powi(k) };
        let cfg = ControllerConfig {
            ki: Vec3::zeros(),
            kd: Vec3::zeros(),
            ..ControllerConfig::default()
        };
        let cmd = |err: Vec3| {
            let r = Reference { position: err, yaw: 0.0, velocity: Vec3::zeros() };
            let est = Estimate { position: Vec3::zeros(), yaw: 0.0, velocity: Vec3::zeros() };
            control_step(&mut ControllerState::default(), &r, &est, 0.01, &cfg).0
        };
        prop_assert_eq!(cmd(e * alpha), cmd(e) * alpha);
    }

    #[test]
    fn yaw_command_is_bounded(r in -10.0f64..10.0, y in -10.0f64..10.0) {
        let cfg = ControllerConfig::default();
        let rf = Reference { position: Vec3::zeros(), yaw: r, velocity: Vec3::zeros() };
        let est = Estimate { position: Vec3::zeros(), yaw: y, velocity: Vec3::zeros() };
        let (_, yr) = control_step(&mut ControllerState::default(), &rf, &est, 0.01, &cfg);
        prop_assert!(yr.abs() <= cfg.kp_yaw * std::f64::consts::PI);
    }

    #[test]
    fn scores_are_probabilities(n_reports in 0usize..8, offsets in prop::collection::vec((0usize..4, 0u8..8, vec3(3.0)), 8)) {
        let truth: Vec<GroundTruthArtifact> = (0..4)
            .map(|i| GroundTruthArtifact {
                id: i as u32,
                class: ArtifactClass::from_index(i).unwrap(),
                center: Vec3::new(10.0 * i as f64, 0.0, 0.0),
                bluetooth: false,
            })
            .collect();
        let reports: Vec<ArtifactReport> = offsets[..n_reports]
            .iter()
            .map(|&(t, c, off)| ArtifactReport {
                stamp: 0.0,
                class: ArtifactClass::from_index(c as usize).unwrap(),
                location: truth[t].center + off,
                probabilities: [0.5; ArtifactClass::COUNT],
                detection_count: 1,
                source: ReportSource::Camera,
                thumbnail_ref: None,
            })
            .collect();
        let s = score_artifacts(&reports, &truth, 2.0);
        prop_assert!((0.0..=1.0).contains(&s.precision));
        prop_assert!((0.0..=1.0).contains(&s.recall));
        prop_assert_eq!(s.true_positives + s.false_positives + s.duplicates, reports.len());
        prop_assert!(s.true_positives <= truth.len());
    }

    #[test]
    fn homing_fires_exactly_when_budget_runs_short(elapsed in 0.0f64..600.0, margin in 0.0f64..100.0) {
        let mut g = GlobalGraph::new(Vec3::zeros());
        let m = filled(6.0, &[-2.0]);
        let cfg = PlannerConfig::default();
        g.add_robot_position(&Vec3::new(2.0, 0.0, 0.0), &m, &cfg);
        let d = check_homing(&g, &Vec3::new(2.0, 0.0, 0.0), elapsed, 600.0, 0.8, margin).unwrap();
        let t_home = 2.0 / 0.8;
        match d {
            HomingDecision::ReturnNow(p) => {
                prop_assert!(600.0 - elapsed <= t_home + margin);
                prop_assert_eq!(p.waypoints.last().copied(), Some(Vec3::zeros()));
            }
            HomingDecision::Continue { time_home } => {
                prop_assert!(600.0 - elapsed > t_home + margin);
                prop_assert!((time_home - t_home).abs() < 1e-12);
            }
        }
    }
}

fn random_world(cells: &[bool], n: usize) -> WorldGrid {
    let mut grid = vec![Cell::Solid; n * n * n];
    let mut i = 0;
    for z in 1..n - 1 {
        for y in 1..n - 1 {
            for x in 1..n - 1 {
                if cells[i % cells.len()] {
                    grid[x + n * (y + n * z)] = Cell::Air;
                }
                i += 1;
            }
        }
    }
    WorldGrid::new(Vec3::new(-1.0, 2.0, 0.0), 0.2, [n, n, n], grid, vec![]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn world_text_round_trips(cells in prop::collection::vec(any::<bool>(), 1..200), n in 3usize..9) {
        let w = random_world(&cells, n);
        let back = world_from_str(&world_to_string(&w)).unwrap();
        prop_assert_eq!(back.cells(), w.cells());
        prop_assert_eq!(back.dims(), w.dims());
        prop_assert_eq!(back.origin(), w.origin());
    }

    #[test]
    fn out_of_window_voxels_read_unknown(p in vec3(50.0)) {
        let m = filled(4.0, &[-2.0]);
        if !m.window_box().contains(&p) {
            prop_assert_eq!(m.state_at(&p), VoxelState::Unknown);
        }
    }
}
