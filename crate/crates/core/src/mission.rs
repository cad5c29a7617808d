//! The mission runner: a fixed-timestep loop wiring world, sensors, map,
//! planner, controller and artifact pipeline together, plus metrics and
//! file exports.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifacts::{
    localize_detection, score_artifacts, ArtifactConfig, ArtifactReport, ArtifactScore, BluetoothLog, HypothesisSet,
};
use crate::control::{control_step, track_path, ControllerConfig, ControllerState, Estimate, PathTracker, Reference};
use crate::geometry::{Aabb, Pose, Vec3, VoxelKey};
use crate::mapping::{map_to_string, GainSensorModel, MapBounds, MapConfig, OccupancyMap, VoxelState};
use crate::planner::{
    check_homing, home_path, plan_global_reposition, plan_local, shortcut_path, update_global_graph, GlobalGraph,
    HomingDecision, PlannerConfig, PlannerError,
};
use crate::sensing::{detect_artifacts, scan_bluetooth, scan_lidar_with, CameraModel, DetectionNoise, LidarModel, OdomNoise, Odometry};
use crate::vehicle::{cuboid_in_free_space, segment_in_free_space, step_dynamics, RobotGeometry, RobotState, UnknownPolicy};
use crate::world::{generate_tunnel_world, load_world, TunnelSpec, WorldError, WorldGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldSource {
    Generate { spec: TunnelSpec, seed: u64 },
    /// World file; relative paths resolve against the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub world: WorldSource,
    /// Takeoff point. Defaults to the generator's start for generated worlds.
    pub start: Option<Vec3>,
    pub start_yaw: f64,
    /// Flight time budget (s).
    pub endurance: f64,
    /// Cruise speed of path tracking (m/s).
    pub max_speed: f64,
    /// Speed assumed when converting graph distances to flight time.
    pub nominal_speed: f64,
    /// Hard speed limit of the vehicle model.
    pub vehicle_speed_limit: f64,
    pub dt: f64,
    pub lidar: LidarModel,
    pub camera: CameraModel,
    pub detection_noise: DetectionNoise,
    pub odometry: OdomNoise,
    pub map: MapConfig,
    pub planner: PlannerConfig,
    pub controller: ControllerConfig,
    pub artifacts: ArtifactConfig,
    pub robot: RobotGeometry,
    /// Reserve kept on top of the flight time home (s).
    pub homing_margin: f64,
    pub homing_check_period: f64,
    /// Landing happens once within this distance of home (m).
    pub landing_radius: f64,
    pub hover_time: f64,
    /// Hover before the first plan so a few scans accumulate (s).
    pub takeoff_hover: f64,
    /// Number of recent scans pooled for sizing the local planning box.
    pub cloud_scans: usize,
    pub bluetooth_radius: f64,
    pub trajectory_rate_hz: f64,
    pub master_seed: u64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            world: WorldSource::Generate {
                spec: TunnelSpec::default(),
                seed: 0,
            },
            start: None,
            start_yaw: 0.0,
            endurance: 600.0,
            max_speed: 1.0,
            nominal_speed: 0.8,
            vehicle_speed_limit: 3.0,
            dt: 0.01,
            lidar: LidarModel {
                beam_rows: 64,
                channels: 32,
                azimuth_steps: 128,
                max_range: 5.0,
                ..LidarModel::default()
            },
            camera: CameraModel::default(),
            detection_noise: DetectionNoise::default(),
            odometry: OdomNoise::default(),
            map: MapConfig {
                bounds: MapBounds {
                    extent: Vec3::new(50.0, 50.0, 12.0),
                    shift_margin: 5.0,
                },
                ..MapConfig::default()
            },
            planner: PlannerConfig {
                robot_cuboid: RobotGeometry::default().inflated(0.2),
                gain_sensor: GainSensorModel {
                    range: 6.0,
                    ..GainSensorModel::default()
                },
                ..PlannerConfig::default()
            },
            controller: ControllerConfig::default(),
            artifacts: ArtifactConfig::default(),
            robot: RobotGeometry::default(),
            homing_margin: 30.0,
            homing_check_period: 1.0,
            landing_radius: 0.5,
            hover_time: 0.5,
            takeoff_hover: 1.0,
            cloud_scans: 10,
            bluetooth_radius: 5.0,
            trajectory_rate_hz: 10.0,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("config error: {0}")]
    Config(String),
    #[error("world: {0}")]
    World(#[from] WorldError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invariant violated at t={time:.2}: {message}")]
    Invariant { time: f64, message: String },
}

impl MissionError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            MissionError::Config(_) | MissionError::World(_) => 2,
            MissionError::Io(_) => 2,
            MissionError::Invariant { .. } => 4,
        }
    }
}

/// Contacts slower than this are resting contact, not impacts (m/s).
/// Inset of the robot body when marking it free in the map.
const BODY_CLEAR_SHRINK: f64 = 0.02;

/// A path is abandoned when the robot moves less than STALL_DISTANCE in
/// STALL_TIME seconds.
const STALL_DISTANCE: f64 = 0.2;
const STALL_TIME: f64 = 3.0;

const IMPACT_EPS: f64 = 1e-3;

/// Ticks between firings of something running at `rate_hz`.
fn ticks_per(rate_hz: f64, dt: f64) -> u64 {
    ((1.0 / (rate_hz * dt)).round() as u64).max(1)
}

impl MissionConfig {
    pub fn from_json(text: &str) -> Result<Self, MissionError> {
        serde_json::from_str(text).map_err(|e| MissionError::Config(e.to_string()))
    }

    /// Read a JSON config, resolving a relative world path against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, MissionError> {
        let text = fs::read_to_string(path).map_err(|e| MissionError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let WorldSource::File { path: wp } = &mut cfg.world {
            if wp.is_relative() {
                if let Some(dir) = path.parent() {
                    *wp = dir.join(&*wp);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MissionError> {
        let c = |r: Result<(), String>| r.map_err(MissionError::Config);
        if !(self.endurance >= 0.0 && self.endurance.is_finite()) {
            return Err(MissionError::Config("endurance must be non-negative".into()));
        }
        if !(self.max_speed > 0.0 && self.nominal_speed > 0.0 && self.vehicle_speed_limit >= self.max_speed) {
            return Err(MissionError::Config("speeds must be positive with vehicle_speed_limit >= max_speed".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(MissionError::Config("dt must lie in (0, 0.1]".into()));
        }
        for (name, rate) in [
            ("lidar", self.lidar.rate_hz),
            ("camera", self.camera.rate_hz),
            ("trajectory", self.trajectory_rate_hz),
        ] {
            if !(rate > 0.0 && rate * self.dt <= 1.0) {
                return Err(MissionError::Config(format!("{name} rate must lie in (0, 1/dt]")));
            }
        }
        if !(self.homing_margin >= 0.0 && self.homing_check_period > 0.0 && self.landing_radius > 0.0 && self.hover_time >= 0.0 && self.takeoff_hover >= 0.0) {
            return Err(MissionError::Config("homing and hover parameters must be non-negative".into()));
        }
        if self.cloud_scans == 0 {
            return Err(MissionError::Config("cloud_scans must be at least 1".into()));
        }
        c(self.lidar.validate())?;
        c(self.camera.validate())?;
        c(self.detection_noise.validate())?;
        self.map.validate().map_err(|e| MissionError::Config(e.to_string()))?;
        c(self.planner.validate())?;
        c(self.controller.validate())?;
        c(self.artifacts.validate())?;
        c(self.robot.validate())?;
        Ok(())
    }

    /// Build the world and the takeoff point.
    pub fn load_world(&self) -> Result<(WorldGrid, Vec3), MissionError> {
        match &self.world {
            WorldSource::Generate { spec, seed } => {
                let w = generate_tunnel_world(spec, *seed)?;
                Ok((w, self.start.unwrap_or(Vec3::from(spec.start))))
            }
            WorldSource::File { path } => {
                let w = load_world(path)?;
                let start = self
                    .start
                    .ok_or_else(|| MissionError::Config("a world file needs an explicit start".into()))?;
                Ok((w, start))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Explore,
    Hover,
    Reposition,
    Homing,
    Landed,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Explore => "explore",
            Mode::Hover => "hover",
            Mode::Reposition => "reposition",
            Mode::Homing => "homing",
            Mode::Landed => "landed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionOutcome {
    Landed,
    EnduranceExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionMetrics {
    pub outcome: MissionOutcome,
    pub travelled_distance: f64,
    pub flight_time: f64,
    pub explored_voxels: usize,
    pub reachable_free_voxels: usize,
    pub explored_fraction: f64,
    pub collision_count: usize,
    pub max_impact_speed: f64,
    pub planning_iterations: usize,
    pub repositions: usize,
    pub homing_triggered: bool,
    pub homing_time: Option<f64>,
    pub homing_success: bool,
    pub final_distance_to_home: f64,
    pub report_count: usize,
    pub artifact_score: ArtifactScore,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub iteration: usize,
    pub position: Vec3,
    /// What the iteration led to: local, hover, global, homing or no_frontier.
    pub trigger: &'static str,
    pub policy: Option<UnknownPolicy>,
    pub vertex_count: usize,
    pub edge_count: usize,
    pub best_gain: f64,
    pub leaf: Option<usize>,
    pub gain_evaluations: usize,
    pub path_length: f64,
    pub global_vertices: usize,
    pub frontiers: usize,
}

/// Everything a finished mission produced.
#[derive(Debug, Clone)]
pub struct MissionResult {
    pub metrics: MissionMetrics,
    pub trajectory_csv: String,
    pub trace: Vec<TraceRecord>,
    pub reports: Vec<ArtifactReport>,
    pub map: OccupancyMap,
    /// Explored fraction sampled once per second.
    pub explored_history: Vec<f64>,
}

impl MissionResult {
    pub fn write_outputs(&self, dir: &Path) -> Result<(), MissionError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trajectory.csv"), &self.trajectory_csv)?;
        let mut trace = String::new();
        for r in &self.trace {
            let _ = writeln!(trace, "{}", serde_json::to_string(r).expect("trace serializes"));
        }
        fs::write(dir.join("planner_trace.jsonl"), trace)?;
        let mut reports = String::new();
        for r in &self.reports {
            let _ = writeln!(reports, "{}", r.to_json_line());
        }
        fs::write(dir.join("artifacts.jsonl"), reports)?;
        fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(&self.metrics).expect("metrics serialize") + "\n",
        )?;
        fs::write(dir.join("map.owlmap"), map_to_string(&self.map))?;
        Ok(())
    }
}

fn path_length(p: &[Vec3]) -> f64 {
    p.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

#[derive(Serialize)]
struct StateDump<'a> {
    time: f64,
    message: &'a str,
    mode: Mode,
    state: RobotState,
    estimate: Pose,
    active_path: Option<&'a [Vec3]>,
    map_window_min: [i64; 3],
    global_vertices: usize,
}

struct Mission<'a> {
    cfg: &'a MissionConfig,
    ctrl_cfg: ControllerConfig,
    world: &'a WorldGrid,
    home: Vec3,
    state: RobotState,
    est: Pose,
    odom: Odometry,
    map: OccupancyMap,
    global: GlobalGraph,
    hyps: HypothesisSet,
    bt: BluetoothLog,
    reports: Vec<ArtifactReport>,
    ctrl: ControllerState,
    tracker: Option<PathTracker>,
    hold: Vec3,
    hold_yaw: f64,
    mode: Mode,
    hover_until: f64,
    /// Where and when the robot last made progress along its path.
    progress: (Vec3, f64),
    in_contact: bool,
    no_gain: usize,
    recent: VecDeque<Vec<Vec3>>,
    explored: Vec<bool>,
    reachable: Vec<bool>,
    explored_count: usize,
    lidar_dirs: Vec<Vec3>,
    lidar_rng: ChaCha8Rng,
    camera_rng: ChaCha8Rng,
    planner_rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
    iterations: usize,
    repositions: usize,
    homing_time: Option<f64>,
    collisions: usize,
    max_impact: f64,
    distance: f64,
}

impl Mission<'_> {
    fn t(&self) -> f64 {
        self.state.time
    }

    fn invariant(&self, message: String, out: Option<&Path>) -> MissionError {
        if let Some(dir) = out {
            let dump = StateDump {
                time: self.t(),
                message: &message,
                mode: self.mode,
                state: self.state,
                estimate: self.est,
                active_path: self.tracker.as_ref().map(|t| t.path()),
                map_window_min: self.map.window_min(),
                global_vertices: self.global.graph().vertex_count(),
            };
            let _ = fs::create_dir_all(dir);
            let _ = fs::write(dir.join("state_dump.json"), serde_json::to_string_pretty(&dump).unwrap_or_default());
        }
        MissionError::Invariant { time: self.t(), message }
    }

    fn scan(&mut self) {
        self.map.maybe_shift(&self.est.position);
        // Spinning LiDARs do not start each sweep at the same azimuth.
        let phase = self.lidar_rng.random_range(0.0..std::f64::consts::TAU);
        let true_pose = Pose::new(self.state.position, self.state.yaw + phase);
        let est_pose = Pose::new(self.est.position, self.est.yaw + phase);
        let cloud = scan_lidar_with(self.world, &true_pose, &self.cfg.lidar, &self.lidar_dirs, self.t(), &mut self.lidar_rng);
        let world = self.world;
        let lattice = self.map.lattice();
        let explored = &mut self.explored;
        let reachable = &self.reachable;
        let count = &mut self.explored_count;
        let mut mark = |k: VoxelKey| {
            let wk = world.key_of(&lattice.center_of(&k));
            if let Some(i) = world.index_of_key(&wk) {
                if reachable[i] && !explored[i] {
                    explored[i] = true;
                    *count += 1;
                }
            }
        };
        self.map.integrate_scan_with(&cloud, &est_pose, |k, s| {
            if s == VoxelState::Free {
                mark(k);
            }
        });
        // The LiDAR cannot see the space right above and below it, but the
        // body is in it, so it is free. Shrunk to absorb odometry drift.
        let body = self.cfg.robot.aabb_at(&self.est.position);
        let shrink = Vec3::repeat(BODY_CLEAR_SHRINK);
        self.map.clear_unknown_in(&Aabb { min: body.min + shrink, max: body.max - shrink }, &mut mark);
        let hits: Vec<Vec3> = cloud.world_hits(&est_pose).collect();
        self.recent.push_back(hits);
        while self.recent.len() > self.cfg.cloud_scans {
            self.recent.pop_front();
        }
        let ids = scan_bluetooth(self.world, &self.state.position, self.cfg.bluetooth_radius);
        self.bt.record(&ids, &self.est.position, self.t());
    }

    fn detect(&mut self) {
        let true_pose = Pose::new(self.state.position, self.state.yaw);
        let dets = detect_artifacts(
            self.world,
            &true_pose,
            &self.cfg.camera,
            &self.cfg.detection_noise,
            self.t(),
            &mut self.camera_rng,
        );
        for d in &dets {
            if let Some(p) = localize_detection(d, &self.est, &self.cfg.camera, &self.map, self.cfg.artifacts.grid_n) {
                self.hyps.update(d.artifact_class, &p, &self.cfg.artifacts);
            }
        }
        let t = self.t();
        self.reports.extend(self.hyps.report_frozen(t));
    }

    fn follow(&mut self, path: Vec<Vec3>, mode: Mode) {
        self.tracker = Some(PathTracker::new(path, self.est.yaw, &self.ctrl_cfg));
        self.mode = mode;
        self.progress = (self.est.position, self.t());
    }

    fn start_homing(&mut self, path: Vec<Vec3>) {
        if self.homing_time.is_none() {
            self.homing_time = Some(self.t());
        }
        let path = shortcut_path(&path, &self.map, &self.cfg.planner);
        self.follow(path, Mode::Homing);
    }

    fn record(&mut self, trigger: &'static str, plan: Option<(&crate::planner::LocalPlan, f64)>, path_len: f64) {
        let (policy, vc, ec, best_gain, leaf, evals) = match plan {
            Some((p, _)) => (
                Some(p.policy),
                p.graph.vertex_count(),
                p.graph.edge_count(),
                p.best_gain,
                p.best_leaf,
                p.gains.evaluations,
            ),
            None => (None, 0, 0, 0.0, None, 0),
        };
        self.trace.push(TraceRecord {
            t: self.t(),
            iteration: self.iterations,
            position: self.est.position,
            trigger,
            policy,
            vertex_count: vc,
            edge_count: ec,
            best_gain,
            leaf,
            gain_evaluations: evals,
            path_length: path_len,
            global_vertices: self.global.graph().vertex_count(),
            frontiers: self.global.frontiers().len(),
        });
    }

    fn homing_due(&mut self) -> Result<Option<Vec<Vec3>>, PlannerError> {
        let cfg = self.cfg;
        self.global.add_robot_position(&self.est.position, &self.map, &cfg.planner);
        match check_homing(&self.global, &self.est.position, self.t(), cfg.endurance, cfg.nominal_speed, cfg.homing_margin)? {
            HomingDecision::ReturnNow(p) => Ok(Some(p.waypoints)),
            HomingDecision::Continue { .. } => Ok(None),
        }
    }

    fn plan(&mut self) -> Result<(), PlannerError> {
        let cfg = self.cfg;
        self.iterations += 1;
        if let Some(path) = self.homing_due()? {
            let len = path_length(&path);
            self.start_homing(path);
            self.record("homing", None, len);
            return Ok(());
        }
        let cloud: Vec<Vec3> = self.recent.iter().flatten().copied().collect();
        let robot = self.est.position;
        let mut result = plan_local(&self.map, &robot, &cloud, &cfg.planner, cfg.planner.unknown_policy, &mut self.planner_rng);
        // Tracking error can leave the padded planning cuboid touching rock
        // or unseen space; fall back to the bare body, then to treating
        // unknown space as free.
        let bare = PlannerConfig {
            robot_cuboid: cfg.robot,
            ..cfg.planner.clone()
        };
        let policy = cfg.planner.unknown_policy;
        if matches!(result, Err(PlannerError::RootNotFree(_))) {
            if let Some(p) = self.backoff_point(&robot) {
                self.follow(vec![robot, p], Mode::Explore);
                self.record("backoff", None, (p - robot).norm());
                return Ok(());
            }
        }
        for (pc, pol) in [(&bare, policy), (&bare, UnknownPolicy::Optimistic)] {
            if !matches!(result, Err(PlannerError::RootNotFree(_))) {
                break;
            }
            result = plan_local(&self.map, &robot, &cloud, pc, pol, &mut self.planner_rng);
        }
        let plan = result.ok();
        if let Some(p) = &plan {
            update_global_graph(&mut self.global, p, &robot, &self.map, &cfg.planner);
            self.map.reset_changed();
        }
        if let Some(best) = plan.as_ref().and_then(|p| p.best.clone()) {
            self.no_gain = 0;
            let len = path_length(&best.waypoints);
            self.follow(best.waypoints, Mode::Explore);
            self.record("local", plan.as_ref().map(|p| (p, 0.0)), len);
            return Ok(());
        }
        self.no_gain += 1;
        if self.no_gain < cfg.planner.k_trigger {
            self.tracker = None;
            self.hold = self.est.position;
            self.hold_yaw = self.est.yaw;
            self.mode = Mode::Hover;
            self.hover_until = self.t() + cfg.hover_time;
            self.record("hover", plan.as_ref().map(|p| (p, 0.0)), 0.0);
            return Ok(());
        }
        self.no_gain = 0;
        self.global.demote_near(&robot, 2.0 * cfg.planner.rho);
        let remaining = cfg.endurance - self.t();
        match plan_global_reposition(&self.global, &robot, remaining, cfg.nominal_speed, &cfg.planner) {
            Some(g) => {
                self.repositions += 1;
                let path = shortcut_path(&g.waypoints, &self.map, &cfg.planner);
                let len = path_length(&path);
                self.follow(path, Mode::Reposition);
                self.record("global", plan.as_ref().map(|p| (p, 0.0)), len);
            }
            None => {
                let path = home_path(&self.global, &robot)?.waypoints;
                let len = path_length(&path);
                self.start_homing(path);
                self.record("no_frontier", plan.as_ref().map(|p| (p, 0.0)), len);
            }
        }
        Ok(())
    }

    /// Nearest point within half an edge radius whose padded cuboid is
    /// free and which the bare body can reach in a straight line.
    fn backoff_point(&self, robot: &Vec3) -> Option<Vec3> {
        let pc = &self.cfg.planner;
        let policy = pc.unknown_policy;
        let e = self.map.voxel_edge();
        let steps = ((0.5 * pc.edge_radius) / e).floor() as usize;
        let mut dirs = Vec::new();
        for x in -1..=1 {
            for y in -1..=1 {
                for z in -1..=1 {
                    if (x, y, z) != (0, 0, 0) {
                        dirs.push(Vec3::new(x as f64, y as f64, z as f64).normalize());
                    }
                }
            }
        }
        for k in 1..=steps {
            for d in &dirs {
                let p = robot + d * (k as f64 * e);
                if cuboid_in_free_space(&p, &pc.robot_cuboid, &self.map, policy)
                    && segment_in_free_space(robot, &p, &self.cfg.robot, &self.map, policy)
                {
                    return Some(p);
                }
            }
        }
        None
    }

    fn land(&mut self) {
        self.tracker = None;
        self.mode = Mode::Landed;
        self.state.velocity = Vec3::zeros();
        self.state.yaw_rate = 0.0;
    }
}

/// Run a mission to completion (landing or endurance exhaustion).
pub fn run_mission(cfg: &MissionConfig) -> Result<MissionResult, MissionError> {
    run_mission_with(cfg, None)
}

/// As [`run_mission`]; a state dump is written to `dump_dir` if an internal
/// invariant breaks.
pub fn run_mission_with(cfg: &MissionConfig, dump_dir: Option<&Path>) -> Result<MissionResult, MissionError> {
    cfg.validate()?;
    let (world, start) = cfg.load_world()?;
    if !world.in_bounds(&start) || world.is_solid(&start) {
        return Err(MissionError::Config(format!("start {:?} is not in open space", start.as_slice())));
    }
    let reachable = world.flood_fill(&start);
    let reachable_count = reachable.iter().filter(|&&r| r).count();
    let seed = cfg.master_seed;
    let state = RobotState::at_rest(start, cfg.start_yaw);
    let mut m = Mission {
        cfg,
        ctrl_cfg: ControllerConfig {
            reference_speed: cfg.max_speed,
            ..cfg.controller
        },
        world: &world,
        home: start,
        state,
        est: state.pose(),
        odom: Odometry::new(cfg.odometry, seed.wrapping_add(3)),
        map: OccupancyMap::new(cfg.map.clone(), &start).map_err(|e| MissionError::Config(e.to_string()))?,
        global: GlobalGraph::new(start),
        hyps: HypothesisSet::default(),
        bt: BluetoothLog::default(),
        reports: Vec::new(),
        ctrl: ControllerState::default(),
        tracker: None,
        hold: start,
        hold_yaw: cfg.start_yaw,
        mode: Mode::Hover,
        hover_until: cfg.takeoff_hover.min(cfg.endurance),
        progress: (start, 0.0),
        in_contact: false,
        no_gain: 0,
        recent: VecDeque::new(),
        explored: vec![false; reachable.len()],
        reachable,
        explored_count: 0,
        lidar_dirs: cfg.lidar.directions(),
        lidar_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)),
        camera_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(2)),
        planner_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(4)),
        trace: Vec::new(),
        iterations: 0,
        repositions: 0,
        homing_time: None,
        collisions: 0,
        max_impact: 0.0,
        distance: 0.0,
    };
    let dt = cfg.dt;
    let lidar_every = ticks_per(cfg.lidar.rate_hz, dt);
    let camera_every = ticks_per(cfg.camera.rate_hz, dt);
    let traj_every = ticks_per(cfg.trajectory_rate_hz, dt);
    let homing_every = ticks_per(1.0 / cfg.homing_check_period, dt);
    let second = ticks_per(1.0, dt);
    let max_ticks = (cfg.endurance / dt).round() as u64;
    let mut csv = String::from("t,x,y,z,yaw,vx,vy,vz,mode\n");
    let mut history = Vec::new();
    let mut last_explored = 0;
    let mut tick: u64 = 0;
    let outcome = loop {
        let t = m.t();
        if m.mode != Mode::Landed {
            if tick % lidar_every == 0 {
                m.scan();
            }
            if tick % camera_every == 0 {
                m.detect();
            }
        }
        if tick % traj_every == 0 {
            let s = &m.state;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                t,
                s.position.x,
                s.position.y,
                s.position.z,
                s.yaw,
                s.velocity.x,
                s.velocity.y,
                s.velocity.z,
                m.mode.name()
            );
        }
        if tick % second == 0 {
            if m.explored_count < last_explored {
                return Err(m.invariant("explored voxel count decreased".into(), dump_dir));
            }
            last_explored = m.explored_count;
            history.push(m.explored_count as f64 / reachable_count.max(1) as f64);
        }
        if m.mode == Mode::Landed {
            break MissionOutcome::Landed;
        }
        if tick >= max_ticks {
            // Out of budget at home (including a zero budget) is a landing.
            if (m.state.position - m.home).norm() <= cfg.landing_radius {
                m.land();
                continue;
            }
            break MissionOutcome::EnduranceExhausted;
        }

        // Periodic endurance check while not already going home.
        if m.mode != Mode::Homing && tick % homing_every == 0 {
            match m.homing_due() {
                Ok(Some(path)) => {
                    let len = path_length(&path);
                    m.start_homing(path);
                    m.record("homing", None, len);
                }
                Ok(None) => {}
                Err(e) => return Err(m.invariant(e.to_string(), dump_dir)),
            }
        }
        if m.mode != Mode::Homing && (m.est.position - m.global.graph().vertex(m.global.robot_vertex()).position).norm() >= cfg.planner.rho {
            m.global.add_robot_position(&m.est.position, &m.map, &cfg.planner);
        }

        if m.tracker.is_some() {
            if (m.est.position - m.progress.0).norm() >= STALL_DISTANCE {
                m.progress = (m.est.position, t);
            } else if t - m.progress.1 >= STALL_TIME {
                // Blocked, usually by rock the map had not seen: drop the
                // path and plan again from here.
                m.tracker = None;
                m.hold = m.est.position;
                m.hold_yaw = m.est.yaw;
            }
        }
        let done = m.tracker.as_ref().is_none_or(|tr| tr.is_done());
        if done {
            match m.mode {
                Mode::Homing => {
                    if (m.est.position - m.home).norm() <= cfg.landing_radius {
                        m.land();
                        continue;
                    }
                    let path = match home_path(&m.global, &m.est.position) {
                        Ok(p) => p.waypoints,
                        Err(e) => return Err(m.invariant(e.to_string(), dump_dir)),
                    };
                    m.start_homing(path);
                }
                Mode::Hover if t < m.hover_until => {}
                _ => {
                    if let Err(e) = m.plan() {
                        return Err(m.invariant(e.to_string(), dump_dir));
                    }
                }
            }
            if m.mode == Mode::Homing && (m.est.position - m.home).norm() <= cfg.landing_radius && m.tracker.as_ref().is_some_and(|tr| tr.path().len() <= 2) {
                m.land();
                continue;
            }
        }

        let estimate = Estimate {
            position: m.est.position,
            yaw: m.est.yaw,
            velocity: m.state.velocity,
        };
        let (accel, yaw_rate) = match m.tracker.as_mut() {
            Some(tr) => {
                let (a, w, _) = track_path(&mut m.ctrl, tr, &estimate, dt, &m.ctrl_cfg);
                if tr.is_done() {
                    m.hold = *tr.path().last().expect("non-empty path");
                    m.hold_yaw = m.est.yaw;
                }
                (a, w)
            }
            None => {
                let r = Reference {
                    position: m.hold,
                    yaw: m.hold_yaw,
                    velocity: Vec3::zeros(),
                };
                control_step(&mut m.ctrl, &r, &estimate, dt, &m.ctrl_cfg)
            }
        };
        let before = m.state.position;
        let (next, events) = step_dynamics(&m.state, &accel, yaw_rate, dt, cfg.vehicle_speed_limit, &world, &cfg.robot);
        m.state = next;
        // Sliding along a wall after an impact is one collision, not one
        // per tick.
        let touching = events.iter().any(|e| e.impact_speed > IMPACT_EPS);
        if touching && !m.in_contact {
            m.collisions += 1;
        }
        m.in_contact = touching;
        for e in &events {
            m.max_impact = m.max_impact.max(e.impact_speed);
        }
        m.distance += (m.state.position - before).norm();
        if !m.state.position.iter().all(|v| v.is_finite()) || !world.in_bounds(&m.state.position) {
            return Err(m.invariant("robot left the world".into(), dump_dir));
        }
        m.est = m.odom.read(&m.state.pose(), dt);
        tick += 1;
    };

    let (world_reports, score) = {
        let mut all = m.reports.clone();
        all.extend(m.bt.finalize());
        let s = score_artifacts(&all, world.artifacts(), 2.0);
        (all, s)
    };
    let final_distance = (m.state.position - m.home).norm();
    let metrics = MissionMetrics {
        outcome,
        travelled_distance: m.distance,
        flight_time: m.t(),
        explored_voxels: m.explored_count,
        reachable_free_voxels: reachable_count,
        explored_fraction: m.explored_count as f64 / reachable_count.max(1) as f64,
        collision_count: m.collisions,
        max_impact_speed: m.max_impact,
        planning_iterations: m.iterations,
        repositions: m.repositions,
        homing_triggered: m.homing_time.is_some(),
        homing_time: m.homing_time,
        homing_success: outcome == MissionOutcome::Landed && final_distance <= cfg.landing_radius,
        final_distance_to_home: final_distance,
        report_count: world_reports.len(),
        artifact_score: score,
    };
    Ok(MissionResult {
        metrics,
        trajectory_csv: csv,
        trace: m.trace,
        reports: world_reports,
        map: m.map,
        explored_history: history,
    })
}
