//! Exploration planning: a sampled local graph that picks the most
//! informative nearby path, a sparse global graph of visited places and
//! frontiers, and an endurance check that brings the robot home.

mod global;
mod graph;
mod local;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mapping::GainSensorModel;
use crate::vehicle::{RobotGeometry, UnknownPolicy};

pub use global::{check_homing, home_path, plan_global_reposition, shortcut_path, update_global_graph, GlobalGraph, GlobalPath, HomingDecision};
pub use graph::{shortest_paths, shortest_paths_from, ExplorationGraph, GraphVertex, ShortestPaths};
pub use local::{
    build_local_graph, cluster_and_evaluate, compute_local_box, exploration_gain, improve_path_safety, min_clearance,
    plan_local, volumetric_gain, BestPath, LeafGains, LocalPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalBoxParams {
    pub min_extent: Vec3,
    pub max_extent: Vec3,
}

impl Default for LocalBoxParams {
    fn default() -> Self {
        Self {
            min_extent: Vec3::new(4.0, 4.0, 2.0),
            max_extent: Vec3::new(30.0, 30.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub epsilon_g: f64,
    pub rho: f64,
    pub k_trigger: usize,
    /// Minimum ExplorationGain, in unknown-voxel counts, for a local path.
    pub gain_threshold: f64,
    /// Minimum vertex gain, in unknown-voxel counts, for a frontier.
    pub frontier_gain_threshold: f64,
    pub local_box: LocalBoxParams,
    pub num_samples: usize,
    pub edge_radius: f64,
    pub robot_cuboid: RobotGeometry,
    pub unknown_policy: UnknownPolicy,
    pub leaf_only_gain: bool,
    pub lambda_discount: f64,
    pub gain_sensor: GainSensorModel,
    /// Radius within which clearance to occupied voxels is measured when
    /// improving path safety.
    pub clearance_radius: f64,
    /// High-gain local paths besides the best one kept in the global graph.
    pub extra_global_paths: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            epsilon_g: 1.0,
            rho: 1.0,
            k_trigger: 3,
            gain_threshold: 50.0,
            frontier_gain_threshold: 150.0,
            local_box: LocalBoxParams::default(),
            num_samples: 300,
            edge_radius: 2.0,
            robot_cuboid: RobotGeometry::default(),
            unknown_policy: UnknownPolicy::Strict,
            leaf_only_gain: true,
            lambda_discount: 0.0,
            gain_sensor: GainSensorModel::default(),
            clearance_radius: 1.0,
            extra_global_paths: 3,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon_g > 0.0) {
            return Err("epsilon_g must be positive".into());
        }
        if !(self.rho > 0.0) {
            return Err("rho must be positive".into());
        }
        if self.k_trigger == 0 {
            return Err("k_trigger must be at least 1".into());
        }
        if !(self.edge_radius > 0.0) {
            return Err("edge_radius must be positive".into());
        }
        if !(self.lambda_discount >= 0.0) {
            return Err("lambda_discount must be non-negative".into());
        }
        if !(self.gain_threshold >= 0.0 && self.frontier_gain_threshold >= 0.0) {
            return Err("gain thresholds must be non-negative".into());
        }
        if !(self.clearance_radius > 0.0) {
            return Err("clearance_radius must be positive".into());
        }
        let b = &self.local_box;
        for a in 0..3 {
            if !(b.min_extent[a] > 0.0 && b.min_extent[a] <= b.max_extent[a]) {
                return Err(format!("local box extents on axis {a} must satisfy 0 < min <= max"));
            }
        }
        self.robot_cuboid.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("robot in non-free space at {0:?}")]
    RootNotFree(Vec3),
    #[error("robot position {0:?} cannot be connected to the global graph")]
    NotConnectable(Vec3),
}
