//! Simulated onboard sensors: LiDAR, a geometric camera detector,
//! odometry and Bluetooth proximity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};
use crate::world::{ArtifactClass, WorldGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarModel {
    pub fov_azimuth_deg: f64,
    pub fov_elevation_deg: f64,
    /// Physical beam rows spread evenly over the elevation FOV.
    pub beam_rows: usize,
    /// Rows actually used; a divisor of `beam_rows`, taken at a fixed stride.
    pub channels: usize,
    pub azimuth_steps: usize,
    pub max_range: f64,
    pub rate_hz: f64,
    pub range_noise_std: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            fov_azimuth_deg: 360.0,
            fov_elevation_deg: 90.0,
            beam_rows: 64,
            channels: 64,
            azimuth_steps: 512,
            max_range: 20.0,
            rate_hz: 10.0,
            range_noise_std: 0.0,
        }
    }
}

impl LidarModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fov_azimuth_deg > 0.0 && self.fov_azimuth_deg <= 360.0) {
            return Err(format!("lidar fov_azimuth_deg {} outside (0, 360]", self.fov_azimuth_deg));
        }
        if !(self.fov_elevation_deg > 0.0 && self.fov_elevation_deg < 180.0) {
            return Err(format!("lidar fov_elevation_deg {} outside (0, 180)", self.fov_elevation_deg));
        }
        if self.channels == 0 || self.beam_rows % self.channels != 0 {
            return Err(format!(
                "lidar channels {} must be a positive divisor of beam_rows {}",
                self.channels, self.beam_rows
            ));
        }
        if self.azimuth_steps == 0 || !(self.max_range > 0.0) || !(self.rate_hz > 0.0) {
            return Err("lidar azimuth_steps, max_range and rate_hz must be positive".into());
        }
        if !(self.range_noise_std >= 0.0) {
            return Err("lidar range_noise_std must be non-negative".into());
        }
        Ok(())
    }

    /// Elevation (radians) of every used channel, bottom to top.
    pub fn elevations(&self) -> Vec<f64> {
        let half = self.fov_elevation_deg.to_radians() / 2.0;
        let stride = self.beam_rows / self.channels;
        (0..self.channels)
            .map(|i| {
                if self.beam_rows == 1 {
                    0.0
                } else {
                    -half + (i * stride) as f64 * 2.0 * half / (self.beam_rows - 1) as f64
                }
            })
            .collect()
    }

    /// Unit ray directions in the sensor frame, channel-major.
    pub fn directions(&self) -> Vec<Vec3> {
        let fov = self.fov_azimuth_deg.to_radians();
        let step = fov / self.azimuth_steps as f64;
        let mut out = Vec::with_capacity(self.channels * self.azimuth_steps);
        for el in self.elevations() {
            let (se, ce) = el.sin_cos();
            for j in 0..self.azimuth_steps {
                let az = -fov / 2.0 + (j as f64 + 0.5) * step;
                let (sa, ca) = az.sin_cos();
                out.push(Vec3::new(ce * ca, ce * sa, se));
            }
        }
        out
    }
}

/// One LiDAR sweep. Points are in the sensor frame; a ray with no return
/// carries the point at maximum range and a false mask entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub stamp: f64,
    pub origin_pose: Pose,
    pub points: Vec<Vec3>,
    pub hit_mask: Vec<bool>,
}

impl PointCloud {
    pub fn world_hits(&self, pose: &Pose) -> impl Iterator<Item = Vec3> + '_ {
        let pose = *pose;
        self.points
            .iter()
            .zip(&self.hit_mask)
            .filter(|(_, h)| **h)
            .map(move |(p, _)| pose.to_world(p))
    }
}

/// Cast the sweep against the world. `dirs` are the model's cached
/// [`LidarModel::directions`].
pub fn scan_lidar_with<R: Rng>(
    world: &WorldGrid,
    pose: &Pose,
    model: &LidarModel,
    dirs: &[Vec3],
    stamp: f64,
    rng: &mut R,
) -> PointCloud {
    let noise = (model.range_noise_std > 0.0).then(|| Normal::new(0.0, model.range_noise_std).unwrap());
    let mut points = Vec::with_capacity(dirs.len());
    let mut hit_mask = Vec::with_capacity(dirs.len());
    for d in dirs {
        let w = pose.rotate_to_world(d);
        match world.raycast(&pose.position, &w, model.max_range) {
            Some(t) => {
                let t = match &noise {
                    Some(n) => (t + n.sample(rng)).clamp(0.0, model.max_range),
                    None => t,
                };
                points.push(d * t);
                hit_mask.push(true);
            }
            None => {
                points.push(d * model.max_range);
                hit_mask.push(false);
            }
        }
    }
    PointCloud {
        stamp,
        origin_pose: *pose,
        points,
        hit_mask,
    }
}

pub fn scan_lidar<R: Rng>(world: &WorldGrid, pose: &Pose, model: &LidarModel, stamp: f64, rng: &mut R) -> PointCloud {
    scan_lidar_with(world, pose, model, &model.directions(), stamp, rng)
}

/// Forward-facing pinhole camera, level, aligned with the robot's yaw.
/// Camera axes: x forward, y left, z up; pixel u grows right, v grows down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub image_w: u32,
    pub image_h: u32,
    pub max_detect_range: f64,
    pub rate_hz: f64,
    /// Radius used to size the projected bounding box of an artifact.
    pub artifact_radius: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fov_h_deg: 85.0,
            fov_v_deg: 64.0,
            image_w: 640,
            image_h: 480,
            max_detect_range: 6.0,
            rate_hz: 3.0,
            artifact_radius: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BBox {
    pub fn area(&self) -> f64 {
        (self.u_max - self.u_min) * (self.v_max - self.v_min)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.u_min + self.u_max) / 2.0, (self.v_min + self.v_max) / 2.0)
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |f: f64| f > 0.0 && f < 180.0;
        if !ok(self.fov_h_deg) || !ok(self.fov_v_deg) {
            return Err("camera fov must lie in (0, 180) degrees".into());
        }
        if self.image_w < 16 || self.image_h < 16 {
            return Err("camera image must be at least 16 pixels per side".into());
        }
        if !(self.max_detect_range > 0.0 && self.rate_hz > 0.0 && self.artifact_radius > 0.0) {
            return Err("camera range, rate and artifact radius must be positive".into());
        }
        Ok(())
    }

    pub fn fx(&self) -> f64 {
        (self.image_w as f64 / 2.0) / (self.fov_h_deg.to_radians() / 2.0).tan()
    }

    pub fn fy(&self) -> f64 {
        (self.image_h as f64 / 2.0) / (self.fov_v_deg.to_radians() / 2.0).tan()
    }

    /// Pixel coordinates and depth of a world point, if it is in front.
    pub fn project(&self, pose: &Pose, p: &Vec3) -> Option<(f64, f64, f64)> {
        let c = pose.rotate_to_body(&(p - pose.position));
        if c.x <= 0.0 {
            return None;
        }
        let u = self.image_w as f64 / 2.0 - self.fx() * c.y / c.x;
        let v = self.image_h as f64 / 2.0 - self.fy() * c.z / c.x;
        Some((u, v, c.x))
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.image_w as f64 && v < self.image_h as f64
    }

    /// World-frame unit ray through pixel `(u, v)`.
    pub fn pixel_ray(&self, pose: &Pose, u: f64, v: f64) -> Vec3 {
        let c = Vec3::new(
            1.0,
            -(u - self.image_w as f64 / 2.0) / self.fx(),
            -(v - self.image_h as f64 / 2.0) / self.fy(),
        );
        pose.rotate_to_world(&c.normalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub stamp: f64,
    pub artifact_class: ArtifactClass,
    pub bbox: BBox,
    /// Ground-truth artifact behind the detection; used only for scoring.
    pub truth_id: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionNoise {
    pub p_miss: f64,
    pub p_misclass: f64,
    /// Chance per frame of one spurious detection.
    pub p_false_positive: f64,
    pub bbox_jitter_px: f64,
}

impl Default for DetectionNoise {
    fn default() -> Self {
        Self {
            p_miss: 0.0,
            p_misclass: 0.0,
            p_false_positive: 0.0,
            bbox_jitter_px: 0.0,
        }
    }
}

impl DetectionNoise {
    pub fn validate(&self) -> Result<(), String> {
        for (n, p) in [
            ("p_miss", self.p_miss),
            ("p_misclass", self.p_misclass),
            ("p_false_positive", self.p_false_positive),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("detection {n} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.bbox_jitter_px >= 0.0) {
            return Err("bbox_jitter_px must be non-negative".into());
        }
        Ok(())
    }
}

/// Ground-truth detector: every artifact whose centre projects into the
/// image, lies within range and has a clear line of sight is detected,
/// subject to the configured noise.
pub fn detect_artifacts<R: Rng>(
    world: &WorldGrid,
    pose: &Pose,
    camera: &CameraModel,
    noise: &DetectionNoise,
    stamp: f64,
    rng: &mut R,
) -> Vec<Detection> {
    let (w, h) = (camera.image_w as f64, camera.image_h as f64);
    let mut out = Vec::new();
    for a in world.artifacts() {
        let Some((u, v, depth)) = camera.project(pose, &a.center) else { continue };
        if !camera.in_image(u, v) || (a.center - pose.position).norm() > camera.max_detect_range {
            continue;
        }
        if !world.line_of_sight(&pose.position, &a.center) {
            continue;
        }
        if noise.p_miss > 0.0 && rng.random_bool(noise.p_miss) {
            continue;
        }
        let mut class = a.class;
        if noise.p_misclass > 0.0 && rng.random_bool(noise.p_misclass) {
            let k = rng.random_range(1..ArtifactClass::COUNT);
            class = ArtifactClass::from_index((a.class.index() + k) % ArtifactClass::COUNT).unwrap();
        }
        let (mut cu, mut cv) = (u, v);
        if noise.bbox_jitter_px > 0.0 {
            let n = Normal::new(0.0, noise.bbox_jitter_px).unwrap();
            cu = (cu + n.sample(rng)).clamp(0.0, w - 1.0);
            cv = (cv + n.sample(rng)).clamp(0.0, h - 1.0);
        }
        let su = (camera.fx() * camera.artifact_radius / depth).max(0.5);
        let sv = (camera.fy() * camera.artifact_radius / depth).max(0.5);
        out.push(Detection {
            stamp,
            artifact_class: class,
            bbox: BBox {
                u_min: (cu - su).max(0.0),
                v_min: (cv - sv).max(0.0),
                u_max: (cu + su).min(w),
                v_max: (cv + sv).min(h),
            },
            truth_id: Some(a.id),
        });
    }
    if noise.p_false_positive > 0.0 && rng.random_bool(noise.p_false_positive) {
        let class = ArtifactClass::from_index(rng.random_range(0..ArtifactClass::COUNT)).unwrap();
        let s = rng.random_range(10.0..60.0);
        let cu = rng.random_range(s..w - s);
        let cv = rng.random_range(s..h - s);
        out.push(Detection {
            stamp,
            artifact_class: class,
            bbox: BBox {
                u_min: cu - s,
                v_min: cv - s,
                u_max: cu + s,
                v_max: cv + s,
            },
            truth_id: None,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdomNoise {
    /// Random-walk drift per axis (m/√s).
    pub drift_std: f64,
    /// White position noise per axis (m).
    pub white_std: f64,
    /// Random-walk yaw drift (rad/√s).
    pub yaw_drift_std: f64,
}

impl Default for OdomNoise {
    fn default() -> Self {
        Self {
            drift_std: 0.0,
            white_std: 0.0,
            yaw_drift_std: 0.0,
        }
    }
}

/// Odometry with accumulated drift. Each sensor owns its random stream.
#[derive(Debug, Clone)]
pub struct Odometry {
    noise: OdomNoise,
    drift: Vec3,
    yaw_drift: f64,
    rng: ChaCha8Rng,
}

impl Odometry {
    pub fn new(noise: OdomNoise, seed: u64) -> Self {
        Self {
            noise,
            drift: Vec3::zeros(),
            yaw_drift: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn drift(&self) -> Vec3 {
        self.drift
    }

    /// Advance the drift by `dt` and return the estimate of `truth`.
    pub fn read(&mut self, truth: &Pose, dt: f64) -> Pose {
        let n = &self.noise;
        if n.drift_std > 0.0 && dt > 0.0 {
            let d = Normal::new(0.0, n.drift_std * dt.sqrt()).unwrap();
            self.drift += Vec3::new(d.sample(&mut self.rng), d.sample(&mut self.rng), d.sample(&mut self.rng));
        }
        if n.yaw_drift_std > 0.0 && dt > 0.0 {
            self.yaw_drift += Normal::new(0.0, n.yaw_drift_std * dt.sqrt()).unwrap().sample(&mut self.rng);
        }
        let mut p = truth.position + self.drift;
        if n.white_std > 0.0 {
            let d = Normal::new(0.0, n.white_std).unwrap();
            p += Vec3::new(d.sample(&mut self.rng), d.sample(&mut self.rng), d.sample(&mut self.rng));
        }
        Pose::new(p, crate::geometry::wrap_angle(truth.yaw + self.yaw_drift))
    }
}

/// Ids of Bluetooth-enabled artifacts within the closed ball of `radius`.
/// Walls do not block radio.
pub fn scan_bluetooth(world: &WorldGrid, position: &Vec3, radius: f64) -> Vec<u32> {
    world
        .artifacts()
        .iter()
        .filter(|a| a.bluetooth && (a.center - position).norm() <= radius)
        .map(|a| a.id)
        .collect()
}
