//! The robot's occupancy map: a rolling log-odds voxel window that follows
//! the robot, plus the spatial queries used by planning and artifact
//! localization.

mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{walk_segment, Aabb, GridRay, Lattice, Pose, Vec3, VoxelKey};
use crate::sensing::PointCloud;

pub use io::{map_from_str, map_to_string, MapDump};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VoxelState {
    Unknown,
    Free,
    Occupied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogOddsParams {
    pub l_hit: f32,
    pub l_miss: f32,
    pub l_min: f32,
    pub l_max: f32,
    pub l_occ_thresh: f32,
    pub l_free_thresh: f32,
}

impl Default for LogOddsParams {
    fn default() -> Self {
        Self {
            l_hit: 0.85,
            l_miss: -0.4,
            l_min: -2.0,
            l_max: 3.5,
            l_occ_thresh: 0.7,
            l_free_thresh: -0.7,
        }
    }
}

impl LogOddsParams {
    pub fn state(&self, l: f32) -> VoxelState {
        if l >= self.l_occ_thresh {
            VoxelState::Occupied
        } else if l <= self.l_free_thresh {
            VoxelState::Free
        } else {
            VoxelState::Unknown
        }
    }
}

/// Size of the rolling window and how close the robot may get to a face
/// before the window is re-centred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapBounds {
    pub extent: Vec3,
    pub shift_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub voxel_edge: f64,
    pub bounds: MapBounds,
    pub log_odds: LogOddsParams,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            voxel_edge: 0.2,
            bounds: MapBounds {
                extent: Vec3::new(60.0, 60.0, 12.0),
                shift_margin: 5.0,
            },
            log_odds: LogOddsParams::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("invalid map config: {0}")]
    Config(String),
}

impl MapConfig {
    pub fn validate(&self) -> Result<(), MapError> {
        let err = |m: String| Err(MapError::Config(m));
        let p = &self.log_odds;
        if !(self.voxel_edge > 0.0 && self.voxel_edge.is_finite()) {
            return err(format!("voxel_edge must be positive, got {}", self.voxel_edge));
        }
        if !(p.l_min < p.l_free_thresh && p.l_free_thresh < 0.0 && 0.0 < p.l_occ_thresh && p.l_occ_thresh < p.l_max) {
            return err(format!(
                "log-odds thresholds must satisfy l_min < l_free < 0 < l_occ < l_max, got {p:?}"
            ));
        }
        if !(p.l_hit > 0.0 && p.l_miss < 0.0) {
            return err("l_hit must be positive and l_miss negative".into());
        }
        let b = &self.bounds;
        if b.extent.iter().any(|&v| !(v >= 2.0 * self.voxel_edge && v.is_finite())) {
            return err(format!("map extent {:?} must be at least two voxels per axis", b.extent.as_slice()));
        }
        // Re-centring lands the robot up to one voxel off-centre, so the
        // margin must leave that much room.
        if !(b.shift_margin >= 0.0 && b.shift_margin < b.extent.min() / 2.0 - self.voxel_edge) {
            return err(format!(
                "shift_margin {} must be below half the smallest extent minus one voxel",
                b.shift_margin
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopAt {
    Occupied,
    NotFree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapHit {
    /// Entry point into the stopping voxel (the origin for the start voxel).
    pub point: Vec3,
    pub key: VoxelKey,
    pub distance: f64,
}

/// Frustum of the sensor assumed when scoring viewpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainSensorModel {
    pub fov_azimuth_deg: f64,
    pub fov_elevation_deg: f64,
    pub range: f64,
}

impl Default for GainSensorModel {
    fn default() -> Self {
        Self {
            fov_azimuth_deg: 360.0,
            fov_elevation_deg: 90.0,
            range: 5.0,
        }
    }
}

impl GainSensorModel {
    /// Closed containment test: range, azimuth and elevation limits inclusive.
    pub fn contains(&self, viewpoint: &Pose, p: &Vec3) -> bool {
        let d = viewpoint.rotate_to_body(&(p - viewpoint.position));
        let r = d.norm();
        if r > self.range {
            return false;
        }
        if r == 0.0 {
            return true;
        }
        let horiz = d.x.hypot(d.y);
        let el = d.z.atan2(horiz).to_degrees();
        if el.abs() > self.fov_elevation_deg / 2.0 {
            return false;
        }
        if self.fov_azimuth_deg >= 360.0 {
            return true;
        }
        d.y.atan2(d.x).to_degrees().abs() <= self.fov_azimuth_deg / 2.0
    }
}

/// Rolling log-odds occupancy window.
///
/// Voxel keys live on a fixed world lattice; the window covers keys
/// `window_min .. window_min + dims`. Storage is circular per axis (slot =
/// key mod dims), so a shift only clears the slabs that leave the window.
#[derive(Debug, Clone)]
pub struct OccupancyMap {
    lattice: Lattice,
    dims: [usize; 3],
    window_min: VoxelKey,
    wrap: [usize; 3],
    config: MapConfig,
    log_odds: Vec<f32>,
    stamps: Vec<u32>,
    scan: u32,
    changed: ChangedRegion,
}

impl OccupancyMap {
    /// Empty (all Unknown) map centred on `center`, on the lattice through
    /// the world origin.
    pub fn new(config: MapConfig, center: &Vec3) -> Result<Self, MapError> {
        config.validate()?;
        let lattice = Lattice::new(Vec3::zeros(), config.voxel_edge);
        let e = config.bounds.extent;
        let dims = [
            (e.x / config.voxel_edge).round() as usize,
            (e.y / config.voxel_edge).round() as usize,
            (e.z / config.voxel_edge).round() as usize,
        ];
        let c = lattice.key_of(center);
        let window_min = [
            c[0] - dims[0] as i64 / 2,
            c[1] - dims[1] as i64 / 2,
            c[2] - dims[2] as i64 / 2,
        ];
        let n = dims[0] * dims[1] * dims[2];
        Ok(Self {
            lattice,
            dims,
            window_min,
            wrap: wrap_of(dims, window_min),
            config,
            log_odds: vec![0.0; n],
            stamps: vec![0; n],
            scan: 0,
            changed: ChangedRegion::default(),
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn params(&self) -> &LogOddsParams {
        &self.config.log_odds
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn voxel_edge(&self) -> f64 {
        self.lattice.edge
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn window_min(&self) -> VoxelKey {
        self.window_min
    }

    /// World-frame box covered by the window.
    pub fn window_box(&self) -> Aabb {
        let min = self.lattice.min_corner(&self.window_min);
        let size = Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.lattice.edge;
        Aabb { min, max: min + size }
    }

    pub fn key_of(&self, p: &Vec3) -> VoxelKey {
        self.lattice.key_of(p)
    }

    pub fn contains_key(&self, k: &VoxelKey) -> bool {
        (0..3).all(|a| k[a] >= self.window_min[a] && k[a] < self.window_min[a] + self.dims[a] as i64)
    }

    #[inline]
    fn slot(&self, k: &VoxelKey) -> Option<usize> {
        slot_in(self.dims, self.window_min, self.wrap, k)
    }

    /// Log-odds of a voxel; `None` outside the window.
    pub fn log_odds(&self, k: &VoxelKey) -> Option<f32> {
        self.slot(k).map(|i| self.log_odds[i])
    }

    /// Overwrite a voxel's log-odds (clamped). Ignored outside the window.
    pub fn set_log_odds(&mut self, k: &VoxelKey, l: f32) {
        let p = self.config.log_odds;
        if let Some(i) = self.slot(k) {
            let before = p.state(self.log_odds[i]);
            self.log_odds[i] = l.clamp(p.l_min, p.l_max);
            if p.state(self.log_odds[i]) != before {
                self.changed.include(k);
            }
        }
    }

    /// Bounding box of the voxels whose state changed since the last
    /// [`reset_changed`](Self::reset_changed), as inclusive keys. Voxels
    /// leaving the window count as changed.
    pub fn changed_keys(&self) -> Option<(VoxelKey, VoxelKey)> {
        self.changed.0
    }

    pub fn reset_changed(&mut self) {
        self.changed = ChangedRegion::default();
    }

    #[inline]
    pub fn state(&self, k: &VoxelKey) -> VoxelState {
        match self.slot(k) {
            Some(i) => self.config.log_odds.state(self.log_odds[i]),
            None => VoxelState::Unknown,
        }
    }

    pub fn state_at(&self, p: &Vec3) -> VoxelState {
        self.state(&self.key_of(p))
    }

    /// Every key of the window in x-fastest order.
    pub fn keys(&self) -> impl Iterator<Item = VoxelKey> + '_ {
        let [nx, ny, nz] = self.dims;
        let m = self.window_min;
        (0..nz as i64).flat_map(move |z| {
            (0..ny as i64).flat_map(move |y| (0..nx as i64).map(move |x| [m[0] + x, m[1] + y, m[2] + z]))
        })
    }

    pub fn count_state(&self, s: VoxelState) -> usize {
        let p = self.config.log_odds;
        self.log_odds.iter().filter(|&&l| p.state(l) == s).count()
    }

    pub fn occupied_centers(&self) -> Vec<Vec3> {
        self.keys()
            .filter(|k| self.state(k) == VoxelState::Occupied)
            .map(|k| self.lattice.center_of(&k))
            .collect()
    }

    /// Integrate a scan taken at `pose` (the estimate the points are
    /// associated with).
    pub fn integrate_scan(&mut self, cloud: &PointCloud, pose: &Pose) {
        self.integrate_scan_with(cloud, pose, |_, _| {});
    }

    /// As [`integrate_scan`](Self::integrate_scan), calling `updated` with
    /// the new state of every voxel touched.
    ///
    /// Each voxel is updated at most once per scan. A voxel that ends any
    /// ray is a hit even if other rays pass through it.
    pub fn integrate_scan_with<F>(&mut self, cloud: &PointCloud, pose: &Pose, mut updated: F)
    where
        F: FnMut(VoxelKey, VoxelState),
    {
        if cloud.points.is_empty() {
            return;
        }
        self.scan = self.scan.wrapping_add(1);
        if self.scan == 0 {
            self.stamps.fill(0);
            self.scan = 1;
        }
        let hit_stamp = self.scan;
        let p = self.config.log_odds;
        let origin = pose.position;
        let lattice = self.lattice;
        // Hit voxels first so pass-through rays cannot clear them.
        let mut ends = Vec::with_capacity(cloud.points.len());
        for (pt, &hit) in cloud.points.iter().zip(&cloud.hit_mask) {
            let world = pose.to_world(pt);
            let dir = world - origin;
            let len = dir.norm();
            if !len.is_finite() {
                ends.push(None);
                continue;
            }
            // A hit sits on the entry face of the struck cell; nudge it
            // inside so the floor convention picks that cell.
            let end = if hit && len > 0.0 { world + dir * (1e-6 / len) } else { world };
            let end_key = lattice.key_of(&end);
            if hit {
                if let Some(i) = self.slot(&end_key) {
                    if self.stamps[i] != hit_stamp {
                        self.stamps[i] = hit_stamp;
                        let before = p.state(self.log_odds[i]);
                        self.log_odds[i] = (self.log_odds[i] + p.l_hit).clamp(p.l_min, p.l_max);
                        let after = p.state(self.log_odds[i]);
                        if after != before {
                            self.changed.include(&end_key);
                        }
                        updated(end_key, after);
                    }
                }
            }
            ends.push(Some((end, end_key, hit)));
        }
        let mut changed = self.changed;
        for (end, end_key, hit) in ends.into_iter().flatten() {
            let (log_odds, stamps) = (&mut self.log_odds, &mut self.stamps);
            let (dims, wmin, wrap) = (self.dims, self.window_min, self.wrap);
            walk_segment(&lattice, &origin, &end, |k| {
                if hit && k == end_key {
                    return true;
                }
                if let Some(i) = slot_in(dims, wmin, wrap, &k) {
                    if stamps[i] != hit_stamp {
                        stamps[i] = hit_stamp;
                        let before = p.state(log_odds[i]);
                        log_odds[i] = (log_odds[i] + p.l_miss).clamp(p.l_min, p.l_max);
                        let after = p.state(log_odds[i]);
                        if after != before {
                            changed.include(&k);
                        }
                        updated(k, after);
                    }
                }
                true
            });
        }
        self.changed = changed;
    }

    /// Mark every Unknown voxel overlapping `b` as Free, calling `updated`
    /// for each one changed. Used for space the robot body is known to
    /// occupy, which the LiDAR cannot see.
    pub fn clear_unknown_in<F>(&mut self, b: &Aabb, mut updated: F)
    where
        F: FnMut(VoxelKey),
    {
        let p = self.config.log_odds;
        let (lo, hi) = self.lattice.keys_overlapping(&b.min, &b.max);
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let k = [x, y, z];
                    if let Some(i) = self.slot(&k) {
                        if p.state(self.log_odds[i]) == VoxelState::Unknown {
                            self.log_odds[i] = p.l_free_thresh.max(p.l_min);
                            self.changed.include(&k);
                            updated(k);
                        }
                    }
                }
            }
        }
    }

    /// Re-centre the window on the robot along every axis where it is
    /// within the shift margin of a face. Returns the window shift in voxels.
    pub fn maybe_shift(&mut self, robot: &Vec3) -> [i64; 3] {
        let b = self.window_box();
        let margin = self.config.bounds.shift_margin;
        let rk = self.key_of(robot);
        let mut delta = [0i64; 3];
        for a in 0..3 {
            if robot[a] - b.min[a] < margin || b.max[a] - robot[a] < margin {
                delta[a] = rk[a] - self.dims[a] as i64 / 2 - self.window_min[a];
            }
        }
        self.shift_window(delta);
        delta
    }

    /// Move the window by whole voxels. Voxels leaving are discarded;
    /// voxels entering start Unknown; the rest keep their log-odds.
    pub fn shift_window(&mut self, delta: [i64; 3]) {
        let old_min = self.window_min;
        for a in 0..3 {
            let d = delta[a];
            if d == 0 {
                continue;
            }
            let n = self.dims[a] as i64;
            if d.abs() >= n {
                self.log_odds.fill(0.0);
            } else {
                let leaving = if d > 0 {
                    self.window_min[a]..self.window_min[a] + d
                } else {
                    self.window_min[a] + n + d..self.window_min[a] + n
                };
                for k in leaving {
                    self.clear_slab(a, k.rem_euclid(n) as usize);
                }
            }
            self.window_min[a] += d;
        }
        self.wrap = wrap_of(self.dims, self.window_min);
        if delta != [0; 3] {
            // Cleared slabs sit at the old window's faces; cover both windows.
            let hi = [0, 1, 2].map(|a| self.window_min[a] + self.dims[a] as i64 - 1);
            self.changed.include(&old_min);
            self.changed.include(&[0, 1, 2].map(|a| old_min[a] + self.dims[a] as i64 - 1));
            self.changed.include(&self.window_min);
            self.changed.include(&hi);
        }
    }

    fn clear_slab(&mut self, axis: usize, s: usize) {
        let [nx, ny, nz] = self.dims;
        let mut r = [0..nx, 0..ny, 0..nz];
        r[axis] = s..s + 1;
        let [rx, ry, rz] = r;
        for z in rz {
            for y in ry.clone() {
                for x in rx.clone() {
                    self.log_odds[x + nx * (y + ny * z)] = 0.0;
                }
            }
        }
    }

    /// Walk the ray until a voxel satisfies `stop`. Voxels outside the
    /// window count as Unknown.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, max_range: f64, stop: StopAt) -> Option<MapHit> {
        for c in GridRay::new(&self.lattice, origin, dir, max_range) {
            if c.t_entry > max_range {
                break;
            }
            let s = self.state(&c.key);
            let stops = match stop {
                StopAt::Occupied => s == VoxelState::Occupied,
                StopAt::NotFree => s != VoxelState::Free,
            };
            if stops {
                return Some(MapHit {
                    point: origin + dir * c.t_entry,
                    key: c.key,
                    distance: c.t_entry,
                });
            }
        }
        None
    }

    /// True iff no Occupied voxel lies on the segment before the voxel
    /// containing `target`.
    pub fn visible(&self, from: &Vec3, target: &Vec3) -> bool {
        let end = self.key_of(target);
        walk_segment(&self.lattice, from, target, |k| k == end || self.state(&k) != VoxelState::Occupied)
    }

    /// Unknown voxels whose centres lie in the sensor frustum and are
    /// visible from the viewpoint. Voxels outside the window are Unknown.
    pub fn count_unknown_in_frustum(&self, viewpoint: &Pose, sensor: &GainSensorModel) -> usize {
        let r = Vec3::repeat(sensor.range);
        let (lo, hi) = self.lattice.keys_overlapping(&(viewpoint.position - r), &(viewpoint.position + r));
        let range2 = sensor.range * sensor.range * (1.0 + 1e-9);
        let mut count = 0;
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let k = [x, y, z];
                    if self.state(&k) != VoxelState::Unknown {
                        continue;
                    }
                    let c = self.lattice.center_of(&k);
                    // Loose squared-range reject; `contains` decides exactly.
                    if (c - viewpoint.position).norm_squared() > range2 {
                        continue;
                    }
                    if sensor.contains(viewpoint, &c) && self.visible(&viewpoint.position, &c) {
                        count += 1;
                    }
                }
            }
        }
        count
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ChangedRegion(Option<(VoxelKey, VoxelKey)>);

impl ChangedRegion {
    #[inline]
    fn include(&mut self, k: &VoxelKey) {
        match &mut self.0 {
            None => self.0 = Some((*k, *k)),
            Some((lo, hi)) => {
                for a in 0..3 {
                    lo[a] = lo[a].min(k[a]);
                    hi[a] = hi[a].max(k[a]);
                }
            }
        }
    }
}

/// Storage index of `k`, where `wrap` is `wmin mod dims` per axis.
#[inline]
fn slot_in(dims: [usize; 3], wmin: VoxelKey, wrap: [usize; 3], k: &VoxelKey) -> Option<usize> {
    let mut s = [0usize; 3];
    for a in 0..3 {
        let i = k[a].wrapping_sub(wmin[a]) as u64;
        if i >= dims[a] as u64 {
            return None;
        }
        let v = wrap[a] + i as usize;
        s[a] = if v >= dims[a] { v - dims[a] } else { v };
    }
    Some(s[0] + dims[0] * (s[1] + dims[1] * s[2]))
}

fn wrap_of(dims: [usize; 3], wmin: VoxelKey) -> [usize; 3] {
    [0, 1, 2].map(|a| wmin[a].rem_euclid(dims[a] as i64) as usize)
}
