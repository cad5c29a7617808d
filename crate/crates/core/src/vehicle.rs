//! Point-mass robot dynamics with an axis-aligned cuboid body and
//! collision-tolerant contact, plus cuboid checks against the occupancy map.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Aabb, Lattice, Vec3, VoxelKey};
use crate::mapping::{OccupancyMap, VoxelState};
use crate::world::WorldGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub time: f64,
}

impl RobotState {
    pub fn at_rest(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            yaw: wrap_angle(yaw),
            yaw_rate: 0.0,
            time: 0.0,
        }
    }

    pub fn pose(&self) -> crate::geometry::Pose {
        crate::geometry::Pose::new(self.position, self.yaw)
    }
}

/// Full side lengths of the robot's collision cuboid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotGeometry {
    pub cuboid_extent: Vec3,
}

impl Default for RobotGeometry {
    fn default() -> Self {
        Self {
            cuboid_extent: Vec3::new(0.38, 0.38, 0.24),
        }
    }
}

impl RobotGeometry {
    pub fn validate(&self) -> Result<(), String> {
        if self.cuboid_extent.iter().all(|&v| v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(format!("cuboid extents must be positive, got {:?}", self.cuboid_extent.as_slice()))
        }
    }

    /// The cuboid grown by `margin` on every side.
    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            cuboid_extent: self.cuboid_extent + Vec3::repeat(2.0 * margin),
        }
    }

    pub fn aabb_at(&self, center: &Vec3) -> Aabb {
        Aabb::from_center_extent(center, &self.cuboid_extent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub position: Vec3,
    pub normal: Vec3,
    pub impact_speed: f64,
}

/// Move the cuboid along one axis by `d`, stopping flush against the first
/// Solid column it would enter. Returns whether it was blocked.
fn sweep_axis(world: &WorldGrid, lattice: &Lattice, center: &mut Vec3, half: &Vec3, axis: usize, d: f64) -> bool {
    if d == 0.0 {
        return false;
    }
    let min = *center - half;
    let max = *center + half;
    let (lo, hi) = lattice.keys_overlapping(&min, &max);
    let mut target = *center;
    target[axis] += d;
    let (tlo, thi) = lattice.keys_overlapping(&(target - half), &(target + half));
    // Columns newly entered along the axis.
    let cols: Vec<i64> = if d > 0.0 {
        (hi[axis] + 1..=thi[axis]).collect()
    } else {
        (tlo[axis]..lo[axis]).rev().collect()
    };
    for c in cols {
        let mut r_lo = lo;
        let mut r_hi = hi;
        r_lo[axis] = c;
        r_hi[axis] = c;
        if block_has_solid(world, r_lo, r_hi) {
            let e = lattice.edge;
            let o = lattice.origin[axis];
            let face = if d > 0.0 { o + c as f64 * e } else { o + (c + 1) as f64 * e };
            let mut pos = if d > 0.0 { face - half[axis] } else { face + half[axis] };
            // Make sure rounding leaves us touching, not overlapping.
            for _ in 0..8 {
                let mut p = *center;
                p[axis] = pos;
                let (a, b) = lattice.keys_overlapping(&(p - half), &(p + half));
                let overlapping = if d > 0.0 { b[axis] >= c } else { a[axis] <= c };
                if !overlapping {
                    break;
                }
                pos -= d.signum() * 1e-9;
            }
            // Never move backwards because of the flush placement.
            if (pos - center[axis]) * d < 0.0 {
                pos = center[axis];
            }
            center[axis] = pos;
            return true;
        }
    }
    *center = target;
    false
}

fn block_has_solid(world: &WorldGrid, lo: VoxelKey, hi: VoxelKey) -> bool {
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                if world.is_solid_key(&[x, y, z]) {
                    return true;
                }
            }
        }
    }
    false
}

/// True iff the cuboid centred at `center` overlaps a Solid world cell.
pub fn cuboid_hits_world(center: &Vec3, geom: &RobotGeometry, world: &WorldGrid) -> bool {
    let b = geom.aabb_at(center);
    let (lo, hi) = world.lattice().keys_overlapping(&b.min, &b.max);
    block_has_solid(world, lo, hi)
}

/// Advance the point mass by `dt` with semi-implicit Euler.
///
/// The move is split into substeps of at most half a voxel and applied one
/// axis at a time; an axis that would push the cuboid into rock stops flush
/// with the wall, loses its velocity component and records a contact.
pub fn step_dynamics(
    state: &RobotState,
    accel_cmd: &Vec3,
    yaw_rate_cmd: f64,
    dt: f64,
    max_speed: f64,
    world: &WorldGrid,
    geom: &RobotGeometry,
) -> (RobotState, Vec<CollisionEvent>) {
    assert!(dt > 0.0 && dt <= 0.1, "dt {dt} outside (0, 0.1]");
    let mut next = *state;
    let mut v = state.velocity + accel_cmd * dt;
    let speed = v.norm();
    if speed > max_speed {
        v *= max_speed / speed;
    }
    let disp = v * dt;
    let lattice = world.lattice();
    let substeps = (disp.amax() / (0.5 * lattice.edge)).ceil().max(1.0) as usize;
    let half = geom.cuboid_extent * 0.5;
    let mut events = Vec::new();
    let mut blocked = [false; 3];
    let mut pos = state.position;
    for _ in 0..substeps {
        for axis in 0..3 {
            if blocked[axis] {
                continue;
            }
            let d = disp[axis] / substeps as f64;
            if sweep_axis(world, &lattice, &mut pos, &half, axis, d) {
                blocked[axis] = true;
                let mut normal = Vec3::zeros();
                normal[axis] = -d.signum();
                events.push(CollisionEvent {
                    time: state.time + dt,
                    position: pos,
                    normal,
                    impact_speed: v[axis].abs(),
                });
                v[axis] = 0.0;
            }
        }
    }
    next.position = pos;
    next.velocity = v;
    next.yaw = wrap_angle(state.yaw + yaw_rate_cmd * dt);
    next.yaw_rate = yaw_rate_cmd;
    next.time = state.time + dt;
    (next, events)
}

/// How Unknown map voxels are treated by collision checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    Strict,
    Optimistic,
}

#[inline]
fn voxel_ok(s: VoxelState, policy: UnknownPolicy) -> bool {
    match policy {
        UnknownPolicy::Strict => s == VoxelState::Free,
        UnknownPolicy::Optimistic => s != VoxelState::Occupied,
    }
}

/// Inclusive key range of map voxels overlapping the cuboid at `center`.
pub fn cuboid_keys(center: &Vec3, geom: &RobotGeometry, lattice: &Lattice) -> (VoxelKey, VoxelKey) {
    let b = geom.aabb_at(center);
    lattice.keys_overlapping(&b.min, &b.max)
}

fn box_ok(map: &OccupancyMap, lo: VoxelKey, hi: VoxelKey, policy: UnknownPolicy) -> bool {
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                if !voxel_ok(map.state(&[x, y, z]), policy) {
                    return false;
                }
            }
        }
    }
    true
}

/// Every map voxel overlapping the cuboid is Free (Strict) or not
/// Occupied (Optimistic).
pub fn cuboid_in_free_space(center: &Vec3, geom: &RobotGeometry, map: &OccupancyMap, policy: UnknownPolicy) -> bool {
    let (lo, hi) = cuboid_keys(center, geom, &map.lattice());
    box_ok(map, lo, hi, policy)
}

/// Swept check of the cuboid moving in a straight line from `a` to `b`.
///
/// Samples the segment at most half a voxel apart and checks the bounding
/// box of each consecutive pair of cuboids, so the union of checked boxes
/// covers the whole swept volume.
pub fn segment_in_free_space(a: &Vec3, b: &Vec3, geom: &RobotGeometry, map: &OccupancyMap, policy: UnknownPolicy) -> bool {
    let lattice = map.lattice();
    let d = b - a;
    let n = (d.amax() / (0.5 * lattice.edge)).ceil().max(1.0) as usize;
    let mut prev = geom.aabb_at(a);
    if !cuboid_in_free_space(a, geom, map, policy) {
        return false;
    }
    for i in 1..=n {
        let p = if i == n { *b } else { a + d * (i as f64 / n as f64) };
        let cur = geom.aabb_at(&p);
        let u = prev.union(&cur);
        let (lo, hi) = lattice.keys_overlapping(&u.min, &u.max);
        if !box_ok(map, lo, hi, policy) {
            return false;
        }
        prev = cur;
    }
    true
}
