//! Shared spatial primitives: poses, voxel lattices and grid traversal.
//!
//! Every voxel grid in the crate (the ground-truth world and the occupancy
//! map) is a regular lattice with a fixed origin and edge length. Cell `i`
//! along an axis owns the half-open interval `[origin + i·e, origin + (i+1)·e)`.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Integer voxel coordinate on a lattice.
pub type VoxelKey = [i64; 3];

/// Position plus heading. Roll and pitch are not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self { position, yaw }
    }

    /// Rotate a body-frame vector into the world frame.
    pub fn rotate_to_world(&self, v: &Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    /// Rotate a world-frame vector into the body frame.
    pub fn rotate_to_body(&self, v: &Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
    }

    pub fn to_world(&self, v: &Vec3) -> Vec3 {
        self.rotate_to_world(v) + self.position
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps -π to π already; guard against rounding landing on -π.
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// A regular cubic lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub origin: Vec3,
    pub edge: f64,
}

impl Lattice {
    pub fn new(origin: Vec3, edge: f64) -> Self {
        Self { origin, edge }
    }

    pub fn key_of(&self, p: &Vec3) -> VoxelKey {
        [
            ((p.x - self.origin.x) / self.edge).floor() as i64,
            ((p.y - self.origin.y) / self.edge).floor() as i64,
            ((p.z - self.origin.z) / self.edge).floor() as i64,
        ]
    }

    pub fn center_of(&self, k: &VoxelKey) -> Vec3 {
        Vec3::new(
            self.origin.x + (k[0] as f64 + 0.5) * self.edge,
            self.origin.y + (k[1] as f64 + 0.5) * self.edge,
            self.origin.z + (k[2] as f64 + 0.5) * self.edge,
        )
    }

    pub fn min_corner(&self, k: &VoxelKey) -> Vec3 {
        Vec3::new(
            self.origin.x + k[0] as f64 * self.edge,
            self.origin.y + k[1] as f64 * self.edge,
            self.origin.z + k[2] as f64 * self.edge,
        )
    }

    /// Inclusive key range of voxels whose interior intersects the open box
    /// `(min, max)`.
    pub fn keys_overlapping(&self, min: &Vec3, max: &Vec3) -> (VoxelKey, VoxelKey) {
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for a in 0..3 {
            let l = (min[a] - self.origin[a]) / self.edge;
            let h = (max[a] - self.origin[a]) / self.edge;
            lo[a] = l.floor() as i64;
            hi[a] = (h.ceil() as i64 - 1).max(lo[a]);
        }
        (lo, hi)
    }
}

/// One voxel visited by a [`GridRay`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub key: VoxelKey,
    /// Ray parameter where the ray enters this voxel (0 for the start voxel).
    pub t_entry: f64,
    /// Axis whose face was crossed to enter, `None` for the start voxel.
    pub entry_axis: Option<usize>,
}

/// Amanatides–Woo traversal of an unbounded lattice along a ray, yielding
/// every voxel whose entry parameter is below `limit`.
#[derive(Debug, Clone)]
pub struct GridRay {
    key: VoxelKey,
    step: [i64; 3],
    t_max: [f64; 3],
    t_delta: [f64; 3],
    t_entry: f64,
    entry_axis: Option<usize>,
    limit: f64,
    done: bool,
}

impl GridRay {
    /// `dir` need not be normalized; `t` is measured in units of `dir`.
    pub fn new(lattice: &Lattice, origin: &Vec3, dir: &Vec3, limit: f64) -> Self {
        let key = lattice.key_of(origin);
        let corner = lattice.min_corner(&key);
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            let d = dir[a];
            if d > 0.0 {
                step[a] = 1;
                t_max[a] = (corner[a] + lattice.edge - origin[a]) / d;
                t_delta[a] = lattice.edge / d;
            } else if d < 0.0 {
                step[a] = -1;
                t_max[a] = (corner[a] - origin[a]) / d;
                t_delta[a] = -lattice.edge / d;
            }
        }
        Self {
            key,
            step,
            t_max,
            t_delta,
            t_entry: 0.0,
            entry_axis: None,
            limit,
            done: false,
        }
    }
}

impl Iterator for GridRay {
    type Item = Crossing;

    fn next(&mut self) -> Option<Crossing> {
        if self.done {
            return None;
        }
        if self.entry_axis.is_some() && self.t_entry >= self.limit {
            self.done = true;
            return None;
        }
        let out = Crossing {
            key: self.key,
            t_entry: self.t_entry,
            entry_axis: self.entry_axis,
        };
        let axis = argmin3(&self.t_max);
        if !self.t_max[axis].is_finite() {
            self.done = true;
            return Some(out);
        }
        self.key[axis] += self.step[axis];
        self.t_entry = self.t_max[axis];
        self.t_max[axis] += self.t_delta[axis];
        self.entry_axis = Some(axis);
        Some(out)
    }
}

fn argmin3(v: &[f64; 3]) -> usize {
    let mut best = 0;
    for a in 1..3 {
        if v[a] < v[best] {
            best = a;
        }
    }
    best
}

/// Walk the voxels of the segment `a → b`, start and end voxels included.
///
/// The walk takes exactly `|Δk_x| + |Δk_y| + |Δk_z|` face steps, so it
/// always terminates in the voxel containing `b` regardless of rounding.
/// The visitor returns `false` to stop early; the function returns whether
/// the walk reached the end.
pub fn walk_segment<F>(lattice: &Lattice, a: &Vec3, b: &Vec3, mut visit: F) -> bool
where
    F: FnMut(VoxelKey) -> bool,
{
    let start = lattice.key_of(a);
    let end = lattice.key_of(b);
    let d = b - a;
    let corner = lattice.min_corner(&start);
    let mut key = start;
    let mut remaining = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for ax in 0..3 {
        remaining[ax] = (end[ax] - start[ax]).abs();
        step[ax] = (end[ax] - start[ax]).signum();
        if remaining[ax] == 0 {
            continue;
        }
        if d[ax] > 0.0 {
            t_max[ax] = (corner[ax] + lattice.edge - a[ax]) / d[ax];
            t_delta[ax] = lattice.edge / d[ax];
        } else if d[ax] < 0.0 {
            t_max[ax] = (corner[ax] - a[ax]) / d[ax];
            t_delta[ax] = -lattice.edge / d[ax];
        } else {
            // Rounding put the endpoints in different cells along an axis
            // the segment does not move along; take that step first.
            t_max[ax] = 0.0;
            t_delta[ax] = f64::INFINITY;
        }
    }
    if !visit(key) {
        return false;
    }
    loop {
        let mut axis = usize::MAX;
        for ax in 0..3 {
            if remaining[ax] > 0 && (axis == usize::MAX || t_max[ax] < t_max[axis]) {
                axis = ax;
            }
        }
        if axis == usize::MAX {
            return true;
        }
        key[axis] += step[axis];
        remaining[axis] -= 1;
        t_max[axis] += t_delta[axis];
        if !visit(key) {
            return false;
        }
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_center_extent(center: &Vec3, extent: &Vec3) -> Self {
        let h = extent * 0.5;
        Self {
            min: center - h,
            max: center + h,
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
}
