//! Ground-truth environment: a closed voxel grid of rock and air with
//! placed artifacts.

mod generate;
mod io;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GridRay, Lattice, Vec3, VoxelKey};
use crate::rle::FormatError;

pub use generate::{
    generate_tunnel_network, generate_tunnel_world, SegmentInfo, TunnelLayout, TunnelSpec,
};
pub use io::{load_world, save_world, world_from_str, world_to_string};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Cell {
    Solid,
    Air,
}

/// The eight artifact categories searched for during a mission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactClass {
    Survivor,
    FireExtinguisher,
    Drill,
    Backpack,
    Vent,
    Helmet,
    Rope,
    Cellphone,
}

impl ArtifactClass {
    pub const ALL: [ArtifactClass; 8] = [
        ArtifactClass::Survivor,
        ArtifactClass::FireExtinguisher,
        ArtifactClass::Drill,
        ArtifactClass::Backpack,
        ArtifactClass::Vent,
        ArtifactClass::Helmet,
        ArtifactClass::Rope,
        ArtifactClass::Cellphone,
    ];
    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ArtifactClass::Survivor => "survivor",
            ArtifactClass::FireExtinguisher => "fire_extinguisher",
            ArtifactClass::Drill => "drill",
            ArtifactClass::Backpack => "backpack",
            ArtifactClass::Vent => "vent",
            ArtifactClass::Helmet => "helmet",
            ArtifactClass::Rope => "rope",
            ArtifactClass::Cellphone => "cellphone",
        }
    }
}

impl fmt::Display for ArtifactClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArtifactClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown artifact class `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthArtifact {
    pub id: u32,
    pub class: ArtifactClass,
    pub center: Vec3,
    pub bluetooth: bool,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid tunnel spec: {0}")]
    InfeasibleSpec(String),
    #[error("world invariant violated: {0}")]
    Invariant(String),
    #[error("world file: {0}")]
    Format(#[from] FormatError),
    #[error("world file io: {0}")]
    Io(#[from] std::io::Error),
}

/// Radius of the physical body of every artifact. Bodies are spheres
/// centred on the artifact centre; LiDAR rays stop on them.
pub const ARTIFACT_BODY_RADIUS: f64 = 0.25;

/// Dense static voxel world. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldGrid {
    origin: Vec3,
    voxel_edge: f64,
    dims: [usize; 3],
    cells: Vec<Cell>,
    artifacts: Vec<GroundTruthArtifact>,
}

impl WorldGrid {
    /// Build a world and check every invariant.
    pub fn new(
        origin: Vec3,
        voxel_edge: f64,
        dims: [usize; 3],
        cells: Vec<Cell>,
        artifacts: Vec<GroundTruthArtifact>,
    ) -> Result<Self, WorldError> {
        let w = Self {
            origin,
            voxel_edge,
            dims,
            cells,
            artifacts,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let inv = |m: String| Err(WorldError::Invariant(m));
        if !(self.voxel_edge > 0.0 && self.voxel_edge.is_finite()) {
            return inv(format!("voxel_edge must be positive, got {}", self.voxel_edge));
        }
        if self.dims.iter().any(|&d| d == 0) {
            return inv(format!("dims must be positive, got {:?}", self.dims));
        }
        let n = self.dims[0] * self.dims[1] * self.dims[2];
        if n != self.cells.len() {
            return inv(format!(
                "dims {:?} describe {} cells but payload has {}",
                self.dims,
                n,
                self.cells.len()
            ));
        }
        let [nx, ny, nz] = self.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let shell =
                        x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1;
                    if shell && self.cells[self.index(x, y, z)] == Cell::Air {
                        return inv(format!("boundary cell ({x},{y},{z}) is Air"));
                    }
                }
            }
        }
        for a in &self.artifacts {
            if !a.center.iter().all(|v| v.is_finite()) {
                return inv(format!("artifact {} has a non-finite center", a.id));
            }
            if self.is_solid(&a.center) {
                return inv(format!("artifact {} center lies in a Solid cell", a.id));
            }
        }
        let mut ids: Vec<u32> = self.artifacts.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return inv("duplicate artifact id".into());
        }
        Ok(())
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn voxel_edge(&self) -> f64 {
        self.voxel_edge
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn artifacts(&self) -> &[GroundTruthArtifact] {
        &self.artifacts
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.origin, self.voxel_edge)
    }

    /// World-frame extent of the grid.
    pub fn size(&self) -> Vec3 {
        Vec3::new(
            self.dims[0] as f64,
            self.dims[1] as f64,
            self.dims[2] as f64,
        ) * self.voxel_edge
    }

    #[inline]
    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn index_of_key(&self, k: &VoxelKey) -> Option<usize> {
        if k[0] < 0 || k[1] < 0 || k[2] < 0 {
            return None;
        }
        let (x, y, z) = (k[0] as usize, k[1] as usize, k[2] as usize);
        if x >= self.dims[0] || y >= self.dims[1] || z >= self.dims[2] {
            return None;
        }
        Some(self.index(x, y, z))
    }

    pub fn key_of_index(&self, i: usize) -> VoxelKey {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        [x as i64, y as i64, z as i64]
    }

    /// Cell at a key; everything outside the grid is rock.
    #[inline]
    pub fn cell(&self, k: &VoxelKey) -> Cell {
        self.index_of_key(k)
            .map(|i| self.cells[i])
            .unwrap_or(Cell::Solid)
    }

    #[inline]
    pub fn is_solid_key(&self, k: &VoxelKey) -> bool {
        self.cell(k) == Cell::Solid
    }

    pub fn key_of(&self, p: &Vec3) -> VoxelKey {
        self.lattice().key_of(p)
    }

    /// True iff the point falls in a Solid cell. Points outside the grid are solid.
    pub fn is_solid(&self, p: &Vec3) -> bool {
        if !p.iter().all(|v| v.is_finite()) {
            return true;
        }
        self.is_solid_key(&self.key_of(p))
    }

    pub fn in_bounds(&self, p: &Vec3) -> bool {
        self.index_of_key(&self.key_of(p)).is_some()
    }

    pub fn air_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Air).count()
    }

    /// 6-connected flood fill over Air from `start`; returns the visited mask.
    pub fn flood_fill(&self, start: &Vec3) -> Vec<bool> {
        let mut seen = vec![false; self.cells.len()];
        let Some(s) = self.index_of_key(&self.key_of(start)) else {
            return seen;
        };
        if self.cells[s] != Cell::Air {
            return seen;
        }
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(i) = queue.pop_front() {
            let k = self.key_of_index(i);
            for (a, d) in [(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)] {
                let mut n = k;
                n[a] += d;
                if let Some(j) = self.index_of_key(&n) {
                    if !seen[j] && self.cells[j] == Cell::Air {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        seen
    }

    /// First intersection of a ray with rock or an artifact body.
    ///
    /// Rock hits are reported at the entry face of the first Solid cell.
    /// Returns the ray parameter (distance for a unit `dir`).
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<f64> {
        let mut best = None;
        for c in GridRay::new(&self.lattice(), origin, dir, max_range) {
            if c.t_entry > max_range {
                break;
            }
            if self.is_solid_key(&c.key) {
                best = Some(c.t_entry);
                break;
            }
        }
        let limit = best.unwrap_or(max_range);
        let body = self
            .artifacts
            .iter()
            .filter_map(|a| ray_sphere(origin, dir, &a.center, ARTIFACT_BODY_RADIUS))
            .filter(|t| *t <= limit)
            .min_by(|a, b| a.total_cmp(b));
        body.or(best)
    }

    /// True iff no Solid cell lies on the segment `a → b` (end cell excluded).
    pub fn line_of_sight(&self, a: &Vec3, b: &Vec3) -> bool {
        let end = self.key_of(b);
        crate::geometry::walk_segment(&self.lattice(), a, b, |k| {
            k == end || !self.is_solid_key(&k)
        })
    }
}

/// Smallest non-negative ray parameter hitting a sphere, if any.
fn ray_sphere(origin: &Vec3, dir: &Vec3, center: &Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let a = dir.norm_squared();
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - a * c;
    if disc < 0.0 || b > 0.0 {
        return None;
    }
    Some((-b - disc.sqrt()) / a)
}
