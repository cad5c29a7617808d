use std::fmt::Write as _;

use super::{OccupancyMap, VoxelState};
use crate::geometry::{Lattice, Vec3, VoxelKey};
use crate::rle::{encode_runs, parse_err, parse_num, write_runs, FormatError, Lines};

const MAGIC: &str = "OWLMAP 1";

/// Tri-state snapshot of a map window, as stored in a map dump.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDump {
    pub lattice: Lattice,
    pub window_min: VoxelKey,
    pub dims: [usize; 3],
    /// x-fastest over the window keys.
    pub states: Vec<VoxelState>,
}

impl MapDump {
    pub fn occupied_centers(&self) -> Vec<Vec3> {
        let [nx, ny, _] = self.dims;
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == VoxelState::Occupied)
            .map(|(i, _)| {
                let k = [
                    self.window_min[0] + (i % nx) as i64,
                    self.window_min[1] + ((i / nx) % ny) as i64,
                    self.window_min[2] + (i / (nx * ny)) as i64,
                ];
                self.lattice.center_of(&k)
            })
            .collect()
    }
}

pub fn map_to_string(map: &OccupancyMap) -> String {
    let mut out = String::new();
    let l = map.lattice();
    let w = map.window_min();
    let [nx, ny, nz] = map.dims();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "ORIGIN {} {} {}", l.origin.x, l.origin.y, l.origin.z);
    let _ = writeln!(out, "VOXEL_EDGE {}", l.edge);
    let _ = writeln!(out, "WINDOW_MIN {} {} {}", w[0], w[1], w[2]);
    let _ = writeln!(out, "DIMS {nx} {ny} {nz}");
    let runs = encode_runs(map.keys().map(|k| match map.state(&k) {
        VoxelState::Unknown => 'U',
        VoxelState::Free => 'F',
        VoxelState::Occupied => 'O',
    }));
    write_runs(&mut out, &runs);
    out
}

pub fn map_from_str(text: &str) -> Result<MapDump, FormatError> {
    let mut lines = Lines::new(text);
    let (n, magic) = lines.next_line("magic")?;
    if magic.trim_end() != MAGIC {
        return Err(parse_err(n, format!("expected magic `{MAGIC}`")));
    }
    let (n, v) = lines.keyed("ORIGIN", 3)?;
    let origin = Vec3::new(parse_num(n, v[0])?, parse_num(n, v[1])?, parse_num(n, v[2])?);
    let (n, v) = lines.keyed("VOXEL_EDGE", 1)?;
    let edge: f64 = parse_num(n, v[0])?;
    if !(edge > 0.0) {
        return Err(parse_err(n, "voxel edge must be positive"));
    }
    let (n, v) = lines.keyed("WINDOW_MIN", 3)?;
    let window_min = [parse_num(n, v[0])?, parse_num(n, v[1])?, parse_num(n, v[2])?];
    let (n, v) = lines.keyed("DIMS", 3)?;
    let dims: [usize; 3] = [parse_num(n, v[0])?, parse_num(n, v[1])?, parse_num(n, v[2])?];
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse_err(n, "dims overflow"))?;
    let states = lines
        .runs(&['U', 'F', 'O'], total)?
        .into_iter()
        .map(|c| match c {
            'F' => VoxelState::Free,
            'O' => VoxelState::Occupied,
            _ => VoxelState::Unknown,
        })
        .collect();
    Ok(MapDump {
        lattice: Lattice::new(origin, edge),
        window_min,
        dims,
        states,
    })
}
