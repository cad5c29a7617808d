use std::fmt::Write as _;
use std::path::Path;

use super::{ArtifactClass, Cell, GroundTruthArtifact, WorldError, WorldGrid};
use crate::geometry::Vec3;
use crate::rle::{encode_runs, parse_err, parse_num, write_runs, Lines};

const MAGIC: &str = "OWLWORLD 1";

/// Serialize a world. Floats use the shortest round-trip representation,
/// so `world_to_string(world_from_str(s)) == s` for any file we wrote.
pub fn world_to_string(world: &WorldGrid) -> String {
    let mut out = String::new();
    let o = world.origin;
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "ORIGIN {} {} {}", o.x, o.y, o.z);
    let _ = writeln!(out, "VOXEL_EDGE {}", world.voxel_edge);
    let [nx, ny, nz] = world.dims;
    let _ = writeln!(out, "DIMS {nx} {ny} {nz}");
    let _ = writeln!(out, "ARTIFACTS {}", world.artifacts.len());
    for a in &world.artifacts {
        let _ = writeln!(
            out,
            "ARTIFACT {} {} {} {} {} {}",
            a.id,
            a.class,
            a.center.x,
            a.center.y,
            a.center.z,
            u8::from(a.bluetooth)
        );
    }
    let runs = encode_runs(world.cells.iter().map(|c| match c {
        Cell::Solid => 'S',
        Cell::Air => 'A',
    }));
    write_runs(&mut out, &runs);
    out
}

pub fn world_from_str(text: &str) -> Result<WorldGrid, WorldError> {
    let mut lines = Lines::new(text);
    let (n, magic) = lines.next_line("magic")?;
    if magic.trim_end() != MAGIC {
        return Err(parse_err(n, format!("expected magic `{MAGIC}`")).into());
    }
    let (n, v) = lines.keyed("ORIGIN", 3)?;
    let origin = Vec3::new(parse_num(n, v[0])?, parse_num(n, v[1])?, parse_num(n, v[2])?);
    let (n, v) = lines.keyed("VOXEL_EDGE", 1)?;
    let voxel_edge: f64 = parse_num(n, v[0])?;
    let (n, v) = lines.keyed("DIMS", 3)?;
    let dims: [usize; 3] = [parse_num(n, v[0])?, parse_num(n, v[1])?, parse_num(n, v[2])?];
    let (n, v) = lines.keyed("ARTIFACTS", 1)?;
    let count: usize = parse_num(n, v[0])?;
    let mut artifacts = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, v) = lines.keyed("ARTIFACT", 6)?;
        let class: ArtifactClass = v[1].parse().map_err(|e: String| parse_err(n, e))?;
        let bluetooth = match v[5] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(n, format!("bluetooth flag must be 0 or 1, got `{other}`")).into()),
        };
        artifacts.push(GroundTruthArtifact {
            id: parse_num(n, v[0])?,
            class,
            center: Vec3::new(parse_num(n, v[2])?, parse_num(n, v[3])?, parse_num(n, v[4])?),
            bluetooth,
        });
    }
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse_err(lines.last, "dims overflow"))?;
    let cells = lines
        .runs(&['S', 'A'], total)?
        .into_iter()
        .map(|c| if c == 'S' { Cell::Solid } else { Cell::Air })
        .collect();
    WorldGrid::new(origin, voxel_edge, dims, cells, artifacts)
}

pub fn save_world(world: &WorldGrid, path: &Path) -> Result<(), WorldError> {
    std::fs::write(path, world_to_string(world))?;
    Ok(())
}

pub fn load_world(path: &Path) -> Result<WorldGrid, WorldError> {
    let text = std::fs::read_to_string(path)?;
    world_from_str(&text)
}
