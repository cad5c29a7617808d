//! Procedural tunnel networks.
//!
//! Corridors are carved as axis-biased random walks: a walker steps one
//! voxel at a time along a horizontal axis, occasionally jogging sideways by
//! one voxel, and carves a `width × height` slice perpendicular to its
//! heading at every step. New corridors either continue from an open tip
//! (straight or with a 90° turn) or branch sideways off an existing corridor,
//! optionally with a junction room. A corridor stops early when it would
//! come within `gap` voxels of rock carved by another corridor, so the
//! network never merges except at junctions and every cell stays reachable.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArtifactClass, Cell, GroundTruthArtifact, WorldError, WorldGrid};
use crate::geometry::{Aabb, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunnelSpec {
    pub voxel_edge: f64,
    /// World size in metres; the grid origin is at zero.
    pub extent: [f64; 3],
    /// Takeoff point. Corridor 0 runs along +x through it.
    pub start: [f64; 3],
    /// Height of the takeoff point above the common tunnel floor.
    pub start_height: f64,
    /// Corridor width range (m).
    pub width: [f64; 2],
    /// Width forced on corridor 0 when set.
    pub main_width: Option<f64>,
    /// Corridor height range (m).
    pub height: [f64; 2],
    pub segments: usize,
    pub segment_length: [f64; 2],
    /// Chance that a new corridor branches off an existing one instead of
    /// continuing from an open tip.
    pub branch_probability: f64,
    /// Chance that a corridor continuing from a tip turns by 90°.
    pub turn_probability: f64,
    /// Per-step chance of a one-voxel sideways jog.
    pub jog_probability: f64,
    /// Chance of a junction room at each branch point.
    pub room_probability: f64,
    pub room_size: [f64; 2],
    /// Rock cells kept between unrelated corridors.
    pub gap_voxels: usize,
    pub artifacts: usize,
    /// Minimum distance between artifacts and from the takeoff point.
    pub artifact_spacing: f64,
}

impl Default for TunnelSpec {
    fn default() -> Self {
        Self {
            voxel_edge: 0.2,
            extent: [60.0, 60.0, 4.0],
            start: [6.0, 30.0, 1.6],
            start_height: 1.0,
            width: [2.0, 2.4],
            main_width: None,
            height: [2.2, 2.6],
            segments: 8,
            segment_length: [15.0, 30.0],
            branch_probability: 0.4,
            turn_probability: 0.5,
            jog_probability: 0.08,
            room_probability: 0.0,
            room_size: [4.0, 6.0],
            gap_voxels: 3,
            artifacts: 0,
            artifact_spacing: 8.0,
        }
    }
}

/// Geometry record of one carved corridor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    /// Horizontal unit heading.
    pub heading: Vec3,
    pub width: f64,
    pub height: f64,
    /// Carved length (m).
    pub length: f64,
    /// Centre of every carved slice, at mid-height.
    pub slices: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunnelLayout {
    pub start: Vec3,
    pub segments: Vec<SegmentInfo>,
    pub rooms: Vec<Aabb>,
    /// Points where a corridor leaves another one.
    pub junctions: Vec<Vec3>,
    pub total_length: f64,
}

const HEADINGS: [[i64; 2]; 4] = [[1, 0], [0, 1], [-1, 0], [0, -1]];

struct Carver {
    dims: [usize; 3],
    edge: f64,
    /// 0 = rock, otherwise owner id + 1.
    owner: Vec<u32>,
    floor_k: i64,
    margin: i64,
}

impl Carver {
    fn idx(&self, x: i64, y: i64, z: i64) -> Option<usize> {
        if x < 0 || y < 0 || z < 0 {
            return None;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        if x >= self.dims[0] || y >= self.dims[1] || z >= self.dims[2] {
            return None;
        }
        Some(x + self.dims[0] * (y + self.dims[1] * z))
    }

    fn inside_margin(&self, x: i64, y: i64, z: i64) -> bool {
        x >= self.margin
            && y >= self.margin
            && z >= 1
            && x < self.dims[0] as i64 - self.margin
            && y < self.dims[1] as i64 - self.margin
            && z < self.dims[2] as i64 - 1
    }

    /// Cells of the slice centred on lateral key `c` at position `pos`.
    fn slice_cells(&self, pos: [i64; 2], heading: usize, w: i64, h: i64, pad: i64) -> Vec<[i64; 3]> {
        let lat = HEADINGS[(heading + 1) % 4];
        let mut out = Vec::with_capacity(((w + 2 * pad) * (h + 2 * pad)) as usize);
        let lo = -(w / 2) - pad;
        let hi = lo + w + 2 * pad;
        for l in lo..hi {
            for z in (self.floor_k - pad)..(self.floor_k + h + pad) {
                out.push([pos[0] + lat[0] * l, pos[1] + lat[1] * l, z]);
            }
        }
        out
    }

    fn carve(&mut self, cells: &[[i64; 3]], owner: u32) {
        for c in cells {
            if let Some(i) = self.idx(c[0], c[1], c[2]) {
                if self.owner[i] == 0 {
                    self.owner[i] = owner + 1;
                }
            }
        }
    }

    /// The region ahead of `pos` is unclaimed rock (or our own) and in bounds.
    fn clear_ahead(&self, pos: [i64; 2], heading: usize, w: i64, h: i64, gap: i64, owner: u32, check_owners: bool) -> bool {
        let d = HEADINGS[heading];
        for j in 0..=gap {
            let p = [pos[0] + d[0] * j, pos[1] + d[1] * j];
            let pad = if j == 0 { 0 } else { gap };
            for c in self.slice_cells(p, heading, w, h, pad) {
                let pad_z = c[2] < self.floor_k || c[2] >= self.floor_k + h;
                if !self.inside_margin(c[0], c[1], c[2]) {
                    if pad_z {
                        continue;
                    }
                    return false;
                }
                if !check_owners {
                    continue;
                }
                let i = self.idx(c[0], c[1], c[2]).unwrap();
                let o = self.owner[i];
                if o != 0 && o != owner + 1 {
                    return false;
                }
            }
        }
        true
    }

    fn center(&self, pos: [i64; 2], heading: usize, w: i64, h: i64) -> Vec3 {
        let lat = HEADINGS[(heading + 1) % 4];
        // Geometric middle of the slice cells.
        let l_mid = -(w / 2) as f64 + w as f64 / 2.0;
        let coord = |a: usize| {
            let l = lat[a] as f64;
            (pos[a] as f64 + l * l_mid + 0.5 - 0.5 * l) * self.edge
        };
        Vec3::new(coord(0), coord(1), (self.floor_k as f64 + h as f64 / 2.0) * self.edge)
    }
}

fn check_range(name: &str, r: [f64; 2], min: f64) -> Result<(), WorldError> {
    if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] {
        return Err(WorldError::InfeasibleSpec(format!("{name} range {r:?} is not ordered")));
    }
    if r[0] < min {
        return Err(WorldError::InfeasibleSpec(format!(
            "{name} minimum {} is below {min}",
            r[0]
        )));
    }
    Ok(())
}

fn validate_spec(spec: &TunnelSpec) -> Result<(), WorldError> {
    let err = |m: String| Err(WorldError::InfeasibleSpec(m));
    if spec.segments == 0 {
        return err("segments must be at least 1".into());
    }
    if !(spec.voxel_edge > 0.0 && spec.voxel_edge.is_finite()) {
        return err(format!("voxel_edge must be positive, got {}", spec.voxel_edge));
    }
    let e = spec.voxel_edge;
    check_range("width", spec.width, 3.0 * e)?;
    check_range("height", spec.height, 3.0 * e)?;
    check_range("segment_length", spec.segment_length, e)?;
    check_range("room_size", spec.room_size, 0.0)?;
    if let Some(w) = spec.main_width {
        if w < 3.0 * e {
            return err(format!("main_width {w} is below 3 voxels"));
        }
    }
    for (name, p) in [
        ("branch_probability", spec.branch_probability),
        ("turn_probability", spec.turn_probability),
        ("jog_probability", spec.jog_probability),
        ("room_probability", spec.room_probability),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return err(format!("{name} must lie in [0, 1], got {p}"));
        }
    }
    let widest = spec.width[1].max(spec.main_width.unwrap_or(0.0));
    let margin = (spec.gap_voxels as f64 + 1.0) * e;
    if spec.extent[2] < spec.height[1] + 2.0 * e {
        return err(format!(
            "extent z {} cannot hold corridors {} m tall",
            spec.extent[2], spec.height[1]
        ));
    }
    for a in 0..2 {
        if spec.extent[a] < widest + 2.0 * margin + 2.0 {
            return err(format!("extent {:?} too small for corridor width {widest}", spec.extent));
        }
    }
    let floor = spec.start[2] - spec.start_height;
    if spec.start_height <= 0.0 || spec.start_height >= spec.height[0] {
        return err(format!(
            "start_height {} must lie inside the lowest corridor ({} m)",
            spec.start_height, spec.height[0]
        ));
    }
    if floor < 2.0 * e || floor + spec.height[1] > spec.extent[2] - e {
        return err("start height puts corridors outside the grid's vertical extent".into());
    }
    let main = spec.main_width.unwrap_or(spec.width[1]);
    if spec.start[0] - 2.0 < margin
        || spec.start[0] > spec.extent[0] - margin
        || spec.start[1] - main / 2.0 < margin
        || spec.start[1] + main / 2.0 > spec.extent[1] - margin
    {
        return err(format!("start {:?} too close to the grid boundary", spec.start));
    }
    Ok(())
}

/// Generate a tunnel world. Deterministic for a fixed `(spec, seed)`.
pub fn generate_tunnel_world(spec: &TunnelSpec, seed: u64) -> Result<WorldGrid, WorldError> {
    generate_tunnel_network(spec, seed).map(|(w, _)| w)
}

/// Generate a tunnel world and return the corridor layout alongside it.
pub fn generate_tunnel_network(spec: &TunnelSpec, seed: u64) -> Result<(WorldGrid, TunnelLayout), WorldError> {
    validate_spec(spec)?;
    let e = spec.voxel_edge;
    let dims = [
        (spec.extent[0] / e).round() as usize,
        (spec.extent[1] / e).round() as usize,
        (spec.extent[2] / e).round() as usize,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = spec.gap_voxels as i64;
    let start = Vec3::new(spec.start[0], spec.start[1], spec.start[2]);
    let mut carver = Carver {
        dims,
        edge: e,
        owner: vec![0; dims[0] * dims[1] * dims[2]],
        floor_k: ((spec.start[2] - spec.start_height) / e).floor() as i64,
        margin: 1 + gap.max(1),
    };

    struct Tip {
        pos: [i64; 2],
        heading: usize,
        owner: u32,
    }
    let mut tips: Vec<Tip> = Vec::new();
    // (segment index, slice positions in keys, heading)
    let mut walks: Vec<(Vec<[i64; 2]>, usize, i64)> = Vec::new();
    let mut layout = TunnelLayout {
        start,
        segments: Vec::new(),
        rooms: Vec::new(),
        junctions: Vec::new(),
        total_length: 0.0,
    };

    let sample = |rng: &mut ChaCha8Rng, r: [f64; 2]| if r[0] == r[1] { r[0] } else { rng.random_range(r[0]..=r[1]) };
    let to_vox = |m: f64| ((m / e).round() as i64).max(3);

    let mut attempts = 0usize;
    while layout.segments.len() < spec.segments && attempts < spec.segments * 20 {
        attempts += 1;
        let id = walks.len() as u32;
        let first = layout.segments.is_empty();
        let width_m = if first { spec.main_width.unwrap_or_else(|| sample(&mut rng, spec.width)) } else { sample(&mut rng, spec.width) };
        let height_m = sample(&mut rng, spec.height);
        let length_m = sample(&mut rng, spec.segment_length);
        let w = to_vox(width_m);
        let h = to_vox(height_m);
        let steps = (length_m / e).round() as i64;

        // Choose the anchor.
        let (mut pos, heading, skip, junction) = if first {
            let k = [(start.x / e).floor() as i64, (start.y / e).floor() as i64];
            let back = (2.0 / e).round() as i64;
            ([k[0] - back, k[1]], 0usize, 0i64, None)
        } else {
            let branch = tips.is_empty() || rng.random_bool(spec.branch_probability);
            if branch {
                let eligible: Vec<usize> = walks
                    .iter()
                    .enumerate()
                    .filter(|(_, (s, _, pw))| s.len() as i64 > 2 * (pw + 2 * gap) + 2)
                    .map(|(i, _)| i)
                    .collect();
                let Some(&parent) = eligible.choose(&mut rng) else { continue };
                let (slices, ph, pw) = &walks[parent];
                let lo = (pw + 2 * gap) as usize;
                let hi = slices.len() - lo;
                let at = rng.random_range(lo..hi);
                let side = if rng.random_bool(0.5) { 1 } else { 3 };
                let heading = (ph + side) % 4;
                (slices[at], heading, pw / 2 + gap + 2, Some((slices[at], *pw)))
            } else {
                let t = tips.swap_remove(rng.random_range(0..tips.len()));
                let heading = if rng.random_bool(spec.turn_probability) {
                    (t.heading + if rng.random_bool(0.5) { 1 } else { 3 }) % 4
                } else {
                    t.heading
                };
                let _ = t.owner;
                let skip = if heading == t.heading { 1 } else { w / 2 + gap + 2 };
                (t.pos, heading, skip, None)
            }
        };

        let mut slices = Vec::new();
        let d = HEADINGS[heading];
        let lat = HEADINGS[(heading + 1) % 4];
        let mut blocked = false;
        for s in 0..=steps {
            if s > 0 {
                pos = [pos[0] + d[0], pos[1] + d[1]];
                if s > skip && rng.random_bool(spec.jog_probability) {
                    let j = if rng.random_bool(0.5) { 1 } else { -1 };
                    let cand = [pos[0] + lat[0] * j, pos[1] + lat[1] * j];
                    if carver.clear_ahead(cand, heading, w, h, gap, id, true) {
                        pos = cand;
                    }
                }
            }
            if !carver.clear_ahead(pos, heading, w, h, gap, id, s >= skip) {
                blocked = true;
                break;
            }
            let cells = carver.slice_cells(pos, heading, w, h, 0);
            carver.carve(&cells, id);
            slices.push(pos);
        }
        if slices.len() < 2 {
            continue;
        }
        if let Some((jpos, pw)) = junction {
            let jc = carver.center(jpos, heading, w, h);
            layout.junctions.push(jc);
            if rng.random_bool(spec.room_probability) {
                let size = sample(&mut rng, spec.room_size);
                let half = to_vox(size) / 2;
                let hh = to_vox(spec.height[1]);
                let mut cells = Vec::new();
                for x in (jpos[0] - half)..(jpos[0] + half) {
                    for y in (jpos[1] - half)..(jpos[1] + half) {
                        for z in carver.floor_k..(carver.floor_k + hh) {
                            if carver.inside_margin(x, y, z) {
                                cells.push([x, y, z]);
                            }
                        }
                    }
                }
                let _ = pw;
                carver.carve(&cells, id);
                let lo = Vec3::new((jpos[0] - half) as f64, (jpos[1] - half) as f64, carver.floor_k as f64) * e;
                let hi = Vec3::new((jpos[0] + half) as f64, (jpos[1] + half) as f64, (carver.floor_k + hh) as f64) * e;
                layout.rooms.push(Aabb { min: lo, max: hi });
            }
        }
        if !blocked {
            tips.push(Tip {
                pos: *slices.last().unwrap(),
                heading,
                owner: id,
            });
        }
        let length = (slices.len() - 1) as f64 * e;
        layout.total_length += length;
        layout.segments.push(SegmentInfo {
            heading: Vec3::new(d[0] as f64, d[1] as f64, 0.0),
            width: w as f64 * e,
            height: h as f64 * e,
            length,
            slices: slices.iter().map(|p| carver.center(*p, heading, w, h)).collect(),
        });
        walks.push((slices, heading, w));
    }
    if layout.segments.len() < spec.segments {
        return Err(WorldError::InfeasibleSpec(format!(
            "only {} of {} segments fit in extent {:?}",
            layout.segments.len(),
            spec.segments,
            spec.extent
        )));
    }

    let cells: Vec<Cell> = carver
        .owner
        .iter()
        .map(|&o| if o == 0 { Cell::Solid } else { Cell::Air })
        .collect();
    let mut world = WorldGrid::new(Vec3::zeros(), e, dims, cells, Vec::new())?;
    if world.is_solid(&start) {
        return Err(WorldError::InfeasibleSpec("start point is not inside carved air".into()));
    }
    world.artifacts = place_artifacts(&world, spec, &start, &mut rng)?;
    world.validate()?;
    Ok((world, layout))
}

/// Artifacts stand on the floor: their cell and all 26 neighbours are Air
/// and the cell two below is rock.
fn place_artifacts(world: &WorldGrid, spec: &TunnelSpec, start: &Vec3, rng: &mut ChaCha8Rng) -> Result<Vec<GroundTruthArtifact>, WorldError> {
    if spec.artifacts == 0 {
        return Ok(Vec::new());
    }
    let [nx, ny, nz] = world.dims();
    let mut candidates = Vec::new();
    for z in 2..nz as i64 - 1 {
        for y in 1..ny as i64 - 1 {
            for x in 1..nx as i64 - 1 {
                let k = [x, y, z];
                if world.is_solid_key(&k) || !world.is_solid_key(&[x, y, z - 2]) {
                    continue;
                }
                let clear = (-1..=1).all(|dz| (-1..=1).all(|dy| (-1..=1).all(|dx| !world.is_solid_key(&[x + dx, y + dy, z + dz]))));
                if clear {
                    candidates.push(k);
                }
            }
        }
    }
    candidates.shuffle(rng);
    let lattice = world.lattice();
    let mut placed: Vec<GroundTruthArtifact> = Vec::new();
    for k in candidates {
        let c = lattice.center_of(&k);
        if (c - start).norm() < spec.artifact_spacing
            || placed.iter().any(|a| (a.center - c).norm() < spec.artifact_spacing)
        {
            continue;
        }
        let class = ArtifactClass::ALL[rng.random_range(0..ArtifactClass::COUNT)];
        placed.push(GroundTruthArtifact {
            id: placed.len() as u32 + 1,
            class,
            center: c,
            bluetooth: class == ArtifactClass::Cellphone,
        });
        if placed.len() == spec.artifacts {
            return Ok(placed);
        }
    }
    Err(WorldError::InfeasibleSpec(format!(
        "could only place {} of {} artifacts with spacing {}",
        placed.len(),
        spec.artifacts,
        spec.artifact_spacing
    )))
}
