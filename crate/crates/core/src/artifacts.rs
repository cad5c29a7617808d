//! Turning detections into located, classified artifact reports.
//!
//! Each bounding box is turned into a 3D point by casting a grid of pixel
//! rays into the occupancy map. Points that fall near each other are
//! pooled into a hypothesis that keeps a running mean location and one
//! binary Bayes filter per class; once a class is confident enough the
//! hypothesis freezes and is reported.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};
use crate::mapping::{OccupancyMap, StopAt};
use crate::sensing::{CameraModel, Detection};
use crate::world::{ArtifactClass, GroundTruthArtifact};

const N: usize = ArtifactClass::COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactConfig {
    /// Pixel rays per bounding-box side.
    pub grid_n: usize,
    /// Gating radius R_a of a hypothesis sphere (m).
    pub sphere_radius: f64,
    pub prior: f64,
    pub p_true_pos: [f64; N],
    pub p_false_pos: [f64; N],
    pub freeze_posterior: [f64; N],
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        Self {
            grid_n: 5,
            sphere_radius: 1.0,
            prior: 0.5,
            p_true_pos: [0.9; N],
            p_false_pos: [0.2; N],
            freeze_posterior: [0.95; N],
        }
    }
}

impl ArtifactConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.grid_n < 2 {
            return Err("grid_n must be at least 2".into());
        }
        if !(self.sphere_radius > 0.0) {
            return Err("sphere_radius must be positive".into());
        }
        let open = |p: f64| p > 0.0 && p < 1.0;
        if !open(self.prior) {
            return Err("prior must lie in (0, 1)".into());
        }
        for c in 0..N {
            if !open(self.p_true_pos[c]) || !open(self.p_false_pos[c]) || !open(self.freeze_posterior[c]) {
                return Err(format!("class {c}: probabilities must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Log-odds increments (detected, not detected) for class `c`.
    pub fn increments(&self, c: usize) -> (f64, f64) {
        let (tp, fp) = (self.p_true_pos[c], self.p_false_pos[c]);
        ((tp / fp).ln(), ((1.0 - tp) / (1.0 - fp)).ln())
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Per-coordinate median of a non-empty set; mean of the middle pair for
/// even counts.
pub fn coordinate_median(points: &[Vec3]) -> Vec3 {
    assert!(!points.is_empty());
    let mut out = Vec3::zeros();
    for a in 0..3 {
        let mut v: Vec<f64> = points.iter().map(|p| p[a]).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        out[a] = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    }
    out
}

/// Hit points of a grid of pixel rays through the bounding box. Pixels sit
/// at `(i + 0.5) / grid_n` of the box on each axis.
pub fn bbox_ray_hits(det: &Detection, pose: &Pose, camera: &CameraModel, map: &OccupancyMap, grid_n: usize) -> (Vec<Vec3>, usize) {
    let b = &det.bbox;
    let mut hits = Vec::new();
    for j in 0..grid_n {
        for i in 0..grid_n {
            let u = b.u_min + (i as f64 + 0.5) / grid_n as f64 * (b.u_max - b.u_min);
            let v = b.v_min + (j as f64 + 0.5) / grid_n as f64 * (b.v_max - b.v_min);
            let dir = camera.pixel_ray(pose, u, v);
            if let Some(h) = map.raycast(&pose.position, &dir, camera.max_detect_range, StopAt::Occupied) {
                hits.push(h.point);
            }
        }
    }
    (hits, grid_n * grid_n)
}

/// 3D location of a detection, or `None` when fewer than a quarter of the
/// pixel rays hit something within camera range.
pub fn localize_detection(det: &Detection, pose: &Pose, camera: &CameraModel, map: &OccupancyMap, grid_n: usize) -> Option<Vec3> {
    let (hits, rays) = bbox_ray_hits(det, pose, camera, map, grid_n);
    if hits.is_empty() || 4 * hits.len() < rays {
        return None;
    }
    Some(coordinate_median(&hits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHypothesis {
    pub id: usize,
    pub center: Vec3,
    pub radius: f64,
    pub detection_count: usize,
    pub class_log_odds: [f64; N],
    pub frozen: bool,
    pub frozen_class: Option<ArtifactClass>,
    pub reported: bool,
    point_sum: Vec3,
}

impl ArtifactHypothesis {
    pub fn probabilities(&self) -> [f64; N] {
        self.class_log_odds.map(sigmoid)
    }

    fn absorb(&mut self, class: ArtifactClass, point: &Vec3, cfg: &ArtifactConfig) {
        self.point_sum += point;
        self.detection_count += 1;
        self.center = self.point_sum / self.detection_count as f64;
        for c in 0..N {
            let (hit, miss) = cfg.increments(c);
            self.class_log_odds[c] += if c == class.index() { hit } else { miss };
        }
        let mut best: Option<usize> = None;
        for c in 0..N {
            if sigmoid(self.class_log_odds[c]) >= cfg.freeze_posterior[c]
                && best.is_none_or(|b| self.class_log_odds[c] > self.class_log_odds[b])
            {
                best = Some(c);
            }
        }
        if let Some(c) = best {
            self.frozen = true;
            self.frozen_class = ArtifactClass::from_index(c);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisUpdate {
    Absorbed(usize),
    Spawned(usize),
    /// The point fell inside a frozen hypothesis and was ignored.
    Ignored(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HypothesisSet {
    pub hypotheses: Vec<ArtifactHypothesis>,
}

impl HypothesisSet {
    /// Feed one located detection. The nearest unfrozen sphere containing
    /// the point absorbs it; failing that, a frozen sphere containing it
    /// swallows it; otherwise a new hypothesis starts at the point.
    pub fn update(&mut self, class: ArtifactClass, point: &Vec3, cfg: &ArtifactConfig) -> HypothesisUpdate {
        assert!(point.iter().all(|v| v.is_finite()), "non-finite artifact point");
        let nearest = |frozen: bool| {
            self.hypotheses
                .iter()
                .filter(|h| h.frozen == frozen)
                .map(|h| (h.id, (h.center - point).norm()))
                .filter(|&(_, d)| d <= cfg.sphere_radius)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .map(|(id, _)| id)
        };
        if let Some(id) = nearest(false) {
            self.hypotheses[id].absorb(class, point, cfg);
            return HypothesisUpdate::Absorbed(id);
        }
        if let Some(id) = nearest(true) {
            return HypothesisUpdate::Ignored(id);
        }
        let id = self.hypotheses.len();
        let mut h = ArtifactHypothesis {
            id,
            center: *point,
            radius: cfg.sphere_radius,
            detection_count: 0,
            class_log_odds: [logit(cfg.prior); N],
            frozen: false,
            frozen_class: None,
            reported: false,
            point_sum: Vec3::zeros(),
        };
        h.absorb(class, point, cfg);
        self.hypotheses.push(h);
        HypothesisUpdate::Spawned(id)
    }

    /// Reports for hypotheses frozen since the last call.
    pub fn report_frozen(&mut self, stamp: f64) -> Vec<ArtifactReport> {
        let mut out = Vec::new();
        for h in self.hypotheses.iter_mut().filter(|h| h.frozen && !h.reported) {
            h.reported = true;
            out.push(ArtifactReport {
                stamp,
                class: h.frozen_class.expect("frozen hypothesis has a class"),
                location: h.center,
                probabilities: h.probabilities(),
                detection_count: h.detection_count,
                source: ReportSource::Camera,
                thumbnail_ref: Some(format!("hyp-{}", h.id)),
            });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportSource {
    Camera,
    Bluetooth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactReport {
    pub stamp: f64,
    pub class: ArtifactClass,
    pub location: Vec3,
    pub probabilities: [f64; N],
    pub detection_count: usize,
    pub source: ReportSource,
    pub thumbnail_ref: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ReportLine {
    stamp: f64,
    class: String,
    x: f64,
    y: f64,
    z: f64,
    probabilities: BTreeMap<String, f64>,
    detection_count: usize,
    source: ReportSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thumbnail_ref: Option<String>,
}

impl ArtifactReport {
    pub fn to_json_line(&self) -> String {
        let line = ReportLine {
            stamp: self.stamp,
            class: self.class.name().to_string(),
            x: self.location.x,
            y: self.location.y,
            z: self.location.z,
            probabilities: ArtifactClass::ALL
                .iter()
                .map(|c| (c.name().to_string(), self.probabilities[c.index()]))
                .collect(),
            detection_count: self.detection_count,
            source: self.source,
            thumbnail_ref: self.thumbnail_ref.clone(),
        };
        serde_json::to_string(&line).expect("report serializes")
    }

    pub fn from_json_line(s: &str) -> Result<Self, String> {
        let l: ReportLine = serde_json::from_str(s).map_err(|e| e.to_string())?;
        let class: ArtifactClass = l.class.parse()?;
        let mut probabilities = [0.0; N];
        for c in ArtifactClass::ALL {
            probabilities[c.index()] = l.probabilities.get(c.name()).copied().unwrap_or(0.0);
        }
        Ok(Self {
            stamp: l.stamp,
            class,
            location: Vec3::new(l.x, l.y, l.z),
            probabilities,
            detection_count: l.detection_count,
            source: l.source,
            thumbnail_ref: l.thumbnail_ref,
        })
    }
}

pub fn parse_reports(text: &str) -> Result<Vec<ArtifactReport>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| ArtifactReport::from_json_line(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// Robot positions accumulated per Bluetooth device.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BluetoothLog {
    seen: BTreeMap<u32, (Vec3, usize, f64)>,
}

impl BluetoothLog {
    pub fn record(&mut self, ids: &[u32], position: &Vec3, stamp: f64) {
        for &id in ids {
            let e = self.seen.entry(id).or_insert((Vec3::zeros(), 0, stamp));
            e.0 += position;
            e.1 += 1;
            e.2 = stamp;
        }
    }

    /// One cellphone report per device, at the mean detecting position.
    pub fn finalize(&self) -> Vec<ArtifactReport> {
        let mut probabilities = [0.0; N];
        probabilities[ArtifactClass::Cellphone.index()] = 1.0;
        self.seen
            .iter()
            .map(|(&id, &(sum, n, stamp))| ArtifactReport {
                stamp,
                class: ArtifactClass::Cellphone,
                location: sum / n as f64,
                probabilities,
                detection_count: n,
                source: ReportSource::Bluetooth,
                thumbnail_ref: Some(format!("bt-{id}")),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactScore {
    pub true_positives: usize,
    pub false_positives: usize,
    /// Correct reports of an artifact that was already matched.
    pub duplicates: usize,
    pub ground_truth: usize,
    pub precision: f64,
    pub recall: f64,
    /// `(report index, artifact id, distance)` per true positive.
    pub matches: Vec<(usize, u32, f64)>,
}

/// Match reports to ground truth by class and distance within `tol`,
/// closest pairs first. A correct report of an already-matched artifact is
/// a duplicate and counts toward neither precision nor recall.
pub fn score_artifacts(reports: &[ArtifactReport], truth: &[GroundTruthArtifact], tol: f64) -> ArtifactScore {
    let mut pairs = Vec::new();
    for (ri, r) in reports.iter().enumerate() {
        for a in truth {
            let d = (r.location - a.center).norm();
            if r.class == a.class && d <= tol {
                pairs.push((d, ri, a.id));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut report_used = vec![false; reports.len()];
    let mut truth_used: BTreeMap<u32, bool> = truth.iter().map(|a| (a.id, false)).collect();
    let mut matches = Vec::new();
    for (d, ri, id) in pairs {
        if report_used[ri] || truth_used[&id] {
            continue;
        }
        report_used[ri] = true;
        truth_used.insert(id, true);
        matches.push((ri, id, d));
    }
    let mut duplicates = 0;
    let mut false_positives = 0;
    for (ri, r) in reports.iter().enumerate() {
        if report_used[ri] {
            continue;
        }
        let dup = truth.iter().any(|a| a.class == r.class && (r.location - a.center).norm() <= tol);
        if dup {
            duplicates += 1;
        } else {
            false_positives += 1;
        }
    }
    let tp = matches.len();
    ArtifactScore {
        true_positives: tp,
        false_positives,
        duplicates,
        ground_truth: truth.len(),
        precision: if tp + false_positives == 0 { 1.0 } else { tp as f64 / (tp + false_positives) as f64 },
        recall: if truth.is_empty() { 1.0 } else { tp as f64 / truth.len() as f64 },
        matches,
    }
}
