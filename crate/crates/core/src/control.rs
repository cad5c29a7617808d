//! Fixed-gain PID position control with a proportional yaw loop, and a
//! polyline tracker that generates the moving reference for it.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub kp: Vec3,
    pub ki: Vec3,
    pub kd: Vec3,
    pub kp_yaw: f64,
    pub i_min: Vec3,
    pub i_max: Vec3,
    pub acceptance_radius: f64,
    pub reference_speed: f64,
    /// Acceleration limit of the reference speed profile (m/s²).
    pub reference_accel: f64,
    /// The reference waits when it is this far ahead of the robot.
    pub max_lead: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kp: Vec3::new(4.0, 4.0, 6.0),
            ki: Vec3::new(1.5, 1.5, 2.0),
            kd: Vec3::new(3.0, 3.0, 4.0),
            kp_yaw: 2.0,
            i_min: Vec3::repeat(-1.0),
            i_max: Vec3::repeat(1.0),
            acceptance_radius: 0.3,
            reference_speed: 1.0,
            reference_accel: 1.0,
            max_lead: 1.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        let nonneg = |v: &Vec3| v.iter().all(|&x| x >= 0.0 && x.is_finite());
        if !nonneg(&self.kp) || !nonneg(&self.ki) || !nonneg(&self.kd) || !(self.kp_yaw >= 0.0) {
            return Err("controller gains must be non-negative".into());
        }
        if (0..3).any(|a| !(self.i_min[a] < self.i_max[a])) {
            return Err("controller i_min must be below i_max on every axis".into());
        }
        if !(self.acceptance_radius > 0.0 && self.reference_speed > 0.0 && self.reference_accel > 0.0 && self.max_lead > 0.0) {
            return Err("acceptance radius, reference speed/accel and max lead must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    pub integral: Vec3,
    /// Position error of the previous step, for the trapezoidal integral.
    pub prev_error: Option<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub position: Vec3,
    pub yaw: f64,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub position: Vec3,
    pub yaw: f64,
    pub velocity: Vec3,
}

/// One controller update:
/// `a = Kp·e + Ki·clamp(∫e) + Kd·(v_ref − v)` per axis and
/// `ψ̇ = Kψ·wrap(ψ_ref − ψ)`. The integral is accumulated with the
/// trapezoidal rule and then clamped.
pub fn control_step(state: &mut ControllerState, r: &Reference, est: &Estimate, dt: f64, cfg: &ControllerConfig) -> (Vec3, f64) {
    assert!(dt > 0.0, "dt must be positive");
    let e = r.position - est.position;
    let prev = state.prev_error.unwrap_or(e);
    let mut i = state.integral + (prev + e) * (0.5 * dt);
    for a in 0..3 {
        i[a] = i[a].clamp(cfg.i_min[a], cfg.i_max[a]);
    }
    state.integral = i;
    state.prev_error = Some(e);
    let ev = r.velocity - est.velocity;
    let accel = cfg.kp.component_mul(&e) + cfg.ki.component_mul(&i) + cfg.kd.component_mul(&ev);
    let yaw_rate = cfg.kp_yaw * wrap_angle(r.yaw - est.yaw);
    (accel, yaw_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    InProgress,
    Done,
}

/// Moves a reference point along a waypoint polyline.
///
/// The reference speed ramps at `reference_accel`, slows before corners
/// (to `v·cos θ` of the turn angle, zero for turns of 90° or more) and
/// before the final waypoint, may not pass a waypoint until the robot is
/// within the acceptance radius of it, and pauses while it leads the robot
/// by more than `max_lead`.
#[derive(Debug, Clone)]
pub struct PathTracker {
    path: Vec<Vec3>,
    /// Arc length at each waypoint.
    arc: Vec<f64>,
    /// Speed allowed when passing each waypoint.
    corner_speed: Vec<f64>,
    s: f64,
    v: f64,
    next: usize,
    yaw: f64,
    done: bool,
}

impl PathTracker {
    pub fn new(path: Vec<Vec3>, initial_yaw: f64, cfg: &ControllerConfig) -> Self {
        assert!(!path.is_empty(), "path must be nonempty");
        let mut arc = vec![0.0];
        for w in path.windows(2) {
            arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
        }
        let n = path.len();
        let mut corner_speed = vec![cfg.reference_speed; n];
        corner_speed[n - 1] = 0.0;
        for i in 1..n.saturating_sub(1) {
            let a = path[i] - path[i - 1];
            let b = path[i + 1] - path[i];
            let cos = if a.norm() > 1e-9 && b.norm() > 1e-9 {
                a.normalize().dot(&b.normalize())
            } else {
                1.0
            };
            corner_speed[i] = cfg.reference_speed * cos.max(0.0);
        }
        Self {
            path,
            arc,
            corner_speed,
            s: 0.0,
            v: 0.0,
            next: 1,
            yaw: initial_yaw,
            done: false,
        }
    }

    pub fn path(&self) -> &[Vec3] {
        &self.path
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reference_speed(&self) -> f64 {
        self.v
    }

    fn point_at(&self, s: f64) -> (Vec3, Vec3) {
        let n = self.path.len();
        if n == 1 {
            return (self.path[0], Vec3::zeros());
        }
        let mut i = 1;
        while i < n - 1 && self.arc[i] < s {
            i += 1;
        }
        let seg = self.path[i] - self.path[i - 1];
        let len = self.arc[i] - self.arc[i - 1];
        if len <= 0.0 {
            return (self.path[i], Vec3::zeros());
        }
        let t = ((s - self.arc[i - 1]) / len).clamp(0.0, 1.0);
        (self.path[i - 1] + seg * t, seg / len)
    }

    /// Advance the reference by `dt` and return it.
    pub fn advance(&mut self, est: &Vec3, dt: f64, cfg: &ControllerConfig) -> (Reference, TrackStatus) {
        let n = self.path.len();
        // Waypoints the robot has reached release the reference.
        while self.next < n && (self.path[self.next] - est).norm() <= cfg.acceptance_radius && self.s >= self.arc[self.next] - 1e-9 {
            self.next += 1;
        }
        let last = *self.path.last().unwrap();
        if self.next >= n && (last - est).norm() <= cfg.acceptance_radius {
            self.done = true;
        }
        if self.done {
            self.v = 0.0;
            return (
                Reference {
                    position: last,
                    yaw: self.yaw,
                    velocity: Vec3::zeros(),
                },
                TrackStatus::Done,
            );
        }
        let cap = if self.next < n { self.arc[self.next] } else { *self.arc.last().unwrap() };
        let mut target = cfg.reference_speed;
        for i in self.next.max(1)..n {
            let dist = (self.arc[i] - self.s).max(0.0);
            target = target.min((self.corner_speed[i].powi(2) + 2.0 * cfg.reference_accel * dist).sqrt());
            if i > self.next + 3 {
                break;
            }
        }
        let (here, _) = self.point_at(self.s);
        if (here - est).norm() > cfg.max_lead {
            target = 0.0;
        }
        self.v = if target > self.v { (self.v + cfg.reference_accel * dt).min(target) } else { target };
        self.s += self.v * dt;
        if self.s >= cap {
            // Hold at a waypoint the robot has not reached yet.
            self.s = cap;
            self.v = 0.0;
        }
        let (position, tangent) = self.point_at(self.s);
        let horiz = Vec3::new(tangent.x, tangent.y, 0.0);
        if horiz.norm() > 1e-6 {
            self.yaw = horiz.y.atan2(horiz.x);
        }
        (
            Reference {
                position,
                yaw: self.yaw,
                velocity: tangent * self.v,
            },
            TrackStatus::InProgress,
        )
    }
}

/// Advance the tracker and run the controller on the resulting reference.
pub fn track_path(
    ctrl: &mut ControllerState,
    tracker: &mut PathTracker,
    est: &Estimate,
    dt: f64,
    cfg: &ControllerConfig,
) -> (Vec3, f64, TrackStatus) {
    let (r, status) = tracker.advance(&est.position, dt, cfg);
    let (a, yr) = control_step(ctrl, &r, est, dt, cfg);
    (a, yr, status)
}
