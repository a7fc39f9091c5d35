//! Deterministic kinematic world and the closed-loop scenario runner.
//!
//! The robot is a unicycle carrying the pan-tilt head on its yaw axis. The
//! person is a vertical segment standing on the ground plane; the box the
//! tracker would report is synthesized by projecting the body-center point
//! and the head-top point.

use crate::controller::{
    compute_errors, controller_step, BoxMeasurement, ControlCommand, ControllerConfig,
    ControllerError, ControllerGains, ControllerState, JacobianMode, SaturationLimits,
};
use crate::geometry::{
    project, world_to_camera, wrap_angle, CameraIntrinsics, GeometryError, JointLimits,
    PanTiltAngles, PlanarPose,
};
use crate::perception::{NoiseModel, PerceptionError, PerceptionPipeline, RecoveryConfig};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

impl GroundPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub robot: PlanarPose,
    pub angles: PanTiltAngles,
    pub target: GroundPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetTrajectory {
    /// `(cx - r cos(rate t + phase), cy - r sin(rate t + phase))`.
    Circle {
        center: GroundPoint,
        radius: f64,
        rate: f64,
        #[serde(default)]
        phase: f64,
    },
    Line {
        start: GroundPoint,
        velocity: GroundPoint,
    },
    /// Constant-speed polyline; the target stops at the last waypoint.
    Waypoints {
        points: Vec<GroundPoint>,
        speed: f64,
    },
}

impl TargetTrajectory {
    pub fn stationary(at: GroundPoint) -> Self {
        Self::Line {
            start: at,
            velocity: GroundPoint::default(),
        }
    }

    /// The circle used in the reference simulation.
    pub fn reference_circle() -> Self {
        Self::Circle {
            center: GroundPoint::new(0.5, 0.5),
            radius: 0.4,
            rate: 1.0,
            phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::Circle { radius, rate, .. } => {
                if !(*radius > 0.0) {
                    return Err("circle radius must be > 0".into());
                }
                if !rate.is_finite() {
                    return Err("circle rate must be finite".into());
                }
            }
            Self::Line { .. } => {}
            Self::Waypoints { points, speed } => {
                if points.is_empty() {
                    return Err("waypoint list must be non-empty".into());
                }
                if !(*speed >= 0.0) {
                    return Err("waypoint speed must be >= 0".into());
                }
            }
        }
        Ok(())
    }
}

pub fn target_position(t: f64, traj: &TargetTrajectory) -> GroundPoint {
    match traj {
        TargetTrajectory::Circle {
            center,
            radius,
            rate,
            phase,
        } => {
            let (s, c) = (rate * t + phase).sin_cos();
            GroundPoint::new(center.x - radius * c, center.y - radius * s)
        }
        TargetTrajectory::Line { start, velocity } => {
            GroundPoint::new(start.x + velocity.x * t, start.y + velocity.y * t)
        }
        TargetTrajectory::Waypoints { points, speed } => {
            let mut remaining = speed * t;
            for pair in points.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let len = (b.x - a.x).hypot(b.y - a.y);
                if remaining <= len && len > 0.0 {
                    let f = remaining / len;
                    return GroundPoint::new(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y));
                }
                remaining -= len;
            }
            *points.last().expect("validated non-empty")
        }
    }
}

/// Heights above the ground, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyModel {
    pub camera_height: f64,
    pub body_center_height: f64,
    pub head_height: f64,
}

impl Default for BodyModel {
    fn default() -> Self {
        Self {
            camera_height: 0.7,
            body_center_height: 0.9,
            head_height: 1.8,
        }
    }
}

impl BodyModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.camera_height > 0.0 && self.camera_height < self.head_height) {
            return Err("need 0 < camera_height < head_height".into());
        }
        if (self.body_center_height - self.head_height / 2.0).abs() > 1e-9 {
            return Err("body_center_height must equal head_height / 2".into());
        }
        if self.body_center_height == self.camera_height {
            return Err("body_center_height must differ from camera_height".into());
        }
        Ok(())
    }

    /// Inverse heights of the body center and head top above the camera.
    pub fn lambdas(&self) -> (f64, f64) {
        (
            1.0 / (self.body_center_height - self.camera_height),
            1.0 / (self.head_height - self.camera_height),
        )
    }

    /// Gains with the exact inverse heights of this body.
    pub fn exact_gains(&self, base: ControllerGains) -> ControllerGains {
        let (lambda1, lambda2) = self.lambdas();
        ControllerGains {
            lambda1,
            lambda2,
            ..base
        }
    }
}

/// Advances the robot pose with the pre-update heading, then the joints.
pub fn integrate(
    state: &SimState,
    cmd: &ControlCommand,
    dt: f64,
    limits: &JointLimits,
) -> SimState {
    debug_assert!(dt > 0.0);
    let th = state.robot.theta;
    let robot = PlanarPose {
        x: state.robot.x + cmd.v_r * th.cos() * dt,
        y: state.robot.y + cmd.v_r * th.sin() * dt,
        theta: wrap_angle(th + cmd.omega_r * dt),
    };
    let angles = PanTiltAngles::new(
        state.angles.alpha + cmd.omega_alpha * dt,
        state.angles.beta + cmd.omega_beta * dt,
    )
    .clamped(limits);
    SimState {
        t: state.t + dt,
        robot,
        angles,
        target: state.target,
    }
}

/// Exact unicycle motion under constant `(V_r, omega_r)` over `dt`.
pub fn integrate_exact_arc(pose: &PlanarPose, v_r: f64, omega_r: f64, dt: f64) -> PlanarPose {
    let th = pose.theta;
    if omega_r.abs() < 1e-12 {
        return PlanarPose {
            x: pose.x + v_r * th.cos() * dt,
            y: pose.y + v_r * th.sin() * dt,
            theta: th,
        };
    }
    let th1 = th + omega_r * dt;
    let r = v_r / omega_r;
    PlanarPose {
        x: pose.x + r * (th1.sin() - th.sin()),
        y: pose.y - r * (th1.cos() - th.cos()),
        theta: wrap_angle(th1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderedBox {
    pub meas: BoxMeasurement,
    /// Box center inside the image.
    pub visible: bool,
    /// Optical-axis depth of the body-center point.
    pub depth: f64,
}

/// Ground-truth box, or `None` when either point is behind the camera.
pub fn render_measurement(
    state: &SimState,
    body: &BodyModel,
    k: &CameraIntrinsics,
) -> Option<RenderedBox> {
    let center = Vector3::new(state.target.x, state.target.y, body.body_center_height);
    let head = Vector3::new(state.target.x, state.target.y, body.head_height);
    let pc = world_to_camera(&state.robot, body.camera_height, state.angles, &center);
    let ph = world_to_camera(&state.robot, body.camera_height, state.angles, &head);
    let c = project(pc, k).ok()?;
    let h = project(ph, k).ok()?;
    Some(RenderedBox {
        meas: BoxMeasurement::new(c.u, c.v, h.v, 1.0),
        visible: k.contains(c),
        depth: pc.z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub robot: PlanarPose,
    pub angles: PanTiltAngles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub body: BodyModel,
    #[serde(default)]
    pub gains: ControllerGains,
    #[serde(default)]
    pub limits: SaturationLimits,
    #[serde(default)]
    pub joint_limits: JointLimits,
    pub trajectory: TargetTrajectory,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub recovery: RecoveryConfig,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: JacobianMode,
}

fn default_dt() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("`{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

impl ConfigError {
    fn at(field: &'static str, message: impl Into<String>) -> Self {
        Self::Invalid {
            field,
            message: message.into(),
        }
    }

    pub fn field(&self) -> &'static str {
        match self {
            Self::Invalid { field, .. } => field,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::at("dt", "must be > 0"));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(ConfigError::at("duration", "must be >= 0"));
        }
        self.intrinsics
            .validate()
            .map_err(|e: GeometryError| ConfigError::at("intrinsics", e.to_string()))?;
        self.body
            .validate()
            .map_err(|e| ConfigError::at("body", e))?;
        self.gains
            .validate()
            .map_err(|e: ControllerError| ConfigError::at("gains", e.to_string()))?;
        self.limits
            .validate()
            .map_err(|e| ConfigError::at("limits", e.to_string()))?;
        if !(self.joint_limits.alpha_max > 0.0 && self.joint_limits.beta_max > 0.0) {
            return Err(ConfigError::at("joint_limits", "limits must be > 0"));
        }
        self.trajectory
            .validate()
            .map_err(|e| ConfigError::at("trajectory", e))?;
        self.noise
            .validate()
            .map_err(|e: PerceptionError| ConfigError::at("noise", e.to_string()))?;
        self.recovery
            .validate()
            .map_err(|e| ConfigError::at("recovery", e.to_string()))?;
        self.initial
            .angles
            .check(&self.joint_limits)
            .map_err(|e| ConfigError::at("initial.angles", e.to_string()))?;
        Ok(())
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            gains: self.gains,
            limits: self.limits,
            mode: self.mode,
        }
    }
}

/// One logged tick. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub e_u: f64,
    pub e_v: f64,
    pub e_v2: f64,
    pub h: f64,
    #[serde(rename = "V_r")]
    pub v_r: f64,
    pub omega_r: f64,
    pub omega_alpha: f64,
    pub omega_beta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub robot_x: f64,
    pub robot_y: f64,
    pub theta: f64,
    pub target_x: f64,
    pub target_y: f64,
    pub score: f64,
    pub region_scale: f64,
    #[serde(with = "bool_as_int")]
    pub failure_state: bool,
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!(
                "expected 0 or 1, got {other}"
            ))),
        }
    }
}

pub const CSV_COLUMNS: [&str; 19] = [
    "t",
    "e_u",
    "e_v",
    "e_v2",
    "h",
    "V_r",
    "omega_r",
    "omega_alpha",
    "omega_beta",
    "alpha",
    "beta",
    "robot_x",
    "robot_y",
    "theta",
    "target_x",
    "target_y",
    "score",
    "region_scale",
    "failure_state",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeriesLog {
    pub rows: Vec<LogRow>,
}

impl TimeSeriesLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Closed-loop run; bit-identical for identical configs.
pub fn run_scenario(config: &ScenarioConfig) -> Result<TimeSeriesLog, ConfigError> {
    config.validate()?;
    let mut sim = Simulation::new(config);
    let mut log = TimeSeriesLog {
        rows: Vec::with_capacity(config.ticks()),
    };
    for _ in 0..config.ticks() {
        log.rows.push(sim.tick().row);
    }
    Ok(log)
}

/// Everything produced by one tick, beyond the logged row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub row: LogRow,
    /// State at which the command was computed.
    pub state: SimState,
    pub rendered: Option<RenderedBox>,
    pub command: ControlCommand,
    pub initialized: bool,
    pub hold: bool,
}

/// Stepwise access to the closed loop.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    controller: ControllerConfig,
    state: SimState,
    perception: PerceptionPipeline,
    memory: ControllerState,
    tick: u64,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let state = SimState {
            t: 0.0,
            robot: PlanarPose {
                theta: wrap_angle(config.initial.robot.theta),
                ..config.initial.robot
            },
            angles: config.initial.angles,
            target: target_position(0.0, &config.trajectory),
        };
        Self {
            controller: config.controller_config(),
            perception: PerceptionPipeline::new(config.recovery, config.noise.clone(), rng),
            config: config.clone(),
            state,
            memory: ControllerState::default(),
            tick: 0,
        }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn tick(&mut self) -> TickRecord {
        let cfg = &self.config;
        let k = &cfg.intrinsics;
        let t = self.tick as f64 * cfg.dt;
        self.state.t = t;
        self.state.target = target_position(t, &cfg.trajectory);
        let state = self.state;

        let rendered = render_measurement(&state, &cfg.body, k);
        let in_view = rendered.filter(|r| r.visible).map(|r| r.meas);
        let seen = self.perception.step(in_view.as_ref(), t, k);

        let command = match (seen.meas, seen.hold) {
            (Some(_), true) => self.memory.hold(),
            (Some(meas), false) => {
                controller_step(&mut self.memory, &meas, state.angles, &self.controller, k)
            }
            (None, _) => ControlCommand::zero(),
        };

        let truth_err = rendered.map(|r| {
            (
                compute_errors(&r.meas, k, cfg.gains.desired_half_height),
                r.meas.half_height(),
            )
        });
        let (e_u, e_v, e_v2, h) = match truth_err {
            Some((e, h)) => (e.e_u, e.e_v, e.e_v2, h),
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        let row = LogRow {
            t,
            e_u,
            e_v,
            e_v2,
            h,
            v_r: command.v_r,
            omega_r: command.omega_r,
            omega_alpha: command.omega_alpha,
            omega_beta: command.omega_beta,
            alpha: state.angles.alpha,
            beta: state.angles.beta,
            robot_x: state.robot.x,
            robot_y: state.robot.y,
            theta: state.robot.theta,
            target_x: state.target.x,
            target_y: state.target.y,
            score: seen.score,
            region_scale: seen.region_scale,
            failure_state: seen.failure_state,
        };

        self.state = integrate(&state, &command, cfg.dt, &cfg.joint_limits);
        self.tick += 1;
        TickRecord {
            row,
            state,
            rendered,
            command,
            initialized: seen.initialized,
            hold: seen.hold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn circle_examples() {
        let c = TargetTrajectory::reference_circle();
        let p = target_position(0.0, &c);
        assert!((p.x - 0.1).abs() < 1e-15 && (p.y - 0.5).abs() < 1e-15);
        let p = target_position(PI / 2.0, &c);
        assert!((p.x - 0.5).abs() < 1e-12 && (p.y - 0.1).abs() < 1e-12);
    }

    #[test]
    fn waypoint_interpolation() {
        let w = TargetTrajectory::Waypoints {
            points: vec![GroundPoint::new(0.0, 0.0), GroundPoint::new(1.0, 0.0)],
            speed: 0.5,
        };
        assert_eq!(target_position(1.0, &w), GroundPoint::new(0.5, 0.0));
        assert_eq!(target_position(10.0, &w), GroundPoint::new(1.0, 0.0));
        let corner = TargetTrajectory::Waypoints {
            points: vec![
                GroundPoint::new(0.0, 0.0),
                GroundPoint::new(1.0, 0.0),
                GroundPoint::new(1.0, 2.0),
            ],
            speed: 1.0,
        };
        assert_eq!(target_position(2.0, &corner), GroundPoint::new(1.0, 1.0));
        assert!(TargetTrajectory::Waypoints {
            points: vec![],
            speed: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn line_motion() {
        let l = TargetTrajectory::Line {
            start: GroundPoint::new(1.0, 2.0),
            velocity: GroundPoint::new(0.5, -1.0),
        };
        assert_eq!(target_position(2.0, &l), GroundPoint::new(2.0, 0.0));
    }

    fn origin_state() -> SimState {
        SimState {
            t: 0.0,
            robot: PlanarPose::default(),
            angles: PanTiltAngles::default(),
            target: GroundPoint::default(),
        }
    }

    #[test]
    fn straight_and_pan_integration() {
        let lim = JointLimits::default();
        let cmd = ControlCommand {
            v_r: 1.0,
            ..ControlCommand::zero()
        };
        let s = integrate(&origin_state(), &cmd, 0.1, &lim);
        assert_eq!(s.robot.x, 0.1);
        assert_eq!(s.robot.y, 0.0);
        assert_eq!(s.t, 0.1);

        let cmd = ControlCommand {
            omega_alpha: 0.5,
            ..ControlCommand::zero()
        };
        let s = integrate(&origin_state(), &cmd, 0.2, &lim);
        assert_eq!(s.angles.alpha, 0.1);
        assert_eq!(s.robot, PlanarPose::default());
    }

    #[test]
    fn joints_are_clamped() {
        let lim = JointLimits::default();
        let cmd = ControlCommand {
            omega_beta: 10.0,
            ..ControlCommand::zero()
        };
        let s = integrate(&origin_state(), &cmd, 1.0, &lim);
        assert_eq!(s.angles.beta, lim.beta_max);
    }

    #[test]
    fn euler_tracks_exact_arc() {
        let lim = JointLimits::default();
        let cmd = ControlCommand {
            v_r: 1.0,
            omega_r: 1.0,
            ..ControlCommand::zero()
        };
        let mut s = origin_state();
        for _ in 0..1000 {
            s = integrate(&s, &cmd, 1e-3, &lim);
        }
        let exact = integrate_exact_arc(&PlanarPose::default(), 1.0, 1.0, 1.0);
        // Closed form: (sin 1, 1 - cos 1).
        assert!((exact.x - 1f64.sin()).abs() < 1e-15);
        assert!((exact.y - (1.0 - 1f64.cos())).abs() < 1e-15);
        assert!((s.robot.x - exact.x).abs() < 1e-3);
        assert!((s.robot.y - exact.y).abs() < 1e-3);
        assert!((s.robot.theta - exact.theta).abs() < 1e-9);
    }

    #[test]
    fn render_reference_distance() {
        let k = CameraIntrinsics::default();
        let body = BodyModel::default();
        let mut s = origin_state();
        s.target = GroundPoint::new(4.5, 0.0);
        let r = render_measurement(&s, &body, &k).unwrap();
        assert!((r.meas.u - k.u0).abs() < 1e-12);
        assert!((r.meas.half_height() - 100.0).abs() < 1e-9);
        assert!(r.visible);
        s.target = GroundPoint::new(9.0, 0.0);
        let r = render_measurement(&s, &body, &k).unwrap();
        assert!((r.meas.half_height() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn render_on_axis_row() {
        let k = CameraIntrinsics::default();
        let body = BodyModel {
            camera_height: 0.9,
            body_center_height: 0.9,
            head_height: 1.8,
        };
        let mut s = origin_state();
        s.target = GroundPoint::new(3.0, 0.0);
        let r = render_measurement(&s, &body, &k).unwrap();
        assert_eq!(r.meas.v, k.v0);
    }

    #[test]
    fn render_behind_camera_is_none() {
        let k = CameraIntrinsics::default();
        let mut s = origin_state();
        s.target = GroundPoint::new(-2.0, 0.0);
        assert!(render_measurement(&s, &BodyModel::default(), &k).is_none());
    }

    #[test]
    fn render_out_of_view_flag() {
        let k = CameraIntrinsics::default();
        let mut s = origin_state();
        s.target = GroundPoint::new(1.0, 3.0);
        let r = render_measurement(&s, &BodyModel::default(), &k).unwrap();
        assert!(!r.visible);
    }

    #[test]
    fn body_lambdas() {
        let (l1, l2) = BodyModel::default().lambdas();
        assert!((l1 - 5.0).abs() < 1e-12);
        assert!((l2 - 1.0 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn config_validation_names_field() {
        let mut cfg = ScenarioConfig {
            intrinsics: CameraIntrinsics::default(),
            body: BodyModel::default(),
            gains: ControllerGains::default(),
            limits: SaturationLimits::default(),
            joint_limits: JointLimits::default(),
            trajectory: TargetTrajectory::reference_circle(),
            noise: NoiseModel::default(),
            recovery: RecoveryConfig::default(),
            initial: InitialState::default(),
            dt: 0.0,
            duration: 1.0,
            seed: 0,
            mode: JacobianMode::default(),
        };
        assert_eq!(cfg.validate().unwrap_err().field(), "dt");
        cfg.dt = 0.02;
        assert!(cfg.validate().is_ok());
        cfg.duration = 0.0;
        assert!(run_scenario(&cfg).unwrap().is_empty());
    }
}
