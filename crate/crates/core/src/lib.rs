//! Monocular pan-tilt human following: visual-servo controller, failure
//! recovery for the tracker, and a deterministic kinematic simulator to run
//! them in closed loop.

// Negated comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod diagnostics;
pub mod geometry;
pub mod perception;
pub mod simworld;

pub use controller::{
    compute_errors, control_law, controller_step, jacobian_terms, robot_angular_strategy,
    BoxMeasurement, ControlCommand, ControllerConfig, ControllerGains, ControllerState,
    ImageErrors, JacobianMode, JacobianTerms, SaturationLimits,
};
pub use geometry::{
    depth_from_height, project, rotation_camera_from_robot, world_to_camera, CameraIntrinsics,
    CameraPoint, PanTiltAngles, PlanarPose, RotationMatrix,
};
pub use perception::{NoiseModel, PerceptionPipeline, RecoveryConfig, RecoveryState};
pub use simworld::{
    run_scenario, BodyModel, LogRow, ScenarioConfig, SimState, Simulation, TargetTrajectory,
    TimeSeriesLog,
};
