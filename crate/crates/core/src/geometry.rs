//! Frames, pinhole projection and depth recovery from a known height.
//!
//! Robot frame `F_r`: X forward, Y left, Z up, origin on the wheel axle.
//! Camera frame `F_c`: x right, y down, z along the optical axis. The pan
//! and tilt joints sit on the robot's vertical axis at the camera height, so
//! all four frames share one origin up to that vertical offset.
//!
//! Sign conventions:
//! * `alpha > 0` pans the optical axis to the left (counter-clockwise seen
//!   from above), the same sense as the robot yaw rate.
//! * `beta > 0` tilts the optical axis down.
//!
//! With these conventions the point dynamics reduce to the closed form in
//! [`point_rate_closed_form`].

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::f64::consts::FRAC_PI_3;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("joint angle {name}={value} outside limit ±{limit}")]
    JointLimit {
        name: &'static str,
        value: f64,
        limit: f64,
    },
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("depth unobservable: denominator {denominator} within {epsilon} of zero")]
    DepthUnobservable { denominator: f64, epsilon: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Pinhole parameters, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub u0: f64,
    pub v0: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            alpha_x: 500.0,
            alpha_y: 500.0,
            u0: 320.0,
            v0: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: &str| Err(GeometryError::InvalidIntrinsics(msg.to_string()));
        if !(self.alpha_x > 0.0) {
            return bad("alpha_x must be > 0");
        }
        if !(self.alpha_y > 0.0) {
            return bad("alpha_y must be > 0");
        }
        if !(self.u0 >= 0.0 && self.u0 < f64::from(self.width)) {
            return bad("u0 must lie in [0, width)");
        }
        if !(self.v0 >= 0.0 && self.v0 < f64::from(self.height)) {
            return bad("v0 must lie in [0, height)");
        }
        Ok(())
    }

    pub fn contains(&self, px: Pixel) -> bool {
        px.u >= 0.0 && px.u < f64::from(self.width) && px.v >= 0.0 && px.v < f64::from(self.height)
    }

    /// Threshold below which the depth-from-height denominator is treated as zero.
    pub fn depth_epsilon(&self) -> f64 {
        1e-6 * self.alpha_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CameraPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

/// Pan (`alpha`) and tilt (`beta`) joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanTiltAngles {
    pub alpha: f64,
    pub beta: f64,
}

impl PanTiltAngles {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    pub fn check(&self, limits: &JointLimits) -> Result<(), GeometryError> {
        if !(self.alpha.abs() <= limits.alpha_max) {
            return Err(GeometryError::JointLimit {
                name: "alpha",
                value: self.alpha,
                limit: limits.alpha_max,
            });
        }
        if !(self.beta.abs() <= limits.beta_max) {
            return Err(GeometryError::JointLimit {
                name: "beta",
                value: self.beta,
                limit: limits.beta_max,
            });
        }
        Ok(())
    }

    pub fn clamped(&self, limits: &JointLimits) -> Self {
        Self {
            alpha: self.alpha.clamp(-limits.alpha_max, limits.alpha_max),
            beta: self.beta.clamp(-limits.beta_max, limits.beta_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub alpha_max: f64,
    pub beta_max: f64,
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            alpha_max: FRAC_PI_2,
            beta_max: FRAC_PI_3,
        }
    }
}

/// Planar robot pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Rotation taking robot-frame coordinates to camera-frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub Matrix3<f64>);

impl RotationMatrix {
    /// `R = tilt(beta) * pan(alpha) * base`, no limit check.
    pub fn camera_from_robot(angles: PanTiltAngles) -> Self {
        // Robot (forward, left, up) -> camera (right, down, optical axis).
        let base = Matrix3::new(
            0.0, -1.0, 0.0, //
            0.0, 0.0, -1.0, //
            1.0, 0.0, 0.0,
        );
        // The vertical axis is -y in the base-aligned camera frame; a left pan
        // is therefore a positive rotation about +y there.
        let pan = Rotation3::from_axis_angle(&Vector3::y_axis(), angles.alpha);
        // Tilting the optical axis down is a positive rotation about +x.
        let tilt = Rotation3::from_axis_angle(&Vector3::x_axis(), angles.beta);
        Self(tilt.matrix() * pan.matrix() * base)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }
}

pub fn rotation_camera_from_robot(
    angles: PanTiltAngles,
    limits: &JointLimits,
) -> Result<RotationMatrix, GeometryError> {
    angles.check(limits)?;
    Ok(RotationMatrix::camera_from_robot(angles))
}

/// Pinhole projection with `v` increasing downward.
pub fn project(p: CameraPoint, k: &CameraIntrinsics) -> Result<Pixel, GeometryError> {
    if !(p.z > 0.0) {
        return Err(GeometryError::BehindCamera { z: p.z });
    }
    Ok(Pixel {
        u: k.u0 + k.alpha_x * p.x / p.z,
        v: k.v0 + k.alpha_y * p.y / p.z,
    })
}

/// World point into the robot frame (origin at the camera's vertical offset).
pub fn world_to_robot(
    pose: &PlanarPose,
    camera_height: f64,
    p_world: &Vector3<f64>,
) -> Vector3<f64> {
    let d = p_world - Vector3::new(pose.x, pose.y, camera_height);
    let (s, c) = pose.theta.sin_cos();
    Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
}

pub fn world_to_camera(
    pose: &PlanarPose,
    camera_height: f64,
    angles: PanTiltAngles,
    p_world: &Vector3<f64>,
) -> CameraPoint {
    let p_robot = world_to_robot(pose, camera_height, p_world);
    CameraPoint::from_vector(RotationMatrix::camera_from_robot(angles).apply(&p_robot))
}

/// Coordinates in the tilt frame `F_b`, i.e. the camera frame with the tilt
/// undone: `y` is then the downward vertical offset from the camera.
pub fn camera_to_tilt_frame(p: CameraPoint, beta: f64) -> Vector3<f64> {
    let (s, c) = beta.sin_cos();
    Vector3::new(p.x, c * p.y + s * p.z, -s * p.y + c * p.z)
}

/// Optical-axis depth of a point whose downward vertical offset from the
/// camera is `b_y` (negative above the camera), given its row error.
pub fn depth_from_height(
    e_v: f64,
    beta: f64,
    b_y: f64,
    k: &CameraIntrinsics,
) -> Result<f64, GeometryError> {
    let (s, c) = beta.sin_cos();
    let denominator = e_v * c + k.alpha_y * s;
    let epsilon = k.depth_epsilon();
    if denominator.abs() <= epsilon {
        return Err(GeometryError::DepthUnobservable {
            denominator,
            epsilon,
        });
    }
    Ok(k.alpha_y * b_y / denominator)
}

/// Camera linear and angular velocity expressed in `F_c`.
///
/// The tilt rate enters with a negative sign on the camera x axis because a
/// positive `beta` rate turns the optical axis down, which is a rotation
/// about `-x_c`.
pub fn camera_twist(
    angles: PanTiltAngles,
    v_r: f64,
    omega_r: f64,
    omega_alpha: f64,
    omega_beta: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let r = RotationMatrix::camera_from_robot(angles);
    let linear = r.apply(&Vector3::new(v_r, 0.0, 0.0));
    let angular = r.apply(&Vector3::new(0.0, 0.0, omega_r + omega_alpha))
        - Vector3::new(omega_beta, 0.0, 0.0);
    (linear, angular)
}

/// Velocity of a static world point seen from the moving camera,
/// `-v_c - w_c x P`.
pub fn point_rate(
    p: CameraPoint,
    angles: PanTiltAngles,
    v_r: f64,
    omega_r: f64,
    omega_alpha: f64,
    omega_beta: f64,
) -> Vector3<f64> {
    let (v, w) = camera_twist(angles, v_r, omega_r, omega_alpha, omega_beta);
    -v - w.cross(&p.to_vector())
}

/// Componentwise expansion of [`point_rate`].
pub fn point_rate_closed_form(
    p: CameraPoint,
    angles: PanTiltAngles,
    v_r: f64,
    omega_r: f64,
    omega_alpha: f64,
    omega_beta: f64,
) -> Vector3<f64> {
    let (sa, ca) = angles.alpha.sin_cos();
    let (sb, cb) = angles.beta.sin_cos();
    let w = omega_alpha + omega_r;
    Vector3::new(
        -v_r * sa + w * cb * p.z - w * sb * p.y,
        v_r * ca * sb + w * sb * p.x - omega_beta * p.z,
        -v_r * ca * cb + omega_beta * p.y - w * cb * p.x,
    )
}

pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut t = theta.rem_euclid(TAU);
    if t > PI {
        t -= TAU;
    }
    t
}
