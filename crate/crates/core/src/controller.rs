//! Image-error visual servo for the pan-tilt camera and the mobile base.
//!
//! Three pixel errors are regulated: the horizontal and vertical offset of
//! the box center from the principal point, and the deviation of the box
//! half-height `h = v - v2` from the setpoint `H`. Their rates are linear in
//! `(V_r, omega_alpha + omega_r, omega_beta)`:
//!
//! ```text
//! de_u/dt  = l1 V O1 + A w + B wb
//! de_v/dt  = l1 V O2 + C w + D wb
//! de_v2/dt = l1 V O2 + C w + D wb - l2 V O3 - E w - F wb      (w = wa + wr)
//! ```
//!
//! where `l1`, `l2` are the inverse heights of the body center and head top
//! above the camera. Depth never appears: it is eliminated with the known
//! height of each point. The control law inverts this system so that each
//! error decays as `-K_i e_i`.

use crate::geometry::{CameraIntrinsics, PanTiltAngles};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_6;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("singular configuration: |denominator| = {denominator:e} <= {epsilon:e}")]
    SingularConfiguration { denominator: f64, epsilon: f64 },
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("invalid saturation limits: {0}")]
    InvalidLimits(String),
}

/// Tracked human box: center `(u, v)` and top-border midpoint row `v2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxMeasurement {
    pub u: f64,
    pub v: f64,
    pub v2: f64,
    pub score: f64,
}

impl BoxMeasurement {
    pub fn new(u: f64, v: f64, v2: f64, score: f64) -> Self {
        Self { u, v, v2, score }
    }

    pub fn half_height(&self) -> f64 {
        self.v - self.v2
    }

    pub fn is_valid(&self) -> bool {
        self.u.is_finite()
            && self.v.is_finite()
            && self.v2.is_finite()
            && self.v2 < self.v
            && (0.0..=1.0).contains(&self.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImageErrors {
    pub e_u: f64,
    pub e_v: f64,
    pub e_v2: f64,
}

impl ImageErrors {
    pub fn as_array(&self) -> [f64; 3] {
        [self.e_u, self.e_v, self.e_v2]
    }
}

pub fn compute_errors(
    meas: &BoxMeasurement,
    k: &CameraIntrinsics,
    desired_half_height: f64,
) -> ImageErrors {
    ImageErrors {
        e_u: meas.u - k.u0,
        e_v: meas.v - k.v0,
        e_v2: meas.v - meas.v2 - desired_half_height,
    }
}

/// How the interaction terms are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    /// Literal transcription of the published term block.
    AsPrinted,
    /// Terms obtained by differentiating the pixel errors through the
    /// pinhole model.
    #[default]
    #[serde(rename = "re-derived")]
    Rederived,
}

impl std::str::FromStr for JacobianMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "re-derived" => Ok(Self::Rederived),
            other => Err(format!(
                "unknown jacobian mode `{other}` (expected as-printed | re-derived)"
            )),
        }
    }
}

impl std::fmt::Display for JacobianMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AsPrinted => "as-printed",
            Self::Rederived => "re-derived",
        })
    }
}

/// Coefficients of the error-rate model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianTerms {
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

/// Column of the head-top point, inferred from the box.
///
/// The head top lies vertically above the body center, so both points share
/// the same horizontal coordinates in the tilt frame. Undoing the tilt on
/// the two viewing rays gives the depth ratio, and with it the column.
pub fn head_column_error(e_u: f64, e_v: f64, e_v_top: f64, beta: f64, alpha_y: f64) -> f64 {
    let (sb, cb) = beta.sin_cos();
    let forward_body = cb - sb * e_v / alpha_y;
    let forward_head = cb - sb * e_v_top / alpha_y;
    if forward_body.abs() < f64::EPSILON {
        return e_u;
    }
    e_u * forward_head / forward_body
}

pub fn jacobian_terms(
    err: &ImageErrors,
    meas: &BoxMeasurement,
    angles: PanTiltAngles,
    k: &CameraIntrinsics,
    mode: JacobianMode,
) -> JacobianTerms {
    let (ax, ay) = (k.alpha_x, k.alpha_y);
    let (sa, ca) = angles.alpha.sin_cos();
    let (sb, cb) = angles.beta.sin_cos();
    let (eu, ev) = (err.e_u, err.e_v);
    let ev_top = meas.v2 - k.v0;

    let body_row = ev * cb + ay * sb;
    let head_row = ev_top * cb + ay * sb;

    let omega2 = (ev * ca * cb + ay * ca * sb) * (-body_row) / ay;
    let omega3 = (ev_top * ca * cb + ay * ca * sb) * (-head_row) / ay;
    let a = (ax * ax * ay * cb - ax * ax * sb * ev + eu * eu * ay * cb) / (ax * ay);
    let b = -(eu * ev) / ay;
    let c = (ay * sb * eu + eu * ev * cb) / ax;
    let d = -(ay * ay + ev * ev) / ay;

    match mode {
        JacobianMode::AsPrinted => {
            // u2 is the top-border midpoint column, equal to u by construction.
            let eu_top = eu;
            JacobianTerms {
                omega1: (ax * sa - ev * ca * cb) * body_row / ay,
                omega2,
                omega3,
                a,
                b,
                c,
                d,
                e: (ay * sb * eu_top - eu_top * ev_top * cb) / ax,
                f: -(ay * ay + err.e_v2 * err.e_v2) / ay,
            }
        }
        JacobianMode::Rederived => {
            let eu_top = head_column_error(eu, ev, ev_top, angles.beta, ay);
            JacobianTerms {
                omega1: (ax * sa - eu * ca * cb) * body_row / ay,
                omega2,
                omega3,
                a,
                b,
                c,
                d,
                e: (ay * sb * eu_top + eu_top * ev_top * cb) / ax,
                f: -(ay * ay + ev_top * ev_top) / ay,
            }
        }
    }
}

/// Feedback gains and the height constants of the tracked person.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Inverse height (1/m) of the body center above the camera.
    pub lambda1: f64,
    /// Inverse height (1/m) of the head top above the camera.
    pub lambda2: f64,
    /// Desired half-height `H` of the box, pixels.
    pub desired_half_height: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k1: 0.5,
            k2: 0.5,
            k3: 0.5,
            lambda1: 5.0,
            lambda2: 1.0 / 1.1,
            desired_half_height: 100.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::InvalidGains(m.to_string()));
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0) {
            return bad("k1, k2, k3 must be > 0");
        }
        if !(self.desired_half_height > 0.0) {
            return bad("desired_half_height must be > 0");
        }
        if !(self.lambda1.is_finite() && self.lambda1 != 0.0) {
            return bad("lambda1 must be finite and nonzero");
        }
        if !(self.lambda2.is_finite() && self.lambda2 != 0.0) {
            return bad("lambda2 must be finite and nonzero");
        }
        Ok(())
    }
}

/// Predicted `(de_u, de_v, de_v2)/dt` for a given command.
pub fn predicted_error_rates(
    terms: &JacobianTerms,
    gains: &ControllerGains,
    v_r: f64,
    omega_r: f64,
    omega_alpha: f64,
    omega_beta: f64,
) -> [f64; 3] {
    let t = terms;
    let w = omega_alpha + omega_r;
    let l1 = gains.lambda1;
    let l2 = gains.lambda2;
    let de_u = l1 * v_r * t.omega1 + t.a * w + t.b * omega_beta;
    let de_v = l1 * v_r * t.omega2 + t.c * w + t.d * omega_beta;
    let de_v2 = de_v - l2 * v_r * t.omega3 - t.e * w - t.f * omega_beta;
    [de_u, de_v, de_v2]
}

/// Determinant of the rate model with respect to `(V_r, omega_alpha, omega_beta)`.
pub fn control_denominator(terms: &JacobianTerms, gains: &ControllerGains) -> f64 {
    let JacobianTerms {
        omega1: o1,
        omega2: o2,
        omega3: o3,
        a,
        b,
        c,
        d,
        e,
        f,
    } = *terms;
    let (l1, l2) = (gains.lambda1, gains.lambda2);
    (b * c - a * d) * o3 * l2 + (a * f - b * e) * o2 * l1 - (c * f - d * e) * o1 * l1
}

pub fn singular_epsilon(k: &CameraIntrinsics, gains: &ControllerGains) -> f64 {
    1e-6 * k.alpha_x * k.alpha_y * gains.lambda1.abs().max(gains.lambda2.abs())
}

/// Solves for `(V_r, omega_alpha, omega_beta)` given the robot yaw rate.
pub fn control_law(
    err: &ImageErrors,
    terms: &JacobianTerms,
    gains: &ControllerGains,
    omega_r: f64,
    epsilon: f64,
) -> Result<(f64, f64, f64), ControllerError> {
    let den = control_denominator(terms, gains);
    if !(den.abs() > epsilon) {
        return Err(ControllerError::SingularConfiguration {
            denominator: den,
            epsilon,
        });
    }
    let JacobianTerms {
        omega1: o1,
        omega2: o2,
        omega3: o3,
        a,
        b,
        c,
        d,
        e,
        f,
    } = *terms;
    let (l1, l2) = (gains.lambda1, gains.lambda2);
    let (k1, k2, k3) = (gains.k1, gains.k2, gains.k3);
    let (eu, ev, ev2) = (err.e_u, err.e_v, err.e_v2);
    let wr = omega_r;

    let v_r = -((b * c - a * d) * (k2 * ev - k3 * ev2) + (a * f - b * e) * k2 * ev
        - (c * f - d * e) * k1 * eu)
        / den;

    let omega_alpha = ((d * k1 * eu - b * k2 * ev - b * c * wr + a * d * wr) * o3 * l2
        + (b * e * wr - a * f * wr - b * k3 * ev2 + b * k2 * ev - f * k1 * eu) * o2 * l1
        + (c * f * wr - d * e * wr + d * k3 * ev2 - d * k2 * ev + f * k2 * ev) * o1 * l1)
        / den;

    let omega_beta = ((c * k2 * ev - c * k3 * ev2 - e * k2 * ev) * o1 * l1
        + (a * k2 * ev - c * k1 * eu) * o3 * l2
        + (a * k3 * ev2 - a * k2 * ev + e * k1 * eu) * o2 * l1)
        / den;

    Ok((v_r, omega_alpha, omega_beta))
}

/// Pan and tilt rates that keep the centering errors on their decay
/// profile for a fixed forward speed. Used when `V_r` saturates, so the
/// half-height channel alone absorbs the speed deficit.
pub fn centering_rates(
    err: &ImageErrors,
    terms: &JacobianTerms,
    gains: &ControllerGains,
    omega_r: f64,
    v_r: f64,
) -> Option<(f64, f64)> {
    let t = terms;
    let det = t.a * t.d - t.b * t.c;
    if det.abs() <= f64::EPSILON * (t.a * t.d).abs().max(1.0) {
        return None;
    }
    let ru = -gains.k1 * err.e_u - gains.lambda1 * v_r * t.omega1;
    let rv = -gains.k2 * err.e_v - gains.lambda1 * v_r * t.omega2;
    let w = (t.d * ru - t.b * rv) / det;
    let omega_beta = (t.a * rv - t.c * ru) / det;
    Some((w - omega_r, omega_beta))
}

/// Tilt-rate expression exactly as published, kept for the discrepancy
/// report. It does not satisfy the back-substitution identity.
pub fn printed_omega_beta(
    err: &ImageErrors,
    terms: &JacobianTerms,
    gains: &ControllerGains,
) -> f64 {
    let t = terms;
    let (l1, l2) = (gains.lambda1, gains.lambda2);
    let (k1, k2, k3) = (gains.k1, gains.k2, gains.k3);
    let (eu, ev, ev2) = (err.e_u, err.e_v, err.e_v2);
    ((t.c * k3 * ev2 - t.c * k2 * ev + t.e * k2 * ev) * t.omega1 * l1
        - (t.a * k2 * ev * l2 - t.c * k1 * eu) * t.omega3 * l2
        - (t.a * k2 * ev + t.a * k3 * ev2 + t.e * k1 * eu) * t.omega2 * l1)
        / control_denominator(terms, gains)
}

/// Robot yaw rate: zero inside the pan deadband, proportional outside.
pub fn robot_angular_strategy(alpha: f64) -> f64 {
    if -FRAC_PI_6 < alpha && alpha < FRAC_PI_6 {
        0.0
    } else {
        0.1 * alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationLimits {
    pub v_max: f64,
    pub omega_r_max: f64,
    pub omega_alpha_max: f64,
    pub omega_beta_max: f64,
}

impl Default for SaturationLimits {
    fn default() -> Self {
        Self {
            v_max: 1.2,
            omega_r_max: 1.0,
            omega_alpha_max: 1.5,
            omega_beta_max: 1.5,
        }
    }
}

impl SaturationLimits {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if [
            self.v_max,
            self.omega_r_max,
            self.omega_alpha_max,
            self.omega_beta_max,
        ]
        .iter()
        .all(|x| *x > 0.0)
        {
            Ok(())
        } else {
            Err(ControllerError::InvalidLimits(
                "all saturation bounds must be > 0".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SaturationFlags {
    pub v_r: bool,
    pub omega_r: bool,
    pub omega_alpha: bool,
    pub omega_beta: bool,
}

impl SaturationFlags {
    pub fn any(&self) -> bool {
        self.v_r || self.omega_r || self.omega_alpha || self.omega_beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlCommand {
    pub v_r: f64,
    pub omega_r: f64,
    pub omega_alpha: f64,
    pub omega_beta: f64,
    pub saturated: SaturationFlags,
    /// Set when this tick repeated the previous rates instead of solving.
    pub held: bool,
}

impl ControlCommand {
    pub fn zero() -> Self {
        Self::default()
    }

    fn clamp(
        v_r: f64,
        omega_r: f64,
        omega_alpha: f64,
        omega_beta: f64,
        lim: &SaturationLimits,
    ) -> Self {
        let sat = |x: f64, m: f64| (x.clamp(-m, m), x.abs() > m);
        let (v_r, s_v) = sat(v_r, lim.v_max);
        let (omega_r, s_r) = sat(omega_r, lim.omega_r_max);
        let (omega_alpha, s_a) = sat(omega_alpha, lim.omega_alpha_max);
        let (omega_beta, s_b) = sat(omega_beta, lim.omega_beta_max);
        Self {
            v_r,
            omega_r,
            omega_alpha,
            omega_beta,
            saturated: SaturationFlags {
                v_r: s_v,
                omega_r: s_r,
                omega_alpha: s_a,
                omega_beta: s_b,
            },
            held: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerConfig {
    pub gains: ControllerGains,
    pub limits: SaturationLimits,
    pub mode: JacobianMode,
}

/// Factor applied to `V_r` on every held tick.
pub const HOLD_DECAY: f64 = 0.5;

/// Memory for hold-and-decay. Owned by the caller; one per control loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState {
    last: ControlCommand,
}

impl ControllerState {
    pub fn last(&self) -> &ControlCommand {
        &self.last
    }

    /// Repeats the previous rates and halves the forward speed.
    pub fn hold(&mut self) -> ControlCommand {
        let mut cmd = self.last;
        cmd.v_r *= HOLD_DECAY;
        cmd.saturated = SaturationFlags::default();
        cmd.held = true;
        self.last = cmd;
        cmd
    }
}

/// One control tick: errors, terms, yaw strategy, inversion, clamp.
///
/// A singular configuration is not fatal: the previous rates are held and
/// the forward speed decays.
pub fn controller_step(
    state: &mut ControllerState,
    meas: &BoxMeasurement,
    angles: PanTiltAngles,
    config: &ControllerConfig,
    k: &CameraIntrinsics,
) -> ControlCommand {
    let err = compute_errors(meas, k, config.gains.desired_half_height);
    let terms = jacobian_terms(&err, meas, angles, k, config.mode);
    let omega_r = robot_angular_strategy(angles.alpha);
    let eps = singular_epsilon(k, &config.gains);
    match control_law(&err, &terms, &config.gains, omega_r, eps) {
        Ok((v_r, omega_alpha, omega_beta)) => {
            let (omega_alpha, omega_beta) = if v_r.abs() > config.limits.v_max {
                let v_sat = v_r.clamp(-config.limits.v_max, config.limits.v_max);
                centering_rates(&err, &terms, &config.gains, omega_r, v_sat)
                    .unwrap_or((omega_alpha, omega_beta))
            } else {
                (omega_alpha, omega_beta)
            };
            let cmd = ControlCommand::clamp(v_r, omega_r, omega_alpha, omega_beta, &config.limits);
            state.last = cmd;
            cmd
        }
        Err(ControllerError::SingularConfiguration { .. }) => state.hold(),
        Err(_) => unreachable!("control_law only reports singular configurations"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    fn k500() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    fn field_gains(k: f64) -> ControllerGains {
        ControllerGains {
            k1: k,
            k2: k,
            k3: k,
            lambda1: 5.0,
            lambda2: 0.91,
            desired_half_height: 100.0,
        }
    }

    /// Generic linear solve of the rate model, independent of the closed forms.
    fn solve_by_lu(
        err: &ImageErrors,
        t: &JacobianTerms,
        g: &ControllerGains,
        omega_r: f64,
    ) -> Vector3<f64> {
        let (l1, l2) = (g.lambda1, g.lambda2);
        let m = Matrix3::new(
            l1 * t.omega1,
            t.a,
            t.b, //
            l1 * t.omega2,
            t.c,
            t.d, //
            l1 * t.omega2 - l2 * t.omega3,
            t.c - t.e,
            t.d - t.f,
        );
        let rhs = Vector3::new(
            -g.k1 * err.e_u - t.a * omega_r,
            -g.k2 * err.e_v - t.c * omega_r,
            -g.k3 * err.e_v2 - (t.c - t.e) * omega_r,
        );
        m.lu().solve(&rhs).unwrap()
    }

    #[test]
    fn error_examples() {
        let k = k500();
        let e = compute_errors(&BoxMeasurement::new(320.0, 240.0, 140.0, 1.0), &k, 100.0);
        assert_eq!(e, ImageErrors::default());
        let e = compute_errors(
            &BoxMeasurement::new(320.0 + 211.0, 240.0, 140.0, 1.0),
            &k,
            100.0,
        );
        assert_eq!(e.e_u, 211.0);
        let e = compute_errors(&BoxMeasurement::new(300.0, 260.0, 150.0, 1.0), &k, 100.0);
        assert_eq!(
            e,
            ImageErrors {
                e_u: -20.0,
                e_v: 20.0,
                e_v2: 10.0
            }
        );
    }

    #[test]
    fn half_height_error_identity() {
        let k = k500();
        let m = BoxMeasurement::new(100.0, 300.0, 180.0, 0.9);
        let e = compute_errors(&m, &k, 80.0);
        assert_eq!(e.e_v2, m.half_height() - 80.0);
        assert!(m.is_valid());
        assert!(!BoxMeasurement::new(0.0, 100.0, 120.0, 1.0).is_valid());
    }

    #[test]
    fn centered_terms_as_printed() {
        let k = k500();
        let m = BoxMeasurement::new(320.0, 240.0, 140.0, 1.0);
        let e = compute_errors(&m, &k, 100.0);
        let t = jacobian_terms(
            &e,
            &m,
            PanTiltAngles::default(),
            &k,
            JacobianMode::AsPrinted,
        );
        assert_eq!(
            (t.a, t.b, t.c, t.d, t.e, t.f),
            (500.0, 0.0, 0.0, -500.0, 0.0, -500.0)
        );
        assert_eq!((t.omega1, t.omega2, t.omega3), (0.0, 0.0, -20.0));
    }

    #[test]
    fn centered_terms_re_derived_use_head_row() {
        let k = k500();
        let m = BoxMeasurement::new(320.0, 240.0, 140.0, 1.0);
        let e = compute_errors(&m, &k, 100.0);
        let t = jacobian_terms(
            &e,
            &m,
            PanTiltAngles::default(),
            &k,
            JacobianMode::Rederived,
        );
        // F depends on the head row v2 - v0 = -100, not on e_v2.
        assert_eq!(t.f, -520.0);
        assert_eq!((t.a, t.d, t.omega3), (500.0, -500.0, -20.0));
    }

    #[test]
    fn b_term_example() {
        let k = k500();
        let m = BoxMeasurement::new(370.0, 280.0, 150.0, 1.0);
        let e = compute_errors(&m, &k, 100.0);
        for mode in [JacobianMode::AsPrinted, JacobianMode::Rederived] {
            let t = jacobian_terms(&e, &m, PanTiltAngles::new(0.2, 0.0), &k, mode);
            assert_eq!(t.b, -4.0);
        }
    }

    #[test]
    fn head_column_matches_geometry() {
        use crate::geometry::{project, world_to_camera, PlanarPose};
        let k = k500();
        let angles = PanTiltAngles::new(0.1, -0.35);
        let pose = PlanarPose::default();
        let body = world_to_camera(&pose, 0.7, angles, &nalgebra::Vector3::new(3.0, -0.8, 0.9));
        let head = world_to_camera(&pose, 0.7, angles, &nalgebra::Vector3::new(3.0, -0.8, 1.8));
        let pb = project(body, &k).unwrap();
        let ph = project(head, &k).unwrap();
        let est = head_column_error(
            pb.u - k.u0,
            pb.v - k.v0,
            ph.v - k.v0,
            angles.beta,
            k.alpha_y,
        );
        assert!((est - (ph.u - k.u0)).abs() < 1e-9);
    }

    #[test]
    fn zero_errors_give_zero_command() {
        let k = k500();
        let m = BoxMeasurement::new(320.0, 240.0, 140.0, 1.0);
        let e = compute_errors(&m, &k, 100.0);
        let g = field_gains(0.5);
        let t = jacobian_terms(
            &e,
            &m,
            PanTiltAngles::default(),
            &k,
            JacobianMode::Rederived,
        );
        let cmd = control_law(&e, &t, &g, 0.0, singular_epsilon(&k, &g)).unwrap();
        assert_eq!(cmd, (0.0, 0.0, 0.0));
    }

    #[test]
    fn centered_back_substitution() {
        let k = k500();
        let m = BoxMeasurement::new(320.0, 240.0, 140.0, 1.0);
        let e0 = compute_errors(&m, &k, 100.0);
        let t = jacobian_terms(
            &e0,
            &m,
            PanTiltAngles::default(),
            &k,
            JacobianMode::AsPrinted,
        );
        let g = field_gains(1.0);
        let err = ImageErrors {
            e_u: 10.0,
            e_v: 0.0,
            e_v2: 0.0,
        };
        let (v, wa, wb) = control_law(&err, &t, &g, 0.0, singular_epsilon(&k, &g)).unwrap();
        let rates = predicted_error_rates(&t, &g, v, 0.0, wa, wb);
        assert!((rates[0] + 10.0).abs() < 1e-6);
        assert!(rates[1].abs() < 1e-6 && rates[2].abs() < 1e-6);
    }

    #[test]
    fn singular_when_all_omegas_vanish() {
        let k = k500();
        let m = BoxMeasurement::new(330.0, 240.0, 240.0 - 1e-9, 1.0);
        let mut m2 = m;
        m2.v2 = k.v0;
        let e = compute_errors(&m2, &k, 100.0);
        let t = jacobian_terms(
            &e,
            &m2,
            PanTiltAngles::default(),
            &k,
            JacobianMode::Rederived,
        );
        assert_eq!((t.omega1, t.omega2, t.omega3), (0.0, 0.0, 0.0));
        let g = field_gains(0.5);
        assert!(matches!(
            control_law(&e, &t, &g, 0.0, singular_epsilon(&k, &g)),
            Err(ControllerError::SingularConfiguration { .. })
        ));
    }

    #[test]
    fn closed_form_agrees_with_lu_solve() {
        let k = k500();
        let g = ControllerGains {
            k1: 0.7,
            k2: 1.3,
            k3: 0.4,
            ..field_gains(1.0)
        };
        let m = BoxMeasurement::new(410.0, 190.0, 80.0, 1.0);
        let e = compute_errors(&m, &k, 100.0);
        let angles = PanTiltAngles::new(0.7, -0.2);
        let t = jacobian_terms(&e, &m, angles, &k, JacobianMode::Rederived);
        let wr = robot_angular_strategy(angles.alpha);
        let (v, wa, wb) = control_law(&e, &t, &g, wr, singular_epsilon(&k, &g)).unwrap();
        let x = solve_by_lu(&e, &t, &g, wr);
        for (got, want) in [v, wa, wb].iter().zip(x.iter()) {
            assert!(
                (got - want).abs() <= 1e-9 * want.abs().max(1e-6),
                "{got} vs {want}"
            );
        }
        let printed = printed_omega_beta(&e, &t, &g);
        assert!((printed - wb).abs() > 1e-6);
    }

    #[test]
    fn deadband_strategy() {
        assert_eq!(robot_angular_strategy(0.1), 0.0);
        assert_eq!(robot_angular_strategy(1.0), 0.1);
        assert_eq!(robot_angular_strategy(-0.8), 0.1 * -0.8);
        assert!((robot_angular_strategy(-0.8) + 0.08).abs() < 1e-15);
        assert_eq!(robot_angular_strategy(FRAC_PI_6 - 1e-9), 0.0);
        let x = FRAC_PI_6 + 1e-9;
        assert_eq!(robot_angular_strategy(x), 0.1 * x);
        assert_eq!(robot_angular_strategy(-FRAC_PI_6), -0.1 * FRAC_PI_6);
    }

    #[test]
    fn step_centered_is_zero() {
        let k = k500();
        let mut st = ControllerState::default();
        let cfg = ControllerConfig::default();
        let cmd = controller_step(
            &mut st,
            &BoxMeasurement::new(320.0, 240.0, 140.0, 1.0),
            PanTiltAngles::default(),
            &cfg,
            &k,
        );
        assert_eq!(cmd, ControlCommand::zero());
        assert!(!cmd.saturated.any());
    }

    #[test]
    fn step_saturates_speed() {
        let k = k500();
        let mut st = ControllerState::default();
        let cfg = ControllerConfig {
            gains: ControllerGains {
                k1: 5.0,
                k2: 5.0,
                k3: 5.0,
                ..ControllerGains::default()
            },
            ..ControllerConfig::default()
        };
        // Box far too tall: the robot must back off fast.
        let cmd = controller_step(
            &mut st,
            &BoxMeasurement::new(320.0, 240.0, -400.0, 1.0),
            PanTiltAngles::default(),
            &cfg,
            &k,
        );
        assert_eq!(cmd.v_r, -cfg.limits.v_max);
        assert!(cmd.saturated.v_r);
        assert!(!cmd.saturated.omega_alpha);
    }

    #[test]
    fn singular_step_holds_and_decays() {
        let k = k500();
        let cfg = ControllerConfig::default();
        let mut st = ControllerState::default();
        let first = controller_step(
            &mut st,
            &BoxMeasurement::new(330.0, 245.0, 150.0, 1.0),
            PanTiltAngles::default(),
            &cfg,
            &k,
        );
        assert!(!first.held);
        let held = controller_step(
            &mut st,
            &BoxMeasurement::new(330.0, 240.0, 240.0 - 1e-12, 1.0),
            PanTiltAngles::default(),
            &cfg,
            &k,
        );
        assert!(held.held);
        assert_eq!(held.omega_alpha, first.omega_alpha);
        assert_eq!(held.omega_beta, first.omega_beta);
        assert_eq!(held.v_r, first.v_r * HOLD_DECAY);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "as-printed".parse::<JacobianMode>().unwrap(),
            JacobianMode::AsPrinted
        );
        assert_eq!(
            "re-derived".parse::<JacobianMode>().unwrap(),
            JacobianMode::Rederived
        );
        assert!("exact".parse::<JacobianMode>().is_err());
        assert_eq!(JacobianMode::default(), JacobianMode::Rederived);
    }
}
