//! Numerical checks of the interaction model against the simulator.
//!
//! [`discrepancy_report`] samples random servo states, measures the true
//! pixel-error rates by central differences through the kinematic simulator
//! and compares them with the linear rate model evaluated in both Jacobian
//! modes. It also compares the published tilt-rate expression with the
//! solution of the linear system.

use crate::controller::{
    compute_errors, control_law, jacobian_terms, predicted_error_rates, printed_omega_beta,
    singular_epsilon, ControlCommand, ControllerGains, ImageErrors, JacobianMode,
};
use crate::geometry::{CameraIntrinsics, JointLimits, PanTiltAngles, PlanarPose};
use crate::simworld::{integrate, render_measurement, BodyModel, GroundPoint, SimState};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

/// Relative-error floor in px/s, so near-zero rates do not blow up the ratio.
pub const RATE_FLOOR: f64 = 1e-3;

/// Pixel errors `(e_u, e_v, e_v2)` as seen from `state`, if the target renders.
pub fn observed_errors(
    state: &SimState,
    body: &BodyModel,
    k: &CameraIntrinsics,
    desired_half_height: f64,
) -> Option<ImageErrors> {
    render_measurement(state, body, k).map(|r| compute_errors(&r.meas, k, desired_half_height))
}

/// Central-difference error rates for a static target under `cmd`.
pub fn finite_difference_rates(
    state: &SimState,
    cmd: &ControlCommand,
    body: &BodyModel,
    k: &CameraIntrinsics,
    step: f64,
) -> Option<[f64; 3]> {
    let limits = JointLimits {
        alpha_max: f64::INFINITY,
        beta_max: f64::INFINITY,
    };
    let reverse = ControlCommand {
        v_r: -cmd.v_r,
        omega_r: -cmd.omega_r,
        omega_alpha: -cmd.omega_alpha,
        omega_beta: -cmd.omega_beta,
        ..*cmd
    };
    let fwd = integrate(state, cmd, step, &limits);
    let back = integrate(state, &reverse, step, &limits);
    let ef = observed_errors(&fwd, body, k, 0.0)?;
    let eb = observed_errors(&back, body, k, 0.0)?;
    Some([
        (ef.e_u - eb.e_u) / (2.0 * step),
        (ef.e_v - eb.e_v) / (2.0 * step),
        (ef.e_v2 - eb.e_v2) / (2.0 * step),
    ])
}

pub fn relative_error(predicted: f64, reference: f64) -> f64 {
    (predicted - reference).abs() / reference.abs().max(RATE_FLOOR)
}

/// A random non-degenerate servo state with the target in view, plus a
/// random command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoSample {
    pub state: SimState,
    pub command: ControlCommand,
}

pub fn random_servo_sample(
    rng: &mut impl Rng,
    body: &BodyModel,
    k: &CameraIntrinsics,
) -> ServoSample {
    loop {
        let robot = PlanarPose {
            x: rng.gen_range(-5.0..5.0),
            y: rng.gen_range(-5.0..5.0),
            theta: rng.gen_range(-3.0..3.0),
        };
        let alpha: f64 = rng.gen_range(-1.0..1.0);
        let range: f64 = rng.gen_range(1.5..9.0);
        let bearing = robot.theta + alpha + rng.gen_range(-0.4..0.4);
        let target = GroundPoint::new(
            robot.x + range * bearing.cos(),
            robot.y + range * bearing.sin(),
        );
        let elevation = ((body.body_center_height - body.camera_height) / range).atan();
        let beta = -elevation + rng.gen_range(-0.25..0.25);
        let state = SimState {
            t: 0.0,
            robot,
            angles: PanTiltAngles::new(alpha, beta),
            target,
        };
        let Some(r) = render_measurement(&state, body, k) else {
            continue;
        };
        if !r.visible {
            continue;
        }
        let command = ControlCommand {
            v_r: rng.gen_range(-1.0..1.0),
            omega_r: rng.gen_range(-0.5..0.5),
            omega_alpha: rng.gen_range(-1.0..1.0),
            omega_beta: rng.gen_range(-1.0..1.0),
            ..ControlCommand::zero()
        };
        return ServoSample { state, command };
    }
}

/// Linear-model prediction of the error rates at a sample.
pub fn predicted_rates(
    sample: &ServoSample,
    body: &BodyModel,
    k: &CameraIntrinsics,
    gains: &ControllerGains,
    mode: JacobianMode,
) -> Option<[f64; 3]> {
    let r = render_measurement(&sample.state, body, k)?;
    let err = compute_errors(&r.meas, k, gains.desired_half_height);
    let terms = jacobian_terms(&err, &r.meas, sample.state.angles, k, mode);
    let c = &sample.command;
    Some(predicted_error_rates(
        &terms,
        gains,
        c.v_r,
        c.omega_r,
        c.omega_alpha,
        c.omega_beta,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeStats {
    pub mode: JacobianMode,
    /// Worst relative error per channel `(e_u, e_v, e_v2)`.
    pub max_rel_error: [f64; 3],
    /// Fraction of samples with every channel within `tolerance`.
    pub pass_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyReport {
    pub samples: usize,
    pub tolerance: f64,
    pub fd_step: f64,
    pub modes: Vec<ModeStats>,
    /// Worst mismatch between the published tilt-rate formula and the
    /// solved tilt rate, relative.
    pub printed_omega_beta_max_rel: f64,
    /// Samples where the published tilt rate differs by more than `tolerance`.
    pub printed_omega_beta_mismatches: usize,
}

impl DiscrepancyReport {
    pub fn mode(&self, mode: JacobianMode) -> Option<&ModeStats> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    /// Mode whose predictions passed on every sample, re-derived first.
    pub fn passing_mode(&self) -> Option<JacobianMode> {
        [JacobianMode::Rederived, JacobianMode::AsPrinted]
            .into_iter()
            .find(|m| self.mode(*m).is_some_and(|s| s.pass_fraction == 1.0))
    }
}

impl fmt::Display for DiscrepancyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "interaction-term check: {} samples, central difference step {:e} s, tolerance {}",
            self.samples, self.fd_step, self.tolerance
        )?;
        for m in &self.modes {
            writeln!(
                f,
                "  {:<11} pass {:>6.2}%  max rel err e_u {:.3e}  e_v {:.3e}  e_v2 {:.3e}",
                m.mode.to_string(),
                100.0 * m.pass_fraction,
                m.max_rel_error[0],
                m.max_rel_error[1],
                m.max_rel_error[2]
            )?;
        }
        writeln!(
            f,
            "  published tilt-rate formula: {} / {} samples off by > {} (max rel {:.3e})",
            self.printed_omega_beta_mismatches,
            self.samples,
            self.tolerance,
            self.printed_omega_beta_max_rel
        )?;
        match self.passing_mode() {
            Some(m) => writeln!(f, "  passing mode: {m}"),
            None => writeln!(f, "  passing mode: none"),
        }
    }
}

pub fn discrepancy_report(
    samples: usize,
    seed: u64,
    body: &BodyModel,
    k: &CameraIntrinsics,
    fd_step: f64,
    tolerance: f64,
) -> DiscrepancyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gains = body.exact_gains(ControllerGains::default());
    let modes = [JacobianMode::AsPrinted, JacobianMode::Rederived];
    let mut worst = [[0.0f64; 3]; 2];
    let mut passes = [0usize; 2];
    let mut tilt_worst = 0.0f64;
    let mut tilt_bad = 0usize;
    let mut counted = 0usize;

    while counted < samples {
        let sample = random_servo_sample(&mut rng, body, k);
        let Some(fd) = finite_difference_rates(&sample.state, &sample.command, body, k, fd_step)
        else {
            continue;
        };
        counted += 1;
        for (i, mode) in modes.iter().enumerate() {
            let pred = predicted_rates(&sample, body, k, &gains, *mode).expect("sample renders");
            let mut ok = true;
            for ch in 0..3 {
                let e = relative_error(pred[ch], fd[ch]);
                worst[i][ch] = worst[i][ch].max(e);
                ok &= e <= tolerance;
            }
            passes[i] += usize::from(ok);
        }

        let r = render_measurement(&sample.state, body, k).expect("sample renders");
        let err = compute_errors(&r.meas, k, gains.desired_half_height);
        let terms = jacobian_terms(
            &err,
            &r.meas,
            sample.state.angles,
            k,
            JacobianMode::Rederived,
        );
        if let Ok((_, _, wb)) = control_law(
            &err,
            &terms,
            &gains,
            sample.command.omega_r,
            singular_epsilon(k, &gains),
        ) {
            let printed = printed_omega_beta(&err, &terms, &gains);
            let rel = (printed - wb).abs() / wb.abs().max(1e-9);
            tilt_worst = tilt_worst.max(rel);
            tilt_bad += usize::from(rel > tolerance);
        }
    }

    DiscrepancyReport {
        samples,
        tolerance,
        fd_step,
        modes: modes
            .iter()
            .enumerate()
            .map(|(i, m)| ModeStats {
                mode: *m,
                max_rel_error: worst[i],
                pass_fraction: if samples == 0 {
                    1.0
                } else {
                    passes[i] as f64 / samples as f64
                },
            })
            .collect(),
        printed_omega_beta_max_rel: tilt_worst,
        printed_omega_beta_mismatches: tilt_bad,
    }
}
