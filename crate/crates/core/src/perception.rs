//! Simulated detector and tracker front end.
//!
//! The detector stand-in is a stability gate: a track starts once three
//! consecutive detections agree to within a pixel tolerance. After that a
//! synthetic tracker reports noisy ground truth, or a low score when the
//! target is occluded, out of view, or outside the current search region.
//! Low scores drive a hysteretic failure state that grows the search region
//! step by step until the target is found again.

use crate::controller::BoxMeasurement;
use crate::geometry::CameraIntrinsics;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("noise model: {0}")]
    Noise(String),
    #[error("recovery: {0}")]
    Recovery(String),
}

const GATE_FRAMES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionGate {
    window: VecDeque<BoxMeasurement>,
    pub pixel_tolerance: f64,
}

impl Default for DetectionGate {
    fn default() -> Self {
        Self::new(10.0)
    }
}

impl DetectionGate {
    pub fn new(pixel_tolerance: f64) -> Self {
        Self {
            window: VecDeque::with_capacity(GATE_FRAMES),
            pixel_tolerance,
        }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn reset(&mut self) {
        self.window.clear();
    }

    /// Feeds one detection. Returns the initial box once three consecutive
    /// detections each moved less than the tolerance from the previous one.
    pub fn update(&mut self, detection: BoxMeasurement) -> Option<BoxMeasurement> {
        if let Some(prev) = self.window.back() {
            let jump = (detection.u - prev.u).hypot(detection.v - prev.v);
            if !(jump < self.pixel_tolerance) {
                self.window.clear();
            }
        }
        self.window.push_back(detection);
        if self.window.len() > GATE_FRAMES {
            self.window.pop_front();
        }
        if self.window.len() == GATE_FRAMES {
            self.window.clear();
            Some(detection)
        } else {
            None
        }
    }
}

pub fn gate_update(gate: &mut DetectionGate, detection: BoxMeasurement) -> Option<BoxMeasurement> {
    gate.update(detection)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub sigma_px: f64,
    /// Half-open `[start, end)` intervals in seconds.
    pub occlusion_windows: Vec<(f64, f64)>,
    pub dropout_prob: f64,
    pub score_visible: f64,
    pub score_occluded: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_px: 0.0,
            occlusion_windows: Vec::new(),
            dropout_prob: 0.0,
            score_visible: 0.95,
            score_occluded: 0.1,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let bad = |m: String| Err(PerceptionError::Noise(m));
        if !(self.sigma_px >= 0.0 && self.sigma_px.is_finite()) {
            return bad("sigma_px must be finite and >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return bad("dropout_prob must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.score_visible) || !(0.0..=1.0).contains(&self.score_occluded)
        {
            return bad("scores must lie in [0, 1]".into());
        }
        if !(self.score_occluded < self.score_visible) {
            return bad("score_occluded must be < score_visible".into());
        }
        let mut windows = self.occlusion_windows.clone();
        windows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, w) in windows.iter().enumerate() {
            if !(w.0 < w.1) {
                return bad(format!("occlusion window {i} has start >= end"));
            }
        }
        if windows.windows(2).any(|p| p[1].0 < p[0].1) {
            return bad("occlusion windows overlap".into());
        }
        Ok(())
    }

    pub fn occluded_at(&self, t: f64) -> bool {
        self.occlusion_windows.iter().any(|&(a, b)| a <= t && t < b)
    }
}

/// Square search region around the last box, half-extent in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRegion {
    pub center_u: f64,
    pub center_v: f64,
    pub half_extent: f64,
}

impl SearchRegion {
    pub fn around(last: &BoxMeasurement, nominal_half_extent: f64, scale: f64) -> Self {
        Self {
            center_u: last.u,
            center_v: last.v,
            half_extent: nominal_half_extent * scale,
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (u - self.center_u).abs() <= self.half_extent
            && (v - self.center_v).abs() <= self.half_extent
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerOutput {
    pub meas: BoxMeasurement,
    pub score: f64,
}

/// Synthetic tracker. `truth` is `None` when the target is out of view.
pub fn simulated_track(
    truth: Option<&BoxMeasurement>,
    region: &SearchRegion,
    last: &BoxMeasurement,
    noise: &NoiseModel,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> TrackerOutput {
    let lost = TrackerOutput {
        meas: BoxMeasurement {
            score: noise.score_occluded,
            ..*last
        },
        score: noise.score_occluded,
    };
    // Fixed draw count per tick keeps the random stream aligned across
    // configurations that differ only in occlusion timing.
    let dropout_draw: f64 = rng.gen();
    let jitter = draw_jitter(noise.sigma_px, rng);

    let Some(truth) = truth else { return lost };
    if noise.occluded_at(t) || !region.contains(truth.u, truth.v) {
        return lost;
    }
    if dropout_draw < noise.dropout_prob {
        return lost;
    }
    let meas = BoxMeasurement {
        u: truth.u + jitter[0],
        v: truth.v + jitter[1],
        v2: truth.v2 + jitter[2],
        score: noise.score_visible,
    };
    TrackerOutput {
        meas,
        score: noise.score_visible,
    }
}

fn draw_jitter(sigma: f64, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z = [normal.sample(rng), normal.sample(rng), normal.sample(rng)];
    z.map(|x| x * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoveryConfig {
    pub th_low: f64,
    pub th_high: f64,
    /// Region scale increment per failed tick.
    pub step_s: f64,
    /// Nominal search half-extent as a multiple of the box half-height.
    pub region_factor: f64,
    /// Maximum center motion between consecutive detections, pixels.
    pub gate_tolerance_px: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            th_low: 0.4,
            th_high: 0.8,
            step_s: 0.5,
            region_factor: 1.0,
            gate_tolerance_px: 10.0,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let bad = |m: &str| Err(PerceptionError::Recovery(m.to_string()));
        if !(self.th_low < self.th_high) {
            return bad("th_low must be < th_high");
        }
        if !(self.step_s > 0.0) {
            return bad("step_s must be > 0");
        }
        if !(self.region_factor > 0.0) {
            return bad("region_factor must be > 0");
        }
        if !(self.gate_tolerance_px > 0.0) {
            return bad("gate_tolerance_px must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryState {
    pub failure_state: bool,
    pub region_scale: f64,
}

impl Default for RecoveryState {
    fn default() -> Self {
        Self {
            failure_state: false,
            region_scale: 1.0,
        }
    }
}

/// One transition of the failure-recovery machine.
///
/// `max_scale` is the scale at which the region covers the whole image.
pub fn recovery_step(
    state: RecoveryState,
    score: f64,
    config: &RecoveryConfig,
    max_scale: f64,
) -> RecoveryState {
    let failure_state = if score <= config.th_low {
        true
    } else if score >= config.th_high {
        false
    } else {
        state.failure_state
    };
    let region_scale = if failure_state {
        (state.region_scale + config.step_s).min(max_scale.max(1.0))
    } else {
        1.0
    };
    RecoveryState {
        failure_state,
        region_scale,
    }
}

/// Scale at which a region centered on `last` covers the full image.
pub fn full_image_scale(
    last: &BoxMeasurement,
    nominal_half_extent: f64,
    k: &CameraIntrinsics,
) -> f64 {
    let w = f64::from(k.width);
    let h = f64::from(k.height);
    let reach = last.u.max(w - last.u).max(last.v).max(h - last.v);
    (reach / nominal_half_extent).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionOutput {
    /// Box for the controller; `None` before the track starts.
    pub meas: Option<BoxMeasurement>,
    /// The controller should hold its rates rather than servo on `meas`.
    pub hold: bool,
    pub initialized: bool,
    pub score: f64,
    pub region_scale: f64,
    pub failure_state: bool,
}

#[derive(Debug, Clone)]
pub struct PerceptionPipeline {
    gate: DetectionGate,
    recovery: RecoveryState,
    config: RecoveryConfig,
    noise: NoiseModel,
    last_box: Option<BoxMeasurement>,
    rng: ChaCha8Rng,
}

impl PerceptionPipeline {
    pub fn new(config: RecoveryConfig, noise: NoiseModel, rng: ChaCha8Rng) -> Self {
        Self {
            gate: DetectionGate::new(config.gate_tolerance_px),
            recovery: RecoveryState::default(),
            config,
            noise,
            last_box: None,
            rng,
        }
    }

    pub fn recovery(&self) -> RecoveryState {
        self.recovery
    }

    pub fn last_box(&self) -> Option<&BoxMeasurement> {
        self.last_box.as_ref()
    }

    fn nominal_half_extent(&self, last: &BoxMeasurement) -> f64 {
        self.config.region_factor * last.half_height().abs().max(1.0)
    }

    /// `truth` is the rendered box when the target is in view.
    pub fn step(
        &mut self,
        truth: Option<&BoxMeasurement>,
        t: f64,
        k: &CameraIntrinsics,
    ) -> PerceptionOutput {
        let Some(last) = self.last_box else {
            let init = truth.and_then(|d| self.gate.update(*d));
            if truth.is_none() {
                self.gate.reset();
            }
            if let Some(b) = init {
                let b = BoxMeasurement { score: 1.0, ..b };
                self.last_box = Some(b);
                return PerceptionOutput {
                    meas: Some(b),
                    hold: false,
                    initialized: true,
                    score: 1.0,
                    region_scale: self.recovery.region_scale,
                    failure_state: false,
                };
            }
            return PerceptionOutput {
                meas: None,
                hold: false,
                initialized: false,
                score: 0.0,
                region_scale: self.recovery.region_scale,
                failure_state: false,
            };
        };

        let nominal = self.nominal_half_extent(&last);
        let region = SearchRegion::around(&last, nominal, self.recovery.region_scale);
        let out = simulated_track(truth, &region, &last, &self.noise, t, &mut self.rng);
        let max_scale = full_image_scale(&last, nominal, k);
        self.recovery = recovery_step(self.recovery, out.score, &self.config, max_scale);

        if !self.recovery.failure_state {
            self.last_box = Some(out.meas);
        }
        PerceptionOutput {
            meas: self.last_box,
            hold: self.recovery.failure_state,
            initialized: true,
            score: out.score,
            region_scale: self.recovery.region_scale,
            failure_state: self.recovery.failure_state,
        }
    }
}

pub fn perception_pipeline(
    pipeline: &mut PerceptionPipeline,
    truth: Option<&BoxMeasurement>,
    t: f64,
    k: &CameraIntrinsics,
) -> PerceptionOutput {
    pipeline.step(truth, t, k)
}
