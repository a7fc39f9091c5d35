//! Run metrics computed from the logged time series.

use pantilt_core::{LogRow, SaturationLimits};
use serde::{Deserialize, Serialize};

/// Error magnitude, in pixels, below which a channel counts as settled.
pub const SETTLE_PX: f64 = 5.0;

/// Per-channel values for `(e_u, e_v, e_v2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channels {
    pub e_u: f64,
    pub e_v: f64,
    pub e_v2: f64,
}

impl Channels {
    fn from_fn(mut f: impl FnMut(fn(&LogRow) -> f64) -> f64) -> Self {
        Self {
            e_u: f(|r| r.e_u),
            e_v: f(|r| r.e_v),
            e_v2: f(|r| r.e_v2),
        }
    }
}

/// Metrics of one run. NaN marks a value with no data behind it, such as a
/// settling time for a channel that never settles or any mean of an empty log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ticks: usize,
    /// Time after which `|e| < 5 px` holds for the rest of the run, seconds.
    pub settling_time_s: Channels,
    /// RMS over the final half of the run, pixels.
    pub steady_state_rms_px: Channels,
    /// Mean `|h - H|` over the final half of the run, pixels.
    pub mean_abs_h_error_px: f64,
    pub failure_episodes: usize,
    /// Ticks from entering failure until leaving it, one per closed episode.
    pub reacquisition_latency_ticks: Vec<u64>,
    /// Fraction of ticks with at least one command channel at its bound.
    pub saturation_duty_cycle: f64,
}

impl RunSummary {
    /// Equality that treats NaN fields as equal to each other.
    pub fn same_as(&self, other: &Self) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        let ch =
            |a: &Channels, b: &Channels| eq(a.e_u, b.e_u) && eq(a.e_v, b.e_v) && eq(a.e_v2, b.e_v2);
        self.ticks == other.ticks
            && ch(&self.settling_time_s, &other.settling_time_s)
            && ch(&self.steady_state_rms_px, &other.steady_state_rms_px)
            && eq(self.mean_abs_h_error_px, other.mean_abs_h_error_px)
            && self.failure_episodes == other.failure_episodes
            && self.reacquisition_latency_ticks == other.reacquisition_latency_ticks
            && eq(self.saturation_duty_cycle, other.saturation_duty_cycle)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("summary serializes")
    }
}

fn settling_time(rows: &[LogRow], get: fn(&LogRow) -> f64) -> f64 {
    // NaN errors (target not rendered) never count as settled.
    let first_settled = match rows
        .iter()
        .rposition(|r| get(r).abs() >= SETTLE_PX || get(r).is_nan())
    {
        None => 0,
        Some(i) => i + 1,
    };
    rows.get(first_settled).map_or(f64::NAN, |r| r.t)
}

fn rms(rows: &[LogRow], get: fn(&LogRow) -> f64) -> f64 {
    let vals: Vec<f64> = rows.iter().map(get).filter(|x| x.is_finite()).collect();
    if vals.is_empty() {
        return f64::NAN;
    }
    (vals.iter().map(|x| x * x).sum::<f64>() / vals.len() as f64).sqrt()
}

fn at_bound(r: &LogRow, lim: &SaturationLimits) -> bool {
    r.v_r.abs() >= lim.v_max
        || r.omega_r.abs() >= lim.omega_r_max
        || r.omega_alpha.abs() >= lim.omega_alpha_max
        || r.omega_beta.abs() >= lim.omega_beta_max
}

pub fn summarize(rows: &[LogRow], limits: &SaturationLimits) -> RunSummary {
    let steady = &rows[rows.len() / 2..];
    let h_err: Vec<f64> = steady
        .iter()
        .map(|r| r.e_v2.abs())
        .filter(|x| x.is_finite())
        .collect();

    let mut episodes = 0;
    let mut latencies = Vec::new();
    let mut entered: Option<usize> = None;
    let mut prev = false;
    for (i, r) in rows.iter().enumerate() {
        if r.failure_state && !prev {
            episodes += 1;
            entered = Some(i);
        }
        if !r.failure_state && prev {
            if let Some(start) = entered.take() {
                latencies.push((i - start) as u64);
            }
        }
        prev = r.failure_state;
    }

    RunSummary {
        ticks: rows.len(),
        settling_time_s: Channels::from_fn(|g| settling_time(rows, g)),
        steady_state_rms_px: Channels::from_fn(|g| rms(steady, g)),
        mean_abs_h_error_px: if h_err.is_empty() {
            f64::NAN
        } else {
            h_err.iter().sum::<f64>() / h_err.len() as f64
        },
        failure_episodes: episodes,
        reacquisition_latency_ticks: latencies,
        saturation_duty_cycle: if rows.is_empty() {
            0.0
        } else {
            rows.iter().filter(|r| at_bound(r, limits)).count() as f64 / rows.len() as f64
        },
    }
}
