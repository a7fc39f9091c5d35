//! Scenario files and built-in presets.

use pantilt_core::simworld::{GroundPoint, InitialState};
use pantilt_core::{
    BodyModel, CameraIntrinsics, ControllerGains, JacobianMode, PlanarPose, ScenarioConfig,
    TargetTrajectory,
};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const PRESETS: [&str; 3] = ["circle-sim", "indoor", "outdoor"];

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: invalid value at `{field}`: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error(transparent)]
    Invalid(#[from] pantilt_core::simworld::ConfigError),
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Option<ScenarioConfig> {
    match name {
        "circle-sim" => Some(circle_sim()),
        "indoor" => Some(corridor(500.0)),
        "outdoor" => Some(corridor(300.0)),
        _ => None,
    }
}

/// Target on the reference circle, robot starting at the origin facing it.
fn circle_sim() -> ScenarioConfig {
    let trajectory = TargetTrajectory::reference_circle();
    let start = pantilt_core::simworld::target_position(0.0, &trajectory);
    let body = BodyModel::default();
    let gains = body.exact_gains(ControllerGains {
        k1: 2.0,
        k2: 2.0,
        k3: 2.0,
        desired_half_height: 100.0,
        ..ControllerGains::default()
    });
    ScenarioConfig {
        intrinsics: Default::default(),
        body,
        gains,
        limits: Default::default(),
        joint_limits: Default::default(),
        trajectory,
        noise: Default::default(),
        recovery: Default::default(),
        initial: InitialState {
            robot: PlanarPose {
                x: 0.0,
                y: 0.0,
                theta: start.y.atan2(start.x),
            },
            angles: Default::default(),
        },
        dt: 0.02,
        duration: 60.0,
        seed: 0,
        mode: JacobianMode::Rederived,
    }
}

/// A person walking a path with one gentle turn, followed at half-height `h` by a
/// 1280x720 camera.
fn corridor(h: f64) -> ScenarioConfig {
    let intrinsics = CameraIntrinsics {
        alpha_x: 1000.0,
        alpha_y: 1000.0,
        u0: 640.0,
        v0: 360.0,
        width: 1280,
        height: 720,
    };
    let body = BodyModel::default();
    // Distance at which the box half-height equals `h`.
    let follow = intrinsics.alpha_y * (body.head_height - body.body_center_height) / h;
    ScenarioConfig {
        intrinsics,
        body,
        gains: ControllerGains {
            k1: 2.0,
            k2: 2.0,
            k3: 2.0,
            lambda1: 5.0,
            lambda2: 0.91,
            desired_half_height: h,
        },
        limits: Default::default(),
        joint_limits: Default::default(),
        trajectory: TargetTrajectory::Waypoints {
            points: vec![
                GroundPoint::new(follow + 0.5, 0.0),
                GroundPoint::new(follow + 6.0, 0.0),
                GroundPoint::new(follow + 10.0, 1.5),
            ],
            speed: 0.4,
        },
        noise: Default::default(),
        recovery: Default::default(),
        initial: InitialState::default(),
        dt: 0.02,
        duration: 40.0,
        seed: 0,
        mode: JacobianMode::Rederived,
    }
}

/// Parses and validates a TOML scenario file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = parse_str(&text).map_err(|e| e.at(path))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug)]
enum ParseFailure {
    Syntax(String),
    Schema { field: String, message: String },
}

impl ParseFailure {
    fn at(self, path: &Path) -> LoadError {
        let path = path.to_path_buf();
        match self {
            Self::Syntax(message) => LoadError::Syntax { path, message },
            Self::Schema { field, message } => LoadError::Schema {
                path,
                field,
                message,
            },
        }
    }
}

fn parse_str(text: &str) -> Result<ScenarioConfig, ParseFailure> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.message().to_string();
        if field == "." {
            ParseFailure::Syntax(inner.to_string().trim_end().to_string())
        } else {
            ParseFailure::Schema { field, message }
        }
    })
}

/// A preset name or a path to a scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<ScenarioConfig, LoadError> {
    match preset(name_or_path) {
        Some(cfg) => Ok(cfg),
        None => parse_config(Path::new(name_or_path)),
    }
}

/// Renders a config back to TOML.
pub fn to_toml(cfg: &ScenarioConfig) -> String {
    toml::to_string_pretty(cfg).expect("scenario configs serialize")
}
