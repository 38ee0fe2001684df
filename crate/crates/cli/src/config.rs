//! Scenario files: TOML with fixed sections, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use se3obs_core::linalg::{Vec3, Vec6};
use se3obs_core::measurement::{BiasModel, Scene};
use se3obs_core::observers::{ObserverGains, ProjectionParams, Variant};
use se3obs_core::potential::UChoice;
use se3obs_core::se3::angle_axis;
use se3obs_core::sim::{Profile, Scenario, TrajectorySpec};
use se3obs_core::Pose;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: [{section}] {message}")]
    Validation {
        path: PathBuf,
        section: &'static str,
        message: String,
    },
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "io",
            ConfigError::Parse { .. } => "parse",
            ConfigError::Validation { .. } => "validation",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub scene: SceneSection,
    pub trajectory: TrajectorySection,
    #[serde(default)]
    pub bias: BiasSection,
    #[serde(default)]
    pub observers: ObserversSection,
    #[serde(default)]
    pub gains: GainsSection,
    pub jump_set: JumpSetSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub projection: ProjectionSection,
    pub integration: IntegrationSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    #[serde(default)]
    pub landmarks: Vec<[f64; 3]>,
    #[serde(default)]
    pub vectors: Vec<[f64; 3]>,
    /// One weight per landmark then per vector; all ones when omitted.
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub rotation_angle: f64,
    pub rotation_axis: [f64; 3],
    pub position: [f64; 3],
    pub profile: ProfileSection,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSection {
    Constant { twist: [f64; 6] },
    Circular { omega_amp: f64, v_amp: f64, frequency: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSection {
    pub base: [f64; 6],
    #[serde(default)]
    pub mode: BiasModeName,
    #[serde(default)]
    pub frequency: f64,
}

impl Default for BiasSection {
    fn default() -> Self {
        BiasSection {
            base: [0.0; 6],
            mode: BiasModeName::Constant,
            frequency: 0.0,
        }
    }
}

#[derive(Debug, Default, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BiasModeName {
    #[default]
    Constant,
    Cosine,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserversSection {
    pub run: Vec<String>,
}

impl Default for ObserversSection {
    fn default() -> Self {
        ObserversSection {
            run: Variant::ALL.iter().map(|v| v.name().to_string()).collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub k_beta: f64,
    pub k_omega: f64,
    pub k_v: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        GainsSection {
            k_beta: 1.0,
            k_omega: 1.0,
            k_v: 1.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSetSection {
    pub theta_star: f64,
    #[serde(default)]
    pub directions: DirectionsName,
    /// Unit vectors, required when `directions = "custom"`.
    pub custom: Option<Vec<[f64; 3]>>,
    /// Overrides the default gap `0.9 (1 - cos theta_star) delta_star`.
    pub delta: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DirectionsName {
    #[default]
    Eigenbasis,
    Canonical,
    Custom,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default = "tenth")]
    pub epsilon: f64,
    #[serde(default)]
    pub per_block: bool,
}

fn one() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

impl Default for ProjectionSection {
    fn default() -> Self {
        ProjectionSection {
            enabled: false,
            delta: 1.0,
            epsilon: 0.1,
            per_block: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub step: f64,
    pub duration: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default)]
    pub rotation_angle: f64,
    #[serde(default = "x_axis")]
    pub rotation_axis: [f64; 3],
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub bias: [f64; 6],
}

fn x_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            rotation_angle: 0.0,
            rotation_axis: x_axis(),
            position: [0.0; 3],
            bias: [0.0; 6],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out() }
    }
}

/// Parsed file plus the validated simulation objects.
#[derive(Debug)]
pub struct Loaded {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
    pub observers: Vec<Variant>,
}

pub fn load_config(path: &Path) -> Result<Loaded, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, path: &Path) -> Result<Loaded, ConfigError> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let invalid = |section: &'static str, message: String| ConfigError::Validation {
        path: path.to_path_buf(),
        section,
        message,
    };
    let scenario = build_scenario(&config).map_err(|(s, m)| invalid(s, m))?;
    let observers = parse_observers(&config.observers.run).map_err(|m| invalid("observers", m))?;
    // Scene observability and gap feasibility are diagnosed here rather than
    // at run time.
    scenario
        .prepare()
        .map_err(|e| invalid(section_of(&e), e.to_string()))?;
    Ok(Loaded {
        config,
        scenario,
        observers,
    })
}

fn section_of(e: &se3obs_core::Error) -> &'static str {
    use se3obs_core::Error::*;
    match e {
        AssumptionViolated(_) => "scene",
        GapInfeasible(_) | PreconditionFailed(_) => "jump_set",
        _ => "scenario",
    }
}

pub fn parse_observers(list: &[String]) -> Result<Vec<Variant>, String> {
    if list.is_empty() {
        return Err("no observers selected".into());
    }
    let mut out = Vec::new();
    for name in list {
        let v: Variant = name.trim().parse().map_err(|e: se3obs_core::Error| e.to_string())?;
        if out.contains(&v) {
            return Err(format!("observer {v} listed twice"));
        }
        out.push(v);
    }
    Ok(out)
}

fn pose_from(angle: f64, axis: [f64; 3], position: [f64; 3]) -> Result<Pose, String> {
    let a = Vec3::new(axis);
    let n = a.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(format!("rotation axis {axis:?} must be nonzero"));
    }
    let r = angle_axis(angle, &(a * (1.0 / n))).map_err(|e| e.to_string())?;
    Ok(Pose::new(r, Vec3::new(position)))
}

fn build_scenario(c: &ScenarioConfig) -> Result<Scenario, (&'static str, String)> {
    let landmarks: Vec<Vec3> = c.scene.landmarks.iter().map(|x| Vec3::new(*x)).collect();
    let vectors: Vec<Vec3> = c.scene.vectors.iter().map(|x| Vec3::new(*x)).collect();
    let scene = match &c.scene.weights {
        Some(w) => Scene::new(landmarks, vectors, w.clone()),
        None => Scene::unit_weights(landmarks, vectors),
    }
    .map_err(|e| ("scene", e.to_string()))?;

    let t = &c.trajectory;
    let g0 = pose_from(t.rotation_angle, t.rotation_axis, t.position).map_err(|m| ("trajectory", m))?;
    let profile = match t.profile {
        ProfileSection::Constant { twist } => Profile::Constant(Vec6::new(twist)),
        ProfileSection::Circular {
            omega_amp,
            v_amp,
            frequency,
        } => Profile::Circular {
            omega_amp,
            v_amp,
            freq: frequency,
        },
    };
    let trajectory = TrajectorySpec::new(g0, profile, c.integration.duration, c.integration.step)
        .map_err(|e| ("integration", e.to_string()))?;

    let base = Vec6::new(c.bias.base);
    let bias = match c.bias.mode {
        BiasModeName::Constant => BiasModel::constant(base),
        BiasModeName::Cosine => BiasModel::cosine(base, c.bias.frequency),
    };
    let g = &c.gains;
    let gains = ObserverGains::new(g.k_beta, g.k_omega, g.k_v).map_err(|e| ("gains", e.to_string()))?;

    let js = &c.jump_set;
    let u_choice = match (js.directions, &js.custom) {
        (DirectionsName::Eigenbasis, None) => UChoice::Eigenbasis,
        (DirectionsName::Canonical, None) => UChoice::Canonical,
        (DirectionsName::Custom, Some(list)) => UChoice::Custom(list.iter().map(|x| Vec3::new(*x)).collect()),
        (DirectionsName::Custom, None) => {
            return Err(("jump_set", "directions = \"custom\" needs a `custom` list".into()))
        }
        (_, Some(_)) => {
            return Err(("jump_set", "`custom` is only allowed with directions = \"custom\"".into()))
        }
    };
    let p = &c.projection;
    let projection =
        ProjectionParams::new(p.delta, p.epsilon, p.enabled, p.per_block).map_err(|e| ("projection", e.to_string()))?;
    let e = &c.estimate;
    let g_hat0 = pose_from(e.rotation_angle, e.rotation_axis, e.position).map_err(|m| ("estimate", m))?;

    Ok(Scenario {
        scene,
        trajectory,
        bias,
        gains,
        theta_star: js.theta_star,
        u_choice,
        delta: js.delta,
        noise_sigma: c.noise.sigma,
        projection,
        g_hat0,
        b_hat0: Vec6::new(e.bias),
        seed: c.seed,
    })
}
