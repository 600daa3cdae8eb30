//! Scenario configuration (JSON, versioned by `schema_version`).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use uwb_coloc_core::discriminator::SigmoidParams;
use uwb_coloc_core::imm::CombineRule;
use uwb_coloc_core::BiasHandling;

use crate::harness::VariantId;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("override `{0}`: {1}")]
    Override(String, String),
    #[error("invalid config: {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: u32,
    /// Path followed by the true trajectory; the agent starts on the first
    /// waypoint facing the second.
    pub waypoints: Vec<[f64; 2]>,
    /// Cruise speed (m/s).
    pub speed: f64,
    /// Return to the first waypoint and keep cycling.
    #[serde(default)]
    pub closed: bool,
    /// Turn-rate limit of the waypoint follower (rad/s).
    #[serde(default = "default_turn_rate")]
    pub max_turn_rate: f64,
}

fn default_turn_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeaconConfig {
    pub id: u32,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdometryNoiseConfig {
    pub sigma_v: f64,
    pub sigma_omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasHandlingConfig {
    #[default]
    SecondMoment,
    MeanSubtracted,
}

impl From<BiasHandlingConfig> for BiasHandling {
    fn from(h: BiasHandlingConfig) -> Self {
        match h {
            BiasHandlingConfig::SecondMoment => BiasHandling::SecondMoment,
            BiasHandlingConfig::MeanSubtracted => BiasHandling::MeanSubtracted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasConfig {
    /// Mean NLoS bias (m).
    pub phi_bar: f64,
    /// NLoS bias variance (m²).
    pub phi: f64,
    #[serde(default)]
    pub handling: BiasHandlingConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerMetricConfig {
    pub mu_los: f64,
    pub mu_nlos: f64,
    pub sigma: f64,
}

impl Default for PowerMetricConfig {
    fn default() -> Self {
        Self {
            mu_los: 3.0,
            mu_nlos: 10.0,
            sigma: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialUncertainty {
    pub sigma_position: f64,
    pub sigma_heading: f64,
}

impl Default for InitialUncertainty {
    fn default() -> Self {
        Self {
            sigma_position: 0.05,
            sigma_heading: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineRuleConfig {
    #[default]
    PaperLiteral,
    Mixture,
}

impl From<CombineRuleConfig> for CombineRule {
    fn from(c: CombineRuleConfig) -> Self {
        match c {
            CombineRuleConfig::PaperLiteral => CombineRule::PaperLiteral,
            CombineRuleConfig::Mixture => CombineRule::Mixture,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmoidConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for SigmoidConfig {
    fn default() -> Self {
        let p = SigmoidParams::default();
        Self { a: p.a, b: p.b, c: p.c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default)]
    pub combine_rule: CombineRuleConfig,
    /// Power-metric threshold of the `deterministic` variant (dB).
    #[serde(default = "default_threshold")]
    pub deterministic_threshold: f64,
    #[serde(default)]
    pub sigmoid: SigmoidConfig,
}

fn default_threshold() -> f64 {
    SigmoidParams::default().c
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            combine_rule: CombineRuleConfig::default(),
            deterministic_threshold: default_threshold(),
            sigmoid: SigmoidConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub schema_version: u32,
    /// Step length (s).
    pub dt: f64,
    /// Simulated time (s); the run has `round(duration / dt)` steps.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub beacons: Vec<BeaconConfig>,
    /// Wall segments, each `[[x1, y1], [x2, y2]]` (m).
    #[serde(default)]
    pub obstacles: Vec<[[f64; 2]; 2]>,
    pub odometry_noise: OdometryNoiseConfig,
    /// Range noise variance (m²).
    pub r: f64,
    pub bias: BiasConfig,
    #[serde(default)]
    pub power_metric: PowerMetricConfig,
    /// Maximum ranging distance (m).
    pub sensing_range: f64,
    /// Maximum exchange distance (m); defaults to `sensing_range`.
    #[serde(default)]
    pub comm_range: Option<f64>,
    /// Ranges per observer per step, lowest target ids first.
    #[serde(default = "default_cap")]
    pub max_measurements_per_step: usize,
    /// Steps between ranging rounds.
    #[serde(default = "default_interval")]
    pub ranging_interval: u64,
    #[serde(default)]
    pub initial_uncertainty: InitialUncertainty,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default = "default_variants")]
    pub variants: Vec<VariantId>,
}

fn default_cap() -> usize {
    8
}

fn default_interval() -> u64 {
    1
}

fn default_variants() -> Vec<VariantId> {
    VariantId::ALL.to_vec()
}

impl WorldConfig {
    /// Number of simulation steps.
    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn comm_range(&self) -> f64 {
        self.comm_range.unwrap_or(self.sensing_range)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        positive("dt", self.dt)?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration", "must be finite and non-negative"));
        }
        positive("sensing_range", self.sensing_range)?;
        if let Some(c) = self.comm_range {
            positive("comm_range", c)?;
        }
        positive("r", self.r)?;
        non_negative("odometry_noise.sigma_v", self.odometry_noise.sigma_v)?;
        non_negative("odometry_noise.sigma_omega", self.odometry_noise.sigma_omega)?;
        non_negative("bias.phi_bar", self.bias.phi_bar)?;
        positive("bias.phi", self.bias.phi)?;
        finite("power_metric.mu_los", self.power_metric.mu_los)?;
        finite("power_metric.mu_nlos", self.power_metric.mu_nlos)?;
        non_negative("power_metric.sigma", self.power_metric.sigma)?;
        positive("initial_uncertainty.sigma_position", self.initial_uncertainty.sigma_position)?;
        positive("initial_uncertainty.sigma_heading", self.initial_uncertainty.sigma_heading)?;
        finite("filter.deterministic_threshold", self.filter.deterministic_threshold)?;
        let s = self.filter.sigmoid;
        SigmoidParams::new(s.a, s.b, s.c).map_err(|e| invalid("filter.sigmoid", e.to_string()))?;
        if self.ranging_interval == 0 {
            return Err(invalid("ranging_interval", "must be at least 1"));
        }
        if self.agents.is_empty() {
            return Err(invalid("agents", "at least one agent is required"));
        }
        let mut ids = BTreeSet::new();
        for (k, a) in self.agents.iter().enumerate() {
            let field = |name: &str| format!("agents[{k}].{name}");
            if !ids.insert(a.id) {
                return Err(invalid(field("id"), format!("duplicate node id {}", a.id)));
            }
            if a.waypoints.is_empty() {
                return Err(invalid(field("waypoints"), "at least one waypoint is required"));
            }
            for (w, p) in a.waypoints.iter().enumerate() {
                if !(p[0].is_finite() && p[1].is_finite()) {
                    return Err(invalid(field(&format!("waypoints[{w}]")), "non-finite coordinate"));
                }
            }
            non_negative(&field("speed"), a.speed)?;
            positive(&field("max_turn_rate"), a.max_turn_rate)?;
        }
        for (k, b) in self.beacons.iter().enumerate() {
            if !ids.insert(b.id) {
                return Err(invalid(format!("beacons[{k}].id"), format!("duplicate node id {}", b.id)));
            }
            if !(b.position[0].is_finite() && b.position[1].is_finite()) {
                return Err(invalid(format!("beacons[{k}].position"), "non-finite coordinate"));
            }
        }
        for (k, o) in self.obstacles.iter().enumerate() {
            if o.iter().flatten().any(|v| !v.is_finite()) {
                return Err(invalid(format!("obstacles[{k}]"), "non-finite coordinate"));
            }
        }
        if self.variants.is_empty() {
            return Err(invalid("variants", "at least one variant is required"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Hash of everything except the seed; runs of one scenario share it.
    pub fn scenario_hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        c.hash()
    }
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "must be finite"))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be non-negative, got {v}")))
    }
}

fn parse_error(origin: &str, e: serde_json::Error) -> ConfigError {
    ConfigError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Set the field at a dotted path (`bias.phi_bar`, `agents.0.speed`). The
/// value is parsed as JSON and falls back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let err = |m: &str| ConfigError::Override(assignment.to_string(), m.to_string());
    let (path, raw) = assignment.split_once('=').ok_or_else(|| err("expected PATH=VALUE"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(err("empty path segment"));
    }
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| err("array index expected"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| err(&format!("index {idx} out of bounds (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(err(&format!("`{part}` is not inside an object or array"))),
        };
    }
    Ok(())
}

/// Parse, override, and validate a config given as JSON text.
pub fn parse_config(text: &str, origin: &str, overrides: &[String]) -> Result<WorldConfig, ConfigError> {
    let config: WorldConfig = if overrides.is_empty() {
        serde_json::from_str(text).map_err(|e| parse_error(origin, e))?
    } else {
        let mut root: Value = serde_json::from_str(text).map_err(|e| parse_error(origin, e))?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        serde_json::from_value(root).map_err(|e| ConfigError::Invalid {
            field: "(after overrides)".to_string(),
            message: e.to_string(),
        })?
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<WorldConfig, ConfigError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: origin.clone(),
        source,
    })?;
    parse_config(&text, &origin, overrides)
}
