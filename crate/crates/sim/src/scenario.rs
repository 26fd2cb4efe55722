//! Scenario files: TOML documents with strict parsing (unknown keys are
//! errors), validated invariants, and dotted-path overrides applied to
//! the document before deserialization so `--override k=v` is
//! indistinguishable from editing the file.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::adversary::AdversaryProfile;
use crate::trust::TrustParams;
use crate::types::NodeId;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Protocol {
    Aodv,
    Dsr,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Aodv => "AODV",
            Protocol::Dsr => "DSR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
pub enum SecurityMode {
    Baseline,
    TripleFactor,
}

impl SecurityMode {
    pub fn name(self) -> &'static str {
        match self {
            SecurityMode::Baseline => "Baseline",
            SecurityMode::TripleFactor => "TripleFactor",
        }
    }
}

/// Which security modes a `run` executes; `compare` always forces Both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum ModeSelection {
    Baseline,
    TripleFactor,
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<SecurityMode> {
        match self {
            ModeSelection::Baseline => vec![SecurityMode::Baseline],
            ModeSelection::TripleFactor => vec![SecurityMode::TripleFactor],
            ModeSelection::Both => vec![SecurityMode::Baseline, SecurityMode::TripleFactor],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaConfig {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub range: f64,
    pub frame_loss_prob: f64,
    pub per_hop_latency: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            range: 250.0,
            frame_loss_prob: 0.0,
            per_hop_latency: 0.002,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause_time: f64,
    pub step_interval: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            speed_min: 0.0,
            speed_max: 0.0,
            pause_time: 0.0,
            step_interval: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficFlow {
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(default)]
    pub start_at: f64,
    pub interval: f64,
    pub payload_bytes: u32,
    pub count: u32,
}

fn default_seeds() -> Vec<u64> {
    (1..=20).collect()
}

fn default_duration() -> f64 {
    200.0
}

fn default_mode() -> ModeSelection {
    ModeSelection::TripleFactor
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub node_count: u32,
    pub arena: ArenaConfig,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub mobility: MobilityConfig,
    pub protocol: Protocol,
    #[serde(default = "default_mode")]
    pub security_mode: ModeSelection,
    #[serde(default)]
    pub trust: TrustParams,
    #[serde(default)]
    pub positions: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub traffic: Vec<TrafficFlow>,
    #[serde(default)]
    pub adversaries: Vec<AdversaryProfile>,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Validation(msg));
        if self.node_count < 2 {
            return fail(format!("node_count must be >= 2, got {}", self.node_count));
        }
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return fail(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.arena.width > 0.0 && self.arena.height > 0.0) {
            return fail("arena dimensions must be positive".into());
        }
        if !self.radio.range.is_finite() || self.radio.range <= 0.0 {
            return fail(format!(
                "radio.range must be positive, got {}",
                self.radio.range
            ));
        }
        if !(0.0..=1.0).contains(&self.radio.frame_loss_prob) {
            return fail(format!(
                "radio.frame_loss_prob must be in [0,1], got {}",
                self.radio.frame_loss_prob
            ));
        }
        if !self.radio.per_hop_latency.is_finite() || self.radio.per_hop_latency <= 0.0 {
            return fail(format!(
                "radio.per_hop_latency must be positive, got {}",
                self.radio.per_hop_latency
            ));
        }
        if self.mobility.speed_min < 0.0 || self.mobility.speed_max < self.mobility.speed_min {
            return fail("mobility speeds must satisfy 0 <= speed_min <= speed_max".into());
        }
        if self.mobility.pause_time < 0.0
            || !self.mobility.step_interval.is_finite()
            || self.mobility.step_interval <= 0.0
        {
            return fail("mobility pause_time must be >= 0 and step_interval positive".into());
        }
        self.trust.validate().map_err(ScenarioError::Validation)?;
        if let Some(pos) = &self.positions {
            if pos.len() != self.node_count as usize {
                return fail(format!(
                    "positions lists {} nodes, node_count is {}",
                    pos.len(),
                    self.node_count
                ));
            }
            for (x, y) in pos {
                if !(0.0..=self.arena.width).contains(x) || !(0.0..=self.arena.height).contains(y) {
                    return fail(format!("position ({x}, {y}) outside arena"));
                }
            }
        }
        for f in &self.traffic {
            if f.src.0 >= self.node_count || f.dst.0 >= self.node_count {
                return fail(format!(
                    "traffic endpoints {} -> {} out of range",
                    f.src, f.dst
                ));
            }
            if f.src == f.dst {
                return fail(format!("traffic flow {} -> itself", f.src));
            }
            if !f.interval.is_finite() || f.interval <= 0.0 || f.start_at < 0.0 {
                return fail("traffic interval must be positive and start_at >= 0".into());
            }
        }
        for a in &self.adversaries {
            a.validate(self.node_count)
                .map_err(ScenarioError::Validation)?;
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        Ok(())
    }
}

/// Parse a TOML literal for an override value; bare words fall back to
/// strings so `--override protocol=Dsr` works unquoted.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Table, key: &str, raw: &str) -> Result<(), ScenarioError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            ScenarioError::Parse(format!("override path '{key}' crosses a non-table value"))
        })?;
    }
    table.insert(
        parts[parts.len() - 1].to_string(),
        parse_override_value(raw),
    );
    Ok(())
}

/// Parse, apply overrides (`key.path=value`), validate.
pub fn parse_scenario_str(
    text: &str,
    overrides: &[(String, String)],
) -> Result<ScenarioConfig, ScenarioError> {
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    let config: ScenarioConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_scenario(
    path: &Path,
    overrides: &[(String, String)],
) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text, overrides)
}
