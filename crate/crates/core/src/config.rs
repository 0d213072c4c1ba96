//! TOML run configuration.
//!
//! Every physical quantity carries its unit in the key name. Unknown keys are
//! rejected. `--set section.key=value` style overrides are applied to the
//! parsed document before it is interpreted, so they take precedence over
//! file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capacity::{dbm_per_hz_to_watts, CapacityParams};
use crate::channel::ChannelConfig;
use crate::eigen::EigenOptions;
use crate::error::{Result, WpcnError};
use crate::model::{Link, NetworkTopology, Stream, SystemConstants, OPTIMAL_ALPHA};
use crate::simulator::{ArrivalDistribution, ArrivalSpec, RunConfig, Verification};

/// Bundled five-node relay configuration.
pub const BUNDLED_FIVE_NODE: &str = include_str!("../configs/five_node_relay.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub topology: TopologySection,
    pub constants: ConstantsSection,
    pub channel: ChannelSection,
    pub capacity: CapacitySection,
    pub arrivals: ArrivalsSection,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub nodes: usize,
    pub antennas: usize,
    /// `[transmitter, receiver]` pairs, zero-based node ids.
    pub links: Vec<[usize; 2]>,
    /// `[source, sink]` pairs.
    pub streams: Vec<[usize; 2]>,
    /// Direction of each node seen from the array, radians.
    pub angles_rad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub p_max_w: f64,
    pub p_ap_max_w: f64,
    /// Defaults to the largest value the arrival distribution can produce.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_peak_bits: Option<f64>,
    /// Defaults to `sqrt(2) + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_battery_j: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery_cap_j: Option<f64>,
}

/// A value shared by every entry, or one value per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerEntry {
    All(f64),
    Each(Vec<f64>),
}

impl PerEntry {
    fn expand(&self, len: usize) -> Vec<f64> {
        match self {
            PerEntry::All(v) => vec![*v; len],
            PerEntry::Each(values) => values.clone(),
        }
    }
}

fn default_spacing() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub rician_k: f64,
    /// Mean power gain per data link (linear).
    pub data_gain: PerEntry,
    /// Mean per-antenna power gain per energy link (linear).
    pub energy_gain: PerEntry,
    #[serde(default = "default_spacing")]
    pub spacing_wavelengths: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_los_phase_rad: Option<PerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    pub bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
    /// Ceiling on data-link power gains; larger draws are clipped.
    pub max_gain_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistributionName {
    Constant,
    #[default]
    Uniform,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalsSection {
    #[serde(default)]
    pub distribution: DistributionName,
    /// Mean bits per slot of each stream.
    pub mean_bits: Vec<f64>,
}

fn default_drift_every() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub slots: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_list: Option<Vec<f64>>,
    /// 0 disables the pathwise drift check.
    #[serde(default = "default_drift_every")]
    pub drift_check_every: u64,
    #[serde(default = "default_true")]
    pub battery_safety: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TraceLevel {
    Off,
    #[default]
    Scalar,
    Full,
}

impl std::str::FromStr for TraceLevel {
    type Err = WpcnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(TraceLevel::Off),
            "scalar" => Ok(TraceLevel::Scalar),
            "full" => Ok(TraceLevel::Full),
            other => Err(WpcnError::Config(format!("unknown trace level `{other}`"))),
        }
    }
}

fn default_directory() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default)]
    pub trace: TraceLevel,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            trace: TraceLevel::default(),
        }
    }
}

/// Sets a dotted `key` (e.g. `constants.v`) in a parsed document. The value
/// is read as a TOML literal, falling back to a bare string.
pub fn apply_override(doc: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed = format!("value = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("value"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| WpcnError::Config(format!("empty override key `{key}`")))?;
    let mut table = doc;
    for part in parts {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| WpcnError::Config(format!("`{part}` in `{key}` is not a section")))?;
    }
    table.insert(leaf.to_string(), parsed);
    Ok(())
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text` after applying `(key, value)` overrides in order.
    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc = text
            .parse::<toml::Table>()
            .map_err(|e| WpcnError::Config(e.to_string()))?;
        for (key, value) in overrides {
            apply_override(&mut doc, key, value)?;
        }
        doc.try_into().map_err(|e: toml::de::Error| WpcnError::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WpcnError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_with_overrides(&text, overrides)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_FIVE_NODE).expect("bundled configuration parses")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| WpcnError::Config(e.to_string()))
    }

    pub fn topology(&self) -> Result<NetworkTopology> {
        let t = &self.topology;
        NetworkTopology::new(
            t.nodes,
            t.antennas,
            t.links.iter().map(|&[tx, rx]| Link { tx, rx }).collect(),
            t.streams.iter().map(|&[source, sink]| Stream { source, sink }).collect(),
        )
    }

    pub fn capacity_params(&self) -> Result<CapacityParams> {
        let c = &self.capacity;
        CapacityParams::new(c.bandwidth_hz, dbm_per_hz_to_watts(c.noise_dbm_per_hz), c.max_gain_sq)
    }

    fn distribution(&self) -> ArrivalDistribution {
        match self.arrivals.distribution {
            DistributionName::Constant => ArrivalDistribution::Constant,
            DistributionName::Uniform => ArrivalDistribution::Uniform,
            DistributionName::Bernoulli => ArrivalDistribution::Bernoulli,
        }
    }

    /// Interprets the document as a validated run.
    pub fn build(&self) -> Result<RunConfig> {
        let topology = self.topology()?;
        let capacity = self.capacity_params()?;
        let k = &self.constants;
        if !(k.p_max_w.is_finite() && k.p_max_w > 0.0) {
            return Err(WpcnError::param("constants.p_max_w", "must be finite and > 0"));
        }
        let distribution = self.distribution();
        let arrival_peak = k.arrival_peak_bits.unwrap_or_else(|| {
            let largest = self.arrivals.mean_bits.iter().copied().fold(0.0, f64::max);
            match distribution {
                ArrivalDistribution::Uniform => 2.0 * largest,
                _ => largest,
            }
        });
        let constants = SystemConstants::new(
            k.p_max_w,
            k.p_ap_max_w,
            arrival_peak,
            capacity.capacity_max(k.p_max_w),
            capacity.delta_bound(),
            k.alpha.unwrap_or(OPTIMAL_ALPHA),
            k.v,
        )?;
        let links = topology.link_count();
        let nodes = topology.node_count();
        let channel = ChannelConfig {
            rician_k: self.channel.rician_k,
            data_gain: self.channel.data_gain.expand(links),
            energy_gain: self.channel.energy_gain.expand(nodes),
            node_angles: self.topology.angles_rad.clone(),
            spacing: self.channel.spacing_wavelengths,
            data_los_phase: self
                .channel
                .data_los_phase_rad
                .as_ref()
                .map_or_else(|| vec![0.0; links], |p| p.expand(links)),
        };
        let config = RunConfig {
            topology,
            constants,
            channel,
            capacity,
            arrivals: ArrivalSpec {
                distribution,
                mean: self.arrivals.mean_bits.clone(),
            },
            horizon: self.run.slots,
            seed: self.run.seed,
            initial_battery: k.initial_battery_j.clone(),
            battery_cap: k.battery_cap_j,
            verification: Verification {
                drift_check_every: self.run.drift_check_every,
                battery_safety: self.run.battery_safety,
            },
            eigen: EigenOptions::default(),
        };
        config.validate()?;
        Ok(config)
    }
}
