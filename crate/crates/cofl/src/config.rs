//! Scenario files: TOML, every knob explicit once parsed.

use crate::error::HarnessError;
use cofl_core::channel::{CoherenceProfile, DeviceClass};
use cofl_core::learner::{Impairments, LearnConfig, PhyConfig, PipelineConfig, Scheme, StepSchedule};
use cofl_core::scheduler::{Roster, RosterEntry};
use cofl_core::task::{LogisticSpec, TaskSpec};
use cofl_core::uplink::CombinerMode;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub scheme: Scheme,
    pub rounds: u32,
    /// Number of seeds; runs use `base_seed .. base_seed + seeds`.
    pub seeds: u32,
    pub base_seed: u64,
    /// Seed of the dataset and of the shared initial model.
    pub task_seed: u64,
    pub devices: DeviceConfig,
    pub channel: ChannelConfig,
    pub learning: LearnConfig,
    pub task: TaskSpec,
    pub bounds: BoundsConfig,
    pub output: OutputConfig,
}

/// `K = statics + dynamics` devices. Static devices get ids `0..statics` and
/// coherence spanning the grid; dynamic device `j` gets
/// `(coherence_time[j % len], coherence_bandwidth[j % len])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub statics: usize,
    pub dynamics: usize,
    /// `K_D`: dynamic devices admitted per round.
    pub scheduled_dynamics: usize,
    pub shard_size: usize,
    pub coherence_time: Vec<usize>,
    pub coherence_bandwidth: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// `ρ/σ²` in dB.
    pub snr_db: f64,
    /// Uplink `ρ_u` relative to the downlink `ρ`, in dB.
    pub uplink_snr_offset_db: f64,
    pub noise_var: f64,
    pub symbols: usize,
    pub subcarriers: usize,
    pub antennas: usize,
    /// Pilot subcarrier every this many tones; 0 disables frequency pilots.
    pub freq_pilot_period: usize,
    pub clip_floor: f64,
    pub static_refresh: u32,
    pub combiner: CombinerMode,
    pub rotate_placement: bool,
    pub downlink_impaired: bool,
    pub uplink_impaired: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub enabled: bool,
    pub probe_every: u32,
    pub n_mc: usize,
    /// Smoothness `L` used by the bounds; 0 takes the task's value or an estimate.
    pub smoothness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub format: Format,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            scheme: Scheme::Plmf,
            rounds: 100,
            seeds: 20,
            base_seed: 0,
            task_seed: 7,
            devices: DeviceConfig::default(),
            channel: ChannelConfig::default(),
            learning: LearnConfig { local_steps: 1, batch_size: 0, schedule: StepSchedule::Constant { eta: 2.0 } },
            task: TaskSpec::Logistic(LogisticSpec {
                dim: 40,
                test_samples: 500,
                reg: 1e-3,
                signal: 8.0,
                heterogeneity: 0.5,
            }),
            bounds: BoundsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            statics: 10,
            dynamics: 10,
            scheduled_dynamics: 10,
            shard_size: 50,
            coherence_time: vec![4, 8],
            coherence_bandwidth: vec![1, 2, 3, 4, 5],
        }
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            snr_db: 20.0,
            uplink_snr_offset_db: 0.0,
            noise_var: 1.0,
            symbols: 8,
            subcarriers: 5,
            antennas: 1,
            freq_pilot_period: 5,
            clip_floor: 0.1,
            static_refresh: 10,
            combiner: CombinerMode::FirstAntenna,
            rotate_placement: true,
            downlink_impaired: true,
            uplink_impaired: true,
        }
    }
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { enabled: false, probe_every: 10, n_mc: 10, smoothness: 0.0 }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), format: Format::Csv }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Full echo with every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    /// Structural checks that need no task data.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.=".contains(c)) {
            return bad(format!("name {:?}: use letters, digits and -_.=", self.name));
        }
        if self.rounds == 0 {
            return bad("rounds: must be at least 1".into());
        }
        if self.seeds == 0 {
            return bad("seeds: must be at least 1".into());
        }
        let dev = &self.devices;
        if dev.statics + dev.dynamics == 0 {
            return bad("devices: need at least one device".into());
        }
        if dev.scheduled_dynamics > dev.dynamics {
            return bad(format!(
                "devices.scheduled_dynamics = {} exceeds devices.dynamics = {}",
                dev.scheduled_dynamics, dev.dynamics
            ));
        }
        if dev.shard_size == 0 {
            return bad("devices.shard_size: must be at least 1".into());
        }
        if dev.dynamics > 0 && (dev.coherence_time.is_empty() || dev.coherence_bandwidth.is_empty()) {
            return bad("devices: dynamic coherence lists must be non-empty".into());
        }
        if dev.coherence_time.iter().chain(&dev.coherence_bandwidth).any(|&v| v == 0) {
            return bad("devices: coherence lengths must be at least 1".into());
        }
        let ch = &self.channel;
        if ch.symbols == 0 || ch.subcarriers == 0 || ch.antennas == 0 {
            return bad("channel: grid dimensions must be positive".into());
        }
        if ch.antennas != 1 {
            return bad("channel.antennas: the learning pipeline supports 1 antenna".into());
        }
        if !ch.snr_db.is_finite() || !ch.uplink_snr_offset_db.is_finite() {
            return bad("channel: SNR values must be finite".into());
        }
        if !(ch.noise_var >= 0.0) {
            return bad("channel.noise_var: must be non-negative".into());
        }
        if !(ch.clip_floor > 0.0) {
            return bad("channel.clip_floor: must be positive".into());
        }
        if ch.static_refresh == 0 {
            return bad("channel.static_refresh: must be at least 1".into());
        }
        if self.learning.local_steps == 0 {
            return bad("learning.local_steps: must be at least 1".into());
        }
        self.learning.schedule.validate().map_err(|e| HarnessError::Config(format!("learning.schedule: {e}")))?;
        if self.bounds.enabled && self.bounds.n_mc < 10 {
            return bad("bounds.n_mc: need at least 10 replays".into());
        }
        if !(self.bounds.smoothness >= 0.0) {
            return bad("bounds.smoothness: must be non-negative".into());
        }
        Ok(())
    }

    pub fn num_devices(&self) -> usize {
        self.devices.statics + self.devices.dynamics
    }

    pub fn roster(&self) -> Result<Roster, HarnessError> {
        let dev = &self.devices;
        let ch = &self.channel;
        let mut devices = Vec::with_capacity(self.num_devices());
        for id in 0..dev.statics {
            let profile = CoherenceProfile::new(id as u32, ch.symbols, ch.subcarriers, DeviceClass::Static)?;
            devices.push(RosterEntry { profile, shard_size: dev.shard_size });
        }
        for j in 0..dev.dynamics {
            let lt = dev.coherence_time[j % dev.coherence_time.len()];
            let lf = dev.coherence_bandwidth[j % dev.coherence_bandwidth.len()];
            let profile = CoherenceProfile::new((dev.statics + j) as u32, lt, lf, DeviceClass::Dynamic)?;
            devices.push(RosterEntry { profile, shard_size: dev.shard_size });
        }
        Ok(Roster { devices })
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let ch = &self.channel;
        PipelineConfig {
            scheme: self.scheme,
            dynamic_devices: self.devices.scheduled_dynamics,
            phy: PhyConfig {
                snr_db: ch.snr_db,
                noise_var: ch.noise_var,
                symbols: ch.symbols,
                subcarriers: ch.subcarriers,
                antennas: ch.antennas,
                freq_pilot_period: (ch.freq_pilot_period > 0).then_some(ch.freq_pilot_period),
                uplink_snr_db: Some(ch.snr_db + ch.uplink_snr_offset_db),
                clip_floor: ch.clip_floor,
                static_refresh: ch.static_refresh,
                combiner: ch.combiner,
                rotate_placement: ch.rotate_placement,
                impairments: Impairments { downlink: ch.downlink_impaired, uplink: ch.uplink_impaired },
            },
            learn: self.learning,
        }
    }

    /// Apply `path = value` where `value` is a TOML literal (bare words are
    /// taken as strings). Integers are widened when the field holds a float.
    pub fn with_override(&self, path: &str, value: &str) -> Result<Self, HarnessError> {
        let mut root = toml::Value::try_from(self).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut parsed = parse_literal(value);
        let keys: Vec<&str> = path.split('.').collect();
        let (last, parents) = keys.split_last().ok_or_else(|| HarnessError::Config("empty parameter path".into()))?;
        let mut node = &mut root;
        for k in parents {
            node = node
                .get_mut(*k)
                .ok_or_else(|| HarnessError::Config(format!("unknown parameter {path:?}")))?;
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("{path:?} does not name a field")))?;
        let slot = table
            .get_mut(*last)
            .ok_or_else(|| HarnessError::Config(format!("unknown parameter {path:?}")))?;
        if let (toml::Value::Float(_), toml::Value::Integer(i)) = (&*slot, &parsed) {
            parsed = toml::Value::Float(*i as f64);
        }
        *slot = parsed;
        let cfg: Self = root.try_into().map_err(|e: toml::de::Error| HarnessError::Config(format!("{path}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_literal(value: &str) -> toml::Value {
    let wrapped = format!("v = {value}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}
