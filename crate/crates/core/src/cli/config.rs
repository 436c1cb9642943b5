//! Scenario and sweep configuration.
//!
//! Config files are TOML. Every key is optional and falls back to the
//! factory-scenario defaults; unknown keys are rejected. A file containing a
//! `[sweep]` table describes a sweep, anything else a single scenario.
//!
//! ```toml
//! profile = "InF-SL"
//! n_ues = 10
//! region = "d2"          # d1 | d2 | d3 | radius in meters
//! seed = 7
//!
//! [channel]
//! fc_ghz = 5.9
//!
//! [traffic.video]
//! interval = { kind = "uniform", min = 0.060, max = 0.065 }
//!
//! [sweep]
//! ue_counts = [5, 50]
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelConfig, InfProfile};
use crate::mobility::{NamedRegion, RegionKind, SpeedRange};
use crate::radio::{BlerCurve, Direction, Numerology, RateMapping};
use crate::traffic::{Dist, TrafficSpec};
use crate::tsn::{PcpMap, TrafficClass};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config schema error: {0}")]
    Schema(String),
    #[error("invalid value for `{key}`{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Invalid {
        key: String,
        line: Option<usize>,
        msg: String,
    },
}

impl ConfigError {
    fn invalid(key: &str, msg: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_owned(),
            line: None,
            msg: msg.into(),
        }
    }

    fn with_line_from(self, text: &str) -> Self {
        match self {
            ConfigError::Invalid { key, line: None, msg } => {
                let line = locate_key(text, &key);
                ConfigError::Invalid { key, line, msg }
            }
            other => other,
        }
    }
}

/// 1-based line of the first assignment to the last segment of `key`.
fn locate_key(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(leaf)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSettings {
    pub fc_ghz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_clutter_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clutter_density_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_c_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_bs_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_ut_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shadow_sigma_db: Option<f64>,
    pub clamp_distances: bool,
    /// Fixed SINR penalty standing in for load-dependent interference.
    pub interference_margin_db: f64,
    pub ue_noise_figure_db: f64,
    pub gnb_noise_figure_db: f64,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        ChannelSettings {
            fc_ghz: 5.9,
            d_clutter_m: None,
            clutter_density_r: None,
            h_c_m: None,
            h_bs_m: None,
            h_ut_m: None,
            shadow_sigma_db: None,
            clamp_distances: true,
            interference_margin_db: 0.0,
            ue_noise_figure_db: 5.0,
            gnb_noise_figure_db: 7.0,
        }
    }
}

impl ChannelSettings {
    pub fn resolve(&self, profile: InfProfile) -> ChannelConfig {
        let d = ChannelConfig::defaults_for(profile);
        ChannelConfig {
            fc_ghz: self.fc_ghz,
            d_clutter_m: self.d_clutter_m.unwrap_or(d.d_clutter_m),
            clutter_density_r: self.clutter_density_r.unwrap_or(d.clutter_density_r),
            h_c_m: self.h_c_m.unwrap_or(d.h_c_m),
            h_bs_m: self.h_bs_m.unwrap_or(d.h_bs_m),
            h_ut_m: self.h_ut_m.unwrap_or(d.h_ut_m),
            shadow_sigma_override_db: self.shadow_sigma_db,
            clamp_distances: self.clamp_distances,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSettings {
    pub bandwidth_hz: f64,
    /// SINR at which a first transmission fails with probability `target_bler`.
    pub target_sinr_db: f64,
    pub bler_slope_per_db: f64,
    pub efficiency_factor: f64,
    pub se_cap: f64,
    pub harq_max_attempts: u32,
    pub harq_combining_gain_db: f64,
    pub harq_rtt_slots: u32,
    /// Replaces the SINR-driven BLER with a constant per-attempt error probability.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forced_bler: Option<f64>,
}

impl Default for RadioSettings {
    fn default() -> Self {
        RadioSettings {
            bandwidth_hz: 40e6,
            // midpoint 3 dB + ln(99) for a slope of 1/dB
            target_sinr_db: 7.595_119_850_134_59,
            bler_slope_per_db: 1.0,
            efficiency_factor: 0.75,
            se_cap: 7.4,
            harq_max_attempts: 4,
            harq_combining_gain_db: 3.0,
            harq_rtt_slots: 8,
            forced_bler: None,
        }
    }
}

impl RadioSettings {
    pub fn rate_mapping(&self) -> RateMapping {
        RateMapping {
            efficiency_factor: self.efficiency_factor,
            se_cap: self.se_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<Dist>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_time: Option<Dist>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_offset: Option<Dist>,
    pub downlink: bool,
    pub uplink: bool,
}

impl Default for ClassSettings {
    fn default() -> Self {
        ClassSettings {
            payload_bytes: None,
            interval: None,
            start_time: None,
            initial_offset: None,
            downlink: true,
            uplink: true,
        }
    }
}

impl ClassSettings {
    pub fn resolve(&self, class: TrafficClass) -> TrafficSpec {
        let d = TrafficSpec::default_for(class);
        TrafficSpec {
            class,
            payload_bytes: self.payload_bytes.unwrap_or(d.payload_bytes),
            interval: self.interval.unwrap_or(d.interval),
            start_time: self.start_time.unwrap_or(d.start_time),
            initial_offset: self.initial_offset.unwrap_or(d.initial_offset),
        }
    }

    pub fn enabled(&self, dir: Direction) -> bool {
        match dir {
            Direction::Downlink => self.downlink,
            Direction::Uplink => self.uplink,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSettings {
    pub nc: ClassSettings,
    pub video: ClassSettings,
    pub be: ClassSettings,
}

impl TrafficSettings {
    pub fn class(&self, class: TrafficClass) -> &ClassSettings {
        match class {
            TrafficClass::NetworkControl => &self.nc,
            TrafficClass::Video => &self.video,
            TrafficClass::BestEffort => &self.be,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsnSettings {
    pub port_bitrate_bps: f64,
    /// Explicit CBS reservation per egress port; derived from the Video
    /// streams when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub idle_slope_bps: Option<f64>,
    /// Packet interval used for the per-stream reservation; defaults to the
    /// shortest Video production interval.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reservation_interval_s: Option<f64>,
    pub hop_latency_s: f64,
    pub pcp: PcpMap,
    /// Write `egress_downlink.csv` / `egress_uplink.csv`.
    pub trace: bool,
}

impl Default for TsnSettings {
    fn default() -> Self {
        TsnSettings {
            port_bitrate_bps: 100e6,
            idle_slope_bps: None,
            reservation_interval_s: None,
            hop_latency_s: 0.0,
            pcp: PcpMap::default(),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilitySettings {
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub pause: Dist,
    pub gnb_x_m: f64,
    pub gnb_y_m: f64,
    /// Write `positions.csv` sampled every `trace_interval_s`.
    pub trace: bool,
    pub trace_interval_s: f64,
}

impl Default for MobilitySettings {
    fn default() -> Self {
        let speeds = SpeedRange::default();
        MobilitySettings {
            speed_min_mps: speeds.min_mps,
            speed_max_mps: speeds.max_mps,
            pause: Dist::Fixed { value: 0.0 },
            gnb_x_m: 0.0,
            gnb_y_m: 0.0,
            trace: false,
            trace_interval_s: 0.1,
        }
    }
}

impl MobilitySettings {
    pub fn speeds(&self) -> SpeedRange {
        SpeedRange {
            min_mps: self.speed_min_mps,
            max_mps: self.speed_max_mps,
        }
    }
}

/// Everything needed to run one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub profile: InfProfile,
    pub n_ues: u32,
    pub region: RegionKind,
    pub seed: u64,
    pub duration_s: f64,
    /// gNB transmit power.
    pub tx_power_dbm: f64,
    pub ue_tx_power_dbm: f64,
    pub target_bler: f64,
    pub numerology: u8,
    /// Drop samples of frames created before `warmup_s`.
    pub warmup_exclude: bool,
    pub warmup_s: f64,
    /// Extra simulated time allowed for in-flight frames after the last emission.
    pub drain_limit_s: f64,
    pub channel: ChannelSettings,
    pub radio: RadioSettings,
    pub traffic: TrafficSettings,
    pub tsn: TsnSettings,
    pub mobility: MobilitySettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            profile: InfProfile::Sl,
            n_ues: 5,
            region: RegionKind::Named(NamedRegion::D2),
            seed: 1,
            duration_s: 10.0,
            tx_power_dbm: 23.0,
            ue_tx_power_dbm: 23.0,
            target_bler: 0.01,
            numerology: 4,
            warmup_exclude: false,
            warmup_s: 1.5,
            drain_limit_s: 120.0,
            channel: ChannelSettings::default(),
            radio: RadioSettings::default(),
            traffic: TrafficSettings::default(),
            tsn: TsnSettings::default(),
            mobility: MobilitySettings::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn channel_config(&self) -> ChannelConfig {
        self.channel.resolve(self.profile)
    }

    pub fn numerology(&self) -> Numerology {
        Numerology { mu: self.numerology }
    }

    pub fn bler_curve(&self) -> Result<BlerCurve, ConfigError> {
        BlerCurve::anchored(self.target_bler, self.radio.target_sinr_db, self.radio.bler_slope_per_db)
            .map_err(|e| ConfigError::invalid("target_bler", e.to_string()))
    }

    pub fn traffic_spec(&self, class: TrafficClass) -> TrafficSpec {
        self.traffic.class(class).resolve(class)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("must be positive, got {v}")))
            }
        };
        if self.n_ues == 0 {
            return Err(ConfigError::invalid("n_ues", "must be at least 1"));
        }
        positive("duration_s", self.duration_s)?;
        positive("region", self.region.radius_m())?;
        if self.numerology > 6 {
            return Err(ConfigError::invalid("numerology", format!("mu must be 0..=6, got {}", self.numerology)));
        }
        if !(self.warmup_s >= 0.0) {
            return Err(ConfigError::invalid("warmup_s", "must be non-negative"));
        }
        positive("drain_limit_s", self.drain_limit_s)?;
        self.channel_config()
            .validate(self.profile)
            .map_err(|e| ConfigError::invalid("channel", e.to_string()))?;
        positive("channel.fc_ghz", self.channel.fc_ghz)?;
        positive("radio.bandwidth_hz", self.radio.bandwidth_hz)?;
        positive("radio.efficiency_factor", self.radio.efficiency_factor)?;
        positive("radio.se_cap", self.radio.se_cap)?;
        if self.radio.harq_max_attempts == 0 {
            return Err(ConfigError::invalid("radio.harq_max_attempts", "must be at least 1"));
        }
        if let Some(p) = self.radio.forced_bler {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::invalid("radio.forced_bler", format!("must lie in [0, 1], got {p}")));
            }
        }
        self.bler_curve()?;
        for class in TrafficClass::ALL {
            self.traffic_spec(class)
                .validate()
                .map_err(|e| ConfigError::invalid(&format!("traffic.{}", class.label()), e.to_string()))?;
        }
        positive("tsn.port_bitrate_bps", self.tsn.port_bitrate_bps)?;
        if !(self.tsn.hop_latency_s >= 0.0) {
            return Err(ConfigError::invalid("tsn.hop_latency_s", "must be non-negative"));
        }
        self.tsn
            .pcp
            .validate()
            .map_err(|e| ConfigError::invalid("tsn.pcp", e.to_string()))?;
        self.mobility
            .speeds()
            .validate()
            .map_err(|e| ConfigError::invalid("mobility.speed_min_mps", e.to_string()))?;
        self.mobility
            .pause
            .validate()
            .map_err(|e| ConfigError::invalid("mobility.pause", e.to_string()))?;
        positive("mobility.trace_interval_s", self.mobility.trace_interval_s)?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always serializable")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub profiles: Vec<InfProfile>,
    pub ue_counts: Vec<u32>,
    pub regions: Vec<RegionKind>,
    pub repetitions: u32,
}

impl Default for SweepAxes {
    fn default() -> Self {
        SweepAxes {
            profiles: vec![InfProfile::Sl, InfProfile::Dl, InfProfile::Sh, InfProfile::Dh],
            ue_counts: vec![5, 10, 25, 50],
            regions: vec![RegionKind::Named(NamedRegion::D2)],
            repetitions: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    pub axes: SweepAxes,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.axes;
        if a.profiles.is_empty() {
            return Err(ConfigError::invalid("sweep.profiles", "must not be empty"));
        }
        if a.ue_counts.is_empty() || a.ue_counts.contains(&0) {
            return Err(ConfigError::invalid("sweep.ue_counts", "must be non-empty and all >= 1"));
        }
        if a.regions.is_empty() {
            return Err(ConfigError::invalid("sweep.regions", "must not be empty"));
        }
        if a.repetitions == 0 {
            return Err(ConfigError::invalid("sweep.repetitions", "must be at least 1"));
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Scenario(ScenarioConfig),
    Sweep(SweepConfig),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepOnly {
    #[serde(default)]
    sweep: SweepAxes,
}

fn is_table_header(line: &str) -> Option<&str> {
    let l = line.trim();
    let l = l.split_once('#').map_or(l, |(head, _)| head).trim_end();
    let inner = l.strip_prefix('[')?.strip_suffix(']')?;
    if inner.starts_with('[') || inner.contains(',') {
        return None;
    }
    Some(inner.trim().trim_matches('"'))
}

/// Splits the text into the scenario part and the `[sweep]` part, blanking
/// lines so that both keep their original line numbers.
fn split_sweep(text: &str) -> (String, String, bool) {
    let mut scenario = String::with_capacity(text.len());
    let mut sweep = String::new();
    let mut in_sweep = false;
    let mut found = false;
    for line in text.lines() {
        if let Some(name) = is_table_header(line) {
            in_sweep = name == "sweep" || name.starts_with("sweep.");
            found |= in_sweep;
        }
        let (to, blank) = if in_sweep {
            (&mut sweep, &mut scenario)
        } else {
            (&mut scenario, &mut sweep)
        };
        to.push_str(line);
        to.push('\n');
        blank.push('\n');
    }
    (scenario, sweep, found)
}

fn schema_err(e: toml::de::Error) -> ConfigError {
    ConfigError::Schema(e.to_string())
}

pub fn parse_config_str(text: &str) -> Result<ConfigFile, ConfigError> {
    let (scenario_text, sweep_text, has_sweep) = split_sweep(text);
    let base: ScenarioConfig = toml::from_str(&scenario_text).map_err(schema_err)?;
    if has_sweep {
        let axes = toml::from_str::<SweepOnly>(&sweep_text).map_err(schema_err)?.sweep;
        let sweep = SweepConfig { base, axes };
        sweep.validate().map_err(|e| e.with_line_from(text))?;
        Ok(ConfigFile::Sweep(sweep))
    } else {
        base.validate().map_err(|e| e.with_line_from(text))?;
        Ok(ConfigFile::Scenario(base))
    }
}

pub fn parse_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}
