//! Indoor-factory large-scale channel: LOS/NLOS path loss, LOS probability,
//! log-normal shadow fading and a thermal-noise SINR abstraction.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RngStream;

/// Shadow-fading standard deviation for LOS links in every profile.
pub const SIGMA_SF_LOS_DB: f64 = 4.0;

pub const MIN_DISTANCE_M: f64 = 1.0;
pub const MAX_DISTANCE_M: f64 = 600.0;

/// Thermal noise density at room temperature.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("3D distance {0} m is outside the model validity range [1, 600] m")]
    DistanceOutOfRange(f64),
    #[error("carrier frequency must be positive, got {0} GHz")]
    InvalidFrequency(f64),
    #[error("profile {0} has no NLOS path-loss model")]
    NoNlosModel(InfProfile),
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
}

/// Indoor-factory scenario variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InfProfile {
    /// Sparse clutter, low base station.
    #[serde(rename = "InF-SL")]
    Sl,
    /// Dense clutter, low base station.
    #[serde(rename = "InF-DL")]
    Dl,
    /// Sparse clutter, high base station.
    #[serde(rename = "InF-SH")]
    Sh,
    /// Dense clutter, high base station.
    #[serde(rename = "InF-DH")]
    Dh,
    /// High transmitter, high receiver.
    #[serde(rename = "InF-HH")]
    Hh,
}

impl InfProfile {
    pub const ALL: [InfProfile; 5] = [Self::Sl, Self::Dl, Self::Sh, Self::Dh, Self::Hh];

    pub fn label(self) -> &'static str {
        match self {
            Self::Sl => "InF-SL",
            Self::Dl => "InF-DL",
            Self::Sh => "InF-SH",
            Self::Dh => "InF-DH",
            Self::Hh => "InF-HH",
        }
    }

    pub fn is_dense(self) -> bool {
        matches!(self, Self::Dl | Self::Dh)
    }

    /// Base station mounted above the clutter.
    pub fn is_elevated_bs(self) -> bool {
        matches!(self, Self::Sh | Self::Dh | Self::Hh)
    }

    /// Shadow-fading standard deviation in dB for the given LOS state.
    pub fn shadow_sigma_db(self, los: bool) -> f64 {
        if los {
            return SIGMA_SF_LOS_DB;
        }
        match self {
            Self::Sl => 5.7,
            Self::Dl => 7.2,
            Self::Sh => 5.9,
            Self::Dh => 4.0,
            // never NLOS
            Self::Hh => SIGMA_SF_LOS_DB,
        }
    }
}

impl fmt::Display for InfProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for InfProfile {
    type Err = ChannelError;

    /// Accepts `InF-SL`, `inf-sl` and bare `SL` spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        let short = upper.strip_prefix("INF-").unwrap_or(&upper);
        match short {
            "SL" => Ok(Self::Sl),
            "DL" => Ok(Self::Dl),
            "SH" => Ok(Self::Sh),
            "DH" => Ok(Self::Dh),
            "HH" => Ok(Self::Hh),
            _ => Err(ChannelError::InvalidConfig(format!("unknown profile `{s}`"))),
        }
    }
}

/// Geometry and clutter parameters of the factory hall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub fc_ghz: f64,
    pub d_clutter_m: f64,
    pub clutter_density_r: f64,
    pub h_c_m: f64,
    pub h_bs_m: f64,
    pub h_ut_m: f64,
    /// Replaces the profile's shadow-fading sigma when set.
    pub shadow_sigma_override_db: Option<f64>,
    /// Clamp 3D distances below 1 m up to 1 m instead of failing.
    pub clamp_distances: bool,
}

impl ChannelConfig {
    /// Calibration defaults: sparse r=0.2, d_clutter=10 m, h_c=2 m; dense
    /// r=0.6, d_clutter=2 m, h_c=6 m; BS at 1.5 m (low) or 8 m (high);
    /// UT at 1.5 m; carrier 5.9 GHz.
    pub fn defaults_for(profile: InfProfile) -> Self {
        let (d_clutter_m, clutter_density_r, h_c_m) = if profile.is_dense() {
            (2.0, 0.6, 6.0)
        } else {
            (10.0, 0.2, 2.0)
        };
        ChannelConfig {
            fc_ghz: 5.9,
            d_clutter_m,
            clutter_density_r,
            h_c_m,
            h_bs_m: if profile.is_elevated_bs() { 8.0 } else { 1.5 },
            h_ut_m: 1.5,
            shadow_sigma_override_db: None,
            clamp_distances: false,
        }
    }

    pub fn validate(&self, profile: InfProfile) -> Result<(), ChannelError> {
        let bad = |msg: String| Err(ChannelError::InvalidConfig(msg));
        if !(self.fc_ghz > 0.0) {
            return Err(ChannelError::InvalidFrequency(self.fc_ghz));
        }
        if !(self.clutter_density_r > 0.0 && self.clutter_density_r < 1.0) {
            return bad(format!(
                "clutter density r must lie in (0, 1), got {}",
                self.clutter_density_r
            ));
        }
        if !(self.d_clutter_m > 0.0) {
            return bad(format!("d_clutter must be positive, got {}", self.d_clutter_m));
        }
        if self.h_bs_m < 0.0 || self.h_ut_m < 0.0 || self.h_c_m < 0.0 {
            return bad("antenna and clutter heights must be non-negative".into());
        }
        if matches!(profile, InfProfile::Sh | InfProfile::Dh)
            && !(self.h_bs_m > self.h_c_m && self.h_c_m > self.h_ut_m)
        {
            return bad(format!(
                "{profile} requires h_BS > h_c > h_UT, got h_BS={} h_c={} h_UT={}",
                self.h_bs_m, self.h_c_m, self.h_ut_m
            ));
        }
        if let Some(sigma) = self.shadow_sigma_override_db {
            if !(sigma >= 0.0) {
                return bad(format!("shadow sigma override must be >= 0, got {sigma}"));
            }
        }
        Ok(())
    }

    pub fn shadow_sigma_db(&self, profile: InfProfile, los: bool) -> f64 {
        self.shadow_sigma_override_db
            .unwrap_or_else(|| profile.shadow_sigma_db(los))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position3D { x, y, z }
    }

    pub fn distance_2d(&self, other: &Position3D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_3d(&self, other: &Position3D) -> f64 {
        let dz = self.z - other.z;
        (self.distance_2d(other).powi(2) + dz * dz).sqrt()
    }
}

/// Large-scale link state. LOS and shadowing are fixed per mobility leg;
/// the path loss follows the current distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeScaleState {
    pub los: bool,
    pub shadow_db: f64,
    pub pathloss_db: f64,
}

impl LargeScaleState {
    /// Recomputes path loss for a new distance, keeping LOS and shadowing.
    pub fn at_distance(
        self,
        profile: InfProfile,
        d3d_m: f64,
        cfg: &ChannelConfig,
    ) -> Result<Self, ChannelError> {
        let d = effective_distance(d3d_m, cfg)?;
        Ok(LargeScaleState {
            pathloss_db: pathloss(profile, self.los, d, cfg.fc_ghz)?,
            ..self
        })
    }
}

fn check_inputs(d3d_m: f64, fc_ghz: f64) -> Result<(), ChannelError> {
    if !(MIN_DISTANCE_M..=MAX_DISTANCE_M).contains(&d3d_m) {
        return Err(ChannelError::DistanceOutOfRange(d3d_m));
    }
    if !(fc_ghz > 0.0) {
        return Err(ChannelError::InvalidFrequency(fc_ghz));
    }
    Ok(())
}

fn effective_distance(d3d_m: f64, cfg: &ChannelConfig) -> Result<f64, ChannelError> {
    if cfg.clamp_distances && d3d_m < MIN_DISTANCE_M {
        Ok(MIN_DISTANCE_M)
    } else {
        check_inputs(d3d_m, cfg.fc_ghz)?;
        Ok(d3d_m)
    }
}

/// LOS path loss in dB.
pub fn pathloss_los(d3d_m: f64, fc_ghz: f64) -> Result<f64, ChannelError> {
    check_inputs(d3d_m, fc_ghz)?;
    Ok(31.84 + 21.5 * d3d_m.log10() + 19.0 * fc_ghz.log10())
}

fn nlos_sl_raw(d: f64, f: f64) -> f64 {
    33.0 + 25.5 * d.log10() + 20.0 * f.log10()
}

/// NLOS path loss in dB. Each variant is lower-bounded by the LOS loss; the
/// dense-low variant is further bounded by the sparse-low NLOS loss.
pub fn pathloss_nlos(profile: InfProfile, d3d_m: f64, fc_ghz: f64) -> Result<f64, ChannelError> {
    let los = pathloss_los(d3d_m, fc_ghz)?;
    let (d, f) = (d3d_m, fc_ghz);
    let pl = match profile {
        InfProfile::Sl => nlos_sl_raw(d, f).max(los),
        InfProfile::Dl => {
            let raw = 18.6 + 35.7 * d.log10() + 20.0 * f.log10();
            raw.max(los).max(nlos_sl_raw(d, f).max(los))
        }
        InfProfile::Sh => (32.4 + 23.0 * d.log10() + 20.0 * f.log10()).max(los),
        InfProfile::Dh => (33.63 + 21.9 * d.log10() + 20.0 * f.log10()).max(los),
        InfProfile::Hh => return Err(ChannelError::NoNlosModel(profile)),
    };
    Ok(pl)
}

pub fn pathloss(profile: InfProfile, los: bool, d3d_m: f64, fc_ghz: f64) -> Result<f64, ChannelError> {
    if los {
        pathloss_los(d3d_m, fc_ghz)
    } else {
        pathloss_nlos(profile, d3d_m, fc_ghz)
    }
}

/// Decay distance of the exponential LOS-probability model, in meters.
pub fn los_decay_distance(profile: InfProfile, cfg: &ChannelConfig) -> Result<f64, ChannelError> {
    let base = -cfg.d_clutter_m / (1.0 - cfg.clutter_density_r).ln();
    match profile {
        InfProfile::Sl | InfProfile::Dl => Ok(base),
        InfProfile::Sh | InfProfile::Dh => {
            if cfg.h_c_m <= cfg.h_ut_m {
                return Err(ChannelError::InvalidConfig(format!(
                    "{profile} requires h_c > h_UT, got h_c={} h_UT={}",
                    cfg.h_c_m, cfg.h_ut_m
                )));
            }
            Ok(base * (cfg.h_bs_m - cfg.h_ut_m) / (cfg.h_c_m - cfg.h_ut_m))
        }
        InfProfile::Hh => Ok(f64::INFINITY),
    }
}

pub fn los_probability(profile: InfProfile, d2d_m: f64, cfg: &ChannelConfig) -> Result<f64, ChannelError> {
    if !(d2d_m >= 0.0) {
        return Err(ChannelError::InvalidConfig(format!(
            "2D distance must be non-negative, got {d2d_m}"
        )));
    }
    if profile == InfProfile::Hh {
        return Ok(1.0);
    }
    cfg.validate(profile)?;
    let k = los_decay_distance(profile, cfg)?;
    Ok((-d2d_m / k).exp().clamp(0.0, 1.0))
}

/// Draws a zero-mean shadow-fading sample for the given LOS state.
pub fn draw_shadow(profile: InfProfile, los: bool, cfg: &ChannelConfig, rng: &mut RngStream) -> f64 {
    let sigma = cfg.shadow_sigma_db(profile, los);
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma)
        .expect("sigma validated non-negative")
        .sample(rng)
}

/// Draws LOS state and shadow fading for a link and evaluates path loss at
/// the current geometry.
pub fn draw_large_scale(
    profile: InfProfile,
    tx: &Position3D,
    rx: &Position3D,
    cfg: &ChannelConfig,
    rng: &mut RngStream,
) -> Result<LargeScaleState, ChannelError> {
    let d3d = effective_distance(tx.distance_3d(rx), cfg)?;
    let p_los = los_probability(profile, tx.distance_2d(rx), cfg)?;
    // Consume one draw even for HH so stream alignment is profile-independent.
    let los = rng.bernoulli(p_los);
    large_scale_given_los(profile, los, d3d, cfg, rng)
}

/// Same as [`draw_large_scale`] with the LOS state imposed.
pub fn large_scale_given_los(
    profile: InfProfile,
    los: bool,
    d3d_m: f64,
    cfg: &ChannelConfig,
    rng: &mut RngStream,
) -> Result<LargeScaleState, ChannelError> {
    let d3d = effective_distance(d3d_m, cfg)?;
    let pathloss_db = pathloss(profile, los, d3d, cfg.fc_ghz)?;
    let shadow_db = draw_shadow(profile, los, cfg, rng);
    Ok(LargeScaleState {
        los,
        shadow_db,
        pathloss_db,
    })
}

/// Receiver noise floor in dBm.
pub fn noise_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Single-cell SINR in dB: no co-channel interference term.
pub fn sinr_db(tx_power_dbm: f64, state: &LargeScaleState, noise_dbm: f64) -> f64 {
    tx_power_dbm - state.pathloss_db - state.shadow_db - noise_dbm
}
