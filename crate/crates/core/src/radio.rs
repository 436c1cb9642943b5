//! Simplified NR link layer: numerology, logistic BLER curve, capped Shannon
//! rate mapping, equal-share round-robin scheduling and HARQ.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RngStream, SimTime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("HARQ process already finished")]
    HarqFinished,
    #[error("invalid BLER curve: {0}")]
    InvalidCurve(String),
    #[error("HARQ max_attempts must be at least 1")]
    InvalidMaxAttempts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Downlink,
    Uplink,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Downlink, Direction::Uplink];

    pub fn label(self) -> &'static str {
        match self {
            Direction::Downlink => "downlink",
            Direction::Uplink => "uplink",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Direction::Downlink => "dl",
            Direction::Uplink => "ul",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Numerology {
    pub mu: u8,
}

impl Numerology {
    pub fn subcarrier_spacing_khz(self) -> f64 {
        15.0 * f64::from(1u32 << self.mu)
    }

    pub fn slot(self) -> SimTime {
        SimTime::from_nanos(1_000_000 >> self.mu)
    }
}

pub fn slot_duration(n: Numerology) -> f64 {
    1e-3 / f64::from(1u32 << n.mu)
}

/// Logistic block-error curve over SINR in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlerCurve {
    pub s50_db: f64,
    pub slope_per_db: f64,
}

impl Default for BlerCurve {
    fn default() -> Self {
        BlerCurve {
            s50_db: 3.0,
            slope_per_db: 1.0,
        }
    }
}

impl BlerCurve {
    pub fn new(s50_db: f64, slope_per_db: f64) -> Result<Self, RadioError> {
        if !(slope_per_db > 0.0) || !slope_per_db.is_finite() {
            return Err(RadioError::InvalidCurve(format!(
                "slope must be positive, got {slope_per_db}"
            )));
        }
        if !s50_db.is_finite() {
            return Err(RadioError::InvalidCurve(format!("midpoint must be finite, got {s50_db}")));
        }
        Ok(BlerCurve { s50_db, slope_per_db })
    }

    /// Places the curve so that `bler(target_sinr_db) == target_bler`.
    pub fn anchored(target_bler: f64, target_sinr_db: f64, slope_per_db: f64) -> Result<Self, RadioError> {
        if !(target_bler > 0.0 && target_bler < 1.0) {
            return Err(RadioError::InvalidCurve(format!(
                "target BLER must lie in (0, 1), got {target_bler}"
            )));
        }
        let offset = ((1.0 - target_bler) / target_bler).ln() / slope_per_db;
        BlerCurve::new(target_sinr_db - offset, slope_per_db)
    }

    /// SINR at which the curve yields `p`.
    pub fn sinr_for(&self, p: f64) -> f64 {
        self.s50_db + ((1.0 - p) / p).ln() / self.slope_per_db
    }
}

pub fn bler(sinr_db: f64, curve: &BlerCurve) -> f64 {
    1.0 / (1.0 + (curve.slope_per_db * (sinr_db - curve.s50_db)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateMapping {
    pub efficiency_factor: f64,
    pub se_cap: f64,
}

impl Default for RateMapping {
    fn default() -> Self {
        RateMapping {
            efficiency_factor: 0.75,
            se_cap: 7.4,
        }
    }
}

impl RateMapping {
    /// Bits/s/Hz achieved at the given SINR.
    pub fn spectral_efficiency(&self, sinr_db: f64) -> f64 {
        let shannon = (1.0 + 10f64.powf(sinr_db / 10.0)).log2();
        self.efficiency_factor * shannon.min(self.se_cap)
    }
}

/// Spectral efficiency with the default mapping (0.75 x capped Shannon).
pub fn spectral_efficiency(sinr_db: f64) -> f64 {
    RateMapping::default().spectral_efficiency(sinr_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarqOutcome {
    Delivered,
    Retransmit,
    Failed,
}

impl HarqOutcome {
    pub fn is_error(self) -> bool {
        !matches!(self, HarqOutcome::Delivered)
    }
}

/// Stop-and-wait HARQ process for one transport block.
#[derive(Debug, Clone, PartialEq)]
pub struct HarqProcess {
    attempts: u32,
    max_attempts: u32,
    combining_gain_db: f64,
    finished: bool,
}

impl HarqProcess {
    pub fn new(max_attempts: u32, combining_gain_db: f64) -> Result<Self, RadioError> {
        if max_attempts == 0 {
            return Err(RadioError::InvalidMaxAttempts);
        }
        Ok(HarqProcess {
            attempts: 1,
            max_attempts,
            combining_gain_db,
            finished: false,
        })
    }

    /// The attempt about to be made (1-based).
    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_attempts
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// SINR credit accumulated by soft combining for the current attempt.
    pub fn combining_credit_db(&self) -> f64 {
        f64::from(self.attempts - 1) * self.combining_gain_db
    }

    /// Resolves one attempt whose block-error probability is already known.
    pub fn attempt(&mut self, block_error_prob: f64, rng: &mut RngStream) -> Result<HarqOutcome, RadioError> {
        if self.finished {
            return Err(RadioError::HarqFinished);
        }
        if !rng.bernoulli(block_error_prob) {
            self.finished = true;
            return Ok(HarqOutcome::Delivered);
        }
        if self.attempts < self.max_attempts {
            self.attempts += 1;
            Ok(HarqOutcome::Retransmit)
        } else {
            self.finished = true;
            Ok(HarqOutcome::Failed)
        }
    }

    /// Resolves one attempt at `sinr_db` plus the soft-combining credit.
    pub fn step(&mut self, sinr_db: f64, curve: &BlerCurve, rng: &mut RngStream) -> Result<HarqOutcome, RadioError> {
        let p = bler(sinr_db + self.combining_credit_db(), curve);
        self.attempt(p, rng)
    }
}

pub fn harq_step(
    p: &mut HarqProcess,
    sinr_db: f64,
    curve: &BlerCurve,
    rng: &mut RngStream,
) -> Result<HarqOutcome, RadioError> {
    p.step(sinr_db, curve, rng)
}

/// One UE's demand in a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotDemand {
    pub ue_id: usize,
    pub pending_bits: u64,
    /// Bits the UE could carry in this slot with the whole bandwidth.
    pub full_band_capacity_bits: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub ue_id: usize,
    pub share: f64,
    pub bits: u64,
}

/// Equal-share round robin. Every UE with pending data gets `1/n` of the
/// band; the starting UE rotates so that integer-rounding leftovers are
/// spread fairly.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    cursor: usize,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule_slot(&mut self, pending: &[SlotDemand]) -> Vec<Allocation> {
        let active: Vec<&SlotDemand> = pending.iter().filter(|d| d.pending_bits > 0).collect();
        if active.is_empty() {
            return Vec::new();
        }
        let n = active.len();
        let share = 1.0 / n as f64;
        let start = self.cursor % n;
        self.cursor = self.cursor.wrapping_add(1);
        (0..n)
            .map(|i| {
                let d = active[(start + i) % n];
                let cap = (d.full_band_capacity_bits * share).floor().max(0.0) as u64;
                Allocation {
                    ue_id: d.ue_id,
                    share,
                    bits: cap.min(d.pending_bits),
                }
            })
            .collect()
    }
}

pub fn schedule_slot(rr: &mut RoundRobin, pending: &[SlotDemand]) -> Vec<Allocation> {
    rr.schedule_slot(pending)
}

/// Full-band per-slot capacity in bits.
pub fn slot_capacity_bits(sinr_db: f64, rate: &RateMapping, bandwidth_hz: f64, slot_s: f64) -> f64 {
    rate.spectral_efficiency(sinr_db) * bandwidth_hz * slot_s
}
