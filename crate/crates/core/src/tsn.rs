//! TSN switch egress: encapsulation overhead, PCP mapping, strict-priority
//! selection and a credit-based shaper on the Video queue.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::radio::Direction;

/// UDP + IPv4 + Ethernet MAC header + FCS + preamble/SFD, in bytes.
pub const ENCAPSULATION_OVERHEAD_BYTES: u64 = 8 + 20 + 14 + 4 + 8;
pub const INTERFRAME_GAP_BYTES: u64 = 12;
pub const RESERVATION_CUSHION_BYTES: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsnError {
    #[error("CBS reservation {idle_slope_bps} bps must be positive and below the port rate {port_bitrate_bps} bps")]
    OverSubscribed {
        idle_slope_bps: f64,
        port_bitrate_bps: f64,
    },
    #[error("port bitrate must be positive, got {0}")]
    InvalidBitrate(f64),
    #[error("packet interval must be positive, got {0}")]
    InvalidInterval(f64),
    #[error("PCP {0} is out of range 0..=7")]
    InvalidPcp(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    #[serde(rename = "nc")]
    NetworkControl,
    Video,
    #[serde(rename = "be")]
    BestEffort,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 3] = [Self::NetworkControl, Self::Video, Self::BestEffort];

    pub fn label(self) -> &'static str {
        match self {
            Self::NetworkControl => "nc",
            Self::Video => "video",
            Self::BestEffort => "be",
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Class to PCP mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcpMap {
    pub nc: u8,
    pub video: u8,
    pub be: u8,
}

impl Default for PcpMap {
    fn default() -> Self {
        PcpMap { nc: 7, video: 5, be: 0 }
    }
}

impl PcpMap {
    pub fn pcp(&self, class: TrafficClass) -> u8 {
        match class {
            TrafficClass::NetworkControl => self.nc,
            TrafficClass::Video => self.video,
            TrafficClass::BestEffort => self.be,
        }
    }

    pub fn validate(&self) -> Result<(), TsnError> {
        for p in [self.nc, self.video, self.be] {
            if p > 7 {
                return Err(TsnError::InvalidPcp(p));
            }
        }
        Ok(())
    }
}

pub fn map_pcp(class: TrafficClass) -> u8 {
    PcpMap::default().pcp(class)
}

/// One application packet moving through the bridge.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub app_payload_bytes: u64,
    pub wire_bytes: u64,
    pub pcp: u8,
    pub class: TrafficClass,
    pub direction: Direction,
    pub stream_id: usize,
    pub ue_id: usize,
    pub created_at: SimTime,
    pub sequence: u64,
}

impl Frame {
    pub fn wire_bits(&self) -> u64 {
        self.wire_bytes * 8
    }
}

pub fn encapsulate(app_payload_bytes: u64) -> u64 {
    app_payload_bytes + ENCAPSULATION_OVERHEAD_BYTES
}

/// Bandwidth of a periodic stream including inter-frame gap and cushion.
pub fn stream_data_rate(wire_bytes: u64, packet_interval_s: f64) -> Result<f64, TsnError> {
    if !(packet_interval_s > 0.0) {
        return Err(TsnError::InvalidInterval(packet_interval_s));
    }
    let bytes = wire_bytes + INTERFRAME_GAP_BYTES + RESERVATION_CUSHION_BYTES;
    Ok((bytes * 8) as f64 / packet_interval_s)
}

/// Returns `(idle_slope, send_slope)` for an aggregate reservation of
/// `n_streams` identical streams.
pub fn compute_slopes(per_stream_bps: f64, n_streams: u32, port_bitrate_bps: f64) -> Result<(f64, f64), TsnError> {
    slopes_for_reservation(per_stream_bps * f64::from(n_streams), port_bitrate_bps)
}

pub fn slopes_for_reservation(idle_slope_bps: f64, port_bitrate_bps: f64) -> Result<(f64, f64), TsnError> {
    if !(port_bitrate_bps > 0.0) {
        return Err(TsnError::InvalidBitrate(port_bitrate_bps));
    }
    if !(idle_slope_bps > 0.0 && idle_slope_bps < port_bitrate_bps) {
        return Err(TsnError::OverSubscribed {
            idle_slope_bps,
            port_bitrate_bps,
        });
    }
    Ok((idle_slope_bps, idle_slope_bps - port_bitrate_bps))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbsState {
    pub credit_bits: f64,
    pub idle_slope_bps: f64,
    pub send_slope_bps: f64,
}

impl CbsState {
    pub fn new(idle_slope_bps: f64, port_bitrate_bps: f64) -> Result<Self, TsnError> {
        let (idle, send) = slopes_for_reservation(idle_slope_bps, port_bitrate_bps)?;
        Ok(CbsState {
            credit_bits: 0.0,
            idle_slope_bps: idle,
            send_slope_bps: send,
        })
    }

    pub fn gate_open(&self) -> bool {
        self.credit_bits >= 0.0
    }
}

/// Evolves the credit over `[from, to]`, during which the queue state and
/// transmission state are constant.
///
/// While the queue is empty a negative credit recovers at idleSlope but
/// stops at zero, and a positive credit is discarded.
pub fn cbs_advance(state: CbsState, from: SimTime, to: SimTime, transmitting_video: bool, queue_empty: bool) -> CbsState {
    let dt = to.saturating_sub(from).as_secs_f64();
    let credit = state.credit_bits;
    let credit_bits = if transmitting_video {
        credit + state.send_slope_bps * dt
    } else if !queue_empty {
        credit + state.idle_slope_bps * dt
    } else if credit < 0.0 {
        (credit + state.idle_slope_bps * dt).min(0.0)
    } else {
        0.0
    };
    CbsState { credit_bits, ..state }
}

#[derive(Debug, Clone, PartialEq)]
struct Waiting {
    frame: Frame,
    enqueued_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
struct InFlight {
    frame: Frame,
    enqueued_at: SimTime,
    started_at: SimTime,
    done_at: SimTime,
    shaped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartOutcome {
    /// A frame began transmitting and will finish at `done_at`.
    Started { done_at: SimTime, pcp: u8 },
    /// Only the shaped queue has frames and it is out of credit until `wake_at`.
    Gated { wake_at: SimTime },
    Idle,
    Busy { until: SimTime },
}

/// A frame that finished transmission, with what the egress trace records.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmitted {
    pub frame: Frame,
    pub started_at: SimTime,
    pub finished_at: SimTime,
    pub queue_wait: SimTime,
    pub credit_bits_after: f64,
}

/// Switch egress port with one FIFO per PCP.
#[derive(Debug, Clone)]
pub struct EgressPort {
    bitrate_bps: f64,
    queues: BTreeMap<u8, VecDeque<Waiting>>,
    shaped_pcp: Option<u8>,
    cbs: Option<CbsState>,
    cbs_updated_at: SimTime,
    in_flight: Option<InFlight>,
}

impl EgressPort {
    pub fn new(bitrate_bps: f64) -> Result<Self, TsnError> {
        if !(bitrate_bps > 0.0) {
            return Err(TsnError::InvalidBitrate(bitrate_bps));
        }
        Ok(EgressPort {
            bitrate_bps,
            queues: BTreeMap::new(),
            shaped_pcp: None,
            cbs: None,
            cbs_updated_at: SimTime::ZERO,
            in_flight: None,
        })
    }

    /// Attaches a credit-based shaper to the queue of `pcp`.
    pub fn with_cbs(mut self, pcp: u8, idle_slope_bps: f64) -> Result<Self, TsnError> {
        if pcp > 7 {
            return Err(TsnError::InvalidPcp(pcp));
        }
        self.cbs = Some(CbsState::new(idle_slope_bps, self.bitrate_bps)?);
        self.shaped_pcp = Some(pcp);
        Ok(self)
    }

    pub fn bitrate_bps(&self) -> f64 {
        self.bitrate_bps
    }

    pub fn busy_until(&self) -> Option<SimTime> {
        self.in_flight.as_ref().map(|f| f.done_at)
    }

    pub fn is_busy(&self) -> bool {
        self.in_flight.is_some()
    }

    pub fn queue_len(&self, pcp: u8) -> usize {
        self.queues.get(&pcp).map_or(0, VecDeque::len)
    }

    pub fn total_queued(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    pub fn transmission_time(&self, frame: &Frame) -> SimTime {
        SimTime::from_secs_f64(frame.wire_bits() as f64 / self.bitrate_bps)
    }

    fn shaped_queue_empty(&self) -> bool {
        self.shaped_pcp.is_none_or(|p| self.queue_len(p) == 0)
    }

    fn transmitting_shaped(&self) -> bool {
        self.in_flight.as_ref().is_some_and(|f| f.shaped)
    }

    /// Credit the shaper would hold at `now`, without mutating the port.
    pub fn cbs_at(&self, now: SimTime) -> Option<CbsState> {
        let cbs = self.cbs?;
        Some(cbs_advance(
            cbs,
            self.cbs_updated_at,
            now.max(self.cbs_updated_at),
            self.transmitting_shaped(),
            self.shaped_queue_empty(),
        ))
    }

    fn sync_cbs(&mut self, now: SimTime) {
        if let Some(next) = self.cbs_at(now) {
            self.cbs = Some(next);
        }
        self.cbs_updated_at = self.cbs_updated_at.max(now);
    }

    pub fn enqueue(&mut self, now: SimTime, frame: Frame) {
        self.sync_cbs(now);
        self.queues.entry(frame.pcp).or_default().push_back(Waiting {
            frame,
            enqueued_at: now,
        });
    }

    fn head_eligible(&self, pcp: u8, cbs: Option<CbsState>) -> bool {
        if self.queue_len(pcp) == 0 {
            return false;
        }
        if Some(pcp) == self.shaped_pcp {
            cbs.is_none_or(|c| c.gate_open())
        } else {
            true
        }
    }

    /// PCPs whose queue head may be selected at `now`, highest first.
    pub fn eligible_heads(&self, now: SimTime) -> Vec<u8> {
        let cbs = self.cbs_at(now);
        self.queues
            .keys()
            .rev()
            .copied()
            .filter(|&p| self.head_eligible(p, cbs))
            .collect()
    }

    /// Strict-priority selection: dequeues the head of the highest-PCP
    /// eligible queue. The caller must have synced the shaper to `now`.
    fn egress_select(&mut self) -> Option<Waiting> {
        let cbs = self.cbs;
        let pcp = self
            .queues
            .keys()
            .rev()
            .copied()
            .find(|&p| self.head_eligible(p, cbs))?;
        self.queues.get_mut(&pcp)?.pop_front()
    }

    /// Starts the next transmission if the port is idle and a frame is eligible.
    pub fn start_next(&mut self, now: SimTime) -> StartOutcome {
        if let Some(f) = &self.in_flight {
            return StartOutcome::Busy { until: f.done_at };
        }
        self.sync_cbs(now);
        match self.egress_select() {
            Some(w) => {
                let done_at = now + self.transmission_time(&w.frame);
                let shaped = Some(w.frame.pcp) == self.shaped_pcp;
                let pcp = w.frame.pcp;
                self.in_flight = Some(InFlight {
                    frame: w.frame,
                    enqueued_at: w.enqueued_at,
                    started_at: now,
                    done_at,
                    shaped,
                });
                StartOutcome::Started { done_at, pcp }
            }
            None => match self.cbs {
                Some(c) if !self.shaped_queue_empty() && c.credit_bits < 0.0 => {
                    let wait_s = -c.credit_bits / c.idle_slope_bps;
                    let wait = SimTime::from_nanos(((wait_s * 1e9).ceil() as u64).max(1));
                    StartOutcome::Gated { wake_at: now + wait }
                }
                _ => StartOutcome::Idle,
            },
        }
    }

    /// Completes the in-flight transmission. `now` must equal its `done_at`.
    pub fn finish(&mut self, now: SimTime) -> Option<Transmitted> {
        let done_at = self.in_flight.as_ref()?.done_at;
        debug_assert_eq!(now, done_at);
        self.sync_cbs(now);
        let f = self.in_flight.take()?;
        // Apply the empty-queue reset immediately after the frame leaves.
        self.sync_cbs(now);
        Some(Transmitted {
            frame: f.frame,
            started_at: f.started_at,
            finished_at: now,
            queue_wait: f.started_at - f.enqueued_at,
            credit_bits_after: self.cbs.map_or(0.0, |c| c.credit_bits),
        })
    }
}
