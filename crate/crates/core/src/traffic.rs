//! Per-UE application traffic for the three industrial classes.

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RngStream, SimTime};
use crate::radio::Direction;
use crate::tsn::{encapsulate, Frame, TrafficClass};

/// Engine time quantum; exponential gaps shorter than this are rounded up.
pub const TIME_QUANTUM: SimTime = SimTime::from_nanos(1);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("payload must be positive")]
    EmptyPayload,
}

/// A non-negative random duration in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Dist {
    Fixed { value: f64 },
    Uniform { min: f64, max: f64 },
    Exponential { mean: f64 },
}

impl Dist {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: String| Err(TrafficError::InvalidDistribution(m));
        match *self {
            Dist::Fixed { value } if !(value >= 0.0 && value.is_finite()) => bad(format!("fixed value {value}")),
            Dist::Uniform { min, max } if !(min >= 0.0 && max >= min && max.is_finite()) => {
                bad(format!("uniform({min}, {max})"))
            }
            Dist::Exponential { mean } if !(mean > 0.0 && mean.is_finite()) => bad(format!("exponential mean {mean}")),
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Dist::Fixed { value } => value,
            Dist::Uniform { min, max } => rng.uniform_range(min, max),
            Dist::Exponential { mean } => Exp::new(1.0 / mean).expect("validated mean").sample(rng),
        }
    }

    /// Largest value the distribution can produce (infinite for exponential).
    pub fn upper(&self) -> f64 {
        match *self {
            Dist::Fixed { value } => value,
            Dist::Uniform { max, .. } => max,
            Dist::Exponential { .. } => f64::INFINITY,
        }
    }

    /// Smallest value the distribution can produce.
    pub fn lower(&self) -> f64 {
        match *self {
            Dist::Fixed { value } => value,
            Dist::Uniform { min, .. } => min,
            Dist::Exponential { .. } => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Fixed { value } => value,
            Dist::Uniform { min, max } => 0.5 * (min + max),
            Dist::Exponential { mean } => mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficSpec {
    pub class: TrafficClass,
    pub payload_bytes: u64,
    pub interval: Dist,
    pub start_time: Dist,
    pub initial_offset: Dist,
}

impl TrafficSpec {
    pub fn default_for(class: TrafficClass) -> Self {
        match class {
            TrafficClass::NetworkControl => TrafficSpec {
                class,
                payload_bytes: 498,
                interval: Dist::Fixed { value: 0.055 },
                start_time: Dist::Uniform { min: 0.0, max: 0.1 },
                initial_offset: Dist::Uniform { min: 0.0, max: 0.005 },
            },
            TrafficClass::Video => TrafficSpec {
                class,
                payload_bytes: 1453,
                interval: Dist::Uniform { min: 0.060, max: 0.065 },
                start_time: Dist::Uniform { min: 0.2, max: 0.5 },
                initial_offset: Dist::Uniform { min: 0.0, max: 0.020 },
            },
            TrafficClass::BestEffort => TrafficSpec {
                class,
                payload_bytes: 1429,
                interval: Dist::Exponential { mean: 0.600 },
                start_time: Dist::Uniform { min: 0.5, max: 1.0 },
                initial_offset: Dist::Uniform { min: 0.0, max: 0.100 },
            },
        }
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if self.payload_bytes == 0 {
            return Err(TrafficError::EmptyPayload);
        }
        self.interval.validate()?;
        self.start_time.validate()?;
        self.initial_offset.validate()
    }

    /// Shortest possible gap between emissions, in seconds.
    pub fn min_interval_s(&self) -> f64 {
        self.interval.lower()
    }
}

/// NC, Video and BE specs in that order.
pub fn default_specs() -> Vec<TrafficSpec> {
    TrafficClass::ALL.iter().map(|&c| TrafficSpec::default_for(c)).collect()
}

/// Emits the frames of one application stream.
#[derive(Debug, Clone)]
pub struct StreamGenerator {
    spec: TrafficSpec,
    pcp: u8,
    ue_id: usize,
    stream_id: usize,
    direction: Direction,
    next_fire: Option<SimTime>,
    sequence: u64,
    rng: RngStream,
}

impl StreamGenerator {
    pub fn new(
        spec: TrafficSpec,
        pcp: u8,
        ue_id: usize,
        stream_id: usize,
        direction: Direction,
        rng: RngStream,
    ) -> Self {
        StreamGenerator {
            spec,
            pcp,
            ue_id,
            stream_id,
            direction,
            next_fire: None,
            sequence: 0,
            rng,
        }
    }

    pub fn spec(&self) -> &TrafficSpec {
        &self.spec
    }

    pub fn ue_id(&self) -> usize {
        self.ue_id
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn next_fire(&self) -> Option<SimTime> {
        self.next_fire
    }

    /// Draws start time and initial offset; the first frame goes out at their sum.
    pub fn first_emission(&mut self) -> SimTime {
        let start = self.spec.start_time.sample(&mut self.rng);
        let offset = self.spec.initial_offset.sample(&mut self.rng);
        let t = SimTime::from_secs_f64(start + offset);
        self.next_fire = Some(t);
        t
    }

    /// Emits the frame due at `next_fire` and draws the following gap.
    pub fn next_frame(&mut self) -> (SimTime, Frame) {
        let now = match self.next_fire {
            Some(t) => t,
            None => self.first_emission(),
        };
        let frame = Frame {
            app_payload_bytes: self.spec.payload_bytes,
            wire_bytes: encapsulate(self.spec.payload_bytes),
            pcp: self.pcp,
            class: self.spec.class,
            direction: self.direction,
            stream_id: self.stream_id,
            ue_id: self.ue_id,
            created_at: now,
            sequence: self.sequence,
        };
        self.sequence += 1;
        let gap = SimTime::from_secs_f64(self.spec.interval.sample(&mut self.rng)).max(TIME_QUANTUM);
        self.next_fire = Some(now + gap);
        (now, frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(class: TrafficClass, seed: u64) -> StreamGenerator {
        StreamGenerator::new(
            TrafficSpec::default_for(class),
            0,
            0,
            0,
            Direction::Uplink,
            RngStream::new(seed, "traffic.test"),
        )
    }

    #[test]
    fn table_payloads() {
        let specs = default_specs();
        assert_eq!(specs[0].payload_bytes, 498);
        assert_eq!(specs[1].payload_bytes, 1453);
        assert_eq!(specs[2].payload_bytes, 1429);
        assert!(specs.iter().all(|s| s.validate().is_ok()));
    }

    #[test]
    fn video_interval_statistics() {
        let spec = TrafficSpec::default_for(TrafficClass::Video);
        let mut rng = RngStream::new(5, "video");
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| spec.interval.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| (0.060..=0.065).contains(&x)));
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.0625).abs() < 1e-4, "mean {mean}");
    }

    #[test]
    fn best_effort_interval_statistics() {
        let spec = TrafficSpec::default_for(TrafficClass::BestEffort);
        let mut rng = RngStream::new(5, "be");
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| spec.interval.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 0.600).abs() < 0.010, "mean {mean}");
        assert!((sd / mean - 1.0).abs() < 0.03, "cv {}", sd / mean);
    }

    #[test]
    fn degenerate_start_is_zero() {
        let mut spec = TrafficSpec::default_for(TrafficClass::NetworkControl);
        spec.start_time = Dist::Fixed { value: 0.0 };
        spec.initial_offset = Dist::Fixed { value: 0.0 };
        let mut g = StreamGenerator::new(spec, 7, 0, 0, Direction::Uplink, RngStream::new(1, "x"));
        assert_eq!(g.first_emission(), SimTime::ZERO);
    }

    #[test]
    fn first_emission_within_support() {
        for seed in 0..500 {
            let t = gen(TrafficClass::NetworkControl, seed).first_emission().as_secs_f64();
            assert!((0.0..=0.105).contains(&t));
            let t = gen(TrafficClass::Video, seed).first_emission().as_secs_f64();
            assert!((0.2..=0.52).contains(&t));
        }
    }

    #[test]
    fn nc_is_periodic() {
        let mut g = gen(TrafficClass::NetworkControl, 3);
        let t0 = g.first_emission();
        let times: Vec<SimTime> = (0..4).map(|_| g.next_frame().0).collect();
        assert_eq!(times[0], t0);
        for (i, t) in times.iter().enumerate() {
            assert_eq!(t.as_nanos(), t0.as_nanos() + 55_000_000 * i as u64);
        }
    }

    #[test]
    fn video_gaps_and_sequence_numbers() {
        let mut g = gen(TrafficClass::Video, 4);
        g.first_emission();
        let frames: Vec<(SimTime, Frame)> = (0..200).map(|_| g.next_frame()).collect();
        for (i, w) in frames.windows(2).enumerate() {
            let gap = (w[1].0 - w[0].0).as_secs_f64();
            assert!((0.060..=0.065).contains(&gap), "gap {gap}");
            assert_eq!(w[0].1.sequence, i as u64);
        }
        assert_eq!(frames[0].1.wire_bytes, 1507);
    }

    #[test]
    fn exponential_gaps_strictly_increase() {
        let mut spec = TrafficSpec::default_for(TrafficClass::BestEffort);
        spec.interval = Dist::Exponential { mean: 1e-9 };
        let mut g = StreamGenerator::new(spec, 0, 0, 0, Direction::Uplink, RngStream::new(2, "tiny"));
        let mut prev = g.next_frame().0;
        for _ in 0..1000 {
            let t = g.next_frame().0;
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn invalid_distributions() {
        assert!(Dist::Uniform { min: 2.0, max: 1.0 }.validate().is_err());
        assert!(Dist::Exponential { mean: 0.0 }.validate().is_err());
        assert!(Dist::Fixed { value: -1.0 }.validate().is_err());
    }
}
