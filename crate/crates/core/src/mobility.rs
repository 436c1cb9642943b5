//! Random Waypoint mobility inside a disc centred on the gNB.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Position3D;
use crate::engine::{RngStream, SimTime};
use crate::traffic::Dist;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MobilityError {
    #[error("region radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("invalid speed range [{0}, {1}] m/s")]
    InvalidSpeed(f64, f64),
    #[error("unknown region `{0}` (expected d1, d2, d3 or a radius in meters)")]
    UnknownRegion(String),
}

/// Coverage region around the gNB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionKind {
    Named(NamedRegion),
    Custom(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedRegion {
    D1,
    D2,
    D3,
}

impl NamedRegion {
    pub fn radius_m(self) -> f64 {
        match self {
            NamedRegion::D1 => 85.0,
            NamedRegion::D2 => 170.0,
            NamedRegion::D3 => 255.0,
        }
    }
}

impl RegionKind {
    pub fn radius_m(self) -> f64 {
        match self {
            RegionKind::Named(n) => n.radius_m(),
            RegionKind::Custom(r) => r,
        }
    }

    pub fn label(self) -> String {
        match self {
            RegionKind::Named(NamedRegion::D1) => "d1".into(),
            RegionKind::Named(NamedRegion::D2) => "d2".into(),
            RegionKind::Named(NamedRegion::D3) => "d3".into(),
            RegionKind::Custom(r) => format!("r{r}"),
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for RegionKind {
    type Err = MobilityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d1" => Ok(RegionKind::Named(NamedRegion::D1)),
            "d2" => Ok(RegionKind::Named(NamedRegion::D2)),
            "d3" => Ok(RegionKind::Named(NamedRegion::D3)),
            other => other
                .trim_start_matches('r')
                .parse::<f64>()
                .ok()
                .filter(|r| *r > 0.0)
                .map(RegionKind::Custom)
                .ok_or_else(|| MobilityError::UnknownRegion(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub center: Position3D,
    pub radius_m: f64,
}

impl Region {
    pub fn new(center: Position3D, radius_m: f64) -> Result<Self, MobilityError> {
        if !(radius_m > 0.0) {
            return Err(MobilityError::InvalidRadius(radius_m));
        }
        Ok(Region { center, radius_m })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedRange {
    pub min_mps: f64,
    pub max_mps: f64,
}

impl Default for SpeedRange {
    fn default() -> Self {
        SpeedRange {
            min_mps: 0.2,
            max_mps: 1.5,
        }
    }
}

impl SpeedRange {
    pub fn validate(&self) -> Result<(), MobilityError> {
        if !(self.min_mps > 0.0 && self.max_mps >= self.min_mps && self.max_mps.is_finite()) {
            return Err(MobilityError::InvalidSpeed(self.min_mps, self.max_mps));
        }
        Ok(())
    }
}

/// One straight segment between waypoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityLeg {
    pub origin: Position3D,
    pub target: Position3D,
    pub speed_mps: f64,
    pub depart_at: SimTime,
}

impl MobilityLeg {
    pub fn length_m(&self) -> f64 {
        self.origin.distance_3d(&self.target)
    }

    pub fn arrive_at(&self) -> SimTime {
        self.depart_at + SimTime::from_secs_f64(self.length_m() / self.speed_mps)
    }
}

/// Area-uniform point on the region disc at height `h_ut_m` and a speed
/// drawn uniformly from `speeds`.
pub fn sample_waypoint(region: &Region, h_ut_m: f64, speeds: &SpeedRange, rng: &mut RngStream) -> (Position3D, f64) {
    let r = region.radius_m * rng.uniform().sqrt();
    let theta = TAU * rng.uniform();
    let pos = Position3D::new(
        region.center.x + r * theta.cos(),
        region.center.y + r * theta.sin(),
        h_ut_m,
    );
    let speed = rng.uniform_range(speeds.min_mps, speeds.max_mps);
    (pos, speed)
}

/// Linear interpolation along the leg, clamped at the target.
pub fn position_at(leg: &MobilityLeg, t: SimTime) -> Position3D {
    let len = leg.length_m();
    if len == 0.0 {
        return leg.target;
    }
    let travelled = leg.speed_mps * t.saturating_sub(leg.depart_at).as_secs_f64();
    let frac = (travelled / len).min(1.0);
    Position3D::new(
        leg.origin.x + frac * (leg.target.x - leg.origin.x),
        leg.origin.y + frac * (leg.target.y - leg.origin.y),
        leg.origin.z + frac * (leg.target.z - leg.origin.z),
    )
}

/// Random Waypoint state of one UE. Legs are generated lazily in order, so
/// the draw sequence does not depend on when positions are queried.
#[derive(Debug, Clone)]
pub struct RandomWaypoint {
    region: Region,
    h_ut_m: f64,
    speeds: SpeedRange,
    pause: Dist,
    rng: RngStream,
    leg: MobilityLeg,
    pause_after_leg: SimTime,
    legs_started: u64,
}

impl RandomWaypoint {
    pub fn new(region: Region, h_ut_m: f64, speeds: SpeedRange, pause: Dist, mut rng: RngStream) -> Self {
        let (origin, _) = sample_waypoint(&region, h_ut_m, &speeds, &mut rng);
        let (target, speed_mps) = sample_waypoint(&region, h_ut_m, &speeds, &mut rng);
        let pause_after_leg = SimTime::from_secs_f64(pause.sample(&mut rng));
        RandomWaypoint {
            region,
            h_ut_m,
            speeds,
            pause,
            rng,
            leg: MobilityLeg {
                origin,
                target,
                speed_mps,
                depart_at: SimTime::ZERO,
            },
            pause_after_leg,
            legs_started: 1,
        }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn current_leg(&self) -> &MobilityLeg {
        &self.leg
    }

    pub fn legs_started(&self) -> u64 {
        self.legs_started
    }

    /// Moves forward to `t`, calling `on_leg` for each new leg that starts at
    /// or before `t`.
    pub fn advance_to(&mut self, t: SimTime, mut on_leg: impl FnMut(&MobilityLeg)) {
        loop {
            let next_depart = self.leg.arrive_at() + self.pause_after_leg;
            if next_depart > t {
                break;
            }
            let origin = self.leg.target;
            let (target, speed_mps) = sample_waypoint(&self.region, self.h_ut_m, &self.speeds, &mut self.rng);
            self.leg = MobilityLeg {
                origin,
                target,
                speed_mps,
                depart_at: next_depart,
            };
            self.pause_after_leg = SimTime::from_secs_f64(self.pause.sample(&mut self.rng));
            self.legs_started += 1;
            on_leg(&self.leg);
        }
    }

    pub fn position(&mut self, t: SimTime) -> Position3D {
        self.advance_to(t, |_| {});
        position_at(&self.leg, t)
    }
}
