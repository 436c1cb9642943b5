//! Deterministic discrete-event kernel.
//!
//! Simulation time is kept in integer nanoseconds. Events are ordered by
//! `(fire_at, sequence)` where `sequence` is a per-engine insertion counter,
//! so simultaneous events fire in the order they were scheduled.
//!
//! Random numbers come from named substreams. Each stream is seeded from a
//! hash of `(master seed, name)`, so adding an entity with a new stream name
//! never perturbs the draws of any other entity.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::ops::{Add, Sub};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

const NANOS_PER_SEC: f64 = 1e9;

/// A point on the simulation clock (or a duration), in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Rounds to the nearest nanosecond. Negative and NaN inputs saturate to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        let ns = (secs * NANOS_PER_SEC).round();
        if ns.is_nan() || ns <= 0.0 {
            SimTime(0)
        } else if ns >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(ns as u64)
        }
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    /// Smallest multiple of `step` that is `>= self`.
    pub fn ceil_to(self, step: SimTime) -> SimTime {
        assert!(step.0 > 0, "ceil_to with zero step");
        SimTime(self.0.div_ceil(step.0) * step.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("SimTime subtraction underflow"),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("cannot schedule event at {at} before current clock {now}")]
    InThePast { at: SimTime, now: SimTime },
    #[error("run_until({t_end}) is before current clock {now}")]
    RunBackwards { t_end: SimTime, now: SimTime },
}

/// Identifies a scheduled event by its insertion sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle {
    pub fire_at: SimTime,
    pub sequence: u64,
}

/// A pending event: when it fires, its tie-break sequence, and its payload.
#[derive(Debug)]
pub struct Event<E> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub action: E,
}

struct Queued<E>(Event<E>);

impl<E> Queued<E> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_at, self.0.sequence)
    }
}

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<E> Eq for Queued<E> {}
impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Queued<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

/// A deterministic random stream keyed by `(master seed, name)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    name: String,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, name: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(master_seed.to_le_bytes());
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        RngStream {
            name: name.to_owned(),
            rng: ChaCha12Rng::from_seed(seed),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Uniform draw on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw on `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            lo
        } else {
            lo + (hi - lo) * self.uniform()
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Derives a 64-bit seed from a master seed and a list of labels.
pub fn derive_seed(master_seed: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Event queue, clock and named random streams.
pub struct Engine<E> {
    now: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Reverse<Queued<E>>>,
    master_seed: u64,
    streams: BTreeMap<String, RngStream>,
    log: Option<Vec<EventHandle>>,
}

impl<E> Engine<E> {
    pub fn new(master_seed: u64) -> Self {
        Engine {
            now: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            master_seed,
            streams: BTreeMap::new(),
            log: None,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Records the handle of every fired event, in firing order.
    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn log(&self) -> Option<&[EventHandle]> {
        self.log.as_deref()
    }

    pub fn schedule(&mut self, at: SimTime, action: E) -> Result<EventHandle, EngineError> {
        if at < self.now {
            return Err(EngineError::InThePast { at, now: self.now });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Reverse(Queued(Event {
            fire_at: at,
            sequence,
            action,
        })));
        Ok(EventHandle {
            fire_at: at,
            sequence,
        })
    }

    /// Schedules `delay` after the current clock. Never fails.
    pub fn schedule_in(&mut self, delay: SimTime, action: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, action)
            .expect("relative schedule cannot be in the past")
    }

    /// Time of the earliest pending event.
    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(q)| q.0.fire_at)
    }

    /// Fires every event with `fire_at <= t_end` in `(fire_at, sequence)`
    /// order, then leaves the clock at `t_end`. Returns the number fired.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<u64, EngineError>
    where
        F: FnMut(&mut Engine<E>, Event<E>),
    {
        if t_end < self.now {
            return Err(EngineError::RunBackwards {
                t_end,
                now: self.now,
            });
        }
        let mut fired = 0;
        while let Some(event) = self.pop_due(t_end) {
            fired += 1;
            handler(self, event);
        }
        self.now = t_end;
        Ok(fired)
    }

    /// Fires events until the queue is empty or the next event lies beyond
    /// `limit`. The clock stays at the last fired event.
    pub fn run_to_completion<F>(&mut self, limit: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Engine<E>, Event<E>),
    {
        let mut fired = 0;
        while let Some(event) = self.pop_due(limit) {
            fired += 1;
            handler(self, event);
        }
        fired
    }

    fn pop_due(&mut self, t_end: SimTime) -> Option<Event<E>> {
        if self.peek_time()? > t_end {
            return None;
        }
        let Reverse(Queued(event)) = self.queue.pop()?;
        debug_assert!(event.fire_at >= self.now);
        self.now = event.fire_at;
        if let Some(log) = self.log.as_mut() {
            log.push(EventHandle {
                fire_at: event.fire_at,
                sequence: event.sequence,
            });
        }
        Some(event)
    }

    /// Returns the named stream, creating it on first use. Later calls with
    /// the same name continue the same sequence.
    pub fn rng_stream(&mut self, name: &str) -> &mut RngStream {
        let seed = self.master_seed;
        self.streams
            .entry(name.to_owned())
            .or_insert_with(|| RngStream::new(seed, name))
    }
}
