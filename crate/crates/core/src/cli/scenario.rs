//! One end-to-end run: server, TSN switch, gNB and UEs.
//!
//! Downlink frames leave the server, cross the switch egress port towards
//! the gNB and are scheduled over the air. Uplink frames take the reverse
//! path. Every wired hop (server-switch, switch-gNB) adds `hop_latency_s`.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::channel::{draw_large_scale, noise_dbm, ChannelConfig, ChannelError, InfProfile, LargeScaleState, Position3D};
use crate::cli::config::{ConfigError, ScenarioConfig};
use crate::engine::{Engine, EngineError, EventHandle, RngStream, SimTime};
use crate::metrics::{export_csv, fmt_num, write_rows, DelaySample, MetricsError, MetricsStore, SinrSample, Summary};
use crate::mobility::{position_at, RandomWaypoint, Region};
use crate::radio::{
    slot_capacity_bits, BlerCurve, Direction, HarqOutcome, HarqProcess, RadioError, RateMapping, RoundRobin,
    SlotDemand,
};
use crate::traffic::StreamGenerator;
use crate::tsn::{
    compute_slopes, encapsulate, slopes_for_reservation, stream_data_rate, EgressPort, Frame, StartOutcome,
    TrafficClass, Transmitted, TsnError,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("switch configuration: {0}")]
    Tsn(#[from] TsnError),
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("radio: {0}")]
    Radio(#[from] RadioError),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{in_flight} frames still in flight at {limit} s; raise drain_limit_s")]
    NotDrained { limit: SimTime, in_flight: usize },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSample {
    pub time: SimTime,
    pub ue_id: usize,
    pub position: Position3D,
    pub los: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Keep the `(fire_at, sequence)` handle of every fired event.
    pub event_log: bool,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub metrics: MetricsStore,
    pub summary: Summary,
    /// Frames leaving each switch egress port, indexed by [`Direction::index`].
    /// Empty unless `tsn.trace` is set.
    pub egress: [Vec<Transmitted>; 2],
    /// Empty unless `mobility.trace` is set.
    pub positions: Vec<PositionSample>,
    /// Idle slope configured on each egress port, if any Video stream uses it.
    pub idle_slope_bps: [Option<f64>; 2],
    pub events_fired: u64,
    pub end_time: SimTime,
    pub event_log: Option<Vec<EventHandle>>,
}

#[derive(Debug, Clone)]
enum Ev {
    Emit(usize),
    /// Frame reaches a switch egress queue.
    ToPort(Frame),
    PortWake(Direction),
    PortDone(Direction),
    /// Downlink frame reaches the gNB buffer.
    ToGnb(Frame),
    Slot(Direction),
    /// Frame decoded at the far end of the radio link.
    AirDelivered(Frame),
    /// Uplink frame reaches the server.
    ToServer(Frame),
    Trace,
}

struct Ue {
    mobility: RandomWaypoint,
    channel_rng: RngStream,
    link: LargeScaleState,
}

impl Ue {
    /// Moves the UE to `t`, redrawing LOS state and shadowing at each new leg.
    fn update(
        &mut self,
        t: SimTime,
        gnb: &Position3D,
        profile: InfProfile,
        cfg: &ChannelConfig,
    ) -> Result<Position3D, ChannelError> {
        let Ue {
            mobility,
            channel_rng,
            link,
        } = self;
        let mut err = None;
        mobility.advance_to(t, |leg| match draw_large_scale(profile, gnb, &leg.origin, cfg, channel_rng) {
            Ok(s) => *link = s,
            Err(e) => err = Some(e),
        });
        if let Some(e) = err {
            return Err(e);
        }
        let pos = position_at(mobility.current_leg(), t);
        *link = link.at_distance(profile, gnb.distance_3d(&pos), cfg)?;
        Ok(pos)
    }
}

struct TransportBlock {
    frame: Frame,
    remaining_bits: u64,
    harq: HarqProcess,
    ready_at: SimTime,
}

struct RadioLink {
    dir: Direction,
    tx_power_dbm: f64,
    noise_dbm: f64,
    buffers: Vec<VecDeque<Frame>>,
    blocks: Vec<Option<TransportBlock>>,
    harq_rngs: Vec<RngStream>,
    rr: RoundRobin,
    ticks: BTreeSet<SimTime>,
    last_tick: Option<SimTime>,
}

impl RadioLink {
    fn in_flight(&self) -> usize {
        self.buffers.iter().map(VecDeque::len).sum::<usize>() + self.blocks.iter().flatten().count()
    }
}

struct Params {
    profile: InfProfile,
    channel: ChannelConfig,
    gnb: Position3D,
    interference_margin_db: f64,
    curve: BlerCurve,
    rate: RateMapping,
    forced_bler: Option<f64>,
    bandwidth_hz: f64,
    slot: SimTime,
    harq_max_attempts: u32,
    harq_combining_gain_db: f64,
    harq_rtt: SimTime,
    hop: SimTime,
    emit_until: SimTime,
    trace_interval: Option<SimTime>,
    trace_egress: bool,
}

struct World {
    p: Params,
    ues: Vec<Ue>,
    generators: Vec<StreamGenerator>,
    ports: [EgressPort; 2],
    port_wake: [Option<SimTime>; 2],
    links: [RadioLink; 2],
    metrics: MetricsStore,
    egress: [Vec<Transmitted>; 2],
    positions: Vec<PositionSample>,
    demands: Vec<SlotDemand>,
    slot_sinr: Vec<(f64, bool)>,
    error: Option<ScenarioError>,
}

fn secs(s: f64) -> SimTime {
    SimTime::from_secs_f64(s)
}

/// Idle slope for the Video class on one egress port, `None` when no Video
/// stream crosses it.
fn video_idle_slope(cfg: &ScenarioConfig, dir: Direction) -> Result<Option<f64>, ScenarioError> {
    let video = cfg.traffic_spec(TrafficClass::Video);
    if !cfg.traffic.video.enabled(dir) {
        return Ok(None);
    }
    let port = cfg.tsn.port_bitrate_bps;
    let (idle, _) = match cfg.tsn.idle_slope_bps {
        Some(idle) => slopes_for_reservation(idle, port)?,
        None => {
            let interval = cfg.tsn.reservation_interval_s.unwrap_or_else(|| video.min_interval_s());
            let per_stream = stream_data_rate(encapsulate(video.payload_bytes), interval)?;
            compute_slopes(per_stream, cfg.n_ues, port)?
        }
    };
    Ok(Some(idle))
}

impl World {
    fn build(cfg: &ScenarioConfig) -> Result<(World, [Option<f64>; 2]), ScenarioError> {
        cfg.validate()?;
        let seed = cfg.seed;
        let n = cfg.n_ues as usize;
        let channel = cfg.channel_config();
        let gnb = Position3D::new(cfg.mobility.gnb_x_m, cfg.mobility.gnb_y_m, channel.h_bs_m);
        let region = Region::new(Position3D::new(gnb.x, gnb.y, 0.0), cfg.region.radius_m())
            .map_err(|e| ConfigError::Invalid {
                key: "region".into(),
                line: None,
                msg: e.to_string(),
            })?;
        let slot = cfg.numerology().slot();

        let mut ues = Vec::with_capacity(n);
        for i in 0..n {
            let mobility = RandomWaypoint::new(
                region,
                channel.h_ut_m,
                cfg.mobility.speeds(),
                cfg.mobility.pause,
                RngStream::new(seed, &format!("mobility.ue{i}")),
            );
            let mut channel_rng = RngStream::new(seed, &format!("channel.ue{i}"));
            let link = draw_large_scale(cfg.profile, &gnb, &mobility.current_leg().origin, &channel, &mut channel_rng)?;
            ues.push(Ue {
                mobility,
                channel_rng,
                link,
            });
        }

        let mut generators = Vec::new();
        for dir in Direction::BOTH {
            for class in TrafficClass::ALL {
                if !cfg.traffic.class(class).enabled(dir) {
                    continue;
                }
                let spec = cfg.traffic_spec(class);
                for ue in 0..n {
                    let stream_id = generators.len();
                    let name = format!("traffic.{}.{}.ue{ue}", class.label(), dir.short());
                    generators.push(StreamGenerator::new(
                        spec,
                        cfg.tsn.pcp.pcp(class),
                        ue,
                        stream_id,
                        dir,
                        RngStream::new(seed, &name),
                    ));
                }
            }
        }

        let mut slopes = [None, None];
        let mut ports = Vec::with_capacity(2);
        for dir in Direction::BOTH {
            let mut port = EgressPort::new(cfg.tsn.port_bitrate_bps)?;
            if let Some(idle) = video_idle_slope(cfg, dir)? {
                port = port.with_cbs(cfg.tsn.pcp.video, idle)?;
                slopes[dir.index()] = Some(idle);
            }
            ports.push(port);
        }
        let ports: [EgressPort; 2] = ports.try_into().expect("two directions");

        let bw = cfg.radio.bandwidth_hz;
        let make_link = |dir: Direction| RadioLink {
            dir,
            tx_power_dbm: match dir {
                Direction::Downlink => cfg.tx_power_dbm,
                Direction::Uplink => cfg.ue_tx_power_dbm,
            },
            noise_dbm: match dir {
                Direction::Downlink => noise_dbm(bw, cfg.channel.ue_noise_figure_db),
                Direction::Uplink => noise_dbm(bw, cfg.channel.gnb_noise_figure_db),
            },
            buffers: vec![VecDeque::new(); n],
            blocks: (0..n).map(|_| None).collect(),
            harq_rngs: (0..n)
                .map(|i| RngStream::new(seed, &format!("harq.{}.ue{i}", dir.short())))
                .collect(),
            rr: RoundRobin::new(),
            ticks: BTreeSet::new(),
            last_tick: None,
        };
        let links = [make_link(Direction::Downlink), make_link(Direction::Uplink)];

        let warmup = if cfg.warmup_exclude { secs(cfg.warmup_s) } else { SimTime::ZERO };
        let p = Params {
            profile: cfg.profile,
            channel,
            gnb,
            interference_margin_db: cfg.channel.interference_margin_db,
            curve: cfg.bler_curve()?,
            rate: cfg.radio.rate_mapping(),
            forced_bler: cfg.radio.forced_bler,
            bandwidth_hz: bw,
            slot,
            harq_max_attempts: cfg.radio.harq_max_attempts,
            harq_combining_gain_db: cfg.radio.harq_combining_gain_db,
            harq_rtt: SimTime::from_nanos(slot.as_nanos() * u64::from(cfg.radio.harq_rtt_slots.max(1))),
            hop: secs(cfg.tsn.hop_latency_s),
            emit_until: secs(cfg.duration_s),
            trace_interval: cfg.mobility.trace.then(|| secs(cfg.mobility.trace_interval_s)),
            trace_egress: cfg.tsn.trace,
        };
        let world = World {
            p,
            ues,
            generators,
            ports,
            port_wake: [None, None],
            links,
            metrics: MetricsStore::with_warmup(warmup),
            egress: [Vec::new(), Vec::new()],
            positions: Vec::new(),
            demands: Vec::with_capacity(n),
            slot_sinr: vec![(0.0, false); n],
            error: None,
        };
        Ok((world, slopes))
    }

    fn prime(&mut self, eng: &mut Engine<Ev>) -> Result<(), ScenarioError> {
        for (i, g) in self.generators.iter_mut().enumerate() {
            let t = g.first_emission();
            if t < self.p.emit_until {
                eng.schedule(t, Ev::Emit(i))?;
            }
        }
        if self.p.trace_interval.is_some() {
            eng.schedule(SimTime::ZERO, Ev::Trace)?;
        }
        Ok(())
    }

    fn in_flight(&self) -> usize {
        self.ports.iter().map(|p| p.total_queued() + usize::from(p.is_busy())).sum::<usize>()
            + self.links.iter().map(RadioLink::in_flight).sum::<usize>()
    }

    fn handle(&mut self, eng: &mut Engine<Ev>, ev: Ev) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.dispatch(eng, ev) {
            self.error = Some(e);
        }
    }

    fn dispatch(&mut self, eng: &mut Engine<Ev>, ev: Ev) -> Result<(), ScenarioError> {
        let now = eng.now();
        match ev {
            Ev::Emit(i) => {
                let g = &mut self.generators[i];
                let (_, frame) = g.next_frame();
                if let Some(next) = g.next_fire().filter(|&t| t < self.p.emit_until) {
                    eng.schedule(next, Ev::Emit(i))?;
                }
                self.metrics.record_generated(frame.class, frame.direction);
                match frame.direction {
                    Direction::Downlink => {
                        eng.schedule_in(self.p.hop, Ev::ToPort(frame));
                    }
                    Direction::Uplink => {
                        let link = &mut self.links[Direction::Uplink.index()];
                        link.buffers[frame.ue_id].push_back(frame);
                        self.request_tick(eng, Direction::Uplink, now)?;
                    }
                }
            }
            Ev::ToPort(frame) => {
                let dir = frame.direction;
                self.ports[dir.index()].enqueue(now, frame);
                self.kick_port(eng, dir)?;
            }
            Ev::PortWake(dir) => {
                if self.port_wake[dir.index()] == Some(now) {
                    self.port_wake[dir.index()] = None;
                }
                self.kick_port(eng, dir)?;
            }
            Ev::PortDone(dir) => {
                if let Some(tx) = self.ports[dir.index()].finish(now) {
                    let frame = if self.p.trace_egress {
                        let f = tx.frame.clone();
                        self.egress[dir.index()].push(tx);
                        f
                    } else {
                        tx.frame
                    };
                    let next = match dir {
                        Direction::Downlink => Ev::ToGnb(frame),
                        Direction::Uplink => Ev::ToServer(frame),
                    };
                    eng.schedule_in(self.p.hop, next);
                }
                self.kick_port(eng, dir)?;
            }
            Ev::ToGnb(frame) => {
                let link = &mut self.links[Direction::Downlink.index()];
                link.buffers[frame.ue_id].push_back(frame);
                self.request_tick(eng, Direction::Downlink, now)?;
            }
            Ev::Slot(dir) => self.on_slot(eng, dir)?,
            Ev::AirDelivered(frame) => match frame.direction {
                Direction::Downlink => self.deliver(frame, now)?,
                Direction::Uplink => {
                    eng.schedule_in(self.p.hop, Ev::ToPort(frame));
                }
            },
            Ev::ToServer(frame) => self.deliver(frame, now)?,
            Ev::Trace => {
                for i in 0..self.ues.len() {
                    let ue = &mut self.ues[i];
                    let position = ue.update(now, &self.p.gnb, self.p.profile, &self.p.channel)?;
                    self.positions.push(PositionSample {
                        time: now,
                        ue_id: i,
                        position,
                        los: ue.link.los,
                    });
                }
                let step = self.p.trace_interval.expect("trace events only when tracing");
                if now + step < self.p.emit_until {
                    eng.schedule_in(step, Ev::Trace);
                }
            }
        }
        Ok(())
    }

    fn deliver(&mut self, frame: Frame, now: SimTime) -> Result<(), ScenarioError> {
        let sample = DelaySample::new(frame.class, frame.direction, frame.ue_id, frame.created_at, now)?;
        self.metrics.record_delivery(sample);
        Ok(())
    }

    fn kick_port(&mut self, eng: &mut Engine<Ev>, dir: Direction) -> Result<(), ScenarioError> {
        let now = eng.now();
        match self.ports[dir.index()].start_next(now) {
            StartOutcome::Started { done_at, .. } => {
                eng.schedule(done_at, Ev::PortDone(dir))?;
            }
            StartOutcome::Gated { wake_at } => {
                let pending = self.port_wake[dir.index()];
                if pending.is_none_or(|w| w < now || w > wake_at) {
                    eng.schedule(wake_at, Ev::PortWake(dir))?;
                    self.port_wake[dir.index()] = Some(wake_at);
                }
            }
            StartOutcome::Idle | StartOutcome::Busy { .. } => {}
        }
        Ok(())
    }

    /// Makes sure a slot boundary at or after `at` will be processed.
    fn request_tick(&mut self, eng: &mut Engine<Ev>, dir: Direction, at: SimTime) -> Result<(), ScenarioError> {
        let slot = self.p.slot;
        let link = &mut self.links[dir.index()];
        let mut t = at.ceil_to(slot);
        if link.last_tick.is_some_and(|last| last >= t) {
            t = link.last_tick.expect("checked") + slot;
        }
        if link.ticks.first().is_none_or(|&first| first > t) {
            link.ticks.insert(t);
            eng.schedule(t, Ev::Slot(dir))?;
        }
        Ok(())
    }

    fn on_slot(&mut self, eng: &mut Engine<Ev>, dir: Direction) -> Result<(), ScenarioError> {
        let now = eng.now();
        let d = dir.index();
        self.links[d].ticks.remove(&now);
        if self.links[d].last_tick == Some(now) {
            return Ok(());
        }
        self.links[d].last_tick = Some(now);

        let World {
            p,
            ues,
            links,
            metrics,
            demands,
            slot_sinr,
            ..
        } = self;
        let link = &mut links[d];
        let slot_s = p.slot.as_secs_f64();

        demands.clear();
        for (ue_id, ue) in ues.iter_mut().enumerate() {
            if link.blocks[ue_id].is_none() {
                if let Some(frame) = link.buffers[ue_id].pop_front() {
                    link.blocks[ue_id] = Some(TransportBlock {
                        remaining_bits: frame.wire_bits(),
                        frame,
                        harq: HarqProcess::new(p.harq_max_attempts, p.harq_combining_gain_db)?,
                        ready_at: now,
                    });
                }
            }
            let Some(tb) = link.blocks[ue_id].as_ref().filter(|tb| tb.ready_at <= now) else {
                continue;
            };
            ue.update(now, &p.gnb, p.profile, &p.channel)?;
            let sinr = link.tx_power_dbm
                - ue.link.pathloss_db
                - ue.link.shadow_db
                - link.noise_dbm
                - p.interference_margin_db;
            slot_sinr[ue_id] = (sinr, ue.link.los);
            demands.push(SlotDemand {
                ue_id,
                pending_bits: tb.remaining_bits,
                full_band_capacity_bits: slot_capacity_bits(sinr, &p.rate, p.bandwidth_hz, slot_s),
            });
        }

        let decoded_at = now + p.slot;
        for alloc in link.rr.schedule_slot(demands) {
            let ue_id = alloc.ue_id;
            let tb = link.blocks[ue_id].as_mut().expect("allocated UE has a block");
            tb.remaining_bits -= alloc.bits;
            if tb.remaining_bits > 0 {
                continue;
            }
            let (sinr, los) = slot_sinr[ue_id];
            metrics.record_sinr(SinrSample {
                time: now,
                ue_id,
                direction: dir,
                sinr_db: sinr,
                los,
            });
            let rng = &mut link.harq_rngs[ue_id];
            let outcome = match p.forced_bler {
                Some(prob) => tb.harq.attempt(prob, rng)?,
                None => tb.harq.step(sinr, &p.curve, rng)?,
            };
            metrics.record_harq(now, dir, outcome);
            match outcome {
                HarqOutcome::Delivered => {
                    let tb = link.blocks[ue_id].take().expect("present");
                    eng.schedule(decoded_at, Ev::AirDelivered(tb.frame))?;
                }
                HarqOutcome::Retransmit => {
                    tb.remaining_bits = tb.frame.wire_bits();
                    tb.ready_at = now + p.harq_rtt;
                }
                HarqOutcome::Failed => {
                    let tb = link.blocks[ue_id].take().expect("present");
                    metrics.record_drop(tb.frame.class, tb.frame.direction);
                }
            }
        }

        let mut next: Option<SimTime> = None;
        for (block, buffer) in link.blocks.iter().zip(&link.buffers) {
            let candidate = match block {
                Some(tb) => tb.ready_at.max(decoded_at),
                None if !buffer.is_empty() => decoded_at,
                None => continue,
            };
            next = Some(next.map_or(candidate, |n| n.min(candidate)));
        }
        if let Some(t) = next {
            if link.ticks.first().is_none_or(|&first| first > t) {
                link.ticks.insert(t);
                eng.schedule(t, Ev::Slot(link.dir))?;
            }
        }
        Ok(())
    }
}

/// Runs a scenario in memory.
pub fn simulate(cfg: &ScenarioConfig) -> Result<ScenarioOutput, ScenarioError> {
    simulate_with(cfg, SimOptions::default())
}

pub fn simulate_with(cfg: &ScenarioConfig, opts: SimOptions) -> Result<ScenarioOutput, ScenarioError> {
    let (mut world, idle_slope_bps) = World::build(cfg)?;
    let mut eng = Engine::new(cfg.seed);
    if opts.event_log {
        eng.enable_log();
    }
    world.prime(&mut eng)?;
    let limit = world.p.emit_until + secs(cfg.drain_limit_s);
    let fired = eng.run_to_completion(limit, |eng, ev| world.handle(eng, ev.action));
    if let Some(e) = world.error.take() {
        return Err(e);
    }
    let in_flight = world.in_flight();
    if in_flight > 0 || eng.pending() > 0 {
        return Err(ScenarioError::NotDrained {
            limit,
            in_flight: in_flight.max(eng.pending()),
        });
    }
    world.metrics.check_conservation()?;
    let summary = world.metrics.summarize();
    Ok(ScenarioOutput {
        metrics: world.metrics,
        summary,
        egress: world.egress,
        positions: world.positions,
        idle_slope_bps,
        events_fired: fired,
        end_time: eng.now(),
        event_log: eng.log().map(<[EventHandle]>::to_vec),
    })
}

pub const EGRESS_HEADER: [&str; 7] = ["time_s", "ue_id", "class", "pcp", "wire_bytes", "queue_wait_s", "credit_bits_after"];
pub const POSITION_HEADER: [&str; 6] = ["time_s", "ue_id", "x_m", "y_m", "z_m", "los"];

/// Writes the metric CSVs, optional traces and the effective config into `out_dir`.
pub fn write_outputs(cfg: &ScenarioConfig, out: &ScenarioOutput, out_dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    let mut files = export_csv(&out.metrics, out_dir)?;
    if cfg.tsn.trace {
        for dir in Direction::BOTH {
            let path = out_dir.join(format!("egress_{}.csv", dir.label()));
            write_rows(
                &path,
                &EGRESS_HEADER,
                out.egress[dir.index()].iter().map(|t| {
                    [
                        fmt_num(t.finished_at.as_secs_f64()),
                        t.frame.ue_id.to_string(),
                        t.frame.class.label().to_owned(),
                        t.frame.pcp.to_string(),
                        t.frame.wire_bytes.to_string(),
                        fmt_num(t.queue_wait.as_secs_f64()),
                        fmt_num(t.credit_bits_after),
                    ]
                }),
            )?;
            files.push(path);
        }
    }
    if cfg.mobility.trace {
        let path = out_dir.join("positions.csv");
        write_rows(
            &path,
            &POSITION_HEADER,
            out.positions.iter().map(|s| {
                [
                    fmt_num(s.time.as_secs_f64()),
                    s.ue_id.to_string(),
                    fmt_num(s.position.x),
                    fmt_num(s.position.y),
                    fmt_num(s.position.z),
                    u8::from(s.los).to_string(),
                ]
            }),
        )?;
        files.push(path);
    }
    let path = out_dir.join("config.toml");
    fs::write(&path, cfg.to_toml()).map_err(|source| ScenarioError::Io {
        path: path.clone(),
        source,
    })?;
    files.push(path);
    Ok(files)
}

/// Runs a scenario and writes its outputs into `out_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Summary, ScenarioError> {
    let out = simulate(cfg)?;
    write_outputs(cfg, &out, out_dir)?;
    Ok(out.summary)
}
