//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use tsnsim::channel::{
    draw_shadow, los_decay_distance, los_probability, pathloss_los, pathloss_nlos, ChannelConfig, InfProfile,
};
use tsnsim::cli::config::SweepAxes;
use tsnsim::cli::scenario::write_outputs;
use tsnsim::cli::{run_scenario, run_sweep, simulate, Cell, ScenarioConfig, SweepConfig};
use tsnsim::engine::{RngStream, SimTime};
use tsnsim::metrics::{harq_error_rate, percentile_nearest_rank, HarqCounters, MetricsStore};
use tsnsim::mobility::{NamedRegion, RegionKind};
use tsnsim::radio::{Direction, HarqOutcome, HarqProcess};
use tsnsim::tsn::{
    compute_slopes, encapsulate, stream_data_rate, EgressPort, Frame, StartOutcome, TrafficClass, Transmitted,
};

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))?;
    Ok(took)
}

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let text = fixture("pathloss_oracle.csv");
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let profile: InfProfile = rec[0].parse().map_err(|e| format!("{e:?}"))?;
        let d: f64 = rec[1].parse().unwrap();
        let f: f64 = rec[2].parse().unwrap();
        let los: f64 = rec[3].parse().unwrap();
        let got = pathloss_los(d, f).map_err(|e| e.to_string())?;
        worst = worst.max((got - los).abs());
        if !rec[4].is_empty() {
            let nlos: f64 = rec[4].parse().unwrap();
            let got = pathloss_nlos(profile, d, f).map_err(|e| e.to_string())?;
            worst = worst.max((got - nlos).abs());
        } else {
            ensure(pathloss_nlos(profile, d, f).is_err(), || format!("{profile} should have no NLOS model"))?;
        }
        rows += 1;
    }
    ensure(rows == 1000, || format!("expected 1000 oracle rows, got {rows}"))?;
    ensure(worst <= 1e-9, || format!("max deviation {worst:e} dB"))?;
    let los = pathloss_los(100.0, 5.9).unwrap();
    let dl = pathloss_nlos(InfProfile::Dl, 100.0, 5.9).unwrap();
    ensure((los - 89.486).abs() < 5e-4, || format!("PL_LOS(100, 5.9) = {los}"))?;
    ensure((dl - 105.417).abs() < 5e-4, || format!("PL_NLOS,DL(100, 5.9) = {dl}"))?;
    let took = within_time(start, Duration::from_secs(1))?;
    Ok(format!("{rows} tuples, max |err| {worst:.1e} dB, PL_LOS {los:.3}, PL_DL {dl:.3}, {took:.2?}"))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let sl = ChannelConfig::defaults_for(InfProfile::Sl);
    let k = los_decay_distance(InfProfile::Sl, &sl).unwrap();
    // -10 / ln(0.8), 40-digit evaluation
    let k_ref = 44.814_201_177_245_5;
    ensure((k - k_ref).abs() < 1e-12, || format!("k_SL = {k}"))?;
    let pr = los_probability(InfProfile::Sl, k, &sl).unwrap();
    ensure((pr - (-1.0f64).exp()).abs() < 1e-12, || format!("Pr(d=k) = {pr}"))?;
    let hh = ChannelConfig::defaults_for(InfProfile::Hh);
    for d in [0.0, 1.0, 100.0, 600.0, 1e6] {
        ensure(los_probability(InfProfile::Hh, d, &hh).unwrap() == 1.0, || format!("Pr_HH({d}) != 1"))?;
    }

    let mut rng = RngStream::new(2, "acceptance.los");
    for _ in 0..10_000 {
        let profile = InfProfile::ALL[rng.random_range(0..InfProfile::ALL.len())];
        let mut cfg = ChannelConfig::defaults_for(profile);
        cfg.d_clutter_m = rng.uniform_range(0.5, 20.0);
        cfg.clutter_density_r = rng.uniform_range(0.01, 0.99);
        cfg.h_ut_m = rng.uniform_range(0.5, 2.0);
        cfg.h_c_m = cfg.h_ut_m + rng.uniform_range(0.1, 10.0);
        cfg.h_bs_m = cfg.h_c_m + rng.uniform_range(0.1, 10.0);
        let mut ds: Vec<f64> = (0..20).map(|_| rng.uniform_range(0.0, 600.0)).collect();
        ds.sort_by(f64::total_cmp);
        let ps: Vec<f64> = ds
            .iter()
            .map(|&d| los_probability(profile, d, &cfg))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ensure(ps.iter().all(|p| (0.0..=1.0).contains(p)), || format!("{profile}: probability out of range"))?;
        ensure(ps.windows(2).all(|w| w[1] <= w[0]), || format!("{profile}: not monotone for {cfg:?}"))?;
    }
    let took = within_time(start, Duration::from_secs(1))?;
    Ok(format!("k_SL {k:.6}, Pr(k) = e^-1, Pr_HH = 1, 10^4 configs monotone, {took:.2?}"))
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let n = 100_000;
    let mut cases = vec![];
    for profile in InfProfile::ALL {
        cases.push((profile, true, 4.0));
        let nlos_sigma = match profile {
            InfProfile::Sl => 5.7,
            InfProfile::Dl => 7.2,
            InfProfile::Sh => 5.9,
            InfProfile::Dh => 4.0,
            InfProfile::Hh => continue,
        };
        cases.push((profile, false, nlos_sigma));
    }
    let mut report = Vec::new();
    for (profile, los, sigma) in cases {
        let cfg = ChannelConfig::defaults_for(profile);
        let mut rng = RngStream::new(3, &format!("acceptance.shadow.{profile}.{los}"));
        let xs: Vec<f64> = (0..n).map(|_| draw_shadow(profile, los, &cfg, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        ensure(mean.abs() <= 0.05, || format!("{profile} los={los}: mean {mean}"))?;
        ensure((sd / sigma - 1.0).abs() <= 0.02, || format!("{profile} los={los}: std {sd} vs {sigma}"))?;
        report.push(format!("{}{}:{sd:.3}", profile.label(), if los { "/L" } else { "/N" }));
    }
    let took = within_time(start, Duration::from_secs(5))?;
    Ok(format!("{} cases [{}], {took:.2?}", report.len(), report.join(" ")))
}

fn criterion_4() -> Check {
    let wire = encapsulate(1453);
    ensure(wire == 1507, || format!("encapsulate(1453) = {wire}"))?;
    let rate = stream_data_rate(1507, 0.0625).unwrap();
    ensure(rate == 194_560.0, || format!("stream_data_rate(1507, 62.5 ms) = {rate}"))?;
    for (per, n) in [(194_560.0, 1), (202_666.666_666_666_7, 50), (1e6, 10), (1.0, 3)] {
        let (idle, send) = compute_slopes(per, n, 100e6).map_err(|e| e.to_string())?;
        ensure(send == idle - 100e6, || format!("send {send} != idle {idle} - port"))?;
    }
    ensure(compute_slopes(3e6, 50, 100e6).is_err(), || "over-subscription accepted".into())?;
    Ok("encapsulate(1453)=1507, 194560 bps, sendSlope = idleSlope - portRate".into())
}

fn frame(class: TrafficClass, pcp: u8, payload: u64, created_at: SimTime, sequence: u64) -> Frame {
    Frame {
        app_payload_bytes: payload,
        wire_bytes: encapsulate(payload),
        pcp,
        class,
        direction: Direction::Downlink,
        stream_id: 0,
        ue_id: 0,
        created_at,
        sequence,
    }
}

struct Start {
    at: SimTime,
    pcp: u8,
    sequence: u64,
    credit_before: Option<f64>,
}

/// Feeds `arrivals` (sorted by time) through the port and returns every
/// transmission start and completion.
fn drive(port: &mut EgressPort, arrivals: &[Frame], until: SimTime) -> (Vec<Start>, Vec<Transmitted>) {
    let mut starts = Vec::new();
    let mut done = Vec::new();
    let mut i = 0;
    let mut finish_at: Option<SimTime> = None;
    let mut wake_at: Option<SimTime> = None;
    loop {
        let next = [arrivals.get(i).map(|f| f.created_at), finish_at, wake_at].into_iter().flatten().min();
        let Some(now) = next.filter(|&t| t <= until) else { break };
        if finish_at == Some(now) {
            done.push(port.finish(now).expect("in flight"));
            finish_at = None;
        }
        while arrivals.get(i).is_some_and(|f| f.created_at == now) {
            port.enqueue(now, arrivals[i].clone());
            i += 1;
        }
        if wake_at == Some(now) {
            wake_at = None;
        }
        if finish_at.is_none() {
            let credit_before = port.cbs_at(now).map(|c| c.credit_bits);
            match port.start_next(now) {
                StartOutcome::Started { done_at, pcp } => {
                    finish_at = Some(done_at);
                    starts.push(Start {
                        at: now,
                        pcp,
                        sequence: 0,
                        credit_before,
                    });
                }
                StartOutcome::Gated { wake_at: w } => wake_at = Some(w),
                StartOutcome::Idle | StartOutcome::Busy { .. } => {}
            }
        }
    }
    for (s, t) in starts.iter_mut().zip(&done) {
        s.sequence = t.frame.sequence;
    }
    (starts, done)
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let port_rate = 100e6;
    let per_stream = stream_data_rate(1507, 0.060).unwrap();
    let (idle, send) = compute_slopes(per_stream, 50, port_rate).unwrap();

    // Saturated Video queue for 10 s.
    let horizon = SimTime::from_secs_f64(10.0);
    let backlog: Vec<Frame> = (0..12_000).map(|i| frame(TrafficClass::Video, 5, 1453, SimTime::ZERO, i)).collect();
    let mut port = EgressPort::new(port_rate).unwrap().with_cbs(5, idle).unwrap();
    let (starts, done) = drive(&mut port, &backlog, horizon);
    let bits: u64 = done.iter().filter(|t| t.finished_at <= horizon).map(|t| t.frame.wire_bits()).sum();
    let throughput = bits as f64 / 10.0;
    ensure(throughput <= idle * 1.02, || format!("throughput {throughput} > 1.02 idle {idle}"))?;
    ensure(throughput >= idle * 0.98, || format!("throughput {throughput} far below idle {idle}"))?;

    // Gate threshold: every shaped start happens at non-negative credit, and
    // after each frame the credit has dropped by exactly |sendSlope| * t_tx.
    for (s, t) in starts.iter().zip(&done) {
        let c = s.credit_before.unwrap();
        ensure(c >= -1e-6, || format!("started at credit {c}"))?;
        let tx = (t.finished_at - t.started_at).as_secs_f64();
        let expect = c + send * tx;
        ensure((t.credit_bits_after - expect).abs() < 1e-6, || {
            format!("credit after {} vs replay {expect}", t.credit_bits_after)
        })?;
    }

    // Reset rule: positive credit is kept while Video waits and discarded
    // once the Video queue empties. Video waits behind a burst of NC frames.
    let mut port = EgressPort::new(port_rate).unwrap().with_cbs(5, idle).unwrap();
    let mut arrivals: Vec<Frame> =
        (0..12).map(|i| frame(TrafficClass::NetworkControl, 7, 1429, SimTime::ZERO, i)).collect();
    let t1 = SimTime::from_nanos(1);
    arrivals.push(frame(TrafficClass::Video, 5, 1453, t1, 100));
    arrivals.push(frame(TrafficClass::Video, 5, 1453, t1, 101));
    let (_, done) = drive(&mut port, &arrivals, SimTime::from_secs_f64(1.0));
    let video: Vec<&Transmitted> = done.iter().filter(|t| t.frame.pcp == 5).collect();
    ensure(video.len() == 2, || "both video frames sent".into())?;
    // credit after the first frame = idle*wait + send*t_tx, positive, kept
    let first = video[0];
    let waited = (first.started_at - t1).as_secs_f64();
    let tx = (first.finished_at - first.started_at).as_secs_f64();
    let replay = idle * waited + send * tx;
    ensure(replay > 0.0, || format!("scenario should leave positive credit, replay {replay}"))?;
    ensure((first.credit_bits_after - replay).abs() < 1e-6, || {
        format!("kept credit {} vs replay {replay}", first.credit_bits_after)
    })?;
    ensure(video[1].started_at == first.finished_at, || "second frame should go immediately".into())?;
    let last = video[1];
    ensure(last.credit_bits_after <= 0.0, || {
        format!("positive credit {} survived an empty queue", last.credit_bits_after)
    })?;
    let later = port.cbs_at(last.finished_at + SimTime::from_secs_f64(0.5)).unwrap().credit_bits;
    ensure(later == 0.0, || format!("idle credit drifted to {later}"))?;

    let took = within_time(start, Duration::from_secs(10))?;
    Ok(format!(
        "Video {:.0} bps vs idleSlope {:.0} bps ({:.4}x), credit replay of {} frames, reset verified, {took:.2?}",
        throughput,
        idle,
        throughput / idle,
        done.len()
    ))
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let mut rng = RngStream::new(6, "acceptance.sp");

    // Pure strict priority over 8 PCPs with 10^4 random arrivals.
    let mut t = 0u64;
    let arrivals: Vec<Frame> = (0..10_000)
        .map(|i| {
            t += rng.random_range(0..150_000u64);
            let pcp = rng.random_range(0..8u8);
            let payload = rng.random_range(46..1500u64);
            frame(TrafficClass::BestEffort, pcp, payload, SimTime::from_nanos(t), i)
        })
        .collect();
    let mut port = EgressPort::new(100e6).unwrap();
    let (starts, done) = drive(&mut port, &arrivals, SimTime::MAX);
    ensure(done.len() == arrivals.len(), || "not all frames sent".into())?;
    sp_replay(&arrivals, &starts, |_, _| true)?;

    // Mixed NC / Video (CBS) / BE load above the port rate.
    let per_stream = stream_data_rate(1507, 0.060).unwrap();
    let (idle, _) = compute_slopes(per_stream, 50, 100e6).unwrap();
    let horizon = 10.0;
    let mut arrivals = Vec::new();
    let mut seq = 0;
    for (class, pcp, payload, rate_bps) in [
        (TrafficClass::NetworkControl, 7, 498, 20e6),
        (TrafficClass::Video, 5, 1453, 9e6),
        (TrafficClass::BestEffort, 0, 1429, 80e6),
    ] {
        let mean_gap = (encapsulate(payload) * 8) as f64 / rate_bps;
        let mut t = 0.0;
        loop {
            t += -mean_gap * (1.0 - rng.uniform()).ln();
            if t >= horizon {
                break;
            }
            arrivals.push(frame(class, pcp, payload, SimTime::from_secs_f64(t), seq));
            seq += 1;
        }
    }
    arrivals.sort_by_key(|f| (f.created_at, f.sequence));
    let mut port = EgressPort::new(100e6).unwrap().with_cbs(5, idle).unwrap();
    let (starts, done) = drive(&mut port, &arrivals, SimTime::MAX);
    ensure(done.len() == arrivals.len(), || "mixed load did not drain".into())?;
    // a waiting Video head only outranks lower PCPs while its gate is open
    sp_replay(&arrivals, &starts, |pcp, start| pcp != 5 || start.credit_before.is_none_or(|c| c >= 0.0))?;

    let mut waits: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for t in &done {
        waits.entry(t.frame.pcp).or_default().push(t.queue_wait.as_secs_f64());
    }
    let p99 = |pcp: u8| {
        let mut v = waits[&pcp].clone();
        v.sort_by(f64::total_cmp);
        percentile_nearest_rank(&v, 99.0).unwrap()
    };
    let (nc, video, be) = (p99(7), p99(5), p99(0));
    ensure(nc < video && video < be, || format!("p99 NC {nc} Video {video} BE {be}"))?;
    let took = start.elapsed();
    Ok(format!(
        "10^4 random arrivals replayed, mixed load p99 wait NC {:.3} ms < Video {:.3} ms < BE {:.3} ms, {took:.2?}",
        nc * 1e3,
        video * 1e3,
        be * 1e3
    ))
}

/// Walks the starts in time order and counts, for each start, frames of a
/// higher PCP that had arrived and were still waiting. `blocks(pcp, start)`
/// says whether such a waiting frame was eligible.
fn sp_replay(arrivals: &[Frame], starts: &[Start], blocks: impl Fn(u8, &Start) -> bool) -> Result<(), String> {
    let pcp_of: BTreeMap<u64, u8> = arrivals.iter().map(|f| (f.sequence, f.pcp)).collect();
    let mut waiting = [0usize; 8];
    let mut next = 0;
    let mut violations = 0;
    for s in starts {
        while arrivals.get(next).is_some_and(|f| f.created_at <= s.at) {
            waiting[arrivals[next].pcp as usize] += 1;
            next += 1;
        }
        let pcp = pcp_of[&s.sequence];
        ensure(pcp == s.pcp, || "start/trace mismatch".into())?;
        violations += (pcp as usize + 1..8).filter(|&q| waiting[q] > 0 && blocks(q as u8, s)).count();
        waiting[pcp as usize] -= 1;
    }
    ensure(violations == 0, || format!("{violations} strict-priority violations"))
}

fn criterion_7() -> Check {
    let start = Instant::now();
    let blocks = 1_000_000u64;
    let mut rng = RngStream::new(7, "acceptance.harq");
    let mut metrics = MetricsStore::new();
    let mut counters = HarqCounters::default();
    let mut lost = 0u64;
    for _ in 0..blocks {
        let mut h = HarqProcess::new(4, 3.0).unwrap();
        loop {
            let outcome = h.attempt(0.1, &mut rng).map_err(|e| e.to_string())?;
            counters.record(outcome);
            metrics.record_harq(SimTime::ZERO, Direction::Downlink, outcome);
            match outcome {
                HarqOutcome::Retransmit => continue,
                HarqOutcome::Failed => lost += 1,
                HarqOutcome::Delivered => {}
            }
            break;
        }
    }
    let residual = lost as f64 / blocks as f64;
    let p = 1e-4;
    let sigma = (p * (1.0 - p) / blocks as f64).sqrt();
    ensure((residual - p).abs() <= 3.0 * sigma, || format!("residual loss {residual} vs {p} +- {}", 3.0 * sigma))?;
    let rate = harq_error_rate(&counters).unwrap();
    ensure((rate - 0.1).abs() <= 0.004, || format!("error rate {rate}"))?;
    let via_summary = metrics.summarize().harq_error_rate(Direction::Downlink).unwrap();
    ensure(via_summary == rate, || format!("summary rate {via_summary} != {rate}"))?;

    // Same definition end to end through the radio link.
    let cfg = ScenarioConfig {
        n_ues: 10,
        radio: tsnsim::cli::config::RadioSettings {
            forced_bler: Some(0.1),
            ..Default::default()
        },
        ..Default::default()
    };
    let out = simulate(&cfg).map_err(|e| e.to_string())?;
    let mut scenario_rates = Vec::new();
    for dir in Direction::BOTH {
        let r = out.summary.harq_error_rate(dir).unwrap();
        let n = out.metrics.harq_counters(dir).transmissions as f64;
        let tol = 4.0 * (0.1 * 0.9 / n).sqrt();
        ensure((r - 0.1).abs() <= tol, || format!("{} scenario error rate {r}", dir.label()))?;
        scenario_rates.push(format!("{} {r:.4}", dir.short()));
    }
    Ok(format!(
        "residual {residual:.2e} vs 1e-4 +- {:.1e}, error rate {rate:.5}, scenario {}, {:.2?}",
        3.0 * sigma,
        scenario_rates.join(" "),
        start.elapsed()
    ))
}

struct TrendCell {
    cell: Cell,
    summary: tsnsim::metrics::Summary,
    wall: Duration,
}

fn criterion_8() -> Check {
    let start = Instant::now();
    let base = ScenarioConfig {
        seed: 1,
        region: RegionKind::Named(NamedRegion::D2),
        duration_s: 10.0,
        ..Default::default()
    };
    let profiles = [InfProfile::Sl, InfProfile::Dl, InfProfile::Sh, InfProfile::Dh];
    let counts = [5u32, 10, 25, 50];
    let grid: Vec<Cell> = profiles
        .iter()
        .flat_map(|&profile| {
            counts.iter().map(move |&n_ues| Cell {
                profile,
                n_ues,
                region: base.region,
                repetition: 0,
            })
        })
        .collect();
    let results: Vec<Result<TrendCell, String>> = grid
        .into_par_iter()
        .map(|cell| {
            let t0 = Instant::now();
            // One fixed seed for every cell: UE k sees the same channel,
            // trajectory and traffic at every UE count.
            let cfg = ScenarioConfig {
                seed: base.seed,
                ..cell.config(&base)
            };
            let summary = simulate(&cfg).map_err(|e| format!("{}: {e}", cell.name()))?.summary;
            Ok(TrendCell {
                cell,
                summary,
                wall: t0.elapsed(),
            })
        })
        .collect();
    let cells: Vec<TrendCell> = results.into_iter().collect::<Result<_, _>>()?;
    let get = |p: InfProfile, n: u32| {
        &cells
            .iter()
            .find(|c| c.cell.profile == p && c.cell.n_ues == n)
            .expect("cell present")
            .summary
    };
    let slowest = cells.iter().map(|c| c.wall).max().unwrap();
    let total = start.elapsed();

    let mut failures = Vec::new();
    let mut notes = Vec::new();

    // (a) downlink SINR: SL above DH
    let mut sinr_line = Vec::new();
    for n in counts {
        let sl = get(InfProfile::Sl, n).sinr_mean(Direction::Downlink).unwrap();
        let dh = get(InfProfile::Dh, n).sinr_mean(Direction::Downlink).unwrap();
        sinr_line.push(format!("n={n} SL {sl:.1}/DH {dh:.1}"));
        if sl <= dh {
            failures.push(format!("(a) n={n}: mean DL SINR SL {sl:.2} dB <= DH {dh:.2} dB"));
        }
    }
    notes.push(format!("(a) {}", sinr_line.join(", ")));

    // (b) downlink HARQ error rate: elevated-BS profiles at least the low-BS ones
    let mut harq_line = Vec::new();
    for n in counts {
        let r = |p| get(p, n).harq_error_rate(Direction::Downlink).unwrap_or(0.0);
        let (sl, dl, sh, dh) = (r(InfProfile::Sl), r(InfProfile::Dl), r(InfProfile::Sh), r(InfProfile::Dh));
        harq_line.push(format!("n={n} SL {sl:.4} DL {dl:.4} SH {sh:.4} DH {dh:.4}"));
        if sh.min(dh) < sl.max(dl) {
            failures.push(format!("(b) n={n}: min(SH {sh:.4}, DH {dh:.4}) < max(SL {sl:.4}, DL {dl:.4})"));
        }
    }
    notes.push(format!("(b) {}", harq_line.join(", ")));

    // (c) p99 end-to-end delay non-decreasing with the UE count
    let mut c_fail = 0;
    for p in profiles {
        for dir in Direction::BOTH {
            for class in TrafficClass::ALL {
                let p99: Vec<f64> = counts
                    .iter()
                    .map(|&n| get(p, n).delay_stats(class, dir).map_or(0.0, |s| s.p99))
                    .collect();
                if p99.windows(2).any(|w| w[1] < w[0]) {
                    c_fail += 1;
                    failures.push(format!(
                        "(c) {} {} {}: p99 ms {:?}",
                        p.label(),
                        class.label(),
                        dir.short(),
                        p99.iter().map(|x| (x * 1e6).round() / 1e3).collect::<Vec<_>>()
                    ));
                }
            }
        }
    }
    notes.push(format!("(c) {} of 24 profile/class/direction series non-monotone", c_fail));

    if slowest >= Duration::from_secs(60) {
        failures.push(format!("slowest cell {slowest:?} >= 60 s"));
    }
    if total >= Duration::from_secs(900) {
        failures.push(format!("grid took {total:?} >= 15 min"));
    }
    let timing = format!("slowest cell {slowest:.2?}, grid {total:.2?}");
    for n in &notes {
        println!("    {n}");
    }
    if failures.is_empty() {
        Ok(timing)
    } else {
        for f in &failures {
            println!("    violated {f}");
        }
        Err(format!("{} trend violations; {timing}", failures.len()))
    }
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            out.insert(entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path()).unwrap());
        }
    }
    out
}

fn criterion_9() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ScenarioConfig {
        profile: InfProfile::Dl,
        n_ues: 10,
        seed: 99,
        ..Default::default()
    };
    cfg.tsn.trace = true;
    cfg.mobility.trace = true;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let sa = run_scenario(&cfg, &a).map_err(|e| e.to_string())?;
    let out_b = simulate(&cfg).map_err(|e| e.to_string())?;
    write_outputs(&cfg, &out_b, &b).map_err(|e| e.to_string())?;
    ensure(sa == out_b.summary, || "summaries differ".into())?;
    let (fa, fb) = (read_dir_bytes(&a), read_dir_bytes(&b));
    ensure(fa.len() >= 7, || format!("expected metric and trace files, got {:?}", fa.keys()))?;
    ensure(fa == fb, || "scenario outputs differ between runs".into())?;

    let sweep = SweepConfig {
        base: ScenarioConfig {
            duration_s: 3.0,
            ..Default::default()
        },
        axes: SweepAxes {
            profiles: vec![InfProfile::Sl, InfProfile::Sh],
            ue_counts: vec![5, 10],
            regions: vec![RegionKind::Named(NamedRegion::D1)],
            repetitions: 1,
        },
    };
    let root = tmp.path().join("sweep");
    let report = run_sweep(&sweep, &root, 2).map_err(|e| e.to_string())?;
    ensure(report.failed() == 0, || "sweep cells failed".into())?;
    let victim = "InF-SH_10_d1_0";
    let before = read_dir_bytes(&root.join(victim));
    fs::remove_dir_all(root.join(victim)).map_err(|e| e.to_string())?;
    // re-run only that cell, in a sweep that lacks the other cells
    let single = SweepConfig {
        axes: SweepAxes {
            profiles: vec![InfProfile::Sh],
            ue_counts: vec![10],
            ..sweep.axes.clone()
        },
        ..sweep.clone()
    };
    let rerun_root = tmp.path().join("rerun");
    run_sweep(&single, &rerun_root, 1).map_err(|e| e.to_string())?;
    let after = read_dir_bytes(&rerun_root.join(victim));
    ensure(!before.is_empty() && before == after, || format!("cell {victim} not reproduced"))?;
    Ok(format!("{} files byte-identical across runs; cell {victim} reproduced in isolation", fa.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "channel formula oracle", criterion_1),
        (2, "LOS probability", criterion_2),
        (3, "shadow fading statistics", criterion_3),
        (4, "encapsulation and slopes", criterion_4),
        (5, "credit-based shaper", criterion_5),
        (6, "strict priority", criterion_6),
        (7, "HARQ analytic equivalence", criterion_7),
        (8, "profile and load trends", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        match check() {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}): {reason}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
