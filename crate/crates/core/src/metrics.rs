//! Delay, SINR and HARQ collection, summary statistics and CSV export.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::SimTime;
use crate::radio::{Direction, HarqOutcome};
use crate::tsn::TrafficClass;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("negative delay: delivered at {delivered} before creation at {created}")]
    NegativeDelay { created: SimTime, delivered: SimTime },
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("CSV error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("conservation violated for {class}/{direction}: generated {generated}, delivered {delivered}, dropped {dropped}")]
    Conservation {
        class: TrafficClass,
        direction: &'static str,
        generated: u64,
        delivered: u64,
        dropped: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySample {
    pub class: TrafficClass,
    pub direction: Direction,
    pub ue_id: usize,
    pub delivered_at: SimTime,
    pub delay: SimTime,
}

impl DelaySample {
    pub fn new(
        class: TrafficClass,
        direction: Direction,
        ue_id: usize,
        created_at: SimTime,
        delivered_at: SimTime,
    ) -> Result<Self, MetricsError> {
        if delivered_at < created_at {
            return Err(MetricsError::NegativeDelay {
                created: created_at,
                delivered: delivered_at,
            });
        }
        Ok(DelaySample {
            class,
            direction,
            ue_id,
            delivered_at,
            delay: delivered_at - created_at,
        })
    }

    pub fn delay_s(&self) -> f64 {
        self.delay.as_secs_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrSample {
    pub time: SimTime,
    pub ue_id: usize,
    pub direction: Direction,
    pub sinr_db: f64,
    /// Channel state of the link when the sample was taken.
    pub los: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HarqCounters {
    pub transmissions: u64,
    pub failures: u64,
}

impl HarqCounters {
    pub fn record(&mut self, outcome: HarqOutcome) {
        self.transmissions += 1;
        if outcome.is_error() {
            self.failures += 1;
        }
    }
}

/// Failed transmissions over total transmissions; absent when nothing was sent.
pub fn harq_error_rate(c: &HarqCounters) -> Option<f64> {
    (c.transmissions > 0).then(|| c.failures as f64 / c.transmissions as f64)
}

/// Nearest-rank percentile of an ascending slice, `p` in (0, 100].
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(n) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub count: u64,
    pub mean: f64,
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl Stats {
    pub fn from_samples(mut xs: Vec<f64>) -> Option<Stats> {
        if xs.is_empty() {
            return None;
        }
        xs.sort_by(f64::total_cmp);
        let q = |p| percentile_nearest_rank(&xs, p).expect("non-empty");
        Some(Stats {
            count: xs.len() as u64,
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
            min: xs[0],
            p25: q(25.0),
            p50: q(50.0),
            p75: q(75.0),
            p95: q(95.0),
            p99: q(99.0),
            max: xs[xs.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayCell {
    pub delivered: u64,
    pub dropped: u64,
    pub stats: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarqSummary {
    pub counters: HarqCounters,
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub delay: BTreeMap<(TrafficClass, Direction), DelayCell>,
    pub sinr: BTreeMap<Direction, Stats>,
    pub harq: BTreeMap<Direction, HarqSummary>,
}

impl Summary {
    pub fn delay_stats(&self, class: TrafficClass, dir: Direction) -> Option<&Stats> {
        self.delay.get(&(class, dir)).and_then(|c| c.stats.as_ref())
    }

    pub fn sinr_mean(&self, dir: Direction) -> Option<f64> {
        self.sinr.get(&dir).map(|s| s.mean)
    }

    pub fn harq_error_rate(&self, dir: Direction) -> Option<f64> {
        self.harq.get(&dir).and_then(|h| h.error_rate)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct FlowCounters {
    generated: u64,
    delivered: u64,
    dropped: u64,
}

/// Everything measured during one run.
#[derive(Debug, Clone, Default)]
pub struct MetricsStore {
    delays: Vec<DelaySample>,
    sinr: Vec<SinrSample>,
    harq: BTreeMap<Direction, HarqCounters>,
    flows: BTreeMap<(TrafficClass, Direction), FlowCounters>,
    /// Samples before this instant are counted for conservation but not kept.
    sample_from: SimTime,
}

impl MetricsStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_warmup(warmup: SimTime) -> Self {
        MetricsStore {
            sample_from: warmup,
            ..Self::default()
        }
    }

    pub fn record_generated(&mut self, class: TrafficClass, dir: Direction) {
        self.flows.entry((class, dir)).or_default().generated += 1;
    }

    /// Records a delivered frame. `created_at` decides warm-up exclusion.
    pub fn record_delivery(&mut self, sample: DelaySample) {
        self.flows.entry((sample.class, sample.direction)).or_default().delivered += 1;
        if sample.delivered_at - sample.delay >= self.sample_from {
            self.delays.push(sample);
        }
    }

    pub fn record_drop(&mut self, class: TrafficClass, dir: Direction) {
        self.flows.entry((class, dir)).or_default().dropped += 1;
    }

    pub fn record_sinr(&mut self, sample: SinrSample) {
        if sample.time >= self.sample_from {
            self.sinr.push(sample);
        }
    }

    pub fn record_harq(&mut self, time: SimTime, dir: Direction, outcome: HarqOutcome) {
        if time >= self.sample_from {
            self.harq.entry(dir).or_default().record(outcome);
        }
    }

    pub fn delays(&self) -> &[DelaySample] {
        &self.delays
    }

    pub fn sinr_samples(&self) -> &[SinrSample] {
        &self.sinr
    }

    pub fn harq_counters(&self, dir: Direction) -> HarqCounters {
        self.harq.get(&dir).copied().unwrap_or_default()
    }

    pub fn generated(&self) -> u64 {
        self.flows.values().map(|f| f.generated).sum()
    }

    pub fn delivered(&self) -> u64 {
        self.flows.values().map(|f| f.delivered).sum()
    }

    pub fn dropped(&self) -> u64 {
        self.flows.values().map(|f| f.dropped).sum()
    }

    /// Every generated frame must have been delivered or dropped.
    pub fn check_conservation(&self) -> Result<(), MetricsError> {
        for (&(class, dir), f) in &self.flows {
            if f.generated != f.delivered + f.dropped {
                return Err(MetricsError::Conservation {
                    class,
                    direction: dir.label(),
                    generated: f.generated,
                    delivered: f.delivered,
                    dropped: f.dropped,
                });
            }
        }
        Ok(())
    }

    pub fn summarize(&self) -> Summary {
        let mut summary = Summary::default();
        for (&(class, dir), f) in &self.flows {
            if f.delivered == 0 && f.dropped == 0 {
                continue;
            }
            let xs = self
                .delays
                .iter()
                .filter(|d| d.class == class && d.direction == dir)
                .map(DelaySample::delay_s)
                .collect();
            summary.delay.insert(
                (class, dir),
                DelayCell {
                    delivered: f.delivered,
                    dropped: f.dropped,
                    stats: Stats::from_samples(xs),
                },
            );
        }
        for dir in Direction::BOTH {
            let xs = self.sinr.iter().filter(|s| s.direction == dir).map(|s| s.sinr_db).collect();
            if let Some(st) = Stats::from_samples(xs) {
                summary.sinr.insert(dir, st);
            }
            let counters = self.harq_counters(dir);
            summary.harq.insert(
                dir,
                HarqSummary {
                    counters,
                    error_rate: harq_error_rate(&counters),
                },
            );
        }
        summary
    }
}

pub fn summarize(store: &MetricsStore) -> Summary {
    store.summarize()
}

/// Formats like C's `%.9g`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed).to_owned()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub const DELAY_HEADER: [&str; 5] = ["time_s", "ue_id", "class", "direction", "delay_s"];
pub const SINR_HEADER: [&str; 4] = ["time_s", "ue_id", "direction", "sinr_db"];
pub const HARQ_HEADER: [&str; 4] = ["direction", "transmissions", "failures", "error_rate"];
pub const SUMMARY_HEADER: [&str; 15] = [
    "metric", "class", "direction", "count", "dropped", "failures", "mean", "min", "p25", "p50", "p75", "p95", "p99",
    "max", "error_rate",
];

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, MetricsError> {
    let file = fs::File::create(path).map_err(|source| MetricsError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

pub(crate) fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), MetricsError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |source| MetricsError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_err)?;
    }
    w.flush().map_err(|source| MetricsError::Io {
        path: path.to_owned(),
        source,
    })
}

fn stats_cells(s: Option<&Stats>) -> [String; 8] {
    match s {
        Some(s) => [s.mean, s.min, s.p25, s.p50, s.p75, s.p95, s.p99, s.max].map(fmt_num),
        None => Default::default(),
    }
}

/// Writes `delay.csv`, `sinr.csv`, `harq.csv` and `summary.csv` into `dir`.
pub fn export_csv(store: &MetricsStore, dir: &Path) -> Result<Vec<PathBuf>, MetricsError> {
    fs::create_dir_all(dir).map_err(|source| MetricsError::Io {
        path: dir.to_owned(),
        source,
    })?;

    let mut delays: Vec<&DelaySample> = store.delays.iter().collect();
    delays.sort_by_key(|d| (d.delivered_at, d.ue_id));
    let delay_path = dir.join("delay.csv");
    write_rows(
        &delay_path,
        &DELAY_HEADER,
        delays.iter().map(|d| {
            [
                fmt_num(d.delivered_at.as_secs_f64()),
                d.ue_id.to_string(),
                d.class.label().to_owned(),
                d.direction.label().to_owned(),
                fmt_num(d.delay_s()),
            ]
        }),
    )?;

    let mut sinr: Vec<&SinrSample> = store.sinr.iter().collect();
    sinr.sort_by_key(|s| (s.time, s.ue_id));
    let sinr_path = dir.join("sinr.csv");
    write_rows(
        &sinr_path,
        &SINR_HEADER,
        sinr.iter().map(|s| {
            [
                fmt_num(s.time.as_secs_f64()),
                s.ue_id.to_string(),
                s.direction.label().to_owned(),
                fmt_num(s.sinr_db),
            ]
        }),
    )?;

    let summary = store.summarize();
    let harq_path = dir.join("harq.csv");
    write_rows(
        &harq_path,
        &HARQ_HEADER,
        summary.harq.iter().map(|(dir, h)| {
            [
                dir.label().to_owned(),
                h.counters.transmissions.to_string(),
                h.counters.failures.to_string(),
                opt_num(h.error_rate),
            ]
        }),
    )?;

    let summary_path = dir.join("summary.csv");
    write_rows(&summary_path, &SUMMARY_HEADER, summary_rows(&summary))?;

    Ok(vec![delay_path, sinr_path, harq_path, summary_path])
}

fn summary_rows(summary: &Summary) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (&(class, dir), cell) in &summary.delay {
        let mut row = vec![
            "delay_s".to_owned(),
            class.label().to_owned(),
            dir.label().to_owned(),
            cell.delivered.to_string(),
            cell.dropped.to_string(),
            String::new(),
        ];
        row.extend(stats_cells(cell.stats.as_ref()));
        row.push(String::new());
        rows.push(row);
    }
    for (dir, st) in &summary.sinr {
        let mut row = vec![
            "sinr_db".to_owned(),
            String::new(),
            dir.label().to_owned(),
            st.count.to_string(),
            String::new(),
            String::new(),
        ];
        row.extend(stats_cells(Some(st)));
        row.push(String::new());
        rows.push(row);
    }
    for (dir, h) in &summary.harq {
        let mut row = vec![
            "harq".to_owned(),
            String::new(),
            dir.label().to_owned(),
            h.counters.transmissions.to_string(),
            String::new(),
            h.counters.failures.to_string(),
        ];
        row.extend(stats_cells(None));
        row.push(opt_num(h.error_rate));
        rows.push(row);
    }
    rows
}
