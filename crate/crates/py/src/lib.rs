//! Python bindings: channel and switch formulas plus scenario runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tsnsim::channel::{self, ChannelConfig, InfProfile};
use tsnsim::cli::{self, ConfigFile, ScenarioConfig};
use tsnsim::metrics::{Stats, Summary};
use tsnsim::radio::{self, BlerCurve, Direction};
use tsnsim::tsn::{self, TrafficClass};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_profile(profile: &str) -> PyResult<InfProfile> {
    profile.parse().map_err(|_| PyValueError::new_err(format!("unknown profile `{profile}`")))
}

/// Path loss in dB for `profile` at 3D distance `d3d_m` and carrier `fc_ghz`.
#[pyfunction]
#[pyo3(signature = (profile, los, d3d_m, fc_ghz = 5.9))]
fn pathloss(profile: &str, los: bool, d3d_m: f64, fc_ghz: f64) -> PyResult<f64> {
    channel::pathloss(parse_profile(profile)?, los, d3d_m, fc_ghz).map_err(value_err)
}

/// LOS probability at 2D distance `d2d_m` with the profile's default clutter.
#[pyfunction]
fn los_probability(profile: &str, d2d_m: f64) -> PyResult<f64> {
    let p = parse_profile(profile)?;
    channel::los_probability(p, d2d_m, &ChannelConfig::defaults_for(p)).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (bandwidth_hz = 40e6, noise_figure_db = 5.0))]
fn noise_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    channel::noise_dbm(bandwidth_hz, noise_figure_db)
}

#[pyfunction]
#[pyo3(signature = (sinr_db, s50_db = 3.0, slope_per_db = 1.0))]
fn bler(sinr_db: f64, s50_db: f64, slope_per_db: f64) -> PyResult<f64> {
    let curve = BlerCurve::new(s50_db, slope_per_db).map_err(value_err)?;
    Ok(radio::bler(sinr_db, &curve))
}

#[pyfunction]
fn spectral_efficiency(sinr_db: f64) -> f64 {
    radio::spectral_efficiency(sinr_db)
}

#[pyfunction]
fn encapsulate(app_payload_bytes: u64) -> u64 {
    tsn::encapsulate(app_payload_bytes)
}

#[pyfunction]
fn stream_data_rate(wire_bytes: u64, packet_interval_s: f64) -> PyResult<f64> {
    tsn::stream_data_rate(wire_bytes, packet_interval_s).map_err(value_err)
}

/// Returns `(idle_slope_bps, send_slope_bps)`.
#[pyfunction]
#[pyo3(signature = (per_stream_bps, n_streams, port_bitrate_bps = 100e6))]
fn compute_slopes(per_stream_bps: f64, n_streams: u32, port_bitrate_bps: f64) -> PyResult<(f64, f64)> {
    tsn::compute_slopes(per_stream_bps, n_streams, port_bitrate_bps).map_err(value_err)
}

/// Default scenario config as TOML text.
#[pyfunction]
fn default_config() -> String {
    ScenarioConfig::default().to_toml()
}

fn stats_dict<'py>(py: Python<'py>, s: &Stats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("count", s.count)?;
    for (k, v) in [
        ("mean", s.mean),
        ("min", s.min),
        ("p25", s.p25),
        ("p50", s.p50),
        ("p75", s.p75),
        ("p95", s.p95),
        ("p99", s.p99),
        ("max", s.max),
    ] {
        d.set_item(k, v)?;
    }
    Ok(d)
}

fn summary_dict<'py>(py: Python<'py>, s: &Summary) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    let delay = PyDict::new(py);
    for class in TrafficClass::ALL {
        for dir in Direction::BOTH {
            let Some(cell) = s.delay.get(&(class, dir)) else { continue };
            let d = PyDict::new(py);
            d.set_item("delivered", cell.delivered)?;
            d.set_item("dropped", cell.dropped)?;
            match &cell.stats {
                Some(st) => d.set_item("delay_s", stats_dict(py, st)?)?,
                None => d.set_item("delay_s", py.None())?,
            }
            delay.set_item(format!("{}_{}", class.label(), dir.label()), d)?;
        }
    }
    out.set_item("delay", delay)?;
    let sinr = PyDict::new(py);
    let harq = PyDict::new(py);
    for dir in Direction::BOTH {
        if let Some(st) = s.sinr.get(&dir) {
            sinr.set_item(dir.label(), stats_dict(py, st)?)?;
        }
        if let Some(h) = s.harq.get(&dir) {
            let d = PyDict::new(py);
            d.set_item("transmissions", h.counters.transmissions)?;
            d.set_item("failures", h.counters.failures)?;
            d.set_item("error_rate", h.error_rate)?;
            harq.set_item(dir.label(), d)?;
        }
    }
    out.set_item("sinr_db", sinr)?;
    out.set_item("harq", harq)?;
    Ok(out)
}

fn scenario_from(config: Option<&str>) -> PyResult<ScenarioConfig> {
    match config {
        None => Ok(ScenarioConfig::default()),
        Some(text) => match cli::parse_config_str(text).map_err(value_err)? {
            ConfigFile::Scenario(c) => Ok(c),
            ConfigFile::Sweep(_) => Err(PyValueError::new_err("config describes a sweep")),
        },
    }
}

/// Runs one scenario from TOML text and returns its summary as nested dicts.
/// When `out_dir` is given the CSV outputs are written there as well.
#[pyfunction]
#[pyo3(signature = (config = None, out_dir = None))]
fn run_scenario<'py>(py: Python<'py>, config: Option<&str>, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = scenario_from(config)?;
    let summary = match out_dir {
        Some(dir) => cli::run_scenario(&cfg, &dir),
        None => cli::simulate(&cfg).map(|o| o.summary),
    }
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    summary_dict(py, &summary)
}

#[pymodule]
fn tsnsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(pathloss, m)?)?;
    m.add_function(wrap_pyfunction!(los_probability, m)?)?;
    m.add_function(wrap_pyfunction!(noise_dbm, m)?)?;
    m.add_function(wrap_pyfunction!(bler, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(encapsulate, m)?)?;
    m.add_function(wrap_pyfunction!(stream_data_rate, m)?)?;
    m.add_function(wrap_pyfunction!(compute_slopes, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
