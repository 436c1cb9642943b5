//! Configuration, scenario runner and parameter sweeps.

pub mod config;
pub mod scenario;
pub mod sweep;

pub use config::{parse_config, parse_config_str, ConfigError, ConfigFile, ScenarioConfig, SweepAxes, SweepConfig};
pub use scenario::{run_scenario, simulate, simulate_with, ScenarioError, ScenarioOutput, SimOptions};
pub use sweep::{run_sweep, Cell, CellResult, SweepReport};
