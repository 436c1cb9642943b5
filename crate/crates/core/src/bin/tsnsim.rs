use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tsnsim::channel::InfProfile;
use tsnsim::cli::{parse_config, run_scenario, run_sweep, ConfigFile, ScenarioConfig, SweepAxes, SweepConfig};
use tsnsim::metrics::{fmt_num, Summary};
use tsnsim::mobility::RegionKind;
use tsnsim::radio::Direction;
use tsnsim::tsn::TrafficClass;

#[derive(Parser)]
#[command(name = "tsnsim", version, about = "TSN over industrial 5G discrete-event simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario.
    Run {
        /// Scenario config (TOML). Flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// InF-SL, InF-DL, InF-SH, InF-DH or InF-HH.
        #[arg(long)]
        profile: Option<InfProfile>,
        #[arg(long)]
        ues: Option<u32>,
        /// d1, d2, d3 or a radius in meters.
        #[arg(long)]
        region: Option<RegionKind>,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulated seconds of traffic generation.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run every cell of a sweep config.
    Sweep {
        /// Config with a [sweep] table; the default grid is used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Print the default scenario config.
    Defaults,
}

fn print_summary(s: &Summary) {
    println!("{:<6} {:<9} {:>9} {:>8} {:>12} {:>12} {:>12}", "class", "direction", "delivered", "dropped", "mean_ms", "p95_ms", "p99_ms");
    for dir in Direction::BOTH {
        for class in TrafficClass::ALL {
            let Some(cell) = s.delay.get(&(class, dir)) else { continue };
            let ms = |f: fn(&tsnsim::metrics::Stats) -> f64| {
                cell.stats.as_ref().map_or("-".into(), |st| fmt_num(f(st) * 1e3))
            };
            println!(
                "{:<6} {:<9} {:>9} {:>8} {:>12} {:>12} {:>12}",
                class.label(),
                dir.label(),
                cell.delivered,
                cell.dropped,
                ms(|s| s.mean),
                ms(|s| s.p95),
                ms(|s| s.p99)
            );
        }
    }
    for dir in Direction::BOTH {
        let sinr = s.sinr_mean(dir).map_or("-".into(), fmt_num);
        let harq = s.harq_error_rate(dir).map_or("-".into(), fmt_num);
        println!("{}: mean SINR {sinr} dB, HARQ error rate {harq}", dir.label());
    }
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            profile,
            ues,
            region,
            seed,
            duration,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => match parse_config(&path)? {
                    ConfigFile::Scenario(c) => c,
                    ConfigFile::Sweep(_) => {
                        return Err(format!("{} describes a sweep; use `tsnsim sweep`", path.display()).into())
                    }
                },
                None => ScenarioConfig::default(),
            };
            cfg.profile = profile.unwrap_or(cfg.profile);
            cfg.n_ues = ues.unwrap_or(cfg.n_ues);
            cfg.region = region.unwrap_or(cfg.region);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.duration_s = duration.unwrap_or(cfg.duration_s);
            let summary = run_scenario(&cfg, &out)?;
            print_summary(&summary);
            println!("results written to {}", out.display());
            Ok(true)
        }
        Command::Sweep { config, out, jobs } => {
            let sweep = match config {
                Some(path) => match parse_config(&path)? {
                    ConfigFile::Sweep(s) => s,
                    ConfigFile::Scenario(base) => SweepConfig {
                        base,
                        axes: SweepAxes::default(),
                    },
                },
                None => SweepConfig {
                    base: ScenarioConfig::default(),
                    axes: SweepAxes::default(),
                },
            };
            let report = run_sweep(&sweep, &out, jobs)?;
            for c in &report.cells {
                if let Err(e) = &c.outcome {
                    eprintln!("cell {} failed: {e}", c.cell.name());
                }
            }
            println!(
                "{} cells, {} failed; grid written to {}",
                report.cells.len(),
                report.failed(),
                report.grid_path.display()
            );
            Ok(report.failed() == 0)
        }
        Command::Defaults => {
            print!("{}", ScenarioConfig::default().to_toml());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
