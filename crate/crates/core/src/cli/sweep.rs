//! Parameter sweeps over profile, UE count, region and repetition.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::channel::InfProfile;
use crate::cli::config::{ScenarioConfig, SweepConfig};
use crate::cli::scenario::{run_scenario, ScenarioError};
use crate::engine::derive_seed;
use crate::metrics::{fmt_num, write_rows, Summary};
use crate::mobility::RegionKind;
use crate::radio::Direction;
use crate::tsn::TrafficClass;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub profile: InfProfile,
    pub n_ues: u32,
    pub region: RegionKind,
    pub repetition: u32,
}

impl Cell {
    /// Directory name, e.g. `InF-SL_10_d2_0`.
    pub fn name(&self) -> String {
        format!("{}_{}_{}_{}", self.profile.label(), self.n_ues, self.region.label(), self.repetition)
    }

    /// Seed of this cell, independent of which other cells run.
    pub fn seed(&self, master_seed: u64) -> u64 {
        derive_seed(
            master_seed,
            &[
                self.profile.label(),
                &self.n_ues.to_string(),
                &self.region.label(),
                &self.repetition.to_string(),
            ],
        )
    }

    pub fn config(&self, base: &ScenarioConfig) -> ScenarioConfig {
        ScenarioConfig {
            profile: self.profile,
            n_ues: self.n_ues,
            region: self.region,
            seed: self.seed(base.seed),
            ..base.clone()
        }
    }
}

#[derive(Debug)]
pub struct CellResult {
    pub cell: Cell,
    pub seed: u64,
    pub outcome: Result<Summary, ScenarioError>,
}

#[derive(Debug)]
pub struct SweepReport {
    /// Sorted by cell name.
    pub cells: Vec<CellResult>,
    pub grid_path: PathBuf,
}

impl SweepReport {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

pub fn cells(cfg: &SweepConfig) -> Vec<Cell> {
    let a = &cfg.axes;
    let mut out = Vec::new();
    for &profile in &a.profiles {
        for &n_ues in &a.ue_counts {
            for &region in &a.regions {
                for repetition in 0..a.repetitions {
                    out.push(Cell {
                        profile,
                        n_ues,
                        region,
                        repetition,
                    });
                }
            }
        }
    }
    out
}

fn grid_header() -> Vec<String> {
    let mut h: Vec<String> = ["cell", "profile", "n_ues", "region", "repetition", "seed", "status", "error"]
        .map(String::from)
        .to_vec();
    for dir in Direction::BOTH {
        h.push(format!("sinr_mean_db_{}", dir.short()));
        h.push(format!("harq_error_rate_{}", dir.short()));
    }
    for dir in Direction::BOTH {
        for class in TrafficClass::ALL {
            for stat in ["delivered", "dropped", "mean_s", "p95_s", "p99_s"] {
                h.push(format!("{}_{}_{stat}", class.label(), dir.short()));
            }
        }
    }
    h
}

fn grid_row(r: &CellResult) -> Vec<String> {
    let c = &r.cell;
    let mut row = vec![
        c.name(),
        c.profile.label().to_owned(),
        c.n_ues.to_string(),
        c.region.label(),
        c.repetition.to_string(),
        r.seed.to_string(),
    ];
    let summary = match &r.outcome {
        Ok(s) => {
            row.extend(["ok".to_owned(), String::new()]);
            s
        }
        Err(e) => {
            row.extend(["failed".to_owned(), e.to_string()]);
            row.resize(grid_header().len(), String::new());
            return row;
        }
    };
    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
    for dir in Direction::BOTH {
        row.push(opt(summary.sinr_mean(dir)));
        row.push(opt(summary.harq_error_rate(dir)));
    }
    for dir in Direction::BOTH {
        for class in TrafficClass::ALL {
            let cell = summary.delay.get(&(class, dir));
            let stats = cell.and_then(|c| c.stats.as_ref());
            row.push(cell.map_or(0, |c| c.delivered).to_string());
            row.push(cell.map_or(0, |c| c.dropped).to_string());
            row.push(opt(stats.map(|s| s.mean)));
            row.push(opt(stats.map(|s| s.p95)));
            row.push(opt(stats.map(|s| s.p99)));
        }
    }
    row
}

/// Runs every cell on `jobs` worker threads (0 = one per core). Each cell
/// writes into `out_root/<cell name>/`; `grid.csv` collects one row per cell.
/// A failing cell is recorded and does not stop the others.
pub fn run_sweep(cfg: &SweepConfig, out_root: &Path, jobs: usize) -> Result<SweepReport, ScenarioError> {
    cfg.validate()?;
    fs::create_dir_all(out_root).map_err(|source| ScenarioError::Io {
        path: out_root.to_owned(),
        source,
    })?;
    let mut cells = cells(cfg);
    cells.sort_by_key(Cell::name);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .into_par_iter()
            .map(|cell| {
                let scenario = cell.config(&cfg.base);
                let outcome = run_scenario(&scenario, &out_root.join(cell.name()));
                CellResult {
                    seed: scenario.seed,
                    cell,
                    outcome,
                }
            })
            .collect()
    });
    let grid_path = out_root.join("grid.csv");
    write_rows(&grid_path, &grid_header().iter().map(String::as_str).collect::<Vec<_>>(), results.iter().map(grid_row))?;
    Ok(SweepReport {
        cells: results,
        grid_path,
    })
}
