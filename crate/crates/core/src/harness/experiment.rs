use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::{full_decompose, DecompositionReport, RecoveryParams};
use crate::error::{Error, Result};
use crate::rng::substream;

use super::{gen_instance, jennrich_baseline, score, JennrichParams, MatchReport, NoiseKind, NoiseModel};

pub const CSV_HEADER: [&str; 10] = [
    "d", "n", "eps", "noise", "seed", "algo", "recovered", "min_corr2", "mean_corr2", "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pipeline,
    Jennrich,
    Both,
}

impl Algorithm {
    fn expand(self) -> &'static [&'static str] {
        match self {
            Algorithm::Pipeline => &["pipeline"],
            Algorithm::Jennrich => &["jennrich"],
            Algorithm::Both => &["pipeline", "jennrich"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d: Vec<usize>,
    pub n: Vec<usize>,
    pub eps: Vec<f64>,
    pub noise: Vec<NoiseKind>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Both
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOverrides {
    /// Noise bound used when a cell's `eps` is 0.
    #[serde(default = "default_zero_noise_eps")]
    pub zero_noise_eps: f64,
    pub trials_per_round: Option<usize>,
    pub max_trials: Option<usize>,
    pub max_rounds: Option<usize>,
    pub dedup_corr: Option<f64>,
    #[serde(default = "default_margin")]
    pub accept_margin: f64,
}

fn default_zero_noise_eps() -> f64 {
    0.05
}

fn default_margin() -> f64 {
    1.0
}

impl Default for PipelineOverrides {
    fn default() -> Self {
        Self {
            zero_noise_eps: default_zero_noise_eps(),
            trials_per_round: None,
            max_trials: None,
            max_rounds: None,
            dedup_corr: None,
            accept_margin: default_margin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    /// Aggregate CSV, relative to the output directory.
    #[serde(default = "default_csv")]
    pub csv: String,
    /// Record wall-clock times. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
    /// A truth vector counts as recovered at this corr².
    #[serde(default = "default_recover")]
    pub recover_corr2: f64,
    #[serde(default)]
    pub pipeline: PipelineOverrides,
    #[serde(default)]
    pub jennrich: JennrichParams,
}

fn default_csv() -> String {
    "results.csv".into()
}

fn default_recover() -> f64 {
    0.9
}

impl ExperimentConfig {
    /// Parses TOML, reporting the 1-based line of any error.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Config {
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    fn cells(&self) -> Vec<Cell> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &d in &g.d {
            for &n in &g.n {
                if n > d {
                    warn!("skipping n = {n} > d = {d}");
                    continue;
                }
                for &eps in &g.eps {
                    for &noise in &g.noise {
                        for &seed in &g.seeds {
                            for &algo in g.algorithm.expand() {
                                out.push(Cell {
                                    d,
                                    n,
                                    eps,
                                    noise,
                                    seed,
                                    algo,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    d: usize,
    n: usize,
    eps: f64,
    noise: NoiseKind,
    seed: u64,
    algo: &'static str,
}

impl Cell {
    fn file_name(&self) -> String {
        format!(
            "d{}-n{}-eps{}-{}-s{}-{}.json",
            self.d, self.n, self.eps, self.noise, self.seed, self.algo
        )
    }
}

/// Everything recorded for one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub d: usize,
    pub n: usize,
    pub eps: f64,
    pub noise: NoiseKind,
    pub seed: u64,
    pub algo: String,
    pub report: DecompositionReport,
    #[serde(rename = "match")]
    pub matching: MatchReport,
    pub recovered: usize,
    pub wall_ms: u64,
}

fn run_cell(cfg: &ExperimentConfig, cell: &Cell) -> Result<CellReport> {
    let inst = gen_instance(cell.d, cell.n, &NoiseModel::new(cell.noise, cell.eps), cell.seed)?;
    let start = Instant::now();
    let report = match cell.algo {
        "pipeline" => {
            let o = &cfg.pipeline;
            let eps = if cell.eps > 0.0 { cell.eps } else { o.zero_noise_eps };
            let mut p = RecoveryParams::new(eps, cell.seed);
            p.trials_per_round = o.trials_per_round;
            p.max_trials = o.max_trials;
            p.max_rounds = o.max_rounds;
            p.dedup_corr = o.dedup_corr;
            p.accept_margin = o.accept_margin;
            full_decompose(&inst.tensor, &p)?.report()
        }
        _ => {
            let mut rng = substream(cell.seed, 2);
            let found = jennrich_baseline(&inst.tensor, &cfg.jennrich, &mut rng)?;
            DecompositionReport {
                components: found.vectors().to_vec(),
                scores: found.scores().to_vec(),
                rounds: 1,
                trials_used: cfg.jennrich.trials,
                warnings: Vec::new(),
            }
        }
    };
    let wall_ms = if cfg.timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    let recovered_set = crate::decompose::ComponentSet::from_vectors(cell.d, report.components.clone())?;
    let matching = score(&recovered_set, &inst.truth)?;
    Ok(CellReport {
        d: cell.d,
        n: cell.n,
        eps: cell.eps,
        noise: cell.noise,
        seed: cell.seed,
        algo: cell.algo.to_string(),
        recovered: matching.recovered_at(cfg.recover_corr2),
        report,
        matching,
        wall_ms,
    })
}

/// Worker count from `SPECTENSOR_THREADS`, if set to a positive integer.
pub fn worker_threads() -> Option<usize> {
    std::env::var("SPECTENSOR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs every grid cell and writes `cells/<cell>.json` plus the aggregate CSV
/// into `out_dir`. Rows follow grid order regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<CellReport>> {
    if !(cfg.recover_corr2 > 0.0 && cfg.recover_corr2 <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "recover_corr2 must lie in (0, 1], got {}",
            cfg.recover_corr2
        )));
    }
    let cells = cfg.cells();
    info!("running {} cells", cells.len());
    let run = || {
        cells
            .par_iter()
            .map(|c| run_cell(cfg, c))
            .collect::<Result<Vec<CellReport>>>()
    };
    // without the variable, whatever pool the caller configured is used
    let reports = match worker_threads() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParam(format!("cannot start worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let cell_dir = out_dir.join("cells");
    fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
    for (cell, rep) in cells.iter().zip(&reports) {
        let path = cell_dir.join(cell.file_name());
        let json = serde_json::to_string_pretty(rep)?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    }
    let csv_path: PathBuf = out_dir.join(&cfg.csv);
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(CSV_HEADER)?;
    for r in &reports {
        w.write_record([
            r.d.to_string(),
            r.n.to_string(),
            r.eps.to_string(),
            r.noise.to_string(),
            r.seed.to_string(),
            r.algo.clone(),
            r.recovered.to_string(),
            r.matching.min_corr2.to_string(),
            r.matching.mean_corr2.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(reports)
}

pub fn run_experiment_file(config: &Path, out_dir: &Path) -> Result<Vec<CellReport>> {
    run_experiment(&ExperimentConfig::from_file(config)?, out_dir)
}
