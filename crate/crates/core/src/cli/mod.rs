//! Experiment runner behind the `jumplq` binary.

pub mod config;
pub mod families;
pub mod report;
pub mod suites;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::montecarlo::RatioRow;

pub use config::{load_config, parse_config, Diagnostic, ExperimentConfig, LoadError, SUITES};
pub use suites::CheckRow;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub workers: Option<usize>,
    /// Run only these suites.
    pub suites: Option<Vec<String>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.mc.seed = s;
        }
        if let Some(r) = self.replicas {
            cfg.mc.replicas = r;
        }
        if let Some(w) = self.workers {
            cfg.mc.workers = w;
        }
        if let Some(names) = &self.suites {
            cfg.suites.restrict(names);
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Load(LoadError),
    Invalid(Vec<Diagnostic>),
    Io(std::io::Error),
    /// A suite could not be computed (e.g. optimizer non-convergence).
    Compute(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Load(e) => write!(f, "cannot load config: {e}"),
            CliError::Invalid(d) => {
                writeln!(f, "invalid config:")?;
                for x in d {
                    writeln!(f, "  {x}")?;
                }
                Ok(())
            }
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Compute(e) => write!(f, "computation failed: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    /// 2 for config and I/O problems, 1 for failed computations.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Compute(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub ratios: Vec<RatioRow>,
    pub checks: Vec<CheckRow>,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn exit_code(&self) -> u8 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    outputs: [&'static str; 2],
    passed: bool,
    wall_time_seconds: f64,
}

/// Lists every problem with the config at `path` without running anything.
/// A file that does not parse yields one diagnostic.
pub fn validate_config(path: &Path) -> Result<Vec<Diagnostic>, std::io::Error> {
    match load_config(path) {
        Ok(cfg) => Ok(cfg.validate()),
        Err(LoadError::Syntax(d)) => Ok(vec![d]),
        Err(LoadError::Io(e)) => Err(e),
    }
}

pub fn run_experiment(config_path: &Path, out_dir: &Path, overrides: &Overrides) -> Result<RunOutcome, CliError> {
    let mut cfg = load_config(config_path).map_err(CliError::Load)?;
    overrides.apply(&mut cfg);
    run_config(&cfg, out_dir)
}

/// Runs every enabled suite and writes `ratios.csv`, `checks.csv` and
/// `manifest.json` into `out_dir`.
pub fn run_config(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let diagnostics = cfg.validate();
    if !diagnostics.is_empty() {
        return Err(CliError::Invalid(diagnostics));
    }
    let model = cfg.model.build().map_err(CliError::Invalid)?;
    let grid = cfg.space_grid.build().map_err(|d| CliError::Invalid(vec![d]))?;
    let families: Vec<(String, crate::norms::Integrand)> = cfg
        .families
        .iter()
        .map(|f| (f.name.clone(), f.build(&model, &grid)))
        .collect();
    let pq = cfg.pq_pairs();
    let mut qs: Vec<f64> = pq.iter().map(|x| x.1).collect();
    qs.sort_by(f64::total_cmp);
    qs.dedup();

    let setting = suites::Setting {
        families: &families,
        model: &model,
        grid: &grid,
        mc: &cfg.mc,
        bands: &cfg.bands,
    };
    let mut ratios = Vec::new();
    let mut checks = Vec::new();
    let s = &cfg.suites;
    if s.ratios {
        let (rows, c) = suites::ratios(&setting, &pq, &cfg.optimizer).map_err(CliError::Compute)?;
        ratios = rows;
        checks.extend(c);
    }
    if s.hilbert {
        checks.extend(suites::hilbert(&setting, &s.hilbert_p).map_err(CliError::Compute)?);
    }
    if s.bdg {
        checks.extend(suites::bdg(&setting, &pq).map_err(CliError::Compute)?);
    }
    if s.davis {
        checks.extend(suites::davis(&setting, &qs, s.davis_realizations).map_err(CliError::Compute)?);
    }
    if s.lemma {
        checks.extend(suites::lemma(s.lemma_instances, s.lemma_seed));
    }

    std::fs::create_dir_all(out_dir).map_err(CliError::Io)?;
    report::write_ratios(&out_dir.join("ratios.csv"), &ratios).map_err(CliError::Io)?;
    report::write_checks(&out_dir.join("checks.csv"), &checks).map_err(CliError::Io)?;
    let outcome = RunOutcome {
        ratios,
        checks,
        out_dir: out_dir.to_path_buf(),
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        outputs: ["ratios.csv", "checks.csv"],
        passed: outcome.passed(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.into()))?;
    std::fs::write(out_dir.join("manifest.json"), json + "\n").map_err(CliError::Io)?;
    Ok(outcome)
}
