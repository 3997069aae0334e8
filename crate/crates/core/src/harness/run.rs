use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evaluation::{apply, mean_std, Results};

pub const SEED_OVERRIDE_VAR: &str = "CL_SEED_OVERRIDE";
pub const RECORD_FILE: &str = "record.json";

/// Seeds from `CL_SEED_OVERRIDE` (comma separated), if set.
pub fn seed_override() -> Result<Option<Vec<u64>>> {
    let Ok(v) = std::env::var(SEED_OVERRIDE_VAR) else {
        return Ok(None);
    };
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| Error::malformed(SEED_OVERRIDE_VAR, format!("`{s}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub seed: u64,
    pub status: SeedStatus,
    /// Results file name, relative to the run directory.
    pub results_file: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(values);
        Some(Aggregate {
            mean,
            std,
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedEntry>,
    /// Metric name to mean and standard deviation over successful seeds.
    pub aggregates: BTreeMap<String, Aggregate>,
    pub framework_version: String,
    pub timestamp: u64,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.seeds.iter().any(|s| s.status == SeedStatus::Failed)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RECORD_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Report(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Loads every successful seed's results from `dir`.
    pub fn load_results(&self, dir: &Path) -> Result<Vec<Results>> {
        self.seeds
            .iter()
            .filter_map(|s| s.results_file.as_ref())
            .map(|f| Results::from_json(&std::fs::read_to_string(dir.join(f))?))
            .collect()
    }

    /// Confirms the stored aggregates match the per-seed results.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let again = aggregate(&self.load_results(dir)?);
        if again != self.aggregates {
            return Err(Error::Report(format!("aggregates of run {} are stale", self.run_id)));
        }
        Ok(())
    }
}

pub fn aggregate(results: &[Results]) -> BTreeMap<String, Aggregate> {
    let mut out = BTreeMap::new();
    let metrics: [(&str, fn(&Results) -> Option<f64>); 5] = [
        ("final_performance", |r| Some(r.scalars.final_performance)),
        ("backward_transfer", |r| r.scalars.backward_transfer),
        ("forward_transfer", |r| r.scalars.forward_transfer),
        ("online_performance", |r| Some(r.scalars.online_performance)),
        ("wall_time_seconds", |r| Some(r.wall_time_seconds)),
    ];
    for (name, f) in metrics {
        let v: Vec<f64> = results.iter().filter_map(f).collect();
        if let Some(a) = Aggregate::of(&v) {
            out.insert(name.to_string(), a);
        }
    }
    out
}

/// Content hash of the config, used as the run directory name.
pub fn run_id(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    hex::encode(&Sha256::digest(&canonical)[..8])
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub record: PathBuf,
    pub seed_files: Vec<PathBuf>,
    pub failed: bool,
}

/// Runs one `apply` per seed, up to `jobs` at a time, and writes the per-seed
/// results and the aggregate record into `<output_dir>/<run_id>/`.
pub fn run(config: &ExperimentConfig, jobs: usize) -> Result<RunOutcome> {
    let registry = config.registry()?;
    let descriptor = config.validate_with(&registry)?;
    let setting = config.setting(&registry)?;
    let id = run_id(config);
    let dir = config.output_dir.join(&id);
    std::fs::create_dir_all(&dir)?;
    let echo = serde_json::to_value(config)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<(SeedEntry, Option<Results>)> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let file = format!("seed_{seed}.json");
                let attempt = apply(&setting, &registry, &descriptor, seed, &config.evaluation).and_then(|mut r| {
                    r.config = echo.clone();
                    let text = serde_json::to_string_pretty(&r)?;
                    write_atomic(&dir.join(&file), text.as_bytes())?;
                    Ok(r)
                });
                match attempt {
                    Ok(r) => (
                        SeedEntry {
                            seed,
                            status: SeedStatus::Ok,
                            results_file: Some(file),
                            error: None,
                        },
                        Some(r),
                    ),
                    Err(e) => (
                        SeedEntry {
                            seed,
                            status: SeedStatus::Failed,
                            results_file: None,
                            error: Some(e.to_string()),
                        },
                        None,
                    ),
                }
            })
            .collect()
    });

    let results: Vec<Results> = outcomes.iter().filter_map(|(_, r)| r.clone()).collect();
    let seeds: Vec<SeedEntry> = outcomes.into_iter().map(|(s, _)| s).collect();
    let record = RunRecord {
        run_id: id,
        config: config.clone(),
        aggregates: aggregate(&results),
        seeds,
        framework_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    let record_path = dir.join(RECORD_FILE);
    write_atomic(&record_path, serde_json::to_string_pretty(&record)?.as_bytes())?;
    Ok(RunOutcome {
        seed_files: record
            .seeds
            .iter()
            .filter_map(|s| s.results_file.as_ref().map(|f| dir.join(f)))
            .collect(),
        failed: record.failed(),
        record: record_path,
        run_dir: dir,
    })
}
