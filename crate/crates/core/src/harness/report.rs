use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{write_atomic, RunRecord};
use crate::error::{Error, Result};
use crate::evaluation::{mean_std, MetricKind, Results, TransferMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub out_dir: PathBuf,
    /// Method whose mean wall time normalizes runtimes.
    pub reference: String,
    /// Explicit reference time in seconds; overrides `reference`.
    pub reference_runtime: Option<f64>,
    pub min_runtime: Option<f64>,
    pub max_runtime: Option<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            out_dir: PathBuf::from("report"),
            reference: "base_method".to_string(),
            reference_runtime: None,
            min_runtime: None,
            max_runtime: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run_id: String,
    pub method: String,
    pub setting: String,
    pub family: String,
    pub metric_kind: MetricKind,
    pub seeds: usize,
    pub final_mean: f64,
    pub final_std: f64,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub online: f64,
    pub wall_time: f64,
    pub normalized_runtime: Option<f64>,
    pub runtime_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PlotRow<'a> {
    method: &'a str,
    setting: &'a str,
    runtime: f64,
    normalized_runtime: Option<f64>,
    online: f64,
    final_performance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub transfer_matrices: Vec<PathBuf>,
    pub comparison: PathBuf,
    pub plot_data: PathBuf,
    pub rows: Vec<ComparisonRow>,
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = v.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean_std(&v).0)
}

/// Element-wise mean of equally shaped matrices.
pub fn mean_matrix(results: &[Results]) -> Result<TransferMatrix> {
    let first = &results
        .first()
        .ok_or_else(|| Error::Report("no successful seeds".into()))?
        .matrix;
    let mut rows = vec![vec![0.0; first.num_tasks()]; first.num_rows()];
    for r in results {
        if r.matrix.num_rows() != first.num_rows() || r.matrix.num_tasks() != first.num_tasks() {
            return Err(Error::Report("seeds disagree on the transfer matrix shape".into()));
        }
        for (acc, row) in rows.iter_mut().zip(&r.matrix.rows) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v / results.len() as f64;
            }
        }
    }
    TransferMatrix::new(first.metric_kind, rows)
}

/// Builds the transfer-matrix, comparison and plot-data CSVs for `run_dirs`.
pub fn report(run_dirs: &[PathBuf], opts: &ReportOptions) -> Result<ReportBundle> {
    if run_dirs.is_empty() {
        return Err(Error::Report("at least one run directory is required".into()));
    }
    let mut loaded: Vec<(RunRecord, Vec<Results>)> = Vec::new();
    for dir in run_dirs {
        let record = RunRecord::load(dir)?;
        let results = record.load_results(dir)?;
        if results.is_empty() {
            return Err(Error::Report(format!("run {} has no successful seeds", record.run_id)));
        }
        loaded.push((record, results));
    }
    let kind = loaded[0].1[0].matrix.metric_kind;
    if loaded.iter().flat_map(|(_, rs)| rs).any(|r| r.matrix.metric_kind != kind) {
        return Err(Error::Report("cannot compare runs with different metric kinds".into()));
    }

    let wall = |rs: &[Results]| mean_std(&rs.iter().map(|r| r.wall_time_seconds).collect::<Vec<_>>()).0;
    let reference = match opts.reference_runtime {
        Some(t) => Some(t),
        None => {
            let times: Vec<f64> = loaded
                .iter()
                .filter(|(rec, _)| rec.config.method.name == opts.reference)
                .map(|(_, rs)| wall(rs))
                .collect();
            (!times.is_empty()).then(|| mean_std(&times).0)
        }
    };

    std::fs::create_dir_all(&opts.out_dir)?;
    let mut transfer_matrices = Vec::new();
    let mut rows = Vec::new();
    for (record, results) in &loaded {
        let mean = mean_matrix(results)?;
        let path = opts.out_dir.join(format!("transfer_{}.csv", record.run_id));
        write_atomic(&path, mean.to_csv()?.as_bytes())?;
        transfer_matrices.push(path);

        let finals: Vec<f64> = results.iter().map(|r| r.scalars.final_performance).collect();
        let (final_mean, final_std) = mean_std(&finals);
        let wall_time = wall(results);
        let runtime_score = match (opts.min_runtime, opts.max_runtime) {
            (Some(lo), Some(hi)) if hi > lo => Some(((hi - wall_time) / (hi - lo)).clamp(0.0, 1.0)),
            _ => None,
        };
        rows.push(ComparisonRow {
            run_id: record.run_id.clone(),
            method: record.config.method.name.clone(),
            setting: record.config.setting.clone(),
            family: record.config.environment.family.name().to_string(),
            metric_kind: kind,
            seeds: results.len(),
            final_mean,
            final_std,
            bwt: mean_opt(results.iter().map(|r| r.scalars.backward_transfer)),
            fwt: mean_opt(results.iter().map(|r| r.scalars.forward_transfer)),
            online: mean_std(&results.iter().map(|r| r.scalars.online_performance).collect::<Vec<_>>()).0,
            wall_time,
            normalized_runtime: reference.filter(|t| *t > 0.0).map(|t| wall_time / t),
            runtime_score,
        });
    }

    let comparison = opts.out_dir.join("comparison.csv");
    write_atomic(&comparison, &to_csv(&rows)?)?;
    let plot: Vec<PlotRow> = rows
        .iter()
        .map(|r| PlotRow {
            method: &r.method,
            setting: &r.setting,
            runtime: r.wall_time,
            normalized_runtime: r.normalized_runtime,
            online: r.online,
            final_performance: r.final_mean,
        })
        .collect();
    let plot_data = opts.out_dir.join("plot_data.csv");
    write_atomic(&plot_data, &to_csv(&plot)?)?;
    Ok(ReportBundle {
        transfer_matrices,
        comparison,
        plot_data,
        rows,
    })
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Report(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Report(e.to_string()))
}

pub fn read_csv(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Report(e.to_string()))?;
    r.records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Report(e.to_string()))
}
