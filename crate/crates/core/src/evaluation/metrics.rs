use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    MeanEpisodeReturn,
}

/// `rows[i][j]`: performance on task `j` after training phase `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub metric_kind: MetricKind,
    pub rows: Vec<Vec<f64>>,
}

impl TransferMatrix {
    pub fn new(metric_kind: MetricKind, rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Shape("transfer matrix must be a non-empty rectangle".into()));
        }
        Ok(TransferMatrix { metric_kind, rows })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.rows[0].len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    /// CSV with a header row and a leading column of task indices.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row".to_string()];
        header.extend((0..self.num_tasks()).map(|j| j.to_string()));
        w.write_record(&header).map_err(|e| Error::Report(e.to_string()))?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| Error::Report(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn pretty(&self) -> String {
        let mut s = String::new();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:8.3}")).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
        s
    }
}

/// One online-performance window ending at training step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub performance: f64,
}

/// Mean of the last row.
pub fn final_performance(r: &TransferMatrix) -> f64 {
    mean(r.rows.last().expect("non-empty"))
}

/// `mean_{j < T-1} (R[T-1][j] - R[j][j])`; `None` unless `R` is square with
/// at least two tasks.
pub fn backward_transfer(r: &TransferMatrix) -> Option<f64> {
    let t = r.num_tasks();
    if t < 2 || r.num_rows() != t {
        return None;
    }
    let diffs: Vec<f64> = (0..t - 1).map(|j| r.get(t - 1, j) - r.get(j, j)).collect();
    Some(mean(&diffs))
}

/// `mean_{j > 0} (R[j-1][j] - chance[j])`; `None` unless `R` is square with
/// at least two tasks.
pub fn forward_transfer(r: &TransferMatrix, chance: &[f64]) -> Option<f64> {
    let t = r.num_tasks();
    if t < 2 || r.num_rows() != t || chance.len() != t {
        return None;
    }
    let diffs: Vec<f64> = (1..t).map(|j| r.get(j - 1, j) - chance[j]).collect();
    Some(mean(&diffs))
}

/// Time-average of the curve: each point covers the steps since the previous.
pub fn online_performance(curve: &[CurvePoint]) -> Result<f64> {
    let last = curve
        .last()
        .ok_or_else(|| Error::Method("online curve is empty".into()))?;
    if last.step == 0 {
        return Err(Error::Method("online curve spans no steps".into()));
    }
    let mut prev = 0;
    let mut total = 0.0;
    for p in curve {
        total += (p.step - prev) as f64 * p.performance;
        prev = p.step;
    }
    Ok(total / last.step as f64)
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population mean and sample standard deviation (0 for one value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalars {
    pub final_performance: f64,
    pub backward_transfer: Option<f64>,
    pub forward_transfer: Option<f64>,
    pub online_performance: f64,
}

impl Scalars {
    pub fn compute(r: &TransferMatrix, chance: &[f64], curve: &[CurvePoint]) -> Result<Self> {
        Ok(Scalars {
            final_performance: final_performance(r),
            backward_transfer: backward_transfer(r),
            forward_transfer: forward_transfer(r, chance),
            online_performance: online_performance(curve)?,
        })
    }

    pub fn all_finite(&self) -> bool {
        [
            Some(self.final_performance),
            self.backward_transfer,
            self.forward_transfer,
            Some(self.online_performance),
        ]
        .into_iter()
        .flatten()
        .all(f64::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: Vec<Vec<f64>>) -> TransferMatrix {
        TransferMatrix::new(MetricKind::Accuracy, rows).unwrap()
    }

    #[test]
    fn reference_values() {
        assert_eq!(final_performance(&m(vec![vec![1.0]])), 1.0);
        assert!((final_performance(&m(vec![vec![0.0, 0.0], vec![0.8, 0.6]])) - 0.7).abs() < 1e-15);
        assert_eq!(backward_transfer(&m(vec![vec![0.9, 0.5], vec![0.9, 0.9]])), Some(0.0));
        let b = backward_transfer(&m(vec![vec![1.0, 0.5], vec![0.8, 0.9]])).unwrap();
        assert!((b + 0.2).abs() < 1e-12);
        let f = forward_transfer(&m(vec![vec![1.0, 0.75], vec![0.8, 0.9]]), &[0.5, 0.5]).unwrap();
        assert!((f - 0.25).abs() < 1e-12);
        assert_eq!(backward_transfer(&m(vec![vec![1.0]])), None);
        assert_eq!(forward_transfer(&m(vec![vec![1.0]]), &[0.5]), None);
        assert_eq!(backward_transfer(&m(vec![vec![1.0, 0.2]])), None);
    }

    #[test]
    fn online_average() {
        let c = |s, p| CurvePoint { step: s, performance: p };
        assert_eq!(online_performance(&[c(100, 0.5), c(200, 0.5)]).unwrap(), 0.5);
        assert_eq!(online_performance(&[c(100, 0.2), c(200, 0.8)]).unwrap(), 0.5);
        assert!(online_performance(&[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let csv = m(vec![vec![1.0, 0.5], vec![0.25, 0.75]]).to_csv().unwrap();
        assert_eq!(csv, "row,0,1\n0,1,0.5\n1,0.25,0.75\n");
    }
}
