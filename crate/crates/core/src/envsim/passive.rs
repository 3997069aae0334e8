//! Passive (supervised) families: synthetic Gaussian clusters and CSV splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ContextVector;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_CLASSES_PER_TASK: usize = 2;
pub const DEFAULT_INPUT_DIM: usize = 16;
pub const DEFAULT_NOISE_STD: f64 = 0.15;

/// Samples `classes` unit-norm prototypes in `dim` dimensions, flattened
/// row-major into the context values.
pub fn sample_gaussian_task<R: Rng + ?Sized>(rng: &mut R, classes: usize, dim: usize) -> ContextVector {
    let mut values = Vec::with_capacity(classes * dim);
    for _ in 0..classes {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        values.extend(v.into_iter().map(|a| a / norm));
    }
    ContextVector {
        values,
        task_index: None,
    }
}

/// Draws one labeled sample around a uniformly chosen class prototype.
///
/// With `disjoint` set and a known task index `k`, the label is the global
/// class `k * classes + c`; otherwise it is the local class `c`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    context: &ContextVector,
    classes: usize,
    noise_std: f64,
    disjoint: bool,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    if classes == 0 || !context.values.len().is_multiple_of(classes) {
        return Err(Error::Shape(format!(
            "context of length {} does not hold {classes} prototypes",
            context.values.len()
        )));
    }
    let dim = context.values.len() / classes;
    let c = rng.random_range(0..classes);
    let proto = &context.values[c * dim..(c + 1) * dim];
    let x = proto
        .iter()
        .map(|p| {
            let z: f64 = StandardNormal.sample(rng);
            p + noise_std * z
        })
        .collect();
    let label = match (disjoint, context.task_index) {
        (true, Some(k)) => k * classes + c,
        _ => c,
    };
    Ok((x, label))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Reads rows of `label, feat_1, ..., feat_d` (no header).
pub fn load_csv_dataset(path: &Path) -> Result<Dataset> {
    let err = |reason: String| Error::Dataset {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let (mut features, mut labels) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| err(format!("row {i}: {e}")))?;
        let mut fields = record.iter();
        let label = fields
            .next()
            .ok_or_else(|| err(format!("row {i}: empty row")))?
            .parse::<usize>()
            .map_err(|e| err(format!("row {i}: label: {e}")))?;
        let x = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(format!("row {i}: feature: {e}")))?;
        if x.is_empty() {
            return Err(err(format!("row {i}: no features")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(err(format!("row {i}: non-finite feature")));
        }
        if let Some(first) = features.first() {
            let first: &Vec<f64> = first;
            if first.len() != x.len() {
                return Err(err(format!("row {i}: expected {} features, found {}", first.len(), x.len())));
            }
        }
        labels.push(label);
        features.push(x);
    }
    if labels.is_empty() {
        return Err(err("no rows".into()));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(Dataset {
        features,
        labels,
        num_classes,
    })
}

/// Splits into `n_tasks` datasets; task `i` holds classes
/// `[i*K/n, (i+1)*K/n)`. Rows are shuffled deterministically by `seed`.
pub fn split_by_class(dataset: &Dataset, n_tasks: usize, seed: u64) -> Result<Vec<Dataset>> {
    let k = dataset.num_classes;
    if n_tasks == 0 || !k.is_multiple_of(n_tasks) {
        return Err(Error::Config(format!(
            "number of classes K={k} is not divisible by n_tasks={n_tasks}"
        )));
    }
    let per = k / n_tasks;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::stream(seed, "csv-split", 0));
    Ok((0..n_tasks)
        .map(|t| {
            let idx: Vec<usize> = order
                .iter()
                .copied()
                .filter(|&i| dataset.labels[i] / per == t)
                .collect();
            dataset.subset(&idx)
        })
        .collect())
}

/// Per-task train/test rows for the CSV family (80/20 split of each task).
#[derive(Debug, Clone)]
pub struct CsvTasks {
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
    pub num_classes: usize,
    pub classes_per_task: usize,
    pub dim: usize,
}

impl CsvTasks {
    pub fn build(dataset: &Dataset, n_tasks: usize, seed: u64) -> Result<Self> {
        let tasks = split_by_class(dataset, n_tasks, seed)?;
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, t) in tasks.iter().enumerate() {
            if t.len() < 2 {
                return Err(Error::Config(format!("task {i} has fewer than 2 rows")));
            }
            let cut = (t.len() * 4 / 5).clamp(1, t.len() - 1);
            let idx: Vec<usize> = (0..t.len()).collect();
            train.push(t.subset(&idx[..cut]));
            test.push(t.subset(&idx[cut..]));
        }
        Ok(CsvTasks {
            train,
            test,
            num_classes: dataset.num_classes,
            classes_per_task: dataset.num_classes / n_tasks,
            dim: dataset.dim(),
        })
    }

    /// Context of task `t`: its class ids.
    pub fn context(&self, t: usize) -> ContextVector {
        let lo = t * self.classes_per_task;
        ContextVector {
            values: (lo..lo + self.classes_per_task).map(|c| c as f64).collect(),
            task_index: Some(t),
        }
    }

    /// Uniform row draw from task `t`; labels are local unless `disjoint`.
    pub fn sample<R: Rng + ?Sized>(&self, t: usize, held_out: bool, disjoint: bool, rng: &mut R) -> (Vec<f64>, usize) {
        let data = if held_out { &self.test[t] } else { &self.train[t] };
        let i = rng.random_range(0..data.len());
        let label = data.labels[i];
        let label = if disjoint { label } else { label % self.classes_per_task };
        (data.features[i].clone(), label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toy(k: usize, per_class: usize) -> Dataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for c in 0..k {
            for j in 0..per_class {
                features.push(vec![c as f64, j as f64]);
                labels.push(c);
            }
        }
        Dataset { features, labels, num_classes: k }
    }

    #[test]
    fn zero_noise_returns_prototype() {
        let mut rng = rng::stream(0, "t", 0);
        let ctx = sample_gaussian_task(&mut rng, 2, 4);
        let (x, label) = sample_gaussian(&ctx, 2, 0.0, false, &mut rng).unwrap();
        assert_eq!(x, ctx.values[label * 4..label * 4 + 4]);
    }

    #[test]
    fn disjoint_labels_are_offset() {
        // Task 2, two classes per task: local class 1 becomes global label 5.
        let mut rng = rng::stream(0, "t", 0);
        let mut ctx = sample_gaussian_task(&mut rng, 2, 3);
        ctx.task_index = Some(2);
        for _ in 0..50 {
            let (x, label) = sample_gaussian(&ctx, 2, 0.0, true, &mut rng).unwrap();
            assert!(label == 4 || label == 5);
            let local = label - 4;
            assert_eq!(x, ctx.values[local * 3..local * 3 + 3]);
        }
    }

    #[test]
    fn prototypes_are_unit_norm() {
        let ctx = sample_gaussian_task(&mut rng::stream(5, "t", 0), 3, 8);
        for p in ctx.values.chunks(8) {
            let n: f64 = p.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn split_assigns_class_blocks() {
        let d = toy(10, 3);
        let tasks = split_by_class(&d, 5, 1).unwrap();
        let mut classes: Vec<usize> = tasks[3].labels.clone();
        classes.sort();
        classes.dedup();
        assert_eq!(classes, vec![6, 7]);
        assert_eq!(tasks.iter().map(Dataset::len).sum::<usize>(), d.len());
        let mut all: Vec<usize> = tasks.iter().flat_map(|t| t.labels.iter().copied()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_indivisible_classes() {
        let err = split_by_class(&toy(10, 2), 3, 0).unwrap_err();
        assert!(err.to_string().contains("not divisible"));
    }

    #[test]
    fn split_is_deterministic() {
        let d = toy(4, 10);
        assert_eq!(split_by_class(&d, 2, 7).unwrap(), split_by_class(&d, 2, 7).unwrap());
        assert_ne!(split_by_class(&d, 2, 7).unwrap(), split_by_class(&d, 2, 8).unwrap());
    }

    #[test]
    fn csv_loading() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "0, 1.0, 2.0\n1, 3.0, 4.5\n3, 0.0, 0.0").unwrap();
        let d = load_csv_dataset(f.path()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.num_classes, 4);
        assert_eq!(d.features[1], vec![3.0, 4.5]);

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "0, 1.0\nx, 2.0").unwrap();
        assert!(load_csv_dataset(bad.path()).unwrap_err().to_string().contains("row 1"));

        let mut ragged = tempfile::NamedTempFile::new().unwrap();
        writeln!(ragged, "0, 1.0\n1, 2.0, 3.0").unwrap();
        assert!(load_csv_dataset(ragged.path()).is_err());
    }
}
