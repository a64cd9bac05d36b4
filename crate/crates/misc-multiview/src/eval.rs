//! The experiment protocol: k-fold cross-validation with one-vs-all
//! training, classification accuracy, and tradeoff-parameter sweeps.

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::inference::{classify_multiclass, InferenceConfig};
use crate::model::{Hyperparams, MultiviewDataset};
use crate::trainer::{train_one_vs_all_for_classes, StepSchedule};

/// Fraction of correctly classified points.
pub fn accuracy(predicted: &[i64], actual: &[i64]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::InvalidConfig(
            "accuracy of empty prediction list is undefined".to_string(),
        ));
    }
    if predicted.len() != actual.len() {
        return Err(Error::shape(
            "accuracy: predicted vs actual",
            format!("{}", actual.len()),
            format!("{}", predicted.len()),
        ));
    }
    let correct = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| p == a)
        .count();
    Ok(correct as f64 / predicted.len() as f64)
}

/// Cross-validation setup. Stratified by default: one-vs-all with rare
/// classes otherwise risks folds whose training side has no positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 10,
            seed: 0,
            stratified: true,
        }
    }
}

/// Splits `0..n` into `k` disjoint folds with sizes differing by at most
/// one. Stratified mode deals each class's shuffled members round-robin
/// through a global fold cursor, which keeps per-class counts within one
/// per fold as well. Deterministic under `cfg.seed`.
pub fn kfold_split(n: usize, cfg: &CvConfig, labels: &[i64]) -> Result<Vec<Vec<usize>>> {
    if cfg.k < 2 {
        return Err(Error::InvalidConfig(format!(
            "fold count must be >= 2, got {}",
            cfg.k
        )));
    }
    if cfg.k > n {
        return Err(Error::InvalidConfig(format!(
            "fold count {} exceeds point count {n}",
            cfg.k
        )));
    }
    if cfg.stratified && labels.len() != n {
        return Err(Error::InvalidConfig(format!(
            "stratified split needs {n} labels, got {}",
            labels.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let groups: Vec<Vec<usize>> = if cfg.stratified {
        let mut classes: Vec<i64> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        classes
            .iter()
            .map(|&cls| {
                (0..n).filter(|&i| labels[i] == cls).collect::<Vec<usize>>()
            })
            .collect()
    } else {
        vec![(0..n).collect()]
    };

    let mut folds = vec![Vec::new(); cfg.k];
    let mut cursor = 0usize;
    for mut group in groups {
        group.shuffle(&mut rng);
        for index in group {
            folds[cursor % cfg.k].push(index);
            cursor += 1;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Per-fold accuracies with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSummary {
    pub per_fold_accuracy: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl CvSummary {
    fn from_accuracies(per_fold_accuracy: Vec<f64>) -> Self {
        let k = per_fold_accuracy.len() as f64;
        let mean = per_fold_accuracy.iter().sum::<f64>() / k;
        let var = per_fold_accuracy
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / k;
        CvSummary {
            per_fold_accuracy,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Each fold in turn: train one-vs-all on the other folds, classify the
/// held-out fold, record its accuracy. Folds run as independent jobs.
pub fn cross_validate(
    dataset: &MultiviewDataset,
    hp: &Hyperparams,
    schedule: &StepSchedule,
    cv: &CvConfig,
    inf: &InferenceConfig,
) -> Result<CvSummary> {
    let labels = dataset.labels.as_ref().ok_or_else(|| Error::InvalidDataset {
        violations: vec!["cross-validation requires labels".to_string()],
    })?;
    let classes = dataset.classes();
    if classes.len() < 2 {
        return Err(Error::InvalidDataset {
            violations: vec![format!(
                "one-vs-all needs at least 2 distinct labels, found {}",
                classes.len()
            )],
        });
    }
    let folds = kfold_split(dataset.n, cv, labels)?;

    let accuracies = exec::try_map_indexed(folds.len(), |f| {
        let run = || -> Result<f64> {
            let test_idx = &folds[f];
            let in_test = {
                let mut mask = vec![false; dataset.n];
                for &i in test_idx {
                    mask[i] = true;
                }
                mask
            };
            let train_idx: Vec<usize> = (0..dataset.n).filter(|&i| !in_test[i]).collect();

            let train_ds = dataset.subset(&train_idx)?;
            let outputs = train_one_vs_all_for_classes(&train_ds, &classes, hp, schedule)?;
            let bundles: Vec<_> = outputs.into_iter().map(|o| o.bundle).collect();

            let predicted: Vec<i64> = exec::try_map_indexed(test_idx.len(), |ti| {
                let i = test_idx[ti];
                let x_views: Vec<Array1<f64>> = dataset
                    .views
                    .iter()
                    .map(|v| v.row(i).to_owned())
                    .collect();
                classify_multiclass(&x_views, &bundles, inf)
            })?;
            let actual: Vec<i64> = test_idx.iter().map(|&i| labels[i]).collect();
            accuracy(&predicted, &actual)
        };
        run().map_err(|e| e.in_fold(f))
    })?;

    Ok(CvSummary::from_accuracies(accuracies))
}

/// Which tradeoff parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Gamma,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepParam::Alpha => write!(f, "alpha"),
            SweepParam::Gamma => write!(f, "gamma"),
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "gamma" => Ok(SweepParam::Gamma),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep parameter {other:?}, expected \"alpha\" or \"gamma\""
            ))),
        }
    }
}

/// The grid for one sensitivity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub base_hp: Hyperparams,
}

/// Canonical sweep grid.
pub const DEFAULT_SWEEP_VALUES: [f64; 5] = [0.1, 1.0, 10.0, 100.0, 1000.0];

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep values must be non-empty".to_string()));
        }
        if let Some(bad) = self.values.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "sweep values must be positive, got {bad}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mean_accuracy: f64,
    pub std: f64,
}

/// Runs `cross_validate` once per grid value, varying only the swept
/// parameter. Rows come back in input order.
pub fn sensitivity_sweep(
    dataset: &MultiviewDataset,
    sweep: &SweepConfig,
    schedule: &StepSchedule,
    cv: &CvConfig,
    inf: &InferenceConfig,
) -> Result<Vec<SweepRow>> {
    sweep.validate()?;
    sweep
        .values
        .iter()
        .map(|&value| {
            let mut hp = sweep.base_hp.clone();
            match sweep.param {
                SweepParam::Alpha => hp.alpha = value,
                SweepParam::Gamma => hp.gamma = value,
            }
            let summary = cross_validate(dataset, &hp, schedule, cv, inf)
                .map_err(|e| e.at_sweep_value(value))?;
            Ok(SweepRow {
                value,
                mean_accuracy: summary.mean,
                std: summary.std,
            })
        })
        .collect()
}
