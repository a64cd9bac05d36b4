//! Domain types shared by every other module: datasets, hyperparameters,
//! training state, persisted bundles, and training reports.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// A dense multiview dataset: `n` points observed through `m` views.
///
/// View `j` is an `n x view_dims[j]` matrix whose rows are the per-point
/// feature vectors of that view. Labels are integers; binary training
/// consumes a `{+1, -1}` projection of them, while one-vs-all keeps the
/// original multiclass labels. Prediction-only data may omit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiviewDataset {
    pub n: usize,
    pub m: usize,
    pub view_dims: Vec<usize>,
    pub views: Vec<Array2<f64>>,
    pub labels: Option<Vec<i64>>,
}

impl MultiviewDataset {
    /// Builds a dataset from view matrices and optional labels, deriving the
    /// counts, and rejects it if any structural invariant fails.
    pub fn new(views: Vec<Array2<f64>>, labels: Option<Vec<i64>>) -> Result<Self> {
        let n = views.first().map_or(0, |v| v.nrows());
        let dataset = MultiviewDataset {
            n,
            m: views.len(),
            view_dims: views.iter().map(|v| v.ncols()).collect(),
            views,
            labels,
        };
        let violations = validate(&dataset);
        if violations.is_empty() {
            Ok(dataset)
        } else {
            Err(Error::InvalidDataset { violations })
        }
    }

    /// Smallest per-view feature count; the default intact dimension.
    pub fn min_view_dim(&self) -> usize {
        self.view_dims.iter().copied().min().unwrap_or(0)
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<i64> {
        let mut classes: Vec<i64> = match &self.labels {
            Some(labels) => labels.clone(),
            None => return Vec::new(),
        };
        classes.sort_unstable();
        classes.dedup();
        classes
    }

    /// Labels as `+1.0 / -1.0`, rejecting anything else.
    pub fn binary_labels(&self) -> Result<Vec<f64>> {
        let labels = self.labels.as_ref().ok_or_else(|| Error::InvalidDataset {
            violations: vec!["binary training requires labels".to_string()],
        })?;
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| match y {
                1 => Ok(1.0),
                -1 => Ok(-1.0),
                other => Err(Error::InvalidDataset {
                    violations: vec![format!("label {i} is {other}, expected +1 or -1")],
                }),
            })
            .collect()
    }

    /// Relabels as `+1` for `positive_class`, `-1` otherwise (one-vs-all).
    pub fn one_vs_rest(&self, positive_class: i64) -> Result<MultiviewDataset> {
        let labels = self.labels.as_ref().ok_or_else(|| Error::InvalidDataset {
            violations: vec!["one-vs-all relabeling requires labels".to_string()],
        })?;
        if !labels.contains(&positive_class) {
            return Err(Error::EmptyClass {
                label: positive_class,
            });
        }
        let relabeled = labels
            .iter()
            .map(|&y| if y == positive_class { 1 } else { -1 })
            .collect();
        Ok(MultiviewDataset {
            labels: Some(relabeled),
            ..self.clone()
        })
    }

    /// A new dataset holding the selected rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<MultiviewDataset> {
        for &i in indices {
            if i >= self.n {
                return Err(Error::IndexOutOfRange {
                    axis: "point",
                    index: i,
                    len: self.n,
                });
            }
        }
        let views = self
            .views
            .iter()
            .map(|v| {
                let mut out = Array2::zeros((indices.len(), v.ncols()));
                for (row, &i) in indices.iter().enumerate() {
                    out.row_mut(row).assign(&v.row(i));
                }
                out
            })
            .collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(MultiviewDataset {
            n: indices.len(),
            m: self.m,
            view_dims: self.view_dims.clone(),
            views,
            labels,
        })
    }
}

/// Checks every structural invariant of a dataset and returns one
/// human-readable violation per failure. An empty list means valid.
pub fn validate(dataset: &MultiviewDataset) -> Vec<String> {
    let mut violations = Vec::new();
    if dataset.views.len() != dataset.m {
        violations.push(format!(
            "declared m={} but {} view matrices present",
            dataset.m,
            dataset.views.len()
        ));
    }
    if dataset.view_dims.len() != dataset.m {
        violations.push(format!(
            "declared m={} but view_dims has {} entries",
            dataset.m,
            dataset.view_dims.len()
        ));
    }
    for (j, view) in dataset.views.iter().enumerate() {
        if view.nrows() != dataset.n {
            violations.push(format!(
                "view {j} has {} rows, expected n={}",
                view.nrows(),
                dataset.n
            ));
        }
        if let Some(&dj) = dataset.view_dims.get(j) {
            if view.ncols() != dj {
                violations.push(format!(
                    "view {j} has {} columns, expected view_dims[{j}]={dj}",
                    view.ncols()
                ));
            }
        }
        for ((r, c), &value) in view.indexed_iter() {
            if !value.is_finite() {
                violations.push(format!("view {j} entry ({r}, {c}) is non-finite ({value})"));
            }
        }
    }
    if let Some(labels) = &dataset.labels {
        if labels.len() != dataset.n {
            violations.push(format!(
                "labels has {} entries, expected n={}",
                labels.len(),
                dataset.n
            ));
        }
    }
    violations
}

/// Every knob the training loop consumes.
///
/// `alpha` trades classification loss against reconstruction, `gamma` weighs
/// the squared-l2 regularizers, `c` is the Cauchy scale, `d` the intact
/// dimension, and `max_iters` the outer iteration count. `t_inf` is the
/// descent length used when recovering an intact vector at test time.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub alpha: f64,
    pub gamma: f64,
    pub c: f64,
    pub d: usize,
    pub max_iters: usize,
    pub t_inf: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Hyperparams {
    /// Defaults with the intact dimension set to the smallest view dimension.
    /// Without further assumptions the intact space cannot be shown to carry
    /// more information than the narrowest view, so that is the default.
    pub fn for_view_dims(view_dims: &[usize]) -> Self {
        Hyperparams {
            alpha: 1.0,
            gamma: 0.01,
            c: 1.0,
            d: view_dims.iter().copied().min().unwrap_or(1).max(1),
            max_iters: 100,
            t_inf: 200,
            seed: 0,
            init_scale: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.alpha >= 0.0) {
            problems.push(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.gamma >= 0.0) {
            problems.push(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.c > 0.0) {
            problems.push(format!("c must be > 0, got {}", self.c));
        }
        if self.d == 0 {
            problems.push("d must be >= 1".to_string());
        }
        if self.max_iters == 0 {
            problems.push("max_iters must be >= 1".to_string());
        }
        if self.t_inf == 0 {
            problems.push("t_inf must be >= 1".to_string());
        }
        if !(self.init_scale > 0.0) {
            problems.push(format!("init_scale must be > 0, got {}", self.init_scale));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidHyperparams(problems.join("; ")))
        }
    }
}

/// Training-time variables: intact rows `Z`, per-view transforms `W`, the
/// classifier `omega`, and the frozen hinge indicators `beta`.
///
/// `Z` and `beta` exist only during training; the persisted artifact is
/// [`ModelBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// `n x d`; row `i` is the intact vector of point `i`.
    pub z: Array2<f64>,
    /// `m` matrices, `w[j]` is `view_dims[j] x d`.
    pub w: Vec<Array2<f64>>,
    /// Classifier weights, length `d`.
    pub omega: Array1<f64>,
    /// Hinge indicators, one `0/1` per point.
    pub beta: Vec<u8>,
}

impl ModelState {
    /// Number of points with an active hinge indicator.
    pub fn beta_active_count(&self) -> usize {
        self.beta.iter().filter(|&&b| b == 1).count()
    }
}

/// The deployable artifact of one binary model: the view transforms, the
/// classifier, the hyperparameters it was trained with, and the label this
/// model detects as its positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub w: Vec<Array2<f64>>,
    pub omega: Array1<f64>,
    pub hyperparams: Hyperparams,
    pub class_tag: i64,
}

impl ModelBundle {
    pub fn view_dims(&self) -> Vec<usize> {
        self.w.iter().map(|w| w.nrows()).collect()
    }

    pub fn d(&self) -> usize {
        self.omega.len()
    }
}

/// One decomposed objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveRecord {
    pub reconstruction_term: f64,
    pub classification_term: f64,
    pub regularization_term: f64,
    pub total: f64,
}

/// Per-run observability: the objective decomposition after initialization
/// and after every iteration, plus wall time and the final indicator count.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub objective_trace: Vec<ObjectiveRecord>,
    pub wall_time: f64,
    pub final_beta_active_count: usize,
}
