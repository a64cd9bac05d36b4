//! Test-time intact recovery and classification.
//!
//! Training learns a per-point intact vector jointly with the labels, but an
//! unlabeled point has none. Here it is recovered by minimizing the
//! label-free part of the per-point subproblem — reconstruction under the
//! learned transforms plus the l2 term — by the same gradient descent the
//! trainer uses, with the classification weight at zero so nothing
//! label-dependent leaks into the representation. The returned iterate is
//! the best one visited, so the recovered objective value never exceeds the
//! starting one.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::trainer::{ScheduleKind, StepSchedule, DIVERGENCE_FACTOR};

/// How test-time descent starts and how long it runs.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub t_inf: usize,
    pub schedule: StepSchedule,
    pub init: InferenceInit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InferenceInit {
    /// Start at the origin: deterministic without a seed and centered in
    /// the regularizer's ball.
    Zero,
    /// Start from seeded Gaussian entries at the bundle's `init_scale`.
    Gaussian { seed: u64 },
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            t_inf: 200,
            schedule: StepSchedule {
                kind: ScheduleKind::InverseT,
                base: 1.0,
            },
            init: InferenceInit::Zero,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_inf == 0 {
            return Err(Error::InvalidConfig("t_inf must be >= 1".to_string()));
        }
        self.schedule.validate()
    }
}

fn check_views(x_views: &[Array1<f64>], bundle: &ModelBundle) -> Result<()> {
    if x_views.len() != bundle.w.len() {
        return Err(Error::shape(
            "inference: view count",
            format!("{}", bundle.w.len()),
            format!("{}", x_views.len()),
        ));
    }
    for (j, (x, w)) in x_views.iter().zip(&bundle.w).enumerate() {
        if x.len() != w.nrows() {
            return Err(Error::shape(
                format!("inference: view {j}"),
                format!("{}", w.nrows()),
                format!("{}", x.len()),
            ));
        }
    }
    Ok(())
}

/// The label-free objective `q(z) = sum_j log(1 + ||x^j - W_j z||^2/c^2)
/// + gamma ||z||^2` under a bundle's transforms and hyperparameters.
pub fn intact_objective(x_views: &[Array1<f64>], bundle: &ModelBundle, z: &Array1<f64>) -> f64 {
    let hp = &bundle.hyperparams;
    let mut q = hp.gamma * z.dot(z);
    for (x, w) in x_views.iter().zip(&bundle.w) {
        let r = x - &w.dot(z);
        q += (r.dot(&r) / (hp.c * hp.c)).ln_1p();
    }
    q
}

fn intact_gradient(x_views: &[Array1<f64>], bundle: &ModelBundle, z: &Array1<f64>) -> Array1<f64> {
    let hp = &bundle.hyperparams;
    let mut grad = z * (2.0 * hp.gamma);
    for (x, w) in x_views.iter().zip(&bundle.w) {
        let r = x - &w.dot(z);
        let denom = hp.c * hp.c + r.dot(&r);
        grad.scaled_add(-2.0 / denom, &w.t().dot(&r));
    }
    grad
}

/// Recovers an intact vector for one unlabeled point by descending
/// `intact_objective` for `cfg.t_inf` steps and returning the best iterate
/// visited (including the start, so descent can never regress).
///
/// The effective step base is capped at `1/(2 gamma)`: the regularizer
/// contributes curvature `2 gamma`, and any larger step multiplies the
/// iterate by a factor beyond -1 each round, which explodes the objective
/// into the divergence guard for strongly regularized bundles before the
/// `1/t` decay can dampen it. The cap is a fixed formula of the bundle's
/// own `gamma`, not a search.
pub fn infer_intact(
    x_views: &[Array1<f64>],
    bundle: &ModelBundle,
    cfg: &InferenceConfig,
) -> Result<Array1<f64>> {
    cfg.validate()?;
    check_views(x_views, bundle)?;
    let d = bundle.d();
    let gamma = bundle.hyperparams.gamma;
    let schedule = StepSchedule {
        kind: cfg.schedule.kind,
        base: if gamma > 0.0 {
            cfg.schedule.base.min(0.5 / gamma)
        } else {
            cfg.schedule.base
        },
    };

    let mut z = match cfg.init {
        InferenceInit::Zero => Array1::zeros(d),
        InferenceInit::Gaussian { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, bundle.hyperparams.init_scale)
                .map_err(|e| Error::InvalidHyperparams(format!("init_scale: {e}")))?;
            Array1::from_shape_fn(d, |_| normal.sample(&mut rng))
        }
    };

    let q_start = intact_objective(x_views, bundle, &z);
    let mut best = z.clone();
    let mut best_q = q_start;

    for t in 1..=cfg.t_inf {
        let mu = schedule.step(t);
        z.scaled_add(-mu, &intact_gradient(x_views, bundle, &z));
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                block: "z (inference)",
                index: 0,
                iteration: t,
            });
        }
        let q = intact_objective(x_views, bundle, &z);
        if q > DIVERGENCE_FACTOR * q_start {
            return Err(Error::Diverged {
                iteration: t,
                total: q,
                initial: q_start,
            });
        }
        if q < best_q {
            best_q = q;
            best.assign(&z);
        }
    }
    Ok(best)
}

/// The linear score `<omega, z>` of the recovered intact vector.
pub fn decision_value(
    x_views: &[Array1<f64>],
    bundle: &ModelBundle,
    cfg: &InferenceConfig,
) -> Result<f64> {
    let z = infer_intact(x_views, bundle, cfg)?;
    Ok(bundle.omega.dot(&z))
}

/// Sign classification; a zero decision value maps to `+1`.
pub fn classify_binary(
    x_views: &[Array1<f64>],
    bundle: &ModelBundle,
    cfg: &InferenceConfig,
) -> Result<i64> {
    Ok(if decision_value(x_views, bundle, cfg)? >= 0.0 {
        1
    } else {
        -1
    })
}

/// One-vs-all prediction: the class tag of the bundle with the largest
/// decision value; exact ties go to the lowest tag.
pub fn classify_multiclass(
    x_views: &[Array1<f64>],
    bundles: &[ModelBundle],
    cfg: &InferenceConfig,
) -> Result<i64> {
    if bundles.is_empty() {
        return Err(Error::InvalidConfig(
            "classify_multiclass needs at least one bundle".to_string(),
        ));
    }
    let mut best: Option<(f64, i64)> = None;
    for bundle in bundles {
        let value = decision_value(x_views, bundle, cfg)?;
        let better = match best {
            None => true,
            Some((best_v, best_tag)) => {
                value > best_v || (value == best_v && bundle.class_tag < best_tag)
            }
        };
        if better {
            best = Some((value, bundle.class_tag));
        }
    }
    Ok(best.expect("nonempty bundle list").1)
}
