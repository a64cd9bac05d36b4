//! Supervised multiview learning through a latent intact space.
//!
//! Each data point is assumed to have a single intact feature vector that
//! generates all of its views through per-view linear transforms, and to be
//! linearly classifiable in that intact space. Training jointly learns the
//! intact vectors, the transforms, and a hinge-loss classifier by
//! alternating gradient descent with a diminishing step schedule; the
//! reconstruction error is a Cauchy M-estimator, so single bad views have
//! bounded influence.
//!
//! The crate also carries everything needed to use and test such models:
//! test-time intact recovery and classification ([`inference`]), k-fold
//! cross-validation and tradeoff-parameter sweeps ([`eval`]), dataset and
//! bundle persistence plus a ground-truth synthetic generator ([`data`]),
//! and a finite-difference oracle for every analytic gradient
//! ([`gradcheck`]).
//!
//! Inner loops over points and views are data-parallel via rayon when the
//! `parallel` feature (default) is enabled and plain loops otherwise;
//! results are bit-identical either way.

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod gradients;
pub mod inference;
pub mod losses;
pub mod model;
pub mod trainer;

mod exec;

pub use error::{Error, Result};
pub use model::{Hyperparams, ModelBundle, ModelState, MultiviewDataset, TrainReport};
pub use trainer::{StepSchedule, TrainOutput};
