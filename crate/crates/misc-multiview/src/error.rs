use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by training, inference, evaluation, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operands with incompatible dimensions. `context` names the operand pair.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    /// An index outside the valid range for the named axis.
    #[error("{axis} index {index} out of range (valid 0..{len})")]
    IndexOutOfRange {
        axis: &'static str,
        index: usize,
        len: usize,
    },

    /// A dataset that fails one or more structural invariants.
    #[error("invalid dataset:\n{}", violations.join("\n"))]
    InvalidDataset { violations: Vec<String> },

    /// Hyperparameters outside their admissible ranges.
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    /// Invalid configuration (schedules, CV setups, synthetic specs, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A non-finite value appeared while updating the named variable block.
    #[error("non-finite value in {block} update at index {index}, iteration {iteration}")]
    NonFinite {
        block: &'static str,
        index: usize,
        iteration: usize,
    },

    /// Objective exceeded 1000x its initial value; the fixed 1/t schedule has
    /// no line search, so this aborts instead of looping on garbage.
    #[error(
        "objective diverged at iteration {iteration}: total {total:.6e} exceeds \
         1000x initial {initial:.6e}; try a smaller step base"
    )]
    Diverged {
        iteration: usize,
        total: f64,
        initial: f64,
    },

    /// One-vs-all relabeling produced an empty positive class.
    #[error("class {label} has no members in the training set")]
    EmptyClass { label: i64 },

    /// Iteration context wrapped around an inner failure.
    #[error("at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// Fold context wrapped around an inner failure.
    #[error("in fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    /// Sweep-value context wrapped around an inner failure.
    #[error("at sweep value {value}: {source}")]
    AtSweepValue {
        value: f64,
        #[source]
        source: Box<Error>,
    },

    /// Filesystem failure with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed text in a manifest or CSV file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A bundle directory missing files or inconsistent with its manifest.
    #[error("corrupt bundle at {path}: {message}")]
    CorruptBundle { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_fold(self, fold: usize) -> Self {
        Error::InFold {
            fold,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_sweep_value(self, value: f64) -> Self {
        Error::AtSweepValue {
            value,
            source: Box::new(self),
        }
    }
}
