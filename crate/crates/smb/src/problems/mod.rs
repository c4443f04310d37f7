//! Built-in test problems implementing the stochastic-oracle contract, plus
//! dataset ingestion, synthetic data generators, and a finite-difference
//! gradient checker.

pub mod dataset;
pub mod gradcheck;
pub mod logistic;
pub mod mlp;
pub mod quadratic;
pub mod synth;

pub use dataset::{load_csv, load_idx_dir, load_libsvm, DataError, Dataset, Normalization};
pub use gradcheck::{finite_difference_check, GradCheckReport, GroupCheck, DEFAULT_FD_STEP};
pub use logistic::LogisticProblem;
pub use mlp::MlpProblem;
pub use quadratic::QuadraticProblem;
pub use synth::{synth_image_dataset, synth_logistic_dataset, SynthImageConfig};

use crate::core::{OracleError, ParamGroups, StochasticOracle};

/// Which side of the train/test split to evaluate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Classification problems additionally report argmax accuracy on a split.
///
/// Ties break toward the lowest class index, deterministically.
pub trait ClassifierOracle: StochasticOracle {
    fn accuracy(&self, x: &ParamGroups, split: Split) -> Result<f64, OracleError>;
}
