//! Stochastic model-building optimizers.
//!
//! This crate implements the SMB optimizer and its independent-batch variant
//! SMBi. Both start from a plain stochastic gradient trial step
//! `s^t = -alpha * g` and test it with a stochastic Armijo condition. When the
//! trial step fails the test, the step is replaced by the minimizer of a local
//! quadratic model built from the two points `(x, g)` and `(x + s^t, g^t)`,
//! computed in closed form per parameter group. The replacement step equals
//! `-alpha * H * g` for a symmetric positive definite scaling matrix `H` with
//! eigenvalues in `(0, eta]`, so the model step both shortens and re-aims the
//! trial step.
//!
//! The crate ships:
//!
//! - [`core`]: parameter containers, the stochastic-oracle contract, and
//!   deterministic counter-based mini-batch sampling;
//! - [`model_step`]: the closed-form step coefficients, the diagnostic
//!   quadratic model, and dense `H`/`B` matrices used as verification oracles;
//! - [`optimizer`]: SMB, SMBi, and SGD/Adam baselines over the oracle
//!   contract, plus the epoch runner;
//! - [`schedule`]: constant, diminishing, and model-step-driven automatic
//!   stepsize schedules, plus the theory-bound calculators;
//! - [`problems`]: built-in quadratic, logistic-regression, and MLP problems,
//!   synthetic dataset generators, IDX/CSV/libsvm ingestion, and a
//!   finite-difference gradient checker;
//! - [`verify`]: the randomized property battery that cross-checks the
//!   linear-time step path against the dense matrix formulas.
//!
//! # Example
//!
//! Minimize a rotated quadratic with SMB and inspect the per-epoch records:
//!
//! ```
//! use smb::optimizer::{run_epochs, OptimizerConfig, Variant};
//! use smb::problems::QuadraticProblem;
//!
//! let problem = QuadraticProblem::from_spectrum(&[1.0, 4.0, 10.0], true, 64, 0.3, 7);
//! let mut config = OptimizerConfig::new(Variant::Smb, 0.1);
//! config.batch_size = 16;
//!
//! let records = run_epochs(&problem, &config, 5, None, 42).unwrap();
//! assert_eq!(records.len(), 5);
//! assert!(records.last().unwrap().train_loss < records[0].train_loss);
//! assert!(!records.last().unwrap().diverged);
//! ```

pub mod core;
pub mod linalg;
pub mod model_step;
pub mod optimizer;
pub mod problems;
pub mod schedule;
pub mod verify;

pub use crate::core::{
    evaluate, sample_batch, Batch, BatchSampler, EvalResult, OracleError, ParamGroups,
    ParamVector, SampleError, StochasticOracle, INDEPENDENT_STREAM, INIT_STREAM,
    PRIMARY_STREAM, PROBLEM_STREAM,
};
pub use crate::optimizer::{
    adam_step, armijo_holds, run_epochs, sgd_step, smb_step, smbi_step, OptimizerConfig,
    OptimizerState, RunError, RunRecord, StepKind, StepOutcome, Variant,
};
pub use crate::schedule::{ScheduleDescriptor, ScheduleKind};
