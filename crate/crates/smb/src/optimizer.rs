//! Training loops: SMB, its independent-batch variant SMBi, and SGD/Adam
//! baselines, all over the stochastic-oracle contract.
//!
//! Every iteration of the SMB family draws one mini-batch, evaluates loss and
//! gradient at the iterate and at the trial point `x - alpha g` on that same
//! batch, and tests the stochastic Armijo condition
//! `f_t <= f - c * alpha * |g|^2` (norm over all groups concatenated). An
//! accepted trial becomes the next iterate; a rejected one is replaced by the
//! per-group closed-form model step. SMBi differs only in the rejected
//! branch: it draws one fresh batch from an independent stream, builds the
//! scaling from that batch's `(g', y')`, and applies it to the original
//! gradient, at the cost of two extra oracle evaluations.

use crate::core::{
    evaluate, grads_norm_sq, BatchSampler, OracleError, ParamGroups, ParamVector, SampleError,
    StochasticOracle, INDEPENDENT_STREAM, PRIMARY_STREAM,
};
use crate::model_step::{
    model_step, scaling_apply, trust_region_holds, GroupStepInputs, ModelStepError,
    ZERO_GRAD_GUARD,
};
use crate::problems::{ClassifierOracle, Split};
use crate::schedule::{stepsize_at, ScheduleDescriptor, ScheduleError, ScheduleKind};
use std::time::Instant;
use thiserror::Error;

/// Loss level beyond which a run is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Sgd,
    Smb,
    Smbi,
    Adam,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Sgd => "sgd",
            Variant::Smb => "smb",
            Variant::Smbi => "smbi",
            Variant::Adam => "adam",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Variant::Sgd),
            "smb" => Ok(Variant::Smb),
            "smbi" => Ok(Variant::Smbi),
            "adam" => Ok(Variant::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd|smb|smbi|adam)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("alpha must be positive and finite, got {value}")]
    Alpha { value: f64 },
    #[error("c must be positive, got {value}")]
    ArmijoC { value: f64 },
    #[error("eta must lie in (0, 1), got {value}")]
    Eta { value: f64 },
    #[error("alpha-max ({alpha_max}) must be at least alpha ({alpha0})")]
    AlphaMax { alpha_max: f64, alpha0: f64 },
    #[error("batch-size must be at least 1")]
    BatchSize,
    #[error("epochs must be at least 1")]
    Epochs,
    #[error("adam parameters out of range (betas in [0,1), eps > 0)")]
    AdamParams,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Hyper-parameters of one run.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub variant: Variant,
    /// Initial stepsize (base stepsize for schedules).
    pub alpha0: f64,
    /// Armijo sufficient-decrease constant.
    pub c: f64,
    /// Model-step contraction factor in (0, 1).
    pub eta: f64,
    /// Stepsize ceiling used by the automatic schedule and the theory bounds.
    pub alpha_max: f64,
    pub batch_size: usize,
    pub schedule: ScheduleDescriptor,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl OptimizerConfig {
    /// Defaults: `c = 0.1`, `eta = 0.8`, `alpha_max = 10 * alpha0`, batch 128,
    /// constant schedule.
    pub fn new(variant: Variant, alpha0: f64) -> Self {
        let alpha_max = 10.0 * alpha0;
        let mut schedule = ScheduleDescriptor::constant();
        schedule.alpha_max = alpha_max;
        Self {
            variant,
            alpha0,
            c: 0.1,
            eta: 0.8,
            alpha_max,
            batch_size: 128,
            schedule,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }

    pub fn with_schedule(mut self, mut schedule: ScheduleDescriptor) -> Self {
        schedule.alpha_max = self.alpha_max;
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(ConfigError::Alpha { value: self.alpha0 });
        }
        if self.c <= 0.0 {
            return Err(ConfigError::ArmijoC { value: self.c });
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(ConfigError::Eta { value: self.eta });
        }
        if self.alpha_max < self.alpha0 {
            return Err(ConfigError::AlphaMax { alpha_max: self.alpha_max, alpha0: self.alpha0 });
        }
        if self.batch_size == 0 {
            return Err(ConfigError::BatchSize);
        }
        if !(self.adam_beta1 >= 0.0
            && self.adam_beta1 < 1.0
            && self.adam_beta2 >= 0.0
            && self.adam_beta2 < 1.0
            && self.adam_eps > 0.0)
        {
            return Err(ConfigError::AdamParams);
        }
        self.schedule.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct AdamBuffers {
    m: Vec<ParamVector>,
    v: Vec<ParamVector>,
    t: u64,
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub x: ParamGroups,
    /// Stepsize in effect for the next iteration.
    pub alpha: f64,
    /// Completed iterations.
    pub iter: u64,
    pub epoch: u64,
    pub model_steps_epoch: u64,
    pub total_steps_epoch: u64,
    /// Oracle evaluations so far (one per loss+gradient call).
    pub oracle_evals: u64,
    primary: BatchSampler,
    independent: BatchSampler,
    adam: Option<AdamBuffers>,
}

impl OptimizerState {
    pub fn new<O: StochasticOracle + ?Sized>(oracle: &O, cfg: &OptimizerConfig, seed: u64) -> Self {
        Self::from_params(oracle.initial_params(seed), cfg, seed)
    }

    pub fn from_params(x: ParamGroups, cfg: &OptimizerConfig, seed: u64) -> Self {
        Self {
            x,
            alpha: cfg.alpha0,
            iter: 0,
            epoch: 0,
            model_steps_epoch: 0,
            total_steps_epoch: 0,
            oracle_evals: 0,
            primary: BatchSampler::new(seed, PRIMARY_STREAM),
            independent: BatchSampler::new(seed, INDEPENDENT_STREAM),
            adam: None,
        }
    }

    /// Batches drawn from the primary stream so far.
    pub fn primary_draws(&self) -> u64 {
        self.primary.counter()
    }

    /// Batches drawn from the independent stream so far.
    pub fn independent_draws(&self) -> u64 {
        self.independent.counter()
    }

    fn reset_epoch_counters(&mut self) {
        self.model_steps_epoch = 0;
        self.total_steps_epoch = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Trial step accepted by the Armijo test; the move was `-alpha * g`.
    ArmijoAccepted,
    /// Trial rejected; closed-form model step applied per group.
    ModelStep,
    /// Gradient below the zero guard in every group; iterate unchanged.
    DegenerateZero,
    /// Unconditional baseline update (SGD/Adam).
    Plain,
}

/// What one optimizer iteration did.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub kind: StepKind,
    pub loss_before: f64,
    /// Loss at the trial point, for the variants that evaluate one.
    pub loss_trial: Option<f64>,
    /// Norm of the applied step, per group.
    pub step_norms: Vec<f64>,
    /// Norm of the trial step `alpha * |g_p|`, per group.
    pub trial_step_norms: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    ModelStep(#[from] ModelStepError),
    #[error("non-finite Armijo inputs: f={f}, f_t={f_t}, alpha={alpha}, |g|^2={grad_sq}")]
    ArmijoInputs { f: f64, f_t: f64, alpha: f64, grad_sq: f64 },
}

/// Stochastic Armijo sufficient-decrease test
/// `f_t <= f - c * alpha * grad_sq_norm`, where `grad_sq_norm` is the squared
/// gradient norm over all parameter groups concatenated.
pub fn armijo_holds(
    f: f64,
    f_t: f64,
    alpha: f64,
    grad_sq_norm: f64,
    c: f64,
) -> Result<bool, StepError> {
    if !(f.is_finite() && f_t.is_finite() && alpha > 0.0 && grad_sq_norm >= 0.0 && c > 0.0) {
        return Err(StepError::ArmijoInputs { f, f_t, alpha, grad_sq: grad_sq_norm });
    }
    Ok(f_t <= f - c * alpha * grad_sq_norm)
}

fn group_guard(x: &ParamVector) -> f64 {
    ZERO_GRAD_GUARD * x.norm().max(1.0)
}

fn all_groups_degenerate(x: &ParamGroups, grads: &[ParamVector]) -> bool {
    x.groups()
        .iter()
        .zip(grads)
        .all(|(xp, gp)| gp.norm() <= group_guard(xp))
}

fn trial_norms(alpha: f64, grads: &[ParamVector]) -> Vec<f64> {
    grads.iter().map(|g| alpha * g.norm()).collect()
}

/// One SMB iteration.
pub fn smb_step<O: StochasticOracle + ?Sized>(
    state: &mut OptimizerState,
    oracle: &O,
    cfg: &OptimizerConfig,
) -> Result<StepOutcome, StepError> {
    let batch = state.primary.next_batch(oracle.dataset_size(), cfg.batch_size)?;
    let at_x = evaluate(oracle, &state.x, &batch)?;
    state.oracle_evals += 1;
    let alpha = state.alpha;
    let trial = state.x.stepped(-alpha, &at_x.grads);
    let at_trial = evaluate(oracle, &trial, &batch)?;
    state.oracle_evals += 1;
    state.iter += 1;
    state.total_steps_epoch += 1;

    let trial_step_norms = trial_norms(alpha, &at_x.grads);
    if all_groups_degenerate(&state.x, &at_x.grads) {
        return Ok(StepOutcome {
            kind: StepKind::DegenerateZero,
            loss_before: at_x.loss,
            loss_trial: Some(at_trial.loss),
            step_norms: vec![0.0; state.x.n_groups()],
            trial_step_norms,
        });
    }

    let grad_sq = grads_norm_sq(&at_x.grads);
    if armijo_holds(at_x.loss, at_trial.loss, alpha, grad_sq, cfg.c)? {
        let step_norms = trial_step_norms.clone();
        state.x = trial;
        return Ok(StepOutcome {
            kind: StepKind::ArmijoAccepted,
            loss_before: at_x.loss,
            loss_trial: Some(at_trial.loss),
            step_norms,
            trial_step_norms,
        });
    }

    state.model_steps_epoch += 1;
    let mut step_norms = Vec::with_capacity(state.x.n_groups());
    for p in 0..state.x.n_groups() {
        let inputs = GroupStepInputs::new(&at_x.grads[p], &at_trial.grads[p], alpha, cfg.eta)?
            .with_param_norm(state.x.group(p).norm());
        let result = model_step(&inputs);
        if !result.degenerate && !trust_region_holds(&result.step, &inputs.trial_step()) {
            log::trace!(
                "trust-region constraint violated in group `{}` at iter {}",
                state.x.names()[p],
                state.iter
            );
        }
        step_norms.push(result.step.norm());
        state.x.group_mut(p).axpy(1.0, &result.step);
    }
    Ok(StepOutcome {
        kind: StepKind::ModelStep,
        loss_before: at_x.loss,
        loss_trial: Some(at_trial.loss),
        step_norms,
        trial_step_norms,
    })
}

/// One SMBi iteration: identical to [`smb_step`] through the Armijo test; on
/// failure the scaling is rebuilt from one fresh batch drawn on the
/// independent stream and applied to the original gradient.
pub fn smbi_step<O: StochasticOracle + ?Sized>(
    state: &mut OptimizerState,
    oracle: &O,
    cfg: &OptimizerConfig,
) -> Result<StepOutcome, StepError> {
    let batch = state.primary.next_batch(oracle.dataset_size(), cfg.batch_size)?;
    let at_x = evaluate(oracle, &state.x, &batch)?;
    state.oracle_evals += 1;
    let alpha = state.alpha;
    let trial = state.x.stepped(-alpha, &at_x.grads);
    let at_trial = evaluate(oracle, &trial, &batch)?;
    state.oracle_evals += 1;
    state.iter += 1;
    state.total_steps_epoch += 1;

    let trial_step_norms = trial_norms(alpha, &at_x.grads);
    if all_groups_degenerate(&state.x, &at_x.grads) {
        return Ok(StepOutcome {
            kind: StepKind::DegenerateZero,
            loss_before: at_x.loss,
            loss_trial: Some(at_trial.loss),
            step_norms: vec![0.0; state.x.n_groups()],
            trial_step_norms,
        });
    }

    let grad_sq = grads_norm_sq(&at_x.grads);
    if armijo_holds(at_x.loss, at_trial.loss, alpha, grad_sq, cfg.c)? {
        let step_norms = trial_step_norms.clone();
        state.x = trial;
        return Ok(StepOutcome {
            kind: StepKind::ArmijoAccepted,
            loss_before: at_x.loss,
            loss_trial: Some(at_trial.loss),
            step_norms,
            trial_step_norms,
        });
    }

    // Fresh batch, shared by all groups; gradients at x and at the trial
    // point this batch itself induces.
    let fresh = state.independent.next_batch(oracle.dataset_size(), cfg.batch_size)?;
    let at_x_fresh = evaluate(oracle, &state.x, &fresh)?;
    state.oracle_evals += 1;
    let trial_fresh = state.x.stepped(-alpha, &at_x_fresh.grads);
    let at_trial_fresh = evaluate(oracle, &trial_fresh, &fresh)?;
    state.oracle_evals += 1;

    state.model_steps_epoch += 1;
    let mut step_norms = Vec::with_capacity(state.x.n_groups());
    for p in 0..state.x.n_groups() {
        let inputs =
            GroupStepInputs::new(&at_x_fresh.grads[p], &at_trial_fresh.grads[p], alpha, cfg.eta)?
                .with_param_norm(state.x.group(p).norm());
        // s_p = -alpha * H'_p * g_p with H' from the fresh batch and g from
        // the primary one.
        let step = match scaling_apply(&inputs, &at_x.grads[p]) {
            Ok(hv) => hv.scaled(-alpha),
            Err(ModelStepError::DegenerateGradient { .. }) => {
                ParamVector::zeros(state.x.group(p).len())
            }
            Err(e) => return Err(e.into()),
        };
        step_norms.push(step.norm());
        state.x.group_mut(p).axpy(1.0, &step);
    }
    Ok(StepOutcome {
        kind: StepKind::ModelStep,
        loss_before: at_x.loss,
        loss_trial: Some(at_trial.loss),
        step_norms,
        trial_step_norms,
    })
}

/// One plain SGD iteration: `x <- x - alpha * g`, one oracle evaluation.
pub fn sgd_step<O: StochasticOracle + ?Sized>(
    state: &mut OptimizerState,
    oracle: &O,
    cfg: &OptimizerConfig,
) -> Result<StepOutcome, StepError> {
    let batch = state.primary.next_batch(oracle.dataset_size(), cfg.batch_size)?;
    let at_x = evaluate(oracle, &state.x, &batch)?;
    state.oracle_evals += 1;
    let alpha = state.alpha;
    state.iter += 1;
    state.total_steps_epoch += 1;
    let trial_step_norms = trial_norms(alpha, &at_x.grads);
    state.x.axpy(-alpha, &at_x.grads);
    Ok(StepOutcome {
        kind: StepKind::Plain,
        loss_before: at_x.loss,
        loss_trial: None,
        step_norms: trial_step_norms.clone(),
        trial_step_norms,
    })
}

/// One Adam iteration with bias correction, one oracle evaluation.
pub fn adam_step<O: StochasticOracle + ?Sized>(
    state: &mut OptimizerState,
    oracle: &O,
    cfg: &OptimizerConfig,
) -> Result<StepOutcome, StepError> {
    let batch = state.primary.next_batch(oracle.dataset_size(), cfg.batch_size)?;
    let at_x = evaluate(oracle, &state.x, &batch)?;
    state.oracle_evals += 1;
    let alpha = state.alpha;
    state.iter += 1;
    state.total_steps_epoch += 1;

    if state.adam.is_none() {
        state.adam = Some(AdamBuffers {
            m: state.x.groups().iter().map(|g| ParamVector::zeros(g.len())).collect(),
            v: state.x.groups().iter().map(|g| ParamVector::zeros(g.len())).collect(),
            t: 0,
        });
    }
    let buffers = state.adam.as_mut().expect("just initialized");
    buffers.t += 1;
    let bc1 = 1.0 - cfg.adam_beta1.powi(buffers.t as i32);
    let bc2 = 1.0 - cfg.adam_beta2.powi(buffers.t as i32);

    let mut step_norms = Vec::with_capacity(state.x.n_groups());
    for p in 0..state.x.n_groups() {
        let g = at_x.grads[p].as_slice();
        let m = buffers.m[p].as_mut_slice();
        let v = buffers.v[p].as_mut_slice();
        let xp = state.x.group_mut(p).as_mut_slice();
        let mut norm_sq = 0.0;
        for j in 0..g.len() {
            m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g[j];
            v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g[j] * g[j];
            let update = alpha * (m[j] / bc1) / ((v[j] / bc2).sqrt() + cfg.adam_eps);
            xp[j] -= update;
            norm_sq += update * update;
        }
        step_norms.push(norm_sq.sqrt());
    }
    Ok(StepOutcome {
        kind: StepKind::Plain,
        loss_before: at_x.loss,
        loss_trial: None,
        step_norms,
        trial_step_norms: trial_norms(alpha, &at_x.grads),
    })
}

/// Dispatches one iteration of the configured variant.
pub fn optimizer_step<O: StochasticOracle + ?Sized>(
    state: &mut OptimizerState,
    oracle: &O,
    cfg: &OptimizerConfig,
) -> Result<StepOutcome, StepError> {
    match cfg.variant {
        Variant::Sgd => sgd_step(state, oracle, cfg),
        Variant::Smb => smb_step(state, oracle, cfg),
        Variant::Smbi => smbi_step(state, oracle, cfg),
        Variant::Adam => adam_step(state, oracle, cfg),
    }
}

/// One per-epoch metrics row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Cumulative iterations completed at the end of the epoch.
    pub iter: u64,
    /// Mean mini-batch loss observed during the epoch.
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    /// Stepsize in effect during the epoch.
    pub alpha: f64,
    /// Fraction of the epoch's iterations that took a model step.
    pub model_step_fraction: f64,
    /// Cumulative oracle evaluations.
    pub oracle_evals: u64,
    /// Seconds elapsed since the start of the run.
    pub wall_time_s: f64,
    pub diverged: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run setup: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sample(SampleError),
    #[error(transparent)]
    Oracle(OracleError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Step(StepError),
}

/// Runs `epochs` epochs of `ceil(N / batch_size)` iterations each.
///
/// Records one [`RunRecord`] per epoch; `test` adds per-epoch test accuracy.
/// A non-finite or `> DIVERGENCE_LOSS` loss ends the run with a final record
/// flagged `diverged` instead of an error, so sweeps can treat divergence as
/// data. The automatic schedule is applied at epoch boundaries.
pub fn run_epochs<O: StochasticOracle + ?Sized>(
    oracle: &O,
    cfg: &OptimizerConfig,
    epochs: usize,
    test: Option<&dyn ClassifierOracle>,
    seed: u64,
) -> Result<Vec<RunRecord>, RunError> {
    cfg.validate()?;
    if epochs == 0 {
        return Err(RunError::Config(ConfigError::Epochs));
    }
    let n = oracle.dataset_size();
    let steps_per_epoch = n.div_ceil(cfg.batch_size.min(n));
    let batch_cfg = OptimizerConfig { batch_size: cfg.batch_size.min(n), ..cfg.clone() };

    let mut state = OptimizerState::new(oracle, cfg, seed);
    let started = Instant::now();
    let mut records = Vec::with_capacity(epochs);

    for epoch in 1..=epochs {
        let mut loss_sum = 0.0;
        let mut diverged_loss = None;
        for _ in 0..steps_per_epoch {
            if batch_cfg.schedule.kind != ScheduleKind::AutoSchedule {
                state.alpha = stepsize_at(&batch_cfg.schedule, batch_cfg.alpha0, state.iter + 1)?;
            }
            match optimizer_step(&mut state, oracle, &batch_cfg) {
                Ok(outcome) => {
                    loss_sum += outcome.loss_before;
                    let trial_bad = outcome
                        .loss_trial
                        .is_some_and(|l| !l.is_finite() || l > DIVERGENCE_LOSS);
                    if outcome.loss_before > DIVERGENCE_LOSS || trial_bad {
                        diverged_loss = Some(outcome.loss_before);
                    }
                }
                Err(StepError::Oracle(
                    OracleError::NonFiniteLoss { .. }
                    | OracleError::NonFiniteGradient { .. }
                    | OracleError::NonFiniteParams { .. },
                )) => {
                    diverged_loss = Some(f64::NAN);
                }
                Err(StepError::Sample(e)) => return Err(RunError::Sample(e)),
                Err(StepError::Oracle(e)) => return Err(RunError::Oracle(e)),
                Err(e) => return Err(RunError::Step(e)),
            }
            if diverged_loss.is_some() {
                break;
            }
        }

        let steps_done = state.total_steps_epoch.max(1);
        let fraction = state.model_steps_epoch as f64 / steps_done as f64;
        let diverged = diverged_loss.is_some();
        let train_loss = match diverged_loss {
            Some(l) => l,
            None => loss_sum / steps_per_epoch as f64,
        };
        let test_accuracy = match (&test, diverged) {
            (Some(t), false) => Some(t.accuracy(&state.x, Split::Test).map_err(RunError::Oracle)?),
            _ => None,
        };
        records.push(RunRecord {
            epoch,
            iter: state.iter,
            train_loss,
            test_accuracy,
            alpha: state.alpha,
            model_step_fraction: fraction,
            oracle_evals: state.oracle_evals,
            wall_time_s: started.elapsed().as_secs_f64(),
            diverged,
        });
        if diverged {
            break;
        }

        if batch_cfg.schedule.kind == ScheduleKind::AutoSchedule {
            state.alpha = crate::schedule::auto_schedule_update(
                state.alpha,
                state.model_steps_epoch,
                state.total_steps_epoch,
                &batch_cfg.schedule,
            );
        }
        state.reset_epoch_counters();
        state.epoch += 1;
    }
    Ok(records)
}
