//! Stepsize schedules and the analytic stepsize bounds the convergence theory
//! needs: the lower bound on the stepsize ceiling `alpha_max`, the largest
//! constant stepsize with a convergence guarantee, and the probability mass
//! function used to select the returned iterate in the randomized-output
//! analysis.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("iteration index must be >= 1, got {k}")]
    IterationIndex { k: u64 },
    #[error("diminishing exponent must lie in (0.5, 1), got {phi}")]
    InvalidPhi { phi: f64 },
    #[error("shrink factor must lie in (0, 1), got {factor}")]
    InvalidShrinkFactor { factor: f64 },
    #[error("trigger fraction must lie in (0, 1), got {fraction}")]
    InvalidTriggerFraction { fraction: f64 },
    #[error("stepsize {alpha} at position {index} produces a non-positive mass term")]
    NonPositiveMass { index: usize, alpha: f64 },
    #[error("empty stepsize sequence")]
    EmptySequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `alpha_k = alpha0` for all k.
    Constant,
    /// `alpha_k = alpha0 * k^(-phi)` with `phi` in (0.5, 1).
    Diminishing,
    /// Epoch-boundary update driven by the fraction of model steps.
    AutoSchedule,
}

/// Schedule parameters. `shrink_factor` and `trigger_fraction` only matter
/// for [`ScheduleKind::AutoSchedule`], `phi` only for
/// [`ScheduleKind::Diminishing`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleDescriptor {
    pub kind: ScheduleKind,
    pub phi: f64,
    pub shrink_factor: f64,
    pub trigger_fraction: f64,
    pub alpha_max: f64,
}

impl ScheduleDescriptor {
    pub fn constant() -> Self {
        Self {
            kind: ScheduleKind::Constant,
            phi: 0.75,
            shrink_factor: 0.9,
            trigger_fraction: 0.05,
            alpha_max: f64::INFINITY,
        }
    }

    pub fn diminishing(phi: f64) -> Self {
        Self { kind: ScheduleKind::Diminishing, phi, ..Self::constant() }
    }

    /// Default automatic schedule: shrink by 0.9 when more than 5% of an
    /// epoch's steps were model steps, otherwise grow by 1/0.9 up to
    /// `alpha_max`.
    pub fn auto(alpha_max: f64) -> Self {
        Self { kind: ScheduleKind::AutoSchedule, alpha_max, ..Self::constant() }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.kind == ScheduleKind::Diminishing && !(self.phi > 0.5 && self.phi < 1.0) {
            return Err(ScheduleError::InvalidPhi { phi: self.phi });
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return Err(ScheduleError::InvalidShrinkFactor { factor: self.shrink_factor });
        }
        if !(self.trigger_fraction > 0.0 && self.trigger_fraction < 1.0) {
            return Err(ScheduleError::InvalidTriggerFraction { fraction: self.trigger_fraction });
        }
        Ok(())
    }
}

/// Stepsize at iteration `k` (1-based).
///
/// For [`ScheduleKind::AutoSchedule`] the schedule holds whatever value the
/// caller passes as `alpha0` (the currently held stepsize); it is mutated only
/// at epoch boundaries through [`auto_schedule_update`].
pub fn stepsize_at(desc: &ScheduleDescriptor, alpha0: f64, k: u64) -> Result<f64, ScheduleError> {
    if k < 1 {
        return Err(ScheduleError::IterationIndex { k });
    }
    Ok(match desc.kind {
        ScheduleKind::Constant | ScheduleKind::AutoSchedule => alpha0,
        ScheduleKind::Diminishing => alpha0 * (k as f64).powf(-desc.phi),
    })
}

/// Epoch-boundary update of the automatic schedule.
///
/// Shrinks the stepsize by `shrink_factor` when model steps made up strictly
/// more than `trigger_fraction` of the epoch's steps; otherwise grows it by
/// `1/shrink_factor`, capped at `alpha_max`.
pub fn auto_schedule_update(
    alpha: f64,
    model_steps: u64,
    total_steps: u64,
    desc: &ScheduleDescriptor,
) -> f64 {
    assert!(total_steps >= 1, "epoch must contain at least one step");
    assert!(alpha > 0.0, "held stepsize must be positive");
    let fraction = model_steps as f64 / total_steps as f64;
    if fraction > desc.trigger_fraction {
        alpha * desc.shrink_factor
    } else {
        (alpha / desc.shrink_factor).min(desc.alpha_max)
    }
}

/// Constants of the smoothness/noise assumptions behind the stepsize bounds.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisConstants {
    /// Gradient Lipschitz constant.
    pub l: f64,
    /// Gradient noise bound (second moment of the stochastic error).
    pub m: f64,
    pub eta: f64,
    pub alpha_max: f64,
}

/// Smallest admissible stepsize ceiling:
/// `alpha_max >= (-1 + sqrt(1 + 16 eta^2)) / (4 L eta)`.
pub fn alpha_max_lower_bound(l: f64, eta: f64) -> f64 {
    assert!(l > 0.0 && eta > 0.0);
    ((1.0 + 16.0 * eta * eta).sqrt() - 1.0) / (4.0 * l * eta)
}

/// Largest constant stepsize with a convergence guarantee:
/// `2 / (L/eta + 2 L^2 alpha_max)`.
pub fn stepsize_cap(consts: &AnalysisConstants) -> f64 {
    2.0 / (consts.l / consts.eta + 2.0 * consts.l * consts.l * consts.alpha_max)
}

/// Probability mass function over iterations for the randomized-output bound.
///
/// Mass of iteration k is `alpha_k / (1/eta + 2 L alpha_max) - alpha_k^2 L/2`,
/// normalized to sum to one. Every stepsize must lie strictly below
/// [`stepsize_cap`], which is exactly the condition for positive mass.
pub fn output_iterate_pmf(
    alphas: &[f64],
    consts: &AnalysisConstants,
) -> Result<Vec<f64>, ScheduleError> {
    if alphas.is_empty() {
        return Err(ScheduleError::EmptySequence);
    }
    let denom = 1.0 / consts.eta + 2.0 * consts.l * consts.alpha_max;
    let masses: Vec<f64> = alphas
        .iter()
        .map(|&a| a / denom - a * a * consts.l / 2.0)
        .collect();
    for (index, (&mass, &alpha)) in masses.iter().zip(alphas).enumerate() {
        if mass <= 0.0 {
            return Err(ScheduleError::NonPositiveMass { index, alpha });
        }
    }
    let total: f64 = masses.iter().sum();
    Ok(masses.into_iter().map(|m| m / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_schedule_ignores_iteration() {
        let desc = ScheduleDescriptor::constant();
        assert_eq!(stepsize_at(&desc, 0.5, 1000).unwrap(), 0.5);
    }

    #[test]
    fn diminishing_schedule_values() {
        let desc = ScheduleDescriptor::diminishing(0.75);
        let v = stepsize_at(&desc, 1.0, 4).unwrap();
        assert!((v - 4.0f64.powf(-0.75)).abs() < 1e-15);
        assert!((v - 0.353_553_390_593_273_8).abs() < 1e-12);
        assert_eq!(stepsize_at(&desc, 1.0, 1).unwrap(), 1.0);
    }

    #[test]
    fn iteration_zero_is_rejected() {
        let desc = ScheduleDescriptor::constant();
        assert_eq!(
            stepsize_at(&desc, 1.0, 0),
            Err(ScheduleError::IterationIndex { k: 0 })
        );
    }

    #[test]
    fn diminishing_requires_phi_in_range() {
        assert!(ScheduleDescriptor::diminishing(0.75).validate().is_ok());
        assert!(ScheduleDescriptor::diminishing(0.5).validate().is_err());
        assert!(ScheduleDescriptor::diminishing(1.0).validate().is_err());
    }

    #[test]
    fn auto_schedule_branches() {
        let desc = ScheduleDescriptor::auto(10.0);
        // 6% > 5%: shrink.
        assert_eq!(auto_schedule_update(1.0, 6, 100, &desc), 0.9);
        // 4% <= 5%: grow.
        assert_eq!(auto_schedule_update(1.0, 4, 100, &desc), 1.0 / 0.9);
        // Growth capped at alpha_max.
        assert_eq!(auto_schedule_update(9.9, 0, 100, &desc), 10.0);
        // Threshold is strict: exactly 5% grows.
        assert_eq!(auto_schedule_update(1.0, 5, 100, &desc), 1.0 / 0.9);
    }

    #[test]
    fn alpha_max_bound_values() {
        let v = alpha_max_lower_bound(1.0, 1.0);
        assert!((v - (17.0f64.sqrt() - 1.0) / 4.0).abs() < 1e-15);
        assert!((v - 0.780_776_406_404_415).abs() < 1e-12);

        let v = alpha_max_lower_bound(1.0, 0.5);
        assert!((v - (5.0f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!((v - 0.618_033_988_749_894_9).abs() < 1e-12);

        // Scales as 1/L.
        assert!(alpha_max_lower_bound(1e9, 0.5) < 1e-8);
        assert!((alpha_max_lower_bound(2.0, 0.5) - v / 2.0).abs() < 1e-15);
    }

    #[test]
    fn stepsize_cap_values() {
        let c = AnalysisConstants { l: 1.0, m: 0.0, eta: 0.5, alpha_max: 1.0 };
        assert_eq!(stepsize_cap(&c), 0.5);
        let c10 = AnalysisConstants { l: 10.0, m: 0.0, eta: 0.5, alpha_max: 1.0 };
        assert!((stepsize_cap(&c10) - 2.0 / 220.0).abs() < 1e-15);
        // Doubling L strictly decreases the cap.
        let c2 = AnalysisConstants { l: 2.0, m: 0.0, eta: 0.5, alpha_max: 1.0 };
        assert!(stepsize_cap(&c2) < stepsize_cap(&c));
    }

    #[test]
    fn pmf_is_uniform_for_constant_stepsizes() {
        let c = AnalysisConstants { l: 1.0, m: 0.0, eta: 0.5, alpha_max: 1.0 };
        let pmf = output_iterate_pmf(&[0.1; 8], &c).unwrap();
        for p in &pmf {
            assert!((p - 0.125).abs() < 1e-15);
        }
        assert_eq!(output_iterate_pmf(&[0.1], &c).unwrap(), vec![1.0]);
    }

    #[test]
    fn pmf_hand_computed_two_step_case() {
        // masses: 0.1/4 - 0.005 = 0.02 and 0.2/4 - 0.02 = 0.03 -> (0.4, 0.6).
        let c = AnalysisConstants { l: 1.0, m: 0.0, eta: 0.5, alpha_max: 1.0 };
        let pmf = output_iterate_pmf(&[0.1, 0.2], &c).unwrap();
        assert!((pmf[0] - 0.4).abs() < 1e-12);
        assert!((pmf[1] - 0.6).abs() < 1e-12);
        let total: f64 = pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pmf_rejects_stepsizes_at_or_above_the_cap() {
        let c = AnalysisConstants { l: 1.0, m: 0.0, eta: 0.5, alpha_max: 1.0 };
        let cap = stepsize_cap(&c);
        assert!(matches!(
            output_iterate_pmf(&[cap], &c),
            Err(ScheduleError::NonPositiveMass { index: 0, .. })
        ));
        assert!(matches!(
            output_iterate_pmf(&[], &c),
            Err(ScheduleError::EmptySequence)
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn auto_schedule_stays_positive_and_capped(
                alpha in 1e-6f64..100.0,
                model_steps in 0u64..1000,
                extra in 0u64..1000,
                alpha_max in 0.1f64..50.0,
            ) {
                let desc = ScheduleDescriptor::auto(alpha_max);
                let total = model_steps + extra + 1;
                let next = auto_schedule_update(alpha.min(alpha_max), model_steps, total, &desc);
                prop_assert!(next > 0.0);
                prop_assert!(next <= alpha_max);
            }

            #[test]
            fn diminishing_is_strictly_decreasing_with_constant_square_scaling(
                alpha0 in 0.01f64..10.0,
                phi in 0.51f64..0.99,
                k in 1u64..10_000,
            ) {
                let desc = ScheduleDescriptor::diminishing(phi);
                let a_k = stepsize_at(&desc, alpha0, k).unwrap();
                let a_next = stepsize_at(&desc, alpha0, k + 1).unwrap();
                prop_assert!(a_next < a_k);
                // alpha_k^2 * k^(2 phi) is the constant alpha0^2.
                let scaled = a_k * a_k * (k as f64).powf(2.0 * phi);
                prop_assert!((scaled - alpha0 * alpha0).abs() <= 1e-9 * alpha0 * alpha0);
            }

            #[test]
            fn pmf_is_a_distribution_for_admissible_sequences(
                l in 0.5f64..10.0,
                eta in 0.2f64..0.9,
                alpha_max in 0.5f64..2.0,
                fracs in prop::collection::vec(0.05f64..0.95, 1..20),
            ) {
                let consts = AnalysisConstants { l, m: 0.0, eta, alpha_max };
                let cap = stepsize_cap(&consts);
                let alphas: Vec<f64> = fracs.iter().map(|f| f * cap).collect();
                let pmf = output_iterate_pmf(&alphas, &consts).unwrap();
                prop_assert!(pmf.iter().all(|&p| p >= 0.0));
                let total: f64 = pmf.iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }
        }
    }
}
