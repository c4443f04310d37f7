//! Determinism and mean-semantics contracts: identical seeds bit-reproduce
//! runs, full-batch evaluation equals the deterministic empirical mean, and
//! analytic gradients pass finite-difference validation across random
//! (problem, point) pairs.

use smb::core::{evaluate, Batch, ParamGroups, StochasticOracle};
use smb::optimizer::{run_epochs, OptimizerConfig, Variant};
use smb::problems::gradcheck::{finite_difference_check, DEFAULT_FD_STEP};
use smb::problems::synth::{synth_image_dataset, synth_logistic_dataset, SynthImageConfig};
use smb::problems::{LogisticProblem, MlpProblem, QuadraticProblem};

fn tiny_mlp() -> MlpProblem {
    let cfg = SynthImageConfig { grid: 4, classes: 4, n_train: 64, n_test: 16, ..Default::default() };
    MlpProblem::new(synth_image_dataset(&cfg), 8).unwrap()
}

#[test]
fn reruns_bit_reproduce_every_record() {
    let problem = tiny_mlp();
    let mut cfg = OptimizerConfig::new(Variant::Smb, 0.5);
    cfg.batch_size = 16;
    let a = run_epochs(&problem, &cfg, 3, Some(&problem), 42).unwrap();
    let b = run_epochs(&problem, &cfg, 3, Some(&problem), 42).unwrap();
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        // Everything except wall time is a pure function of the seeds.
        assert_eq!(ra.epoch, rb.epoch);
        assert_eq!(ra.iter, rb.iter);
        assert_eq!(ra.train_loss.to_bits(), rb.train_loss.to_bits());
        assert_eq!(ra.test_accuracy, rb.test_accuracy);
        assert_eq!(ra.alpha.to_bits(), rb.alpha.to_bits());
        assert_eq!(ra.model_step_fraction, rb.model_step_fraction);
        assert_eq!(ra.oracle_evals, rb.oracle_evals);
        assert_eq!(ra.diverged, rb.diverged);
    }
}

#[test]
fn full_batch_equals_the_empirical_mean_exactly() {
    // Mean semantics: the full-batch loss equals the sequential mean of
    // per-sample losses, summed in the same index order.
    let problem = tiny_mlp();
    let x = problem.initial_params(9);
    let n = problem.dataset_size();
    let full = Batch::from_indices((0..n).collect(), 0);
    let full_eval = evaluate(&problem, &x, &full).unwrap();

    let mut loss_sum = 0.0;
    let mut grad_sums: Vec<Vec<f64>> =
        x.groups().iter().map(|g| vec![0.0; g.len()]).collect();
    for i in 0..n {
        let single = evaluate(&problem, &x, &Batch::from_indices(vec![i], 0)).unwrap();
        loss_sum += single.loss;
        for (acc, g) in grad_sums.iter_mut().zip(&single.grads) {
            for (a, v) in acc.iter_mut().zip(g.as_slice()) {
                *a += v;
            }
        }
    }
    let mean_loss = loss_sum / n as f64;
    assert_eq!(full_eval.loss.to_bits(), mean_loss.to_bits());
    for (gi, acc) in grad_sums.iter().enumerate() {
        for (j, a) in acc.iter().enumerate() {
            let mean = a / n as f64;
            assert_eq!(
                full_eval.grads[gi][j].to_bits(),
                mean.to_bits(),
                "group {gi} coord {j}"
            );
        }
    }
}

#[test]
fn gradients_match_finite_differences_across_random_pairs() {
    // 100 (problem, point) pairs split across the three built-ins.
    let quad = QuadraticProblem::from_spectrum(&[0.5, 2.0, 7.5], true, 8, 0.4, 21);
    let logi = LogisticProblem::new(synth_logistic_dataset(48, 12, 6, 2.0, 22), 1e-3).unwrap();
    let mlp = tiny_mlp();

    let mut checked = 0;
    for point_seed in 0..34u64 {
        let x = perturbed_point(&quad.initial_params(point_seed), point_seed);
        let batch = smb::sample_batch(point_seed, 0, 0, quad.dataset_size(), 4).unwrap();
        let report = finite_difference_check(&quad, &x, &batch, DEFAULT_FD_STEP).unwrap();
        assert!(report.max_rel_err < 1e-9, "quadratic pair {point_seed}: {}", report.max_rel_err);
        checked += 1;
    }
    for point_seed in 0..33u64 {
        let x = perturbed_point(&logi.initial_params(point_seed), point_seed);
        let batch = smb::sample_batch(point_seed, 0, 1, logi.dataset_size(), 8).unwrap();
        let report = finite_difference_check(&logi, &x, &batch, DEFAULT_FD_STEP).unwrap();
        assert!(report.max_rel_err < 1e-5, "logistic pair {point_seed}: {}", report.max_rel_err);
        checked += 1;
    }
    for point_seed in 0..33u64 {
        let x = perturbed_point(&mlp.initial_params(point_seed), point_seed);
        let batch = smb::sample_batch(point_seed, 0, 2, mlp.dataset_size(), 8).unwrap();
        let report = finite_difference_check(&mlp, &x, &batch, DEFAULT_FD_STEP).unwrap();
        assert!(report.max_rel_err < 1e-5, "mlp pair {point_seed}: {}", report.max_rel_err);
        checked += 1;
    }
    assert_eq!(checked, 100);
}

#[test]
fn mlp_loss_matches_fd_validated_golden_value() {
    // Frozen from a run whose gradient passed finite differences at 5.8e-9.
    let problem = tiny_mlp();
    let x = problem.initial_params(12);
    let batch = smb::sample_batch(12, smb::PRIMARY_STREAM, 0, problem.dataset_size(), 16).unwrap();
    let r = evaluate(&problem, &x, &batch).unwrap();
    assert!((r.loss - 1.400_571_254_162_634_06).abs() < 1e-12, "loss {}", r.loss);
    let fd = finite_difference_check(&problem, &x, &batch, DEFAULT_FD_STEP).unwrap();
    assert!(fd.max_rel_err < 1e-5);
}

/// Deterministic pseudo-random displacement so checks run away from special
/// points like all-zero weights.
fn perturbed_point(x: &ParamGroups, seed: u64) -> ParamGroups {
    let mut out = x.clone();
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    for gi in 0..out.n_groups() {
        for v in out.group_mut(gi).as_mut_slice() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            *v += 0.4 * (u - 0.5);
        }
    }
    out
}

#[test]
fn smb_beats_sgd_at_equal_alpha_on_the_default_logistic_task() {
    let problem = LogisticProblem::new(synth_logistic_dataset(400, 100, 10, 2.5, 17), 1e-3).unwrap();
    let alpha = 2.0;
    let mut smb_cfg = OptimizerConfig::new(Variant::Smb, alpha);
    smb_cfg.batch_size = 32;
    let sgd_cfg = OptimizerConfig { variant: Variant::Sgd, ..smb_cfg.clone() };

    let smb_records = run_epochs(&problem, &smb_cfg, 10, Some(&problem), 5).unwrap();
    let sgd_records = run_epochs(&problem, &sgd_cfg, 10, Some(&problem), 5).unwrap();
    let smb_final = smb_records.last().unwrap().train_loss;
    let sgd_final = sgd_records.last().unwrap().train_loss;
    assert!(
        smb_final <= sgd_final,
        "smb {smb_final} should not lose to sgd {sgd_final} at alpha {alpha}"
    );
}
