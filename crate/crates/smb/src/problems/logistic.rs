//! L2-regularized binary logistic regression over a dataset's train split.

use super::dataset::Dataset;
use super::{ClassifierOracle, Split};
use crate::core::{Batch, EvalResult, OracleError, ParamGroups, ParamVector, StochasticOracle};

/// Binary logistic regression: mean cross-entropy over the batch plus
/// `(l2/2)|w|^2`, single parameter group `w` of the feature dimension (no
/// intercept).
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    data: Dataset,
    l2: f64,
}

/// Numerically stable `log(1 + exp(z))`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticProblem {
    pub fn new(data: Dataset, l2: f64) -> Result<Self, OracleError> {
        if data.n_classes() != 2 {
            return Err(OracleError::ShapeMismatch {
                detail: format!(
                    "logistic regression needs 2 classes, dataset has {}",
                    data.n_classes()
                ),
            });
        }
        assert!(l2 >= 0.0, "l2 must be non-negative");
        Ok(Self { data, l2 })
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    fn weights<'a>(&self, x: &'a ParamGroups) -> Result<&'a ParamVector, OracleError> {
        if x.n_groups() != 1 || x.group(0).len() != self.data.dim() {
            return Err(OracleError::ShapeMismatch {
                detail: format!(
                    "expected a single group of length {}, got {} group(s)",
                    self.data.dim(),
                    x.n_groups()
                ),
            });
        }
        Ok(x.group(0))
    }

    fn split_indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => self.data.train_indices(),
            Split::Test => self.data.test_indices(),
        }
    }
}

impl StochasticOracle for LogisticProblem {
    fn name(&self) -> &str {
        "logistic"
    }

    fn dataset_size(&self) -> usize {
        self.data.train_indices().len()
    }

    fn initial_params(&self, _seed: u64) -> ParamGroups {
        ParamGroups::single("w", vec![0.0; self.data.dim()])
    }

    fn eval_batch(&self, x: &ParamGroups, batch: &Batch) -> Result<EvalResult, OracleError> {
        let w = self.weights(x)?;
        let train = self.data.train_indices();
        let d = self.data.dim();
        let m = batch.len().max(1) as f64;

        let mut loss = 0.0;
        let mut grad = vec![0.0; d];
        for &bi in batch.indices() {
            if bi >= train.len() {
                return Err(OracleError::IndexOutOfBounds { index: bi, size: train.len() });
            }
            let row = self.data.feature_row(train[bi]);
            let y = f64::from(self.data.label(train[bi]));
            let z: f64 = row.iter().zip(w.as_slice()).map(|(a, b)| a * b).sum();
            // cross-entropy: log(1 + e^z) - y z
            loss += softplus(z) - y * z;
            let residual = sigmoid(z) - y;
            for (g, &f) in grad.iter_mut().zip(row) {
                *g += residual * f;
            }
        }
        loss /= m;
        for g in &mut grad {
            *g /= m;
        }
        if self.l2 > 0.0 {
            loss += 0.5 * self.l2 * w.norm_sq();
            for (g, &wv) in grad.iter_mut().zip(w.as_slice()) {
                *g += self.l2 * wv;
            }
        }
        Ok(EvalResult { loss, grads: vec![ParamVector::new(grad)] })
    }
}

impl ClassifierOracle for LogisticProblem {
    fn accuracy(&self, x: &ParamGroups, split: Split) -> Result<f64, OracleError> {
        let w = self.weights(x)?;
        let indices = self.split_indices(split);
        if indices.is_empty() {
            return Err(OracleError::EmptySplit);
        }
        let mut correct = 0usize;
        for &i in indices {
            let z: f64 = self.data.feature_row(i).iter().zip(w.as_slice()).map(|(a, b)| a * b).sum();
            // Tie at z = 0 predicts the lowest class index.
            let pred = u32::from(z > 0.0);
            if pred == self.data.label(i) {
                correct += 1;
            }
        }
        Ok(correct as f64 / indices.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::evaluate;
    use crate::problems::dataset::Normalization;
    use crate::problems::synth::synth_logistic_dataset;

    fn one_sample_problem() -> LogisticProblem {
        // Two samples so the stride split leaves one in train; we evaluate
        // explicit batches anyway.
        let data = Dataset::new(
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1, 1],
            2,
            vec![0],
            vec![1],
            Normalization::None,
        )
        .unwrap();
        LogisticProblem::new(data, 0.0).unwrap()
    }

    #[test]
    fn zero_weights_give_log_two_loss() {
        let p = one_sample_problem();
        let x = p.initial_params(0);
        let batch = Batch::from_indices(vec![0], 0);
        let r = evaluate(&p, &x, &batch).unwrap();
        assert!((r.loss - 2.0f64.ln()).abs() < 1e-15);
        assert!((r.grads[0][0] - (-0.5)).abs() < 1e-15);
        assert_eq!(r.grads[0][1], 0.0);
    }

    #[test]
    fn saturated_positive_margin_drives_loss_to_zero() {
        let p = one_sample_problem();
        let x = ParamGroups::single("w", vec![40.0, 0.0]);
        let batch = Batch::from_indices(vec![0], 0);
        let r = evaluate(&p, &x, &batch).unwrap();
        assert!(r.loss < 1e-15, "loss {} should vanish", r.loss);
    }

    #[test]
    fn l2_term_shifts_loss_and_gradient() {
        let data = synth_logistic_dataset(20, 5, 3, 2.0, 4);
        let p = LogisticProblem::new(data.clone(), 0.5).unwrap();
        let p0 = LogisticProblem::new(data, 0.0).unwrap();
        let x = ParamGroups::single("w", vec![1.0, -2.0, 0.5]);
        let batch = Batch::from_indices((0..20).collect(), 0);
        let with = evaluate(&p, &x, &batch).unwrap();
        let without = evaluate(&p0, &x, &batch).unwrap();
        let norm_sq = 1.0 + 4.0 + 0.25;
        assert!((with.loss - without.loss - 0.25 * norm_sq).abs() < 1e-12);
        assert!((with.grads[0][0] - without.grads[0][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_predict_class_zero_everywhere() {
        let data = synth_logistic_dataset(40, 10, 4, 2.0, 6);
        let class0_test = data
            .test_indices()
            .iter()
            .filter(|&&i| data.label(i) == 0)
            .count() as f64
            / data.test_indices().len() as f64;
        let p = LogisticProblem::new(data, 0.0).unwrap();
        let x = p.initial_params(0);
        let acc = p.accuracy(&x, Split::Test).unwrap();
        assert_eq!(acc, class0_test);
    }

    #[test]
    fn empty_split_is_an_error() {
        let data = Dataset::new(
            vec![1.0, 0.0],
            vec![1],
            2,
            vec![0],
            vec![],
            Normalization::None,
        )
        .unwrap();
        let p = LogisticProblem::new(data, 0.0).unwrap();
        let x = p.initial_params(0);
        assert!(matches!(p.accuracy(&x, Split::Test), Err(OracleError::EmptySplit)));
    }
}
