//! One-hidden-layer ReLU MLP with softmax cross-entropy loss and hand-derived
//! backpropagation. Parameters form four groups (`w1`, `b1`, `w2`, `b2`)
//! mirroring the layer tensors.

use super::dataset::Dataset;
use super::{ClassifierOracle, Split};
use crate::core::{
    seeded_rng, Batch, EvalResult, OracleError, ParamGroups, ParamVector, StochasticOracle,
    INIT_STREAM,
};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct MlpProblem {
    data: Dataset,
    d: usize,
    hidden: usize,
    classes: usize,
}

impl MlpProblem {
    pub fn new(data: Dataset, hidden: usize) -> Result<Self, OracleError> {
        if data.n_classes() < 2 {
            return Err(OracleError::ShapeMismatch {
                detail: "MLP needs at least 2 classes".into(),
            });
        }
        assert!(hidden >= 1, "hidden width must be at least 1");
        let d = data.dim();
        let classes = data.n_classes();
        Ok(Self { data, d, hidden, classes })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn check_shape(&self, x: &ParamGroups) -> Result<(), OracleError> {
        let expected = [
            self.hidden * self.d,
            self.hidden,
            self.classes * self.hidden,
            self.classes,
        ];
        let ok = x.n_groups() == 4
            && x.groups().iter().zip(expected).all(|(g, e)| g.len() == e);
        if !ok {
            return Err(OracleError::ShapeMismatch {
                detail: format!(
                    "expected groups w1[{}] b1[{}] w2[{}] b2[{}]",
                    expected[0], expected[1], expected[2], expected[3]
                ),
            });
        }
        Ok(())
    }

    /// Hidden activations and logits for one sample; returns the logits.
    fn forward(&self, x: &ParamGroups, row: &[f64], z1: &mut [f64], a1: &mut [f64], z2: &mut [f64]) {
        let w1 = x.group(0).as_slice();
        let b1 = x.group(1).as_slice();
        let w2 = x.group(2).as_slice();
        let b2 = x.group(3).as_slice();
        for h in 0..self.hidden {
            let wrow = &w1[h * self.d..(h + 1) * self.d];
            let z: f64 = wrow.iter().zip(row).map(|(w, f)| w * f).sum::<f64>() + b1[h];
            z1[h] = z;
            a1[h] = z.max(0.0);
        }
        for c in 0..self.classes {
            let wrow = &w2[c * self.hidden..(c + 1) * self.hidden];
            z2[c] = wrow.iter().zip(a1.iter()).map(|(w, a)| w * a).sum::<f64>() + b2[c];
        }
    }

    fn split_indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => self.data.train_indices(),
            Split::Test => self.data.test_indices(),
        }
    }
}

impl StochasticOracle for MlpProblem {
    fn name(&self) -> &str {
        "mlp"
    }

    fn dataset_size(&self) -> usize {
        self.data.train_indices().len()
    }

    /// Glorot-uniform weights, zero biases.
    fn initial_params(&self, seed: u64) -> ParamGroups {
        let mut rng = seeded_rng(seed, INIT_STREAM, 0);
        let limit1 = (6.0 / (self.d + self.hidden) as f64).sqrt();
        let w1: Vec<f64> = (0..self.hidden * self.d).map(|_| rng.gen_range(-limit1..limit1)).collect();
        let limit2 = (6.0 / (self.hidden + self.classes) as f64).sqrt();
        let w2: Vec<f64> =
            (0..self.classes * self.hidden).map(|_| rng.gen_range(-limit2..limit2)).collect();
        ParamGroups::new(
            vec![
                ParamVector::new(w1),
                ParamVector::zeros(self.hidden),
                ParamVector::new(w2),
                ParamVector::zeros(self.classes),
            ],
            vec!["w1".into(), "b1".into(), "w2".into(), "b2".into()],
        )
    }

    fn eval_batch(&self, x: &ParamGroups, batch: &Batch) -> Result<EvalResult, OracleError> {
        self.check_shape(x)?;
        let train = self.data.train_indices();
        let m = batch.len().max(1) as f64;

        let w2 = x.group(2).as_slice();
        let mut z1 = vec![0.0; self.hidden];
        let mut a1 = vec![0.0; self.hidden];
        let mut z2 = vec![0.0; self.classes];
        let mut probs = vec![0.0; self.classes];
        let mut da1 = vec![0.0; self.hidden];

        let mut loss = 0.0;
        let mut gw1 = vec![0.0; self.hidden * self.d];
        let mut gb1 = vec![0.0; self.hidden];
        let mut gw2 = vec![0.0; self.classes * self.hidden];
        let mut gb2 = vec![0.0; self.classes];

        for &bi in batch.indices() {
            if bi >= train.len() {
                return Err(OracleError::IndexOutOfBounds { index: bi, size: train.len() });
            }
            let sample = train[bi];
            let row = self.data.feature_row(sample);
            let label = self.data.label(sample) as usize;
            self.forward(x, row, &mut z1, &mut a1, &mut z2);

            // Softmax cross-entropy via log-sum-exp.
            let zmax = z2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (p, &z) in probs.iter_mut().zip(z2.iter()) {
                *p = (z - zmax).exp();
                sum += *p;
            }
            loss += zmax + sum.ln() - z2[label];

            // dz2 = softmax - onehot
            for c in 0..self.classes {
                let dz2 = probs[c] / sum - f64::from(c == label);
                gb2[c] += dz2;
                let grow = &mut gw2[c * self.hidden..(c + 1) * self.hidden];
                for (g, &a) in grow.iter_mut().zip(a1.iter()) {
                    *g += dz2 * a;
                }
            }
            // da1 = w2^T dz2, dz1 = da1 * relu'(z1)
            da1.fill(0.0);
            for c in 0..self.classes {
                let dz2 = probs[c] / sum - f64::from(c == label);
                let wrow = &w2[c * self.hidden..(c + 1) * self.hidden];
                for (d, &w) in da1.iter_mut().zip(wrow) {
                    *d += w * dz2;
                }
            }
            for h in 0..self.hidden {
                if z1[h] > 0.0 {
                    let dz1 = da1[h];
                    gb1[h] += dz1;
                    let grow = &mut gw1[h * self.d..(h + 1) * self.d];
                    for (g, &f) in grow.iter_mut().zip(row) {
                        *g += dz1 * f;
                    }
                }
            }
        }

        loss /= m;
        for g in gw1.iter_mut().chain(&mut gb1).chain(&mut gw2).chain(&mut gb2) {
            *g /= m;
        }
        Ok(EvalResult {
            loss,
            grads: vec![
                ParamVector::new(gw1),
                ParamVector::new(gb1),
                ParamVector::new(gw2),
                ParamVector::new(gb2),
            ],
        })
    }
}

impl ClassifierOracle for MlpProblem {
    fn accuracy(&self, x: &ParamGroups, split: Split) -> Result<f64, OracleError> {
        self.check_shape(x)?;
        let indices = self.split_indices(split);
        if indices.is_empty() {
            return Err(OracleError::EmptySplit);
        }
        let mut z1 = vec![0.0; self.hidden];
        let mut a1 = vec![0.0; self.hidden];
        let mut z2 = vec![0.0; self.classes];
        let mut correct = 0usize;
        for &i in indices {
            self.forward(x, self.data.feature_row(i), &mut z1, &mut a1, &mut z2);
            // Strict comparison: ties resolve to the lowest class index.
            let mut best = 0usize;
            for c in 1..self.classes {
                if z2[c] > z2[best] {
                    best = c;
                }
            }
            if best as u32 == self.data.label(i) {
                correct += 1;
            }
        }
        Ok(correct as f64 / indices.len() as f64)
    }
}
