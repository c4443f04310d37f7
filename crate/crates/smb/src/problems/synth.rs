//! Deterministic synthetic datasets: a multi-class image-classification task
//! (class-prototype blobs on a pixel grid with per-sample jitter) and a
//! binary logistic-regression task. Both are pure functions of their seeds,
//! so every run and test can regenerate identical data.

use super::dataset::{Dataset, Normalization};
use crate::core::{seeded_rng, PROBLEM_STREAM};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Parameters of the synthetic image-classification dataset.
#[derive(Debug, Clone, Copy)]
pub struct SynthImageConfig {
    /// Side of the square pixel grid; feature dimension is `grid * grid`.
    pub grid: usize,
    pub classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Per-pixel Gaussian noise added to each sample.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthImageConfig {
    fn default() -> Self {
        Self { grid: 28, classes: 10, n_train: 10_000, n_test: 2_000, noise: 0.35, seed: 7 }
    }
}

impl SynthImageConfig {
    pub fn dim(&self) -> usize {
        self.grid * self.grid
    }
}

/// Generates the image dataset: each class has a fixed prototype built from a
/// few Gaussian bumps on the grid; samples are amplitude-jittered, noisy
/// copies clipped to [0, 1]. Classes are balanced, labels cycle round-robin.
pub fn synth_image_dataset(cfg: &SynthImageConfig) -> Dataset {
    assert!(cfg.grid >= 2 && cfg.classes >= 2);
    assert!(cfg.n_train >= cfg.classes && cfg.n_test >= 1);
    let d = cfg.dim();
    let mut rng = seeded_rng(cfg.seed, PROBLEM_STREAM, 0);
    let noise = Normal::new(0.0, cfg.noise).expect("valid noise sigma");

    // Class prototypes: sums of random Gaussian bumps, peak-normalized.
    let bumps_per_class = 6;
    let mut prototypes = vec![vec![0.0f64; d]; cfg.classes];
    for proto in prototypes.iter_mut() {
        for _ in 0..bumps_per_class {
            let cx = rng.gen_range(0.0..cfg.grid as f64);
            let cy = rng.gen_range(0.0..cfg.grid as f64);
            let radius = rng.gen_range(cfg.grid as f64 / 10.0..cfg.grid as f64 / 4.0);
            let amp = rng.gen_range(0.4..1.0);
            for row in 0..cfg.grid {
                for col in 0..cfg.grid {
                    let dr = row as f64 - cy;
                    let dc = col as f64 - cx;
                    proto[row * cfg.grid + col] +=
                        amp * (-(dr * dr + dc * dc) / (2.0 * radius * radius)).exp();
                }
            }
        }
        let peak = proto.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
        for v in proto.iter_mut() {
            *v /= peak;
        }
    }

    let n = cfg.n_train + cfg.n_test;
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % cfg.classes;
        labels.push(class as u32);
        let amplitude = rng.gen_range(0.6..1.3);
        let proto = &prototypes[class];
        for &p in proto {
            let value: f64 = amplitude * p + noise.sample(&mut rng);
            features.push(value.clamp(0.0, 1.0));
        }
    }

    Dataset::new(
        features,
        labels,
        d,
        (0..cfg.n_train).collect(),
        (cfg.n_train..n).collect(),
        Normalization::PixelScale,
    )
    .expect("synthetic image dataset is consistent by construction")
}

/// Generates a binary logistic-regression dataset: standard-normal features,
/// labels sampled from the logistic model at a hidden weight vector scaled by
/// `margin` (larger margin means cleaner separation).
pub fn synth_logistic_dataset(
    n_train: usize,
    n_test: usize,
    d: usize,
    margin: f64,
    seed: u64,
) -> Dataset {
    assert!(n_train >= 2 && d >= 1);
    let mut rng = seeded_rng(seed, PROBLEM_STREAM, 1);
    let w_true: Vec<f64> = (0..d)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let w_norm = w_true.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);

    let n = n_train + n_test;
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let z = margin * x.iter().zip(&w_true).map(|(a, b)| a * b).sum::<f64>() / w_norm;
        let p = 1.0 / (1.0 + (-z).exp());
        let y = u32::from(rng.gen_range(0.0..1.0) < p);
        features.extend_from_slice(&x);
        labels.push(y);
    }

    Dataset::new(
        features,
        labels,
        d,
        (0..n_train).collect(),
        (n_train..n).collect(),
        Normalization::None,
    )
    .expect("synthetic logistic dataset is consistent by construction")
}
