//! Quadratic test problem `f(x) = (1/2)(x - x*)^T A (x - x*)` with a known
//! spectrum, exact gradients, and an optional zero-mean stochastic term, so
//! smoothness constants fed to the theory calculators are true values.

use crate::core::{
    seeded_rng, Batch, EvalResult, OracleError, ParamGroups, ParamVector, StochasticOracle,
    PROBLEM_STREAM,
};
use crate::linalg::DenseMatrix;
use rand::Rng;

/// Quadratic problem over a single parameter group.
///
/// Per-sample losses are `f_i(x) = f(x) + p_i . x` where consecutive noise
/// vectors cancel (`p_{2j+1} = -p_{2j}`), so full-batch evaluation reproduces
/// the exact deterministic loss and gradient while mini-batches are unbiased
/// by construction.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    a: DenseMatrix,
    b: Vec<f64>,
    x_star: Vec<f64>,
    const_term: f64,
    x0: Vec<f64>,
    noise: Vec<f64>, // n_samples x dim, row-major
    n_samples: usize,
    dim: usize,
    mu: f64,
    lip: f64,
}

impl QuadraticProblem {
    /// Builds the problem from an eigenvalue spectrum. With `rotate` the
    /// matrix is conjugated by a seeded Householder reflection, otherwise it
    /// stays diagonal. `n_samples` must be even so noise vectors can cancel
    /// pairwise.
    pub fn from_spectrum(
        spectrum: &[f64],
        rotate: bool,
        n_samples: usize,
        noise_scale: f64,
        seed: u64,
    ) -> Self {
        assert!(!spectrum.is_empty(), "spectrum must be non-empty");
        assert!(spectrum.iter().all(|&l| l > 0.0), "spectrum must be positive");
        assert!(n_samples >= 2 && n_samples % 2 == 0, "n_samples must be even and >= 2");
        let dim = spectrum.len();
        let mut rng = seeded_rng(seed, PROBLEM_STREAM, 2);

        let mut a = DenseMatrix::zeros(dim);
        for (i, &l) in spectrum.iter().enumerate() {
            a.set(i, i, l);
        }
        if rotate && dim > 1 {
            // Householder Q = I - 2 v v^T preserves the spectrum.
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter_mut().for_each(|x| *x /= norm);
            let mut q = DenseMatrix::identity(dim);
            q.add_outer(-2.0, &v, &v);
            a = q.matmul(&a).unwrap().matmul(&q).unwrap();
            // Symmetrize away rounding.
            for i in 0..dim {
                for j in (i + 1)..dim {
                    let s = 0.5 * (a.get(i, j) + a.get(j, i));
                    a.set(i, j, s);
                    a.set(j, i, s);
                }
            }
        }

        let x_star: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.matvec(&x_star);
        let const_term = 0.5 * x_star.iter().zip(&b).map(|(x, bx)| x * bx).sum::<f64>();
        let x0: Vec<f64> = x_star.iter().map(|x| x + rng.gen_range(-1.0..1.0)).collect();

        let mut noise = vec![0.0; n_samples * dim];
        if noise_scale > 0.0 {
            for pair in 0..n_samples / 2 {
                for j in 0..dim {
                    let v = rng.gen_range(-noise_scale..noise_scale);
                    noise[(2 * pair) * dim + j] = v;
                    noise[(2 * pair + 1) * dim + j] = -v;
                }
            }
        }

        let mu = spectrum.iter().cloned().fold(f64::INFINITY, f64::min);
        let lip = spectrum.iter().cloned().fold(0.0f64, f64::max);
        Self { a, b, x_star, const_term, x0, noise, n_samples, dim, mu, lip }
    }

    /// Identity Hessian, optimum at the origin, no noise.
    pub fn isotropic(dim: usize, n_samples: usize) -> Self {
        let mut p = Self::from_spectrum(&vec![1.0; dim], false, n_samples, 0.0, 0);
        p.x_star = vec![0.0; dim];
        p.b = vec![0.0; dim];
        p.const_term = 0.0;
        p.x0 = vec![1.0; dim];
        p
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn optimum(&self) -> &[f64] {
        &self.x_star
    }

    /// Largest eigenvalue of `A` (the gradient Lipschitz constant).
    pub fn lipschitz(&self) -> f64 {
        self.lip
    }

    /// Smallest eigenvalue of `A`.
    pub fn strong_convexity(&self) -> f64 {
        self.mu
    }

    fn group(x: &ParamGroups) -> Result<&ParamVector, OracleError> {
        if x.n_groups() != 1 {
            return Err(OracleError::ShapeMismatch {
                detail: format!("quadratic expects 1 group, got {}", x.n_groups()),
            });
        }
        Ok(x.group(0))
    }
}

impl StochasticOracle for QuadraticProblem {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dataset_size(&self) -> usize {
        self.n_samples
    }

    fn initial_params(&self, _seed: u64) -> ParamGroups {
        ParamGroups::single("x", self.x0.clone())
    }

    fn eval_batch(&self, x: &ParamGroups, batch: &Batch) -> Result<EvalResult, OracleError> {
        let xv = Self::group(x)?;
        if xv.len() != self.dim {
            return Err(OracleError::ShapeMismatch {
                detail: format!("expected dim {}, got {}", self.dim, xv.len()),
            });
        }
        let m = batch.len().max(1) as f64;
        let mut mean_noise = vec![0.0; self.dim];
        for &i in batch.indices() {
            if i >= self.n_samples {
                return Err(OracleError::IndexOutOfBounds { index: i, size: self.n_samples });
            }
            let row = &self.noise[i * self.dim..(i + 1) * self.dim];
            for (acc, &v) in mean_noise.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut mean_noise {
            *v /= m;
        }

        let ax = self.a.matvec(xv.as_slice());
        let quad = 0.5 * xv.as_slice().iter().zip(&ax).map(|(x, a)| x * a).sum::<f64>();
        let linear = xv.as_slice().iter().zip(&self.b).map(|(x, b)| x * b).sum::<f64>();
        let noise_dot = xv.as_slice().iter().zip(&mean_noise).map(|(x, p)| x * p).sum::<f64>();
        let loss = quad - linear + self.const_term + noise_dot;

        let grad: Vec<f64> = ax
            .iter()
            .zip(&self.b)
            .zip(&mean_noise)
            .map(|((a, b), p)| a - b + p)
            .collect();
        Ok(EvalResult { loss, grads: vec![ParamVector::new(grad)] })
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.lip)
    }
}
