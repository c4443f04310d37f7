//! Small dense-matrix helpers backing the verification oracles: a row-major
//! square matrix type and a cyclic Jacobi eigensolver for symmetric matrices.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {deviation}")]
    NotSymmetric { i: usize, j: usize, deviation: f64 },
    #[error("Jacobi sweep cap ({sweeps}) reached with off-diagonal mass {off}")]
    NoConvergence { sweeps: usize, off: f64 },
    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "rows of a square matrix must have length {dim}");
            m.data[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    /// `self += scale * u * v^T`.
    pub fn add_outer(&mut self, scale: f64, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.dim);
        debug_assert_eq!(v.len(), self.dim);
        for (i, ui) in u.iter().enumerate() {
            let row = &mut self.data[i * self.dim..(i + 1) * self.dim];
            let a = scale * ui;
            for (r, vj) in row.iter_mut().zip(v) {
                *r += a * vj;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        self.data
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimensionMismatch {
                detail: format!("{} vs {}", self.dim, other.dim),
            });
        }
        let n = self.dim;
        let mut out = DenseMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|` with its location.
    pub fn max_asymmetry(&self) -> (usize, usize, f64) {
        let mut worst = (0, 0, 0.0f64);
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let dev = (self.get(i, j) - self.get(j, i)).abs();
                if dev > worst.2 {
                    worst = (i, j, dev);
                }
            }
        }
        worst
    }

    /// Symmetry check relative to the matrix scale.
    pub fn symmetric_within(&self, rel_tol: f64) -> Result<(), LinalgError> {
        let scale = self.frobenius_norm().max(1.0);
        let (i, j, dev) = self.max_asymmetry();
        if dev > rel_tol * scale {
            return Err(LinalgError::NotSymmetric { i, j, deviation: dev });
        }
        Ok(())
    }

    /// Largest absolute entry deviation from the identity matrix.
    pub fn max_identity_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.get(i, j) - target).abs());
            }
        }
        worst
    }
}

/// Off-diagonal convergence threshold, relative to the Frobenius norm.
pub const JACOBI_OFF_TOL: f64 = 1e-10;
/// Sweep cap; cyclic Jacobi on matrices up to dim 512 converges far earlier.
pub const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// ascending.
///
/// Sweeps annihilate every off-diagonal pair in turn until the off-diagonal
/// Frobenius mass drops below `JACOBI_OFF_TOL` relative to the matrix norm.
pub fn jacobi_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>, LinalgError> {
    m.symmetric_within(1e-12)?;
    let n = m.dim;
    let mut a = m.data.clone();
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[i * n + j] * a[i * n + j];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut sweeps = 0;
    while off(&a) > JACOBI_OFF_TOL * scale {
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps, off: off(&a) });
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Rotate rows/columns p and q.
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
        sweeps += 1;
    }

    let mut eigs: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(eigs)
}
