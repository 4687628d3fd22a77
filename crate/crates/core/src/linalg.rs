//! Dense symmetric matrices and Cholesky factorization with a diagonal
//! jitter ladder.

use thiserror::Error;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy without row/column `k`.
    pub fn without(&self, k: usize) -> Matrix {
        let n = self.n - 1;
        let mut out = Matrix::zeros(n);
        for (oi, i) in (0..self.n).filter(|&i| i != k).enumerate() {
            for (oj, j) in (0..self.n).filter(|&j| j != k).enumerate() {
                out.data[oi * n + oj] = self.get(i, j);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FactorizationError {
    #[error("matrix is not positive definite (pivot {pivot} is {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("factorization failed at every jitter level up to {largest_jitter:e}; condition estimate {condition_estimate:e}")]
    LadderExhausted {
        largest_jitter: f64,
        condition_estimate: f64,
    },
    #[error("jitter ladder must start at 0 and increase strictly")]
    InvalidLadder,
}

/// Lower-triangular factor L with L·Lᵀ = A + jitter·I.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

/// Default ladder of diagonal jitters, in units of the matrix scale.
pub const DEFAULT_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

impl Cholesky {
    /// Plain factorization of `a + jitter·I`.
    pub fn factor(a: &Matrix, jitter: f64) -> Result<Self, FactorizationError> {
        let n = a.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
                let mut s = a.get(i, j) - dot;
                if i == j {
                    s += jitter;
                    if !(s > 0.0) {
                        return Err(FactorizationError::NotPositiveDefinite { pivot: i, value: s });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l, jitter })
    }

    /// Tries `ladder[k]·scale` in order and returns the first success.
    pub fn factor_with_ladder(
        a: &Matrix,
        ladder: &[f64],
        scale: f64,
    ) -> Result<Self, FactorizationError> {
        validate_ladder(ladder)?;
        let mut worst_pivot = f64::NAN;
        for &step in ladder {
            match Self::factor(a, step * scale) {
                Ok(c) => return Ok(c),
                Err(FactorizationError::NotPositiveDefinite { value, .. }) => worst_pivot = value,
                Err(e) => return Err(e),
            }
        }
        let max_diag = (0..a.n).map(|i| a.get(i, i)).fold(0.0, f64::max);
        Err(FactorizationError::LadderExhausted {
            largest_jitter: ladder.last().copied().unwrap_or(0.0) * scale,
            condition_estimate: max_diag / worst_pivot.abs().max(f64::MIN_POSITIVE),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Absolute jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l(i, i).ln()).sum::<f64>()
    }

    /// Solves L·y = b.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let dot: f64 = row.iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / self.l[i * n + i];
        }
        y
    }

    /// Solves Lᵀ·x = y.
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            for (xk, lik) in x[..i].iter_mut().zip(&self.l[i * n..i * n + i]) {
                *xk -= lik * xi;
            }
        }
        x
    }

    /// Solves (L·Lᵀ)·x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    /// L·v.
    pub fn mul_lower(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                self.l[i * n..i * n + i + 1]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// L·Lᵀ, for reconstruction checks.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.n;
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..=j).map(|k| self.l(i, k) * self.l(j, k)).sum();
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }
}

pub fn validate_ladder(ladder: &[f64]) -> Result<(), FactorizationError> {
    let ok = ladder.first() == Some(&0.0)
        && ladder.windows(2).all(|w| w[1] > w[0])
        && ladder.iter().all(|v| v.is_finite());
    if ok {
        Ok(())
    } else {
        Err(FactorizationError::InvalidLadder)
    }
}
