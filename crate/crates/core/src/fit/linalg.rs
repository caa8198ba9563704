//! Dense symmetric linear algebra for the small normal-equation systems of
//! the fitter (at most seven parameters).

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] += value;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    /// Cholesky factor L with A = L·Lᵀ. Fails on a non-positive pivot,
    /// which signals a singular or indefinite system.
    fn cholesky(&self) -> Result<SymMatrix> {
        let n = self.n;
        let mut l = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::DegenerateFit(format!(
                            "normal equations not positive definite (pivot {sum} at row {i})"
                        )));
                    }
                    l.set(i, j, sum.sqrt());
                } else {
                    l.set(i, j, sum / l.get(j, j));
                }
            }
        }
        Ok(l)
    }

    /// Solve A·x = b for symmetric positive-definite A.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let l = self.cholesky()?;
        let n = self.n;
        // forward: L·y = b
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= l.get(i, k) * y[k];
            }
            y[i] = sum / l.get(i, i);
        }
        // backward: Lᵀ·x = y
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..n {
                sum -= l.get(k, i) * x[k];
            }
            x[i] = sum / l.get(i, i);
        }
        Ok(x)
    }

    /// Inverse of a symmetric positive-definite matrix, column by column.
    ///
    /// The matrix is rescaled to unit diagonal first; without that, pivots
    /// of well-conditioned but badly scaled systems (parameters spanning
    /// many orders of magnitude) drown in rounding.
    pub fn invert(&self) -> Result<SymMatrix> {
        let n = self.n;
        let mut scale = vec![0.0; n];
        for i in 0..n {
            let d = self.get(i, i);
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::DegenerateFit(format!(
                    "non-positive diagonal {d} at row {i}"
                )));
            }
            scale[i] = d.sqrt().recip();
        }
        let mut scaled = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                scaled.set(i, j, self.get(i, j) * scale[i] * scale[j]);
            }
        }
        let mut inv = SymMatrix::zeros(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = scaled.solve(&e)?;
            for i in 0..n {
                inv.set(i, j, col[i] * scale[i] * scale[j]);
            }
        }
        // Symmetrize against rounding drift.
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (inv.get(i, j) + inv.get(j, i));
                inv.set(i, j, avg);
                inv.set(j, i, avg);
            }
        }
        Ok(inv)
    }
}
