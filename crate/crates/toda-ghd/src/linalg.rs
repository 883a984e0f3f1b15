//! Dense and banded linear solvers.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Infinity norm of a slice.
pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Pivoted dense LU factorization with iterative refinement.
pub struct DenseSolver {
    a: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Solution with its backward residual `‖A x − f‖∞ / ‖f‖∞`.
#[derive(Debug, Clone)]
pub struct Solved {
    pub x: Vec<f64>,
    pub rel_residual: f64,
}

impl DenseSolver {
    /// Factors `a`; errors when a pivot is below `1e-14 · max|a|`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lu = a.clone().lu();
        let u = lu.u();
        let n = u.nrows();
        let min_pivot = (0..n).fold(f64::INFINITY, |m, i| m.min(u[(i, i)].abs()));
        if !(min_pivot > 1e-14 * scale) {
            return Err(Error::OperatorSingular(format!("smallest LU pivot {min_pivot:e} vs scale {scale:e} (n = {n})")));
        }
        Ok(Self { a, lu })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Solves `A x = f` with up to `refine` refinement sweeps.
    pub fn solve(&self, f: &[f64], refine: usize) -> Result<Solved> {
        let rhs = DVector::from_column_slice(f);
        let mut x = self.lu.solve(&rhs).ok_or_else(|| Error::OperatorSingular("LU solve failed".into()))?;
        let fnorm = norm_inf(f).max(f64::MIN_POSITIVE);
        let mut r = &rhs - &self.a * &x;
        let mut rel = r.amax() / fnorm;
        for _ in 0..refine {
            if rel < 1e-15 {
                break;
            }
            let dx = self.lu.solve(&r).ok_or_else(|| Error::OperatorSingular("LU solve failed".into()))?;
            let trial = &x + dx;
            let r2 = &rhs - &self.a * &trial;
            let rel2 = r2.amax() / fnorm;
            if rel2 >= rel {
                break;
            }
            x = trial;
            r = r2;
            rel = rel2;
        }
        Ok(Solved { x: x.as_slice().to_vec(), rel_residual: rel })
    }
}

/// Square band matrix with equal lower and upper bandwidth, solved by LU
/// without pivoting (intended for diagonally dominant systems).
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    band: usize,
    // Row-major, row i holds columns i-band..=i+band.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, band: usize) -> Self {
        Self { n, band, data: vec![0.0; n * (2 * band + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.band
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.band >= i && j <= i + self.band);
        i * (2 * self.band + 1) + (j + self.band - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.band < i || j > i + self.band {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.band);
                let hi = (i + self.band).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Solves `A x = f` by banded Gaussian elimination without pivoting.
    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let b = self.band;
        let mut m = self.data.clone();
        let w = 2 * b + 1;
        let at = |i: usize, j: usize| i * w + (j + b - i);
        let mut x = f.to_vec();
        let scale = norm_inf(&self.data).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let piv = m[at(k, k)];
            if !(piv.abs() > 1e-14 * scale) {
                return Err(Error::OperatorSingular(format!("zero pivot {piv:e} at row {k} in banded elimination")));
            }
            let hi = (k + b).min(n - 1);
            for i in k + 1..=hi {
                let l = m[at(i, k)] / piv;
                if l == 0.0 {
                    continue;
                }
                for j in k..=hi {
                    m[at(i, j)] -= l * m[at(k, j)];
                }
                x[i] -= l * x[k];
            }
        }
        for k in (0..n).rev() {
            let hi = (k + b).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=hi {
                s -= m[at(k, j)] * x[j];
            }
            x[k] = s / m[at(k, k)];
        }
        Ok(x)
    }

    /// Dense copy, for pivoted fallbacks and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}
