//! Small dense helpers for p x p information matrices.
//!
//! `p` is tiny in this crate (a handful to a few dozen coefficients) so the
//! factorization is a plain unpivoted Cholesky that reports the first pivot
//! that collapses, which is what callers surface as a rank-deficiency error.

use nalgebra::{DMatrix, DVector};

use crate::error::{PasaError, Result};

/// Relative size below which a Cholesky pivot counts as zero.
const PIVOT_RTOL: f64 = 1e-11;

/// Replace `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
}

impl SpdFactor {
    /// Symmetrizes a copy of `a` and factorizes it.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(PasaError::Dimension(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let mut l = a.clone();
        symmetrize(&mut l);
        let p = l.nrows();
        let scale = (0..p).fold(0.0_f64, |acc, i| acc.max(l[(i, i)].abs()));
        for j in 0..p {
            let mut d = l[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            let own = a[(j, j)].abs().max(f64::MIN_POSITIVE);
            if !d.is_finite() || d <= PIVOT_RTOL * own || d <= f64::EPSILON * scale * 1e-3 {
                return Err(PasaError::RankDeficient { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..p {
                let mut s = l[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        for i in 0..p {
            for j in (i + 1)..p {
                l[(i, j)] = 0.0;
            }
        }
        Ok(SpdFactor { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let p = self.dim();
        let l = &self.l;
        let mut y = b.clone();
        for i in 0..p {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..p).rev() {
            let mut s = y[i];
            for k in (i + 1)..p {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut inv = DMatrix::zeros(p, p);
        for j in 0..p {
            let mut e = DVector::zeros(p);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        symmetrize(&mut inv);
        inv
    }

    /// Ratio of largest to smallest squared pivot; a cheap condition estimate.
    pub fn condition_estimate(&self) -> f64 {
        let d: Vec<f64> = (0..self.dim()).map(|i| self.l[(i, i)].powi(2)).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Neumaier-compensated running sum over a fixed-shape matrix.
#[derive(Debug, Clone)]
pub struct CompensatedMatrix {
    sum: DMatrix<f64>,
    comp: DMatrix<f64>,
}

impl CompensatedMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CompensatedMatrix {
            sum: DMatrix::zeros(rows, cols),
            comp: DMatrix::zeros(rows, cols),
        }
    }

    /// Adds a term with the same element count, read in column-major order.
    pub fn add<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<f64, R, C>>(
        &mut self,
        term: &nalgebra::Matrix<f64, R, C, S>,
    ) {
        debug_assert_eq!(term.len(), self.sum.len());
        for (idx, &x) in term.iter().enumerate() {
            let s = self.sum[idx];
            let t = s + x;
            if s.abs() >= x.abs() {
                self.comp[idx] += (s - t) + x;
            } else {
                self.comp[idx] += (x - t) + s;
            }
            self.sum[idx] = t;
        }
    }

    pub fn total(&self) -> DMatrix<f64> {
        &self.sum + &self.comp
    }
}
