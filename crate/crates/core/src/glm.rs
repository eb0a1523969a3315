//! Exponential-dispersion GLM primitives and the offline Newton-Raphson fit.
//!
//! Scores and negative Hessians are sums over observations, never averages;
//! callers that need per-observation scale divide by `n` themselves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PasaError, Result};
use crate::linalg::{inf_norm, symmetrize, SpdFactor};

/// Clamp applied to the logistic mean when forming Hessian weights.
const MU_CLAMP: f64 = 1e-12;

/// Dispersion estimates are kept strictly positive; a noiseless Gaussian fit
/// would otherwise report exactly zero.
pub const PHI_FLOOR: f64 = 1e-200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmFamily {
    GaussianIdentity,
    BernoulliLogit,
}

impl GlmFamily {
    pub fn name(self) -> &'static str {
        match self {
            GlmFamily::GaussianIdentity => "gaussian_identity",
            GlmFamily::BernoulliLogit => "bernoulli_logit",
        }
    }

    /// `Some(1.0)` for Bernoulli, `None` when the dispersion is estimated.
    pub fn dispersion_fixed(self) -> Option<f64> {
        match self {
            GlmFamily::GaussianIdentity => None,
            GlmFamily::BernoulliLogit => Some(1.0),
        }
    }

    /// Inverse link. The logistic branch never exponentiates a positive number.
    #[inline]
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            GlmFamily::GaussianIdentity => eta,
            GlmFamily::BernoulliLogit => sigmoid(eta),
        }
    }

    pub fn variance_fn(self, mu: f64) -> Result<f64> {
        match self {
            GlmFamily::GaussianIdentity => {
                if mu.is_finite() {
                    Ok(1.0)
                } else {
                    Err(PasaError::InvalidMean { family: self.name(), mu })
                }
            }
            GlmFamily::BernoulliLogit => {
                if mu > 0.0 && mu < 1.0 {
                    Ok(mu * (1.0 - mu))
                } else {
                    Err(PasaError::InvalidMean { family: self.name(), mu })
                }
            }
        }
    }

    /// Weight `v(mu)` used inside Hessians, with the logistic mean clamped
    /// away from {0, 1} so saturated rows never produce a zero pivot.
    #[inline]
    fn hessian_weight(self, mu: f64) -> f64 {
        match self {
            GlmFamily::GaussianIdentity => 1.0,
            GlmFamily::BernoulliLogit => {
                let m = mu.clamp(MU_CLAMP, 1.0 - MU_CLAMP);
                m * (1.0 - m)
            }
        }
    }

    /// Unit deviance `d(y; mu)`, using `0 log(0 / .) = 0`.
    pub fn deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            GlmFamily::GaussianIdentity => (y - mu) * (y - mu),
            GlmFamily::BernoulliLogit => 2.0 * (xlogy_ratio(y, mu) + xlogy_ratio(1.0 - y, 1.0 - mu)),
        }
    }

    /// Checks the outcome domain of every observation in `batch`.
    pub fn validate(self, batch: &BatchData) -> Result<()> {
        if let GlmFamily::BernoulliLogit = self {
            if let Some(i) = batch.y.iter().position(|&y| y != 0.0 && y != 1.0) {
                return Err(PasaError::InvalidOutcome { row: i, value: batch.y[i] });
            }
        }
        Ok(())
    }

    pub fn score(self, batch: &BatchData, beta: &DVector<f64>) -> Result<DVector<f64>> {
        batch.check_width(beta.len())?;
        let p = batch.p;
        let mut u = vec![0.0; p];
        for (row, &y) in batch.rows().zip(&batch.y) {
            let resid = y - self.mean(dot(row, beta.as_slice()));
            for (acc, &x) in u.iter_mut().zip(row) {
                *acc += x * resid;
            }
        }
        Ok(DVector::from_vec(u))
    }

    pub fn neg_hessian(self, batch: &BatchData, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
        batch.check_width(beta.len())?;
        let p = batch.p;
        let mut upper = vec![0.0; p * p];
        match self {
            GlmFamily::GaussianIdentity => {
                for row in batch.rows() {
                    accumulate_outer(&mut upper, row, 1.0);
                }
            }
            GlmFamily::BernoulliLogit => {
                for row in batch.rows() {
                    let w = self.hessian_weight(self.mean(dot(row, beta.as_slice())));
                    accumulate_outer(&mut upper, row, w);
                }
            }
        }
        Ok(upper_to_symmetric(upper, p))
    }

    /// Score and negative Hessian from a single pass over the batch.
    pub fn score_and_neg_hessian(
        self,
        batch: &BatchData,
        beta: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        batch.check_width(beta.len())?;
        let p = batch.p;
        let mut u = vec![0.0; p];
        let mut upper = vec![0.0; p * p];
        for (row, &y) in batch.rows().zip(&batch.y) {
            let mu = self.mean(dot(row, beta.as_slice()));
            let resid = y - mu;
            for (acc, &x) in u.iter_mut().zip(row) {
                *acc += x * resid;
            }
            accumulate_outer(&mut upper, row, self.hessian_weight(mu));
        }
        Ok((DVector::from_vec(u), upper_to_symmetric(upper, p)))
    }

    /// Pearson statistic divided by the batch size `s` (no degrees-of-freedom correction).
    pub fn estimate_dispersion_pearson(self, batch: &BatchData, beta: &DVector<f64>) -> Result<f64> {
        batch.check_width(beta.len())?;
        let mut total = 0.0;
        for (i, (row, &y)) in batch.rows().zip(&batch.y).enumerate() {
            let mu = self.mean(dot(row, beta.as_slice()));
            let v = self
                .variance_fn(mu)
                .map_err(|_| PasaError::DegenerateVariance { index: i })?;
            if v <= 0.0 {
                return Err(PasaError::DegenerateVariance { index: i });
            }
            total += (y - mu) * (y - mu) / v;
        }
        Ok(total / batch.len() as f64)
    }

    /// Offline maximum likelihood by Newton-Raphson from `beta = 0`.
    ///
    /// The Gaussian path solves the normal equations once. The returned
    /// dispersion is the Pearson statistic over `n - p` for Gaussian data and
    /// the fixed value 1 for Bernoulli data.
    pub fn fit_mle(self, data: &BatchData, config: &SolverConfig) -> Result<FitResult> {
        self.validate(data)?;
        let n = data.len();
        let p = data.p;
        if n < p {
            return Err(PasaError::RankDeficient { pivot: n, value: 0.0 });
        }
        match self {
            GlmFamily::GaussianIdentity => {
                let zero = DVector::zeros(p);
                let (xty, xtx) = self.score_and_neg_hessian(data, &zero)?;
                let beta = SpdFactor::new(&xtx)?.solve(&xty);
                let phi = self.df_corrected_dispersion(data, &beta)?;
                Ok(FitResult { beta, j: xtx, phi, n, iterations: 1, converged: true })
            }
            GlmFamily::BernoulliLogit => {
                let threshold = config.tol * n as f64;
                let mut beta = DVector::zeros(p);
                for iteration in 0..=config.max_iter {
                    let (u, j) = self.score_and_neg_hessian(data, &beta)?;
                    let residual = inf_norm(&u);
                    if residual <= threshold {
                        return Ok(FitResult {
                            beta,
                            j,
                            phi: 1.0,
                            n,
                            iterations: iteration,
                            converged: true,
                        });
                    }
                    if iteration == config.max_iter {
                        return Err(PasaError::NonConvergence {
                            iterations: iteration,
                            residual,
                            last: beta.as_slice().to_vec(),
                        });
                    }
                    beta += SpdFactor::new(&j)?.solve(&u);
                    let norm = inf_norm(&beta);
                    if !norm.is_finite() || norm > config.beta_cap {
                        return Err(PasaError::Separation { cap: config.beta_cap, norm });
                    }
                }
                unreachable!("loop returns on its last iteration")
            }
        }
    }

    /// `phi` reported for a fit on `data`: Pearson over `n - p` when estimated.
    pub(crate) fn df_corrected_dispersion(self, data: &BatchData, beta: &DVector<f64>) -> Result<f64> {
        match self.dispersion_fixed() {
            Some(phi) => Ok(phi),
            None => {
                let n = data.len();
                let pearson = self.estimate_dispersion_pearson(data, beta)? * n as f64;
                let df = n.saturating_sub(data.p).max(1) as f64;
                Ok((pearson / df).max(PHI_FLOOR))
            }
        }
    }
}

#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn xlogy_ratio(y: f64, mu: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y * (y / mu).ln()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn accumulate_outer(upper: &mut [f64], row: &[f64], w: f64) {
    let p = row.len();
    for i in 0..p {
        let wi = w * row[i];
        let base = i * p;
        for j in i..p {
            upper[base + j] += wi * row[j];
        }
    }
}

fn upper_to_symmetric(upper: Vec<f64>, p: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_row_slice(p, p, &upper);
    for i in 0..p {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    symmetrize(&mut m);
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Convergence threshold on the score infinity norm, scaled by sample count.
    pub tol: f64,
    /// Newton iterations allowed in `fit_mle`.
    pub max_iter: usize,
    /// Inner iterations allowed per streaming update.
    pub update_max_iter: usize,
    /// Divergence guard on `|beta|_inf` for the logistic fit.
    pub beta_cap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-8, max_iter: 50, update_max_iter: 25, beta_cap: 30.0 }
    }
}

/// One batch of observations; `x` is stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchData {
    y: Vec<f64>,
    x: Vec<f64>,
    p: usize,
}

impl BatchData {
    pub fn new(y: Vec<f64>, x: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(PasaError::Dimension("design must have at least one column".into()));
        }
        if y.is_empty() {
            return Err(PasaError::Dimension("batch must contain at least one row".into()));
        }
        if x.len() != y.len() * p {
            return Err(PasaError::Dimension(format!(
                "design has {} entries, expected {} rows x {} columns",
                x.len(),
                y.len(),
                p
            )));
        }
        Ok(BatchData { y, x, p })
    }

    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(PasaError::Dimension("ragged design rows".into()));
        }
        BatchData::new(y, rows.concat(), p)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.x.chunks_exact(self.p)
    }

    /// Copies the listed rows, in order, into a new batch.
    pub fn gather(&self, rows: &[usize]) -> Result<BatchData> {
        let mut y = Vec::with_capacity(rows.len());
        let mut x = Vec::with_capacity(rows.len() * self.p);
        for &r in rows {
            if r >= self.len() {
                return Err(PasaError::Dimension(format!("row {r} out of range")));
            }
            y.push(self.y[r]);
            x.extend_from_slice(self.row(r));
        }
        BatchData::new(y, x, self.p)
    }

    pub fn concat(batches: &[BatchData]) -> Result<BatchData> {
        let p = batches
            .first()
            .ok_or_else(|| PasaError::Dimension("no batches to concatenate".into()))?
            .p;
        let mut y = Vec::new();
        let mut x = Vec::new();
        for b in batches {
            if b.p != p {
                return Err(PasaError::Dimension(format!("batch width {} differs from {p}", b.p)));
            }
            y.extend_from_slice(&b.y);
            x.extend_from_slice(&b.x);
        }
        BatchData::new(y, x, p)
    }

    /// Linear predictor for every row.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        self.rows().map(|r| dot(r, beta)).collect()
    }

    pub(crate) fn check_width(&self, p: usize) -> Result<()> {
        if p != self.p {
            return Err(PasaError::Dimension(format!(
                "coefficient vector has length {p}, design has {} columns",
                self.p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: DVector<f64>,
    /// Summed negative Hessian at `beta` (not divided by `n`).
    pub j: DMatrix<f64>,
    pub phi: f64,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
}
