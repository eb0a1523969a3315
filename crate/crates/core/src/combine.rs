//! One-shot combination of block summaries.
//!
//! The combined estimate is the information-weighted average
//! `beta = W^{-1} sum_k w_k J_k beta_k` with `W = sum_k w_k J_k` and
//! `w_k = n_k / phi_k`; its covariance is `W^{-1}`.

use std::cmp::Ordering;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{PasaError, Result};
use crate::glm::{BatchData, GlmFamily};
use crate::linalg::{inf_norm, symmetrize, CompensatedMatrix, SpdFactor};
use crate::stream::BlockSummary;

/// How blocks are weighted against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineWeighting {
    /// Each block weighted by `n_k / phi_k`.
    #[default]
    BlockDispersion,
    /// A single pooled dispersion for every block; the point estimate then
    /// depends on `n_k J_k` alone.
    Pooled,
}

/// Wall-clock bookkeeping for one run, in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Critical-path wall clock of the whole run.
    pub r_time_s: f64,
    /// Sum of per-block streaming time plus combination time.
    pub c_time_s: f64,
    pub block_s: Vec<f64>,
    pub combine_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PasaEstimate {
    pub beta: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub total_n: usize,
    pub k_blocks: usize,
    pub per_block: Vec<BlockSummary>,
    pub timing: Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldInterval {
    pub lower: f64,
    pub upper: f64,
    pub se: f64,
}

impl WaldInterval {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Combines blocks with per-block dispersion weights.
pub fn combine(blocks: &[BlockSummary]) -> Result<PasaEstimate> {
    combine_with(blocks, CombineWeighting::BlockDispersion)
}

pub fn combine_with(blocks: &[BlockSummary], weighting: CombineWeighting) -> Result<PasaEstimate> {
    let start = Instant::now();
    let first = blocks
        .first()
        .ok_or_else(|| PasaError::Schema("cannot combine an empty list of blocks".into()))?;
    let p = first.p();
    for b in blocks {
        if b.p() != p || b.j_k.nrows() != p || b.j_k.ncols() != p {
            return Err(PasaError::Schema(format!(
                "block {} has dimension {}, expected {p}",
                b.block_id,
                b.p()
            )));
        }
        if !(b.phi_k > 0.0) || !b.phi_k.is_finite() {
            return Err(PasaError::Schema(format!(
                "block {} has non-positive dispersion {}",
                b.block_id, b.phi_k
            )));
        }
        if b.n_k == 0 {
            return Err(PasaError::Schema(format!("block {} is empty", b.block_id)));
        }
    }

    let mut ordered: Vec<&BlockSummary> = blocks.iter().collect();
    ordered.sort_by(|a, b| canonical_order(a, b));

    let pooled_phi = match weighting {
        CombineWeighting::BlockDispersion => None,
        CombineWeighting::Pooled => Some(pooled_dispersion(&ordered)),
    };

    let mut weight = CompensatedMatrix::zeros(p, p);
    let mut rhs = CompensatedMatrix::zeros(p, 1);
    for b in &ordered {
        let w = match pooled_phi {
            Some(_) => b.n_k as f64,
            None => b.n_k as f64 / b.phi_k,
        };
        let wj = &b.j_k * w;
        rhs.add(&(&wj * &b.beta_k));
        weight.add(&wj);
    }
    let mut w = weight.total();
    symmetrize(&mut w);

    let factor = SpdFactor::new(&w).map_err(|err| {
        let conds: Vec<String> = ordered
            .iter()
            .map(|b| {
                let cond = SpdFactor::new(&b.j_k)
                    .map(|f| format!("{:.3e}", f.condition_estimate()))
                    .unwrap_or_else(|_| "singular".into());
                format!("block {}: {cond}", b.block_id)
            })
            .collect();
        PasaError::Singular(format!("{err}; block condition estimates [{}]", conds.join(", ")))
    })?;

    let beta = if ordered.len() == 1 {
        first.beta_k.clone()
    } else {
        factor.solve(&DVector::from_column_slice(rhs.total().as_slice()))
    };
    let mut cov = factor.inverse();
    if let Some(phi) = pooled_phi {
        cov *= phi;
    }

    let total_n = ordered.iter().map(|b| b.n_k).sum();
    let combine_s = start.elapsed().as_secs_f64();
    Ok(PasaEstimate {
        beta,
        cov,
        total_n,
        k_blocks: ordered.len(),
        per_block: ordered.into_iter().cloned().collect(),
        timing: Timing { r_time_s: combine_s, c_time_s: combine_s, block_s: Vec::new(), combine_s },
    })
}

/// Orders blocks by id, falling back to content so the order is total.
fn canonical_order(a: &BlockSummary, b: &BlockSummary) -> Ordering {
    a.block_id
        .cmp(&b.block_id)
        .then(a.n_k.cmp(&b.n_k))
        .then_with(|| {
            a.beta_k
                .iter()
                .zip(b.beta_k.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then(a.phi_k.total_cmp(&b.phi_k))
}

/// `sum (n_k - p) phi_k / sum (n_k - p)`, falling back to an `n_k`-weighted mean.
fn pooled_dispersion(blocks: &[&BlockSummary]) -> f64 {
    let p = blocks[0].p() as f64;
    let df: f64 = blocks.iter().map(|b| (b.n_k as f64 - p).max(0.0)).sum();
    if df > 0.0 {
        blocks.iter().map(|b| (b.n_k as f64 - p).max(0.0) * b.phi_k).sum::<f64>() / df
    } else {
        let n: f64 = blocks.iter().map(|b| b.n_k as f64).sum();
        blocks.iter().map(|b| b.n_k as f64 * b.phi_k).sum::<f64>() / n
    }
}

/// Two-sided standard normal critical value for coverage `level`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(PasaError::Config(format!("coverage level {level} is outside (0, 1)")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal parameters are valid");
    Ok(std.inverse_cdf(0.5 * (1.0 + level)))
}

impl PasaEstimate {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.p()).map(|j| self.cov[(j, j)].max(0.0).sqrt()).collect()
    }

    pub fn wald_intervals(&self, level: f64) -> Result<Vec<WaldInterval>> {
        let z = normal_critical_value(level)?;
        Ok(self
            .standard_errors()
            .into_iter()
            .zip(self.beta.iter())
            .map(|(se, &b)| WaldInterval { lower: b - z * se, upper: b + z * se, se })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    /// Absolute threshold on the gradient infinity norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig { tol: 1e-8, max_iter: 200 }
    }
}

/// Minimizer of `sum_k (n_k / phi_k) U_k(beta)^T J_k^{-1} U_k(beta)` where
/// `U_k` is the per-observation mean score of block `k`'s raw rows.
///
/// Needs every block's rows in memory, so it is a test-scale oracle for the
/// combined estimator rather than a production path. `block_data[i]` must hold
/// the rows summarized by `blocks[i]`.
pub fn gmm_oracle(
    family: GlmFamily,
    blocks: &[BlockSummary],
    block_data: &[BatchData],
    config: &GmmConfig,
) -> Result<DVector<f64>> {
    if blocks.is_empty() || blocks.len() != block_data.len() {
        return Err(PasaError::Schema(format!(
            "{} summaries but {} data blocks",
            blocks.len(),
            block_data.len()
        )));
    }
    let p = blocks[0].p();
    let mut terms = Vec::with_capacity(blocks.len());
    for (s, d) in blocks.iter().zip(block_data) {
        if s.p() != p || d.p() != p {
            return Err(PasaError::Schema(format!("block {} has mismatched width", s.block_id)));
        }
        if d.len() != s.n_k {
            return Err(PasaError::Schema(format!(
                "block {} summarizes {} rows but {} were supplied",
                s.block_id,
                s.n_k,
                d.len()
            )));
        }
        terms.push(GmmTerm {
            data: d,
            weight: s.n_k as f64 / s.phi_k,
            inv_j: SpdFactor::new(&s.j_k)?,
        });
    }
    let objective = GmmObjective { family, terms };

    let mut beta = blocks.iter().fold(DVector::zeros(p), |acc, b| acc + &b.beta_k) / blocks.len() as f64;
    let (mut value, mut grad, gauss_newton) = objective.evaluate(&beta)?;
    let mut inv_hess = SpdFactor::new(&gauss_newton)?.inverse();

    for _ in 0..config.max_iter {
        if inf_norm(&grad) <= config.tol {
            return Ok(beta);
        }
        let direction = -(&inv_hess * &grad);
        let slope = grad.dot(&direction);
        let direction = if slope < 0.0 {
            direction
        } else {
            inv_hess = DMatrix::identity(p, p);
            -grad.clone()
        };
        let slope = grad.dot(&direction);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &beta + &direction * step;
            let (v, g, _) = objective.evaluate(&trial)?;
            if v <= value + 1e-4 * step * slope || inf_norm(&g) < inf_norm(&grad) {
                accepted = Some((trial, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_value, next_grad)) = accepted else {
            break;
        };

        let s = &next - &beta;
        let y = &next_grad - &grad;
        let sy = s.dot(&y);
        if sy > 0.0 {
            let hy = &inv_hess * &y;
            let yhy = y.dot(&hy);
            let rho = 1.0 / sy;
            inv_hess += (&s * s.transpose()) * ((1.0 + yhy * rho) * rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            symmetrize(&mut inv_hess);
        }
        beta = next;
        value = next_value;
        grad = next_grad;
    }
    if inf_norm(&grad) <= config.tol {
        return Ok(beta);
    }
    Err(PasaError::NonConvergence {
        iterations: config.max_iter,
        residual: inf_norm(&grad),
        last: beta.as_slice().to_vec(),
    })
}

struct GmmTerm<'a> {
    data: &'a BatchData,
    weight: f64,
    inv_j: SpdFactor,
}

struct GmmObjective<'a> {
    family: GlmFamily,
    terms: Vec<GmmTerm<'a>>,
}

impl GmmObjective<'_> {
    /// Value, gradient, and the Gauss-Newton curvature `2 sum w H^T A H`.
    fn evaluate(&self, beta: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let p = beta.len();
        let mut value = 0.0;
        let mut grad = DVector::zeros(p);
        let mut curvature = DMatrix::zeros(p, p);
        for t in &self.terms {
            let n = t.data.len() as f64;
            let (u, h) = self.family.score_and_neg_hessian(t.data, beta)?;
            let u = u / n;
            let h = h / n;
            let au = t.inv_j.solve(&u);
            value += t.weight * u.dot(&au);
            grad -= (h.transpose() * &au) * (2.0 * t.weight);
            let ah = DMatrix::from_columns(
                &(0..p).map(|j| t.inv_j.solve(&h.column(j).into_owned())).collect::<Vec<_>>(),
            );
            curvature += (h.transpose() * ah) * (2.0 * t.weight);
        }
        symmetrize(&mut curvature);
        Ok((value, grad, curvature))
    }
}
