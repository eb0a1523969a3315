//! Renewable within-block estimation.
//!
//! A block is consumed as a sequence of batches. The first batch is fit by
//! maximum likelihood; each later batch is folded in using only the running
//! summaries `(beta, J_acc, phi)` and the new batch's rows, so no batch is
//! ever revisited.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PasaError, Result};
use crate::glm::{BatchData, GlmFamily, SolverConfig, PHI_FLOOR};
use crate::linalg::{inf_norm, symmetrize, SpdFactor};

/// How the running dispersion absorbs each new batch's Pearson estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionWeighting {
    /// Weights `(N_{b-1} - p) / (N_b - p)` and `(s_b - p) / (N_b - p)`.
    #[default]
    DfWeighted,
    /// Weights `(N_{b-1} - p) / (N_b - p)` and `s_b / (N_b - p)`.
    SizeWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    #[serde(flatten)]
    pub solver: SolverConfig,
    pub dispersion_weighting: DispersionWeighting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    pub family: GlmFamily,
    pub beta: DVector<f64>,
    /// Sum of per-batch negative Hessians, each evaluated at the estimate
    /// current when that batch was absorbed.
    pub j_acc: DMatrix<f64>,
    pub phi: f64,
    pub n_seen: usize,
    pub batches_seen: usize,
    /// Inner iterations used by the most recent update.
    pub last_iterations: usize,
}

impl StreamState {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Fits the first batch of a block by maximum likelihood.
    pub fn init_block(family: GlmFamily, first_batch: &BatchData, config: &StreamConfig) -> Result<Self> {
        let fit = family.fit_mle(first_batch, &config.solver)?;
        Ok(StreamState {
            family,
            beta: fit.beta,
            j_acc: fit.j,
            phi: fit.phi,
            n_seen: first_batch.len(),
            batches_seen: 1,
            last_iterations: fit.iterations,
        })
    }

    /// Absorbs one batch by solving the incremental estimating equation
    /// `J_acc (beta_prev - beta) + U_b(beta) = 0` with a preconditioner frozen
    /// at the previous estimate.
    pub fn renew_update(&self, batch: &BatchData, config: &StreamConfig) -> Result<Self> {
        let p = self.p();
        batch.check_width(p)?;
        self.family.validate(batch)?;
        let family = self.family;
        let n_seen = self.n_seen + batch.len();
        let threshold = config.solver.tol * n_seen as f64;

        let mut precond = &self.j_acc + family.neg_hessian(batch, &self.beta)?;
        symmetrize(&mut precond);
        let precond = SpdFactor::new(&precond)?;

        let mut beta = self.beta.clone();
        let mut iterations = 0;
        loop {
            let adjusted = &self.j_acc * (&self.beta - &beta) + family.score(batch, &beta)?;
            let residual = inf_norm(&adjusted);
            if residual <= threshold {
                break;
            }
            if iterations == config.solver.update_max_iter {
                return Err(PasaError::NonConvergence {
                    iterations,
                    residual,
                    last: beta.as_slice().to_vec(),
                });
            }
            beta += precond.solve(&adjusted);
            iterations += 1;
            let norm = inf_norm(&beta);
            if !norm.is_finite() {
                return Err(PasaError::NonConvergence {
                    iterations,
                    residual: f64::INFINITY,
                    last: beta.as_slice().to_vec(),
                });
            }
        }

        let mut j_acc = &self.j_acc + family.neg_hessian(batch, &beta)?;
        symmetrize(&mut j_acc);

        let phi = match family.dispersion_fixed() {
            Some(fixed) => fixed,
            None => {
                let batch_phi = family.estimate_dispersion_pearson(batch, &beta)?;
                let prev_df = self.n_seen as f64 - p as f64;
                let new_df = n_seen as f64 - p as f64;
                let s = batch.len() as f64;
                let batch_weight = match config.dispersion_weighting {
                    DispersionWeighting::DfWeighted => s - p as f64,
                    DispersionWeighting::SizeWeighted => s,
                };
                ((prev_df * self.phi + batch_weight * batch_phi) / new_df).max(PHI_FLOOR)
            }
        };

        Ok(StreamState {
            family,
            beta,
            j_acc,
            phi,
            n_seen,
            batches_seen: self.batches_seen + 1,
            last_iterations: iterations,
        })
    }

    /// Closed-form update for the Gaussian identity model. After every batch
    /// `beta` is the least-squares fit of all rows seen so far and `phi` is
    /// their residual sum of squares over `N_b - p`.
    pub fn renew_update_linear(&self, batch: &BatchData) -> Result<Self> {
        if self.family != GlmFamily::GaussianIdentity {
            return Err(PasaError::Config(format!(
                "closed-form update requires the gaussian_identity family, state is {}",
                self.family.name()
            )));
        }
        let p = self.p();
        batch.check_width(p)?;
        let zero = DVector::zeros(p);
        let (xty, xtx) = self.family.score_and_neg_hessian(batch, &zero)?;
        let mut j_acc = &self.j_acc + xtx;
        symmetrize(&mut j_acc);
        let rhs = &self.j_acc * &self.beta + xty;
        let beta = SpdFactor::new(&j_acc)?.solve(&rhs);

        let n_seen = self.n_seen + batch.len();
        let yty: f64 = batch.y().iter().map(|y| y * y).sum();
        let prev_quad = self.beta.dot(&(&self.j_acc * &self.beta));
        let new_quad = beta.dot(&(&j_acc * &beta));
        let prev_rss = (self.n_seen as f64 - p as f64).max(0.0) * self.phi;
        let df = (n_seen.saturating_sub(p)).max(1) as f64;
        let phi = ((prev_rss + prev_quad + yty - new_quad) / df).max(PHI_FLOOR);

        Ok(StreamState {
            family: self.family,
            beta,
            j_acc,
            phi,
            n_seen,
            batches_seen: self.batches_seen + 1,
            last_iterations: 1,
        })
    }

    pub fn finalize_block(&self, block_id: usize) -> BlockSummary {
        BlockSummary {
            block_id,
            n_k: self.n_seen,
            beta_k: self.beta.clone(),
            j_k: &self.j_acc / self.n_seen as f64,
            phi_k: self.phi,
        }
    }
}

/// Finalized output of one block: the only thing that crosses block boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "BlockSummaryRecord", try_from = "BlockSummaryRecord")]
pub struct BlockSummary {
    pub block_id: usize,
    pub n_k: usize,
    pub beta_k: DVector<f64>,
    /// Negative Hessian per observation, `J_acc / n_k`.
    pub j_k: DMatrix<f64>,
    pub phi_k: f64,
}

impl BlockSummary {
    pub fn p(&self) -> usize {
        self.beta_k.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Wire form of [`BlockSummary`]; `J_k` is flattened row-major.
#[derive(Serialize, Deserialize)]
struct BlockSummaryRecord {
    block_id: usize,
    n_k: usize,
    beta_k: Vec<f64>,
    #[serde(rename = "J_k")]
    j_k: Vec<f64>,
    phi_k: f64,
}

impl From<BlockSummary> for BlockSummaryRecord {
    fn from(s: BlockSummary) -> Self {
        let p = s.p();
        let j_k = (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|ij| s.j_k[ij]).collect();
        BlockSummaryRecord {
            block_id: s.block_id,
            n_k: s.n_k,
            beta_k: s.beta_k.as_slice().to_vec(),
            j_k,
            phi_k: s.phi_k,
        }
    }
}

impl TryFrom<BlockSummaryRecord> for BlockSummary {
    type Error = String;

    fn try_from(r: BlockSummaryRecord) -> std::result::Result<Self, String> {
        let p = r.beta_k.len();
        if p == 0 || r.j_k.len() != p * p {
            return Err(format!("J_k has {} entries, expected {}", r.j_k.len(), p * p));
        }
        if r.n_k == 0 {
            return Err("n_k must be positive".into());
        }
        if !(r.phi_k > 0.0) {
            return Err(format!("phi_k must be positive, got {}", r.phi_k));
        }
        Ok(BlockSummary {
            block_id: r.block_id,
            n_k: r.n_k,
            beta_k: DVector::from_vec(r.beta_k),
            j_k: DMatrix::from_row_slice(p, p, &r.j_k),
            phi_k: r.phi_k,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_gaussian(seed: u64, n: usize) -> BatchData {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let r = vec![1.0, next() * 2.0, next() * 3.0];
            y.push(0.5 + r[1] - 0.25 * r[2] + next());
            rows.push(r);
        }
        BatchData::from_rows(y, &rows).unwrap()
    }

    #[test]
    fn first_batch_smaller_than_p_is_rejected() {
        let b = BatchData::from_rows(vec![1.0, 2.0], &[vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 3.0]]).unwrap();
        let err = StreamState::init_block(GlmFamily::GaussianIdentity, &b, &StreamConfig::default()).unwrap_err();
        assert!(matches!(err, PasaError::RankDeficient { .. }));
    }

    #[test]
    fn finalize_scales_information() {
        let state = StreamState {
            family: GlmFamily::BernoulliLogit,
            beta: DVector::zeros(3),
            j_acc: DMatrix::identity(3, 3) * 100.0,
            phi: 1.0,
            n_seen: 100,
            batches_seen: 4,
            last_iterations: 0,
        };
        let s = state.finalize_block(7);
        assert_eq!(s.j_k, DMatrix::identity(3, 3));
        assert_eq!(s.j_k.clone() * 100.0, state.j_acc);
        assert_eq!(s.block_id, 7);
    }

    #[test]
    fn update_does_not_touch_input_state() {
        let cfg = StreamConfig::default();
        let first = small_gaussian(1, 30);
        let state = StreamState::init_block(GlmFamily::GaussianIdentity, &first, &cfg).unwrap();
        let snapshot = state.clone();
        let _ = state.renew_update(&small_gaussian(2, 30), &cfg).unwrap();
        let _ = state.renew_update_linear(&small_gaussian(2, 30)).unwrap();
        assert_eq!(state, snapshot);
    }

    #[test]
    fn linear_update_rejects_logistic_state() {
        let b = BatchData::from_rows(
            vec![0.0, 1.0, 1.0, 0.0],
            &[vec![1.0, -1.0], vec![1.0, 0.5], vec![1.0, -0.3], vec![1.0, 0.8]],
        )
        .unwrap();
        let state = StreamState::init_block(GlmFamily::BernoulliLogit, &b, &StreamConfig::default()).unwrap();
        assert!(matches!(state.renew_update_linear(&b), Err(PasaError::Config(_))));
    }

    #[test]
    fn summary_json_round_trip_and_validation() {
        let first = small_gaussian(3, 40);
        let state = StreamState::init_block(GlmFamily::GaussianIdentity, &first, &StreamConfig::default()).unwrap();
        let s = state.finalize_block(2);
        let text = s.to_json().unwrap();
        assert!(text.contains("\"J_k\""));
        assert_eq!(BlockSummary::from_json(&text).unwrap(), s);

        let bad = r#"{"block_id":0,"n_k":10,"beta_k":[1.0,2.0],"J_k":[1.0,0.0,0.0],"phi_k":1.0}"#;
        assert!(BlockSummary::from_json(bad).is_err());
    }
}
