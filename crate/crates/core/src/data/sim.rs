//! Synthetic GLM data with compound-symmetry covariates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{PasaError, Result};
use crate::glm::{dot, sigmoid, BatchData, GlmFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSpec {
    pub family: GlmFamily,
    pub n: usize,
    pub p: usize,
    pub beta0: Vec<f64>,
    /// Common correlation between non-intercept covariates.
    pub rho: f64,
    /// First column is the constant 1.
    pub intercept: bool,
    /// Gaussian noise variance.
    pub phi0: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            family: GlmFamily::GaussianIdentity,
            n: 100_000,
            p: 5,
            beta0: vec![0.2, -0.2, 0.2, -0.2, 0.2],
            rho: 0.5,
            intercept: true,
            phi0: 1.0,
            seed: 0,
        }
    }
}

impl SimSpec {
    pub fn with_seed(&self, seed: u64) -> SimSpec {
        SimSpec { seed, ..self.clone() }
    }

    fn covariates(&self) -> usize {
        if self.intercept {
            self.p - 1
        } else {
            self.p
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || (self.intercept && self.p < 1) {
            return Err(PasaError::Config("p must be at least 1".into()));
        }
        if self.beta0.len() != self.p {
            return Err(PasaError::Config(format!(
                "beta0 has {} entries but p = {}",
                self.beta0.len(),
                self.p
            )));
        }
        if self.n == 0 {
            return Err(PasaError::Config("N must be positive".into()));
        }
        let q = self.covariates();
        let lower = if q >= 2 { -1.0 / (q as f64 - 1.0) } else { -1.0 };
        if !(self.rho < 1.0 && self.rho > lower) {
            return Err(PasaError::Config(format!(
                "rho = {} is outside ({lower}, 1) for {q} correlated covariates",
                self.rho
            )));
        }
        if !(self.phi0 > 0.0) {
            return Err(PasaError::Config(format!("phi0 must be positive, got {}", self.phi0)));
        }
        Ok(())
    }
}

/// Restartable stream of simulated batches. Rows are produced one at a time
/// from a single RNG, so the batch size never changes the data.
#[derive(Debug, Clone)]
pub struct SimStream {
    spec: SimSpec,
    batch_size: usize,
    rng: ChaCha8Rng,
    emitted: usize,
    shift: f64,
}

/// Starts a stream of `spec.n` rows served in batches of `batch_size`.
pub fn simulate(spec: &SimSpec, batch_size: usize) -> Result<SimStream> {
    spec.validate()?;
    if batch_size == 0 {
        return Err(PasaError::Config("batch size must be positive".into()));
    }
    let q = spec.covariates() as f64;
    // For negative rho, x = sqrt(1 - rho) (z + shift * mean(z) 1) has the
    // same compound-symmetry covariance.
    let shift = if spec.rho < 0.0 { -1.0 + (1.0 + spec.rho * q / (1.0 - spec.rho)).sqrt() } else { 0.0 };
    Ok(SimStream {
        spec: spec.clone(),
        batch_size,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        emitted: 0,
        shift,
    })
}

/// Materializes all `spec.n` rows.
pub fn simulate_all(spec: &SimSpec) -> Result<BatchData> {
    let batches: Vec<BatchData> = simulate(spec, spec.n.clamp(1, 1 << 16))?.collect();
    BatchData::concat(&batches)
}

impl SimStream {
    pub fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        self.emitted = 0;
    }

    fn next_row(&mut self, x: &mut Vec<f64>) -> f64 {
        let spec = &self.spec;
        let start = x.len();
        if spec.intercept {
            x.push(1.0);
        }
        let q = spec.covariates();
        let scale = (1.0 - spec.rho).sqrt();
        if spec.rho >= 0.0 {
            let common: f64 = self.rng.sample(StandardNormal);
            let load = spec.rho.sqrt() * common;
            for _ in 0..q {
                let z: f64 = self.rng.sample(StandardNormal);
                x.push(scale * z + load);
            }
        } else {
            let base = x.len();
            for _ in 0..q {
                x.push(self.rng.sample::<f64, _>(StandardNormal));
            }
            let mean = x[base..].iter().sum::<f64>() / q as f64;
            for v in &mut x[base..] {
                *v = scale * (*v + self.shift * mean);
            }
        }
        let eta = dot(&x[start..], &spec.beta0);
        match spec.family {
            GlmFamily::GaussianIdentity => {
                let e: f64 = self.rng.sample(StandardNormal);
                eta + spec.phi0.sqrt() * e
            }
            GlmFamily::BernoulliLogit => {
                let u: f64 = self.rng.random();
                if u < sigmoid(eta) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl Iterator for SimStream {
    type Item = BatchData;

    fn next(&mut self) -> Option<BatchData> {
        let remaining = self.spec.n - self.emitted;
        if remaining == 0 {
            return None;
        }
        let s = remaining.min(self.batch_size);
        let mut y = Vec::with_capacity(s);
        let mut x = Vec::with_capacity(s * self.spec.p);
        for _ in 0..s {
            let yi = self.next_row(&mut x);
            y.push(yi);
        }
        self.emitted += s;
        Some(BatchData::new(y, x, self.spec.p).expect("simulated rows match p"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn column(b: &BatchData, j: usize) -> Vec<f64> {
        b.rows().map(|r| r[j]).collect()
    }

    fn max_pairwise_deviation(rho: f64) -> f64 {
        let spec = SimSpec { n: 100_000, rho, seed: 5, ..SimSpec::default() };
        let data = simulate_all(&spec).unwrap();
        let mut worst: f64 = 0.0;
        for i in 1..5 {
            for j in (i + 1)..5 {
                worst = worst.max((corr(&column(&data, i), &column(&data, j)) - rho).abs());
            }
        }
        worst
    }

    #[test]
    fn independent_covariates() {
        assert!(max_pairwise_deviation(0.0) < 0.02);
    }

    #[test]
    fn compound_symmetry_correlation() {
        assert!(max_pairwise_deviation(0.5) < 0.02);
    }

    #[test]
    fn negative_correlation() {
        assert!(max_pairwise_deviation(-0.2) < 0.02);
    }

    #[test]
    fn symmetric_logistic_is_balanced() {
        let spec = SimSpec {
            family: GlmFamily::BernoulliLogit,
            beta0: vec![0.0; 5],
            seed: 3,
            ..SimSpec::default()
        };
        let data = simulate_all(&spec).unwrap();
        let mean = data.y().iter().sum::<f64>() / data.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!(data.y().iter().all(|&y| y == 0.0 || y == 1.0));
    }

    #[test]
    fn batching_does_not_change_rows() {
        let spec = SimSpec { n: 1000, seed: 17, ..SimSpec::default() };
        let whole = simulate_all(&spec).unwrap();
        for size in [1, 7, 100, 999, 5000] {
            let parts: Vec<_> = simulate(&spec, size).unwrap().collect();
            assert_eq!(BatchData::concat(&parts).unwrap(), whole, "batch size {size}");
        }
        let mut stream = simulate(&spec, 64).unwrap();
        let first: Vec<_> = stream.by_ref().collect();
        stream.reset();
        let second: Vec<_> = stream.collect();
        assert_eq!(first, second);
    }

    #[test]
    fn invalid_rho_is_rejected() {
        for rho in [1.0, -0.34, 1.5] {
            let spec = SimSpec { rho, ..SimSpec::default() };
            assert!(matches!(simulate(&spec, 10), Err(PasaError::Config(_))), "{rho}");
        }
    }
}
