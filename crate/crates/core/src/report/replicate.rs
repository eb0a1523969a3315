//! Monte-Carlo replication harness.
//!
//! Metrics are aggregated over coordinates: A.bias, ASE and ESE are means
//! over the coefficient vector, and CP pools every (replication, coordinate)
//! interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{simulate_all, SimSpec};
use crate::error::{PasaError, Result};
use crate::executor::{run, RunConfig, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplicationConfig {
    pub sim: SimSpec,
    pub run: RunConfig,
    pub reps: usize,
    pub base_seed: u64,
    pub level: f64,
    /// Replications in flight at once; 0 means one per logical core. Each
    /// replication runs its blocks sequentially.
    pub threads: usize,
    pub keep_per_rep: bool,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        ReplicationConfig {
            sim: SimSpec::default(),
            run: RunConfig::default(),
            reps: 500,
            base_seed: 1,
            level: 0.95,
            threads: 0,
            keep_per_rep: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub seed: u64,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub covered: Vec<bool>,
    pub c_time_s: f64,
    pub r_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub family: String,
    pub strategy: Strategy,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    pub failed: usize,
    pub a_bias: f64,
    pub ase: f64,
    pub ese: f64,
    pub cp: f64,
    pub c_time_s: f64,
    pub r_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_rep: Option<Vec<RepRecord>>,
}

fn one_replication(config: &ReplicationConfig, rep: usize) -> Result<RepRecord> {
    let seed = config.base_seed + rep as u64;
    let data = simulate_all(&config.sim.with_seed(seed))?;
    let run_cfg = RunConfig { seed, threads: 1, ..config.run.clone() };
    let est = run(config.sim.family, &data, &run_cfg)?;
    let intervals = est.wald_intervals(config.level)?;
    Ok(RepRecord {
        seed,
        beta: est.beta.as_slice().to_vec(),
        se: intervals.iter().map(|i| i.se).collect(),
        covered: intervals.iter().zip(&config.sim.beta0).map(|(i, &b)| i.covers(b)).collect(),
        c_time_s: est.timing.c_time_s,
        r_time_s: est.timing.r_time_s,
    })
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_unstable_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

pub fn run_replications(config: &ReplicationConfig) -> Result<ReplicationReport> {
    if config.reps == 0 {
        return Err(PasaError::Config("reps must be at least 1".into()));
    }
    config.sim.validate()?;
    let threads = if config.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        config.threads
    };
    let outcomes: Vec<Result<RepRecord>> = if threads == 1 {
        (0..config.reps).map(|r| one_replication(config, r)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| PasaError::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..config.reps).into_par_iter().map(|r| one_replication(config, r)).collect())
    };

    let mut records = Vec::with_capacity(config.reps);
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(e) => failures.push(e),
        }
    }
    if failures.len() * 100 > config.reps || records.is_empty() {
        return Err(PasaError::Replications {
            failed: failures.len(),
            total: config.reps,
            first: failures.first().map(ToString::to_string).unwrap_or_default(),
        });
    }

    let p = config.sim.p;
    let beta0 = &config.sim.beta0;
    let m = records.len() as f64;
    let a_bias = records
        .iter()
        .flat_map(|r| r.beta.iter().zip(beta0).map(|(b, t)| (b - t).abs()))
        .sum::<f64>()
        / (m * p as f64);
    let ase = records.iter().flat_map(|r| r.se.iter()).sum::<f64>() / (m * p as f64);
    let ese = if records.len() < 2 {
        0.0
    } else {
        (0..p)
            .map(|j| {
                let mean = records.iter().map(|r| r.beta[j]).sum::<f64>() / m;
                let ss: f64 = records.iter().map(|r| (r.beta[j] - mean).powi(2)).sum();
                (ss / (m - 1.0)).sqrt()
            })
            .sum::<f64>()
            / p as f64
    };
    let hits = records.iter().flat_map(|r| r.covered.iter()).filter(|&&c| c).count();
    let cp = hits as f64 / (m * p as f64);
    let c_time_s = median(&mut records.iter().map(|r| r.c_time_s).collect::<Vec<_>>());
    let r_time_s = median(&mut records.iter().map(|r| r.r_time_s).collect::<Vec<_>>());

    Ok(ReplicationReport {
        family: config.sim.family.name().to_string(),
        strategy: config.run.strategy,
        k: config.run.effective_k(),
        q: config.run.effective_q(),
        n: config.sim.n,
        p,
        reps: config.reps,
        failed: failures.len(),
        a_bias,
        ase,
        ese,
        cp,
        c_time_s,
        r_time_s,
        per_rep: config.keep_per_rep.then_some(records),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::GlmFamily;

    #[test]
    fn noiseless_gaussian_single_rep() {
        let config = ReplicationConfig {
            sim: SimSpec { n: 2_000, phi0: 1e-300, ..SimSpec::default() },
            run: RunConfig { k: 4, q: 5, ..RunConfig::default() },
            reps: 1,
            ..ReplicationConfig::default()
        };
        let report = run_replications(&config).unwrap();
        assert!(report.a_bias <= 1e-9, "{}", report.a_bias);
        assert_eq!(report.ese, 0.0);
        assert!((0.0..=1.0).contains(&report.cp));
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let base = ReplicationConfig {
            sim: SimSpec { family: GlmFamily::BernoulliLogit, n: 3_000, ..SimSpec::default() },
            run: RunConfig { k: 3, q: 4, ..RunConfig::default() },
            reps: 6,
            keep_per_rep: true,
            ..ReplicationConfig::default()
        };
        let one = run_replications(&ReplicationConfig { threads: 1, ..base.clone() }).unwrap();
        let many = run_replications(&ReplicationConfig { threads: 3, ..base }).unwrap();
        let betas = |r: &ReplicationReport| r.per_rep.as_ref().unwrap().iter().map(|x| x.beta.clone()).collect::<Vec<_>>();
        assert_eq!(betas(&one), betas(&many));
        assert_eq!(one.a_bias, many.a_bias);
        assert_eq!(one.cp, many.cp);
    }

    #[test]
    fn zero_reps_rejected() {
        let config = ReplicationConfig { reps: 0, ..ReplicationConfig::default() };
        assert!(run_replications(&config).is_err());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
