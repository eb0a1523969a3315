//! Timing benchmark across strategies on shared simulated data.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{simulate_all, SimSpec};
use crate::error::{PasaError, Result};
use crate::executor::{run, RunConfig, Strategy};
use crate::report::replicate::median;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub sim: SimSpec,
    pub run: RunConfig,
    pub strategies: Vec<Strategy>,
    /// Timed runs per strategy.
    pub runs: usize,
    /// Untimed runs per strategy before measuring.
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sim: SimSpec { n: 1_000_000, ..SimSpec::default() },
            run: RunConfig::default(),
            strategies: vec![Strategy::Offline, Strategy::Mapreduce, Strategy::Pasa],
            runs: 10,
            warmup: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub strategy: Strategy,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub run: usize,
    pub c_time_s: f64,
    pub r_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub strategy: Strategy,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub runs: usize,
    pub median_c_time_s: f64,
    pub median_r_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub family: String,
    pub records: Vec<BenchRecord>,
    pub summaries: Vec<BenchSummary>,
}

impl BenchReport {
    pub fn summary(&self, strategy: Strategy) -> Option<&BenchSummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }

    /// One row per timed run, suitable for plotting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every strategy `runs` times on one simulated data set. Strategies are
/// interleaved within each round, and the starting strategy rotates between
/// rounds, so slow drift in machine load is spread evenly.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    if config.runs == 0 {
        return Err(PasaError::Config("runs must be at least 1".into()));
    }
    if config.strategies.is_empty() {
        return Err(PasaError::Config("no strategies to benchmark".into()));
    }
    let data = simulate_all(&config.sim)?;
    let family = config.sim.family;
    let cfg_for = |s: Strategy| RunConfig { strategy: s, ..config.run.clone() };

    for _ in 0..config.warmup {
        for &s in &config.strategies {
            run(family, &data, &cfg_for(s))?;
        }
    }

    let m = config.strategies.len();
    let mut records = Vec::with_capacity(config.runs * m);
    for r in 0..config.runs {
        for i in 0..m {
            let s = config.strategies[(i + r) % m];
            let cfg = cfg_for(s);
            let est = run(family, &data, &cfg)?;
            records.push(BenchRecord {
                strategy: s,
                k: cfg.effective_k(),
                q: cfg.effective_q(),
                n: config.sim.n,
                run: r,
                c_time_s: est.timing.c_time_s,
                r_time_s: est.timing.r_time_s,
            });
        }
    }

    let summaries = config
        .strategies
        .iter()
        .map(|&s| {
            let mine: Vec<&BenchRecord> = records.iter().filter(|r| r.strategy == s).collect();
            let cfg = cfg_for(s);
            BenchSummary {
                strategy: s,
                k: cfg.effective_k(),
                q: cfg.effective_q(),
                n: config.sim.n,
                runs: mine.len(),
                median_c_time_s: median(&mut mine.iter().map(|r| r.c_time_s).collect::<Vec<_>>()),
                median_r_time_s: median(&mut mine.iter().map(|r| r.r_time_s).collect::<Vec<_>>()),
            }
        })
        .collect();
    Ok(BenchReport { family: family.name().to_string(), records, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_has_every_record() {
        let config = BenchConfig {
            sim: SimSpec { n: 4_000, ..SimSpec::default() },
            run: RunConfig { k: 4, q: 2, threads: 1, ..RunConfig::default() },
            runs: 3,
            warmup: 0,
            ..BenchConfig::default()
        };
        let report = run_bench(&config).unwrap();
        assert_eq!(report.records.len(), 9);
        assert_eq!(report.summaries.len(), 3);
        assert_eq!(report.summary(Strategy::Offline).unwrap().k, 1);
        assert_eq!(report.summary(Strategy::Mapreduce).unwrap().q, 1);
        assert!(report.records.iter().all(|r| r.c_time_s > 0.0 && r.r_time_s > 0.0));
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("strategy,K,Q,N,run,c_time_s,r_time_s\n"));
        assert_eq!(text.lines().count(), 10);
    }
}
