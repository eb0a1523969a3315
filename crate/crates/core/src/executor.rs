//! Partitioning and orchestration of the offline, MapReduce and PASA strategies.

use std::borrow::Cow;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combine::{combine_with, CombineWeighting, PasaEstimate, Timing};
use crate::error::{PasaError, Result};
use crate::glm::{BatchData, GlmFamily};
use crate::stream::{BlockSummary, StreamConfig, StreamState};

/// Read-only row access shared by all block workers.
pub trait DataSource: Sync {
    fn n_rows(&self) -> usize;
    fn p(&self) -> usize;
    /// Copies the listed rows, in order.
    fn gather(&self, rows: &[usize]) -> Result<BatchData>;
    /// Every row in storage order.
    fn full(&self) -> Result<Cow<'_, BatchData>> {
        let all: Vec<usize> = (0..self.n_rows()).collect();
        self.gather(&all).map(Cow::Owned)
    }
}

impl DataSource for BatchData {
    fn n_rows(&self) -> usize {
        self.len()
    }

    fn p(&self) -> usize {
        BatchData::p(self)
    }

    fn gather(&self, rows: &[usize]) -> Result<BatchData> {
        BatchData::gather(self, rows)
    }

    fn full(&self) -> Result<Cow<'_, BatchData>> {
        Ok(Cow::Borrowed(self))
    }
}

/// Assignment of rows to `K` blocks, each split into sequential batches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub n: usize,
    pub seed: u64,
    /// `batch_sizes[k][b]` is the size of batch `b` of block `k`.
    pub batch_sizes: Vec<Vec<usize>>,
    /// Row indices; block `k` owns a contiguous run, batches in order inside it.
    pub assignment: Vec<usize>,
}

/// `total` split into `parts` near-equal pieces, remainder spread over the first pieces.
fn equal_split(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Randomly partitions `n` rows into `k` blocks of `q` batches each.
pub fn partition(n: usize, k: usize, q: usize, p: usize, seed: u64) -> Result<PartitionPlan> {
    if k == 0 || q == 0 {
        return Err(PasaError::Config(format!("K = {k} and Q = {q} must both be at least 1")));
    }
    if n < k * q {
        return Err(PasaError::Config(format!("N = {n} is smaller than K * Q = {}", k * q)));
    }
    if n / (k * q) < p {
        return Err(PasaError::Config(format!(
            "smallest batch would hold {} rows, fewer than p = {p}",
            n / (k * q)
        )));
    }
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    assignment.shuffle(&mut rng);
    let batch_sizes = equal_split(n, k).into_iter().map(|nk| equal_split(nk, q)).collect();
    Ok(PartitionPlan { n, seed, batch_sizes, assignment })
}

impl PartitionPlan {
    pub fn k(&self) -> usize {
        self.batch_sizes.len()
    }

    pub fn block_size(&self, k: usize) -> usize {
        self.batch_sizes[k].iter().sum()
    }

    fn block_offset(&self, k: usize) -> usize {
        (0..k).map(|i| self.block_size(i)).sum()
    }

    pub fn block_rows(&self, k: usize) -> &[usize] {
        let start = self.block_offset(k);
        &self.assignment[start..start + self.block_size(k)]
    }

    pub fn batch_rows(&self, k: usize, b: usize) -> &[usize] {
        let start = self.block_offset(k) + self.batch_sizes[k][..b].iter().sum::<usize>();
        &self.assignment[start..start + self.batch_sizes[k][b]]
    }

    /// Same blocks, each processed as a single batch.
    pub fn single_batches(&self) -> PartitionPlan {
        PartitionPlan {
            n: self.n,
            seed: self.seed,
            batch_sizes: self.batch_sizes.iter().map(|b| vec![b.iter().sum()]).collect(),
            assignment: self.assignment.clone(),
        }
    }

    /// Checks sizes, first-batch feasibility and that rows are distinct and in range.
    pub fn validate(&self, n_rows: usize, p: usize) -> Result<()> {
        let total: usize = self.batch_sizes.iter().flatten().sum();
        if total != self.assignment.len() || total != self.n {
            return Err(PasaError::Config(format!(
                "batch sizes sum to {total}, plan covers {} rows",
                self.assignment.len()
            )));
        }
        for (k, sizes) in self.batch_sizes.iter().enumerate() {
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(PasaError::Config(format!("block {k} has an empty batch")));
            }
            if sizes[0] < p {
                return Err(PasaError::Config(format!(
                    "first batch of block {k} has {} rows, fewer than p = {p}",
                    sizes[0]
                )));
            }
        }
        let mut seen = vec![false; n_rows];
        for &r in &self.assignment {
            if r >= n_rows || std::mem::replace(&mut seen[r], true) {
                return Err(PasaError::Config(format!("row {r} is out of range or assigned twice")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Offline,
    Mapreduce,
    Pasa,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Offline => "offline",
            Strategy::Mapreduce => "mapreduce",
            Strategy::Pasa => "pasa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub q: usize,
    #[serde(flatten)]
    pub stream: StreamConfig,
    pub combine_weighting: CombineWeighting,
    /// Use the exact least-squares recursion for Gaussian blocks.
    pub linear_closed_form: bool,
    /// Worker cap; 0 means one per logical core.
    pub threads: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            strategy: Strategy::Pasa,
            k: 10,
            q: 10,
            stream: StreamConfig::default(),
            combine_weighting: CombineWeighting::BlockDispersion,
            linear_closed_form: true,
            threads: 0,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Batches per block actually used by the strategy.
    pub fn effective_q(&self) -> usize {
        match self.strategy {
            Strategy::Pasa => self.q,
            Strategy::Mapreduce | Strategy::Offline => 1,
        }
    }

    pub fn effective_k(&self) -> usize {
        match self.strategy {
            Strategy::Offline => 1,
            _ => self.k,
        }
    }

    fn worker_count(&self, blocks: usize) -> usize {
        let cap = if self.threads == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.threads
        };
        cap.min(blocks).max(1)
    }
}

/// Streams one block through the renewable updates.
fn stream_block(
    family: GlmFamily,
    source: &dyn DataSource,
    plan: &PartitionPlan,
    k: usize,
    config: &RunConfig,
) -> Result<(BlockSummary, f64)> {
    let start = Instant::now();
    let closed_form = config.linear_closed_form && family == GlmFamily::GaussianIdentity;
    let mut state: Option<StreamState> = None;
    for b in 0..plan.batch_sizes[k].len() {
        let batch = source.gather(plan.batch_rows(k, b)).map_err(|e| e.in_block(k, Some(b)))?;
        let next = match &state {
            None => StreamState::init_block(family, &batch, &config.stream),
            Some(s) if closed_form => s.renew_update_linear(&batch),
            Some(s) => s.renew_update(&batch, &config.stream),
        };
        state = Some(next.map_err(|e| e.in_block(k, Some(b)))?);
    }
    let state = state.ok_or_else(|| PasaError::Config(format!("block {k} has no batches")))?;
    Ok((state.finalize_block(k), start.elapsed().as_secs_f64()))
}

/// Streams every block of `plan` (in parallel up to `config.threads`) and combines them.
pub fn run_pasa(
    family: GlmFamily,
    source: &dyn DataSource,
    plan: &PartitionPlan,
    config: &RunConfig,
) -> Result<PasaEstimate> {
    let start = Instant::now();
    plan.validate(source.n_rows(), source.p())?;
    let k = plan.k();
    let workers = config.worker_count(k);
    let results: Vec<Result<(BlockSummary, f64)>> = if workers == 1 {
        (0..k).map(|i| stream_block(family, source, plan, i, config)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| PasaError::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            (0..k)
                .into_par_iter()
                .map(|i| stream_block(family, source, plan, i, config))
                .collect()
        })
    };

    let mut summaries = Vec::with_capacity(k);
    let mut block_s = Vec::with_capacity(k);
    for r in results {
        match r {
            Ok((s, t)) => {
                summaries.push(s);
                block_s.push(t);
            }
            Err(e) => return Err(e),
        }
    }
    let mut estimate = combine_with(&summaries, config.combine_weighting)?;
    let combine_s = estimate.timing.combine_s;
    estimate.timing = Timing {
        r_time_s: start.elapsed().as_secs_f64(),
        c_time_s: block_s.iter().sum::<f64>() + combine_s,
        block_s,
        combine_s,
    };
    Ok(estimate)
}

/// PASA with every block processed as a single batch.
pub fn run_mapreduce(
    family: GlmFamily,
    source: &dyn DataSource,
    plan: &PartitionPlan,
    config: &RunConfig,
) -> Result<PasaEstimate> {
    run_pasa(family, source, &plan.single_batches(), config)
}

/// One maximum likelihood fit over all rows, reported as a single block.
pub fn run_offline(family: GlmFamily, source: &dyn DataSource, config: &RunConfig) -> Result<PasaEstimate> {
    let start = Instant::now();
    let data = source.full()?;
    let fit = family.fit_mle(&data, &config.stream.solver)?;
    let fit_s = start.elapsed().as_secs_f64();
    let summary = BlockSummary {
        block_id: 0,
        n_k: fit.n,
        j_k: &fit.j / fit.n as f64,
        beta_k: fit.beta,
        phi_k: fit.phi,
    };
    let mut estimate = combine_with(&[summary], config.combine_weighting)?;
    let combine_s = estimate.timing.combine_s;
    estimate.timing = Timing {
        r_time_s: start.elapsed().as_secs_f64(),
        c_time_s: fit_s + combine_s,
        block_s: vec![fit_s],
        combine_s,
    };
    Ok(estimate)
}

/// Builds the plan for `config` and dispatches to the configured strategy.
pub fn run(family: GlmFamily, source: &dyn DataSource, config: &RunConfig) -> Result<PasaEstimate> {
    match config.strategy {
        Strategy::Offline => run_offline(family, source, config),
        Strategy::Mapreduce => {
            let plan = partition(source.n_rows(), config.k, 1, source.p(), config.seed)?;
            run_mapreduce(family, source, &plan, config)
        }
        Strategy::Pasa => {
            let plan = partition(source.n_rows(), config.k, config.q, source.p(), config.seed)?;
            run_pasa(family, source, &plan, config)
        }
    }
}
