//! Parallel-and-stream estimation for generalized linear models.
//!
//! Data are split into `K` blocks of `Q` batches. Each block is processed
//! independently by renewable (streaming) updates that keep only a
//! `p`-vector and a `p x p` information matrix; the block summaries are then
//! combined in one information-weighted step.
//!
//! ```
//! use pasa::{run, simulate_all, GlmFamily, RunConfig, SimSpec};
//!
//! let data = simulate_all(&SimSpec { n: 10_000, ..SimSpec::default() }).unwrap();
//! let est = run(GlmFamily::GaussianIdentity, &data, &RunConfig { k: 5, q: 4, ..RunConfig::default() }).unwrap();
//! assert_eq!(est.beta.len(), 5);
//! ```

pub mod combine;
pub mod config;
pub mod data;
pub mod error;
pub mod executor;
pub mod glm;
pub mod linalg;
pub mod report;
pub mod stream;

pub use combine::{combine, combine_with, gmm_oracle, normal_critical_value, CombineWeighting, GmmConfig, PasaEstimate, Timing, WaldInterval};
pub use config::FileConfig;
pub use data::{simulate, simulate_all, split_train_test, CsvSchema, SimSpec};
pub use error::{PasaError, Result};
pub use executor::{partition, run, run_mapreduce, run_offline, run_pasa, DataSource, PartitionPlan, RunConfig, Strategy};
pub use glm::{BatchData, FitResult, GlmFamily, SolverConfig};
pub use stream::{BlockSummary, DispersionWeighting, StreamConfig, StreamState};
