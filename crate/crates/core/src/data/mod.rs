//! Data sources: simulated GLM data, CSV ingestion, and train/test splits.

pub mod csv;
pub mod sim;

use crate::error::{PasaError, Result};
use crate::executor::PartitionPlan;

pub use self::csv::{read_csv_all, read_csv_batches, write_csv, CategoricalColumn, CsvBatches, CsvSchema, NumericColumn};
pub use self::sim::{simulate, simulate_all, SimSpec, SimStream};

/// The first `train_blocks` blocks become the training plan; rows of the
/// remaining blocks, in plan order, form the test set.
pub fn split_train_test(plan: &PartitionPlan, train_blocks: usize) -> Result<(PartitionPlan, Vec<usize>)> {
    if train_blocks == 0 || train_blocks >= plan.k() {
        return Err(PasaError::Config(format!(
            "train_blocks = {train_blocks} must be in 1..{}",
            plan.k()
        )));
    }
    let train_rows: usize = (0..train_blocks).map(|k| plan.block_size(k)).sum();
    let train = PartitionPlan {
        n: train_rows,
        seed: plan.seed,
        batch_sizes: plan.batch_sizes[..train_blocks].to_vec(),
        assignment: plan.assignment[..train_rows].to_vec(),
    };
    let test = plan.assignment[train_rows..].to_vec();
    Ok((train, test))
}
