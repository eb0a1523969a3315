//! Replication studies, benchmarks, model selection and report output.

pub mod bench;
pub mod emit;
pub mod metrics;
pub mod replicate;
pub mod select;

pub use self::bench::{run_bench, BenchConfig, BenchRecord, BenchReport, BenchSummary};
pub use self::emit::{emit_reports, parse_reports, EstimateRecord, ReportFormat, SCHEMA_VERSION};
pub use self::metrics::{auc, confusion_counts, corrected_count, ConfusionCounts};
pub use self::replicate::{run_replications, ReplicationConfig, ReplicationReport, RepRecord};
pub use self::select::{
    forward_select, pairwise_interactions, simulate_selection_table, planted_term, CandidateScore, FeatureTable, SelectionConfig,
    SelectionStep, SelectionTrace, Term, PLANTED_EFFECT,
};
