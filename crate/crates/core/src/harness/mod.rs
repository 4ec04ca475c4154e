//! Benchmark harness: dataset ingestion, configuration, seeded replicated
//! experiments and λ tuning.

pub mod config;
pub mod data;
pub mod experiment;
pub mod tune;

pub use config::{DatasetSource, ExperimentConfig, Method, RawConfig, WeightSource};
pub use data::{load_csv, Standardizer, SyntheticSpec};
pub use experiment::{prepare_replicate, run_experiment, ExperimentOutput, PreparedReplicate};
pub use tune::{tune_lambda, write_lambda};
