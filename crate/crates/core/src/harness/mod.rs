//! Experiment harness: data loading, configuration, model selection and output.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod output;
pub mod rng;

pub use config::{Algorithm, ExperimentConfig, Task};
pub use dataset::{load_dataset, DataFormat, Dataset};
pub use experiment::{run_experiment, ExperimentOutput, GridPoint, MetricsReport, Method};
