//! Configuration, acceptance checks, reports and the staged pipeline shared
//! by the command line and the acceptance tests.

pub mod config;
pub mod export;
pub mod pipeline;
pub mod report;
pub mod verify;

pub use config::{ExperimentConfig, Tolerances, EXPERIMENTS};
pub use export::Table;
pub use pipeline::{run_pipeline, Artifacts, Summary};
pub use report::{ComparisonReport, SignedHeight};
pub use verify::{Check, Verifier};
