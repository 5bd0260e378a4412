//! Configuration, seeded campaign execution, the environment catalog and result files.

pub mod catalog;
pub mod config;
pub mod rng;
pub mod run;
pub mod summary;
pub mod verify;

pub use catalog::{catalog_environment, EnvOverrides, CATALOG};
pub use config::{CampaignConfig, EmitFlags, EnvironmentConfig, PolicySpec};
pub use run::{run_campaign, run_campaign_on, run_one, CampaignResult, RunFailure, RunRecord, StepRecord};
pub use summary::{mean_stderr, read_trace_csv, summary_from_trace, trace_csv_bytes, write_trace_csv, Summary};
