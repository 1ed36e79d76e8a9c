//! Command implementations behind the `photonlab` binary.

pub mod bench;
pub mod config;
pub mod error;
pub mod files;
pub mod learn;
pub mod prepare;
pub mod recon;
pub mod report;

pub use bench::{cmd_bench, run_bench, BenchArgs, BenchOutcome, BenchSummary};
pub use config::{ExperimentConfig, SEED_ENV};
pub use error::CliError;
pub use learn::{cmd_infer, cmd_train, InferArgs, TrainArgs};
pub use prepare::{cmd_dataset_prepare, cmd_simulate, cmd_synth, PrepareArgs, SimulateArgs, SynthArgs};
pub use recon::{cmd_tv, TvArgs};
pub use report::{cmd_eval, cmd_profile, EvalArgs, ProfileArgs};
