//! Configuration and the stage pipeline behind the `msgsem` binary.

mod config;
mod pipeline;

pub use config::{ModelSettings, RunConfig, SampleSource, Seeds};
pub use pipeline::{
    cmd_eval_theories, cmd_fit_op, cmd_gen_data, cmd_pca, cmd_reproduce, cmd_train, generate_split, Artifacts,
    FitOutcome, GenOutcome, PcaOutcome, ReproduceOutcome, Split, TrainOutcome, REFERENCE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Stage { .. } => 2,
        }
    }
}
