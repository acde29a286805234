//! Optimizer, critic/generator alternation and the staged training
//! pipeline.
//!
//! Stage 1 trains both branches on labeled seen data. Stage 2 fine-tunes
//! the unconditional branch on the unlabeled unseen pool. Stage 3 trains
//! the conditional generator against the unconditional critic on the
//! unseen pool.

mod adam;
mod config;
mod pipeline;
mod regressor;
mod stages;
mod telemetry;

pub use adam::{adam_step, adam_step_network, AdamParams, OptimizerState};
pub use config::{Ablation, ModelSettings, RecTarget, StageEpochs, StageMask, TrainConfig};
pub use pipeline::{
    evaluate_trained, init_state, records_csv, run_ablations, run_pipeline, run_pipeline_with, run_stage, summarize,
    summary_csv, train, train_with, AblationRecord, AblationSummary, PipelineOutput,
};
pub use regressor::{pretrain_regressor, regressor_objective};
pub use stages::{stage1, stage2, stage3, Optimizers, TrainState};
pub use telemetry::{counts_from_csv, Net, Record, Telemetry, UpdateCounts};
