use std::fmt::Write as _;

use super::config::{Ablation, TrainConfig};
use super::regressor::pretrain_regressor;
use super::stages::{stage1, stage2, stage3, TrainState};
use super::telemetry::Telemetry;
use crate::data::{GzslDataset, TrainingView};
use crate::error::Result;
use crate::evalcls::{evaluate_gzsl, harmonic_mean, Evaluation};
use crate::model::{Architecture, DecGan};
use crate::numcore::Rng;

/// Rng stream ids derived from the run seed.
const INIT_STREAM: u64 = 0;
const STAGE_STREAM: u64 = 10;
const EVAL_STREAM: u64 = 20;

/// Initializes the networks and regressor from the training view alone.
pub fn init_state(view: &TrainingView<'_>, config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    let feature_dim = view.unseen_pool.cols();
    let dims = config.model.dims(feature_dim, view.embeddings.width());
    let arch = if config.baseline_mode {
        Architecture::NotDecoupled
    } else {
        Architecture::Decoupled
    };
    let mut rng = Rng::new(config.seed).fork(INIT_STREAM);
    let models = DecGan::init(&dims, arch, &mut rng, config.model.init_scale, config.model.leaky_slope)?;
    let c = view.embeddings.rows_for(&view.seen_train.labels)?;
    let regressor = pretrain_regressor(&view.seen_train.features, &c, config.ridge)?;
    Ok(TrainState::new(models, regressor))
}

/// Runs one stage with its seed-derived rng.
pub fn run_stage(st: &mut TrainState, stage: u8, view: &TrainingView<'_>, config: &TrainConfig) -> Result<()> {
    let mut rng = Rng::new(config.seed).fork(STAGE_STREAM + stage as u64);
    match stage {
        1 => stage1(st, view, config, &mut rng),
        2 => stage2(st, view, config, &mut rng),
        _ => stage3(st, view, config, &mut rng),
    }
}

/// Initialization plus every stage in the mask, in order. Sees only the
/// training view.
pub fn train(view: &TrainingView<'_>, config: &TrainConfig) -> Result<TrainState> {
    train_with(view, config, |_, _| Ok(()))
}

/// [`train`], calling `after_stage` at every stage boundary.
pub fn train_with(
    view: &TrainingView<'_>,
    config: &TrainConfig,
    mut after_stage: impl FnMut(u8, &TrainState) -> Result<()>,
) -> Result<TrainState> {
    let mut st = init_state(view, config)?;
    for stage in config.stage_mask.stages() {
        run_stage(&mut st, stage, view, config)?;
        after_stage(stage, &st)?;
    }
    Ok(st)
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub state: TrainState,
    pub evaluation: Evaluation,
}

impl PipelineOutput {
    pub fn models(&self) -> &DecGan {
        &self.state.models
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.state.telemetry
    }
}

/// Trains, then evaluates on the held-out splits.
pub fn run_pipeline(dataset: &GzslDataset, config: &TrainConfig) -> Result<PipelineOutput> {
    run_pipeline_with(dataset, config, |_, _| Ok(()))
}

/// [`run_pipeline`] with a stage-boundary callback.
pub fn run_pipeline_with(
    dataset: &GzslDataset,
    config: &TrainConfig,
    after_stage: impl FnMut(u8, &TrainState) -> Result<()>,
) -> Result<PipelineOutput> {
    let state = train_with(&dataset.training_view(), config, after_stage)?;
    let evaluation = evaluate_trained(&state.models, dataset, config)?;
    Ok(PipelineOutput { state, evaluation })
}

/// Evaluation with the seed-derived rng [`run_pipeline`] uses.
pub fn evaluate_trained(models: &DecGan, dataset: &GzslDataset, config: &TrainConfig) -> Result<Evaluation> {
    let mut rng = Rng::new(config.seed).fork(EVAL_STREAM);
    evaluate_gzsl(models, dataset, &config.eval, &mut rng)
}

/// Outcome of one (configuration, seed) run.
#[derive(Clone, Debug)]
pub struct AblationRecord {
    pub ablation: Ablation,
    pub seed: u64,
    /// `(a_u, a_s, H)` or the error message.
    pub outcome: std::result::Result<(f64, f64, f64), String>,
}

/// Per-configuration means over successful runs.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationSummary {
    pub ablation: Ablation,
    pub a_u: f64,
    pub a_s: f64,
    /// Mean of per-run H.
    pub h: f64,
    /// H of the mean accuracies, for comparison.
    pub h_of_means: f64,
    pub runs: usize,
    pub failures: usize,
}

/// Runs every ablation for every seed. Failures are recorded, not fatal.
pub fn run_ablations(
    dataset: &GzslDataset,
    base: &TrainConfig,
    ablations: &[Ablation],
    seeds: &[u64],
    mut on_record: impl FnMut(&AblationRecord),
) -> Vec<AblationRecord> {
    let mut out = Vec::new();
    for &ablation in ablations {
        for &seed in seeds {
            let config = TrainConfig {
                seed,
                ..ablation.apply(base)
            };
            let outcome = run_pipeline(dataset, &config)
                .map(|o| {
                    let m = o.evaluation.metrics;
                    (m.a_u, m.a_s, m.h)
                })
                .map_err(|e| e.to_string());
            let rec = AblationRecord { ablation, seed, outcome };
            on_record(&rec);
            out.push(rec);
        }
    }
    out
}

pub fn summarize(records: &[AblationRecord]) -> Vec<AblationSummary> {
    let mut order: Vec<Ablation> = Vec::new();
    for r in records {
        if !order.contains(&r.ablation) {
            order.push(r.ablation);
        }
    }
    order
        .into_iter()
        .map(|ablation| {
            let mine: Vec<&AblationRecord> = records.iter().filter(|r| r.ablation == ablation).collect();
            let ok: Vec<(f64, f64, f64)> = mine.iter().filter_map(|r| r.outcome.clone().ok()).collect();
            let n = ok.len().max(1) as f64;
            let a_u = ok.iter().map(|v| v.0).sum::<f64>() / n;
            let a_s = ok.iter().map(|v| v.1).sum::<f64>() / n;
            let h = ok.iter().map(|v| v.2).sum::<f64>() / n;
            AblationSummary {
                ablation,
                a_u,
                a_s,
                h,
                h_of_means: harmonic_mean(a_s.clamp(0.0, 1.0), a_u.clamp(0.0, 1.0)).unwrap_or(0.0),
                runs: ok.len(),
                failures: mine.len() - ok.len(),
            }
        })
        .collect()
}

/// `config,seed,a_u,a_s,H,error` rows.
pub fn records_csv(records: &[AblationRecord]) -> String {
    let mut out = String::from("config,seed,a_u,a_s,H,error\n");
    for r in records {
        match &r.outcome {
            Ok((u, s, h)) => writeln!(out, "{},{},{u:?},{s:?},{h:?},", r.ablation, r.seed).unwrap(),
            Err(e) => writeln!(out, "{},{},,,,\"{}\"", r.ablation, r.seed, e.replace('"', "'")).unwrap(),
        }
    }
    out
}

/// One row per configuration; `H` averages per-run H.
pub fn summary_csv(rows: &[AblationSummary]) -> String {
    let mut out = String::from("config,a_u,a_s,H,H_of_mean_acc,runs,failures\n");
    for r in rows {
        writeln!(
            out,
            "{},{:.4},{:.4},{:.4},{:.4},{},{}",
            r.ablation, r.a_u, r.a_s, r.h, r.h_of_means, r.runs, r.failures
        )
        .unwrap();
    }
    out
}
