//! `train-toy` and `grad-check`.

use serde::Serialize;
use urbangraph_encoder::fixtures::four_node_batch;
use urbangraph_encoder::{
    dataset_loss, grad_check, retrieval_hit_at_1, toy_dataset, train_toy, training_log_csv,
    write_checkpoint, EncoderParams, GradCheckReport,
};

use crate::config::PipelineConfig;
use crate::error::{Classify, CliError};
use crate::io::{pretty_json, write_file};

pub const TRAIN_DIR: &str = "train";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub pairs: usize,
    pub steps: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    pub hit_at_1: f64,
    pub parameters: usize,
}

pub fn cmd_train_toy(cfg: &PipelineConfig) -> Result<TrainSummary, CliError> {
    const STAGE: &str = "train-toy";
    cfg.validate()?;
    let enc = |e: urbangraph_encoder::EncoderError| e.classify(STAGE);
    let data = toy_dataset(&cfg.encoder, cfg.train.stage, cfg.toy.pairs, cfg.seed).map_err(enc)?;
    let params = EncoderParams::init(&cfg.encoder, cfg.toy.init_seed).map_err(enc)?;
    let loss_before = dataset_loss(&params, &data).map_err(enc)?;
    let outcome = train_toy(&data, params, &cfg.train).map_err(enc)?;
    let loss_after = dataset_loss(&outcome.params, &data).map_err(enc)?;
    let summary = TrainSummary {
        seed: cfg.seed,
        pairs: data.len(),
        steps: outcome.history.len(),
        loss_before,
        loss_after,
        hit_at_1: retrieval_hit_at_1(&outcome.params, &data).map_err(enc)?,
        parameters: outcome.params.num_params(),
    };
    let dir = cfg.out_dir().join(TRAIN_DIR);
    let log = training_log_csv(&outcome.history).map_err(enc)?;
    write_file(
        STAGE,
        &dir.join("checkpoint.ugeckpt"),
        &write_checkpoint(&outcome.params),
    )?;
    write_file(STAGE, &dir.join("log.csv"), log.as_bytes())?;
    write_file(STAGE, &dir.join("summary.json"), &pretty_json(&summary))?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckArgs {
    pub eps: f64,
    pub samples: usize,
    pub tolerance: f64,
}

impl Default for GradCheckArgs {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            samples: 200,
            tolerance: 1e-4,
        }
    }
}

/// Checks gradients on the built-in four-node batch. Exceeding the
/// tolerance is a numeric failure; the report is written either way.
pub fn cmd_grad_check(
    cfg: &PipelineConfig,
    args: GradCheckArgs,
) -> Result<GradCheckReport, CliError> {
    const STAGE: &str = "grad-check";
    cfg.validate()?;
    if !(args.tolerance > 0.0) || args.samples == 0 {
        return Err(CliError::Config(
            "tolerance and samples must be positive".into(),
        ));
    }
    let enc = |e: urbangraph_encoder::EncoderError| e.classify(STAGE);
    let batch = four_node_batch(&cfg.encoder).map_err(enc)?;
    let params = EncoderParams::init(&cfg.encoder, cfg.seed).map_err(enc)?;
    let report = grad_check(&params, &batch, args.eps, args.samples, cfg.seed).map_err(enc)?;
    write_file(
        STAGE,
        &cfg.out_dir().join("grad_check.json"),
        &pretty_json(&report),
    )?;
    if !(report.max_rel_error < args.tolerance) {
        return Err(CliError::numeric(
            STAGE,
            format!(
                "max relative error {:.3e} is not below {:.1e}",
                report.max_rel_error, args.tolerance
            ),
        ));
    }
    Ok(report)
}
