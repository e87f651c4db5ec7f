//! `gen-bench` and `eval`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use urbangraph_core::bench::{
    evaluate, gen_geolocation, gen_image_retrieval, gen_perception, gen_spatial_grounding,
    load_embeddings, parse_instances, BenchmarkInstance, EvalReport, Generated, Skip, Task,
};
use urbangraph_core::graph::SpatialGraph;

use crate::config::PipelineConfig;
use crate::error::{Classify, CliError};
use crate::io::{jsonl, pretty_json, read_perception, write_file, PerceptionScores};
use crate::pipeline::{images, per_image, read_graph_dir, thread_pool};

pub const BENCH_DIR: &str = "bench";
pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const SKIPPED_FILE: &str = "skipped.jsonl";
pub const EVAL_DIR: &str = "eval";

const GROUNDING: [Task; 4] = [
    Task::NearestStreet,
    Task::NearestPoi,
    Task::Distance,
    Task::DistanceDirection,
];

/// Instances and skips for one viewpoint, in a fixed task order.
pub fn image_instances(
    graph: &SpatialGraph,
    id: &str,
    scores: Option<&PerceptionScores>,
    cfg: &PipelineConfig,
) -> Result<Vec<Generated>, CliError> {
    let (city, b, seed) = (cfg.city.as_str(), &cfg.bench, cfg.seed);
    let wrap = |e: urbangraph_core::bench::BenchError| match e.classify("gen-bench") {
        CliError::Data { stage, message } => CliError::Data {
            stage,
            message: format!("image {id}: {message}"),
        },
        other => other,
    };
    let mut out = vec![
        gen_geolocation(graph, id, city, b, seed).map_err(wrap)?,
        gen_image_retrieval(graph, id, city, b, seed).map_err(wrap)?,
    ];
    if let Some(list) = scores.and_then(|s| s.get(id)) {
        for &(attr, score) in list {
            out.push(gen_perception(graph, id, city, attr, score, b, seed).map_err(wrap)?);
        }
    }
    for task in GROUNDING {
        out.push(gen_spatial_grounding(graph, id, city, task, b, seed).map_err(wrap)?);
    }
    Ok(out)
}

pub fn cmd_gen_bench(cfg: &PipelineConfig) -> Result<String, CliError> {
    const STAGE: &str = "gen-bench";
    cfg.validate()?;
    let root = cfg.out_dir();
    let graph = read_graph_dir(STAGE, &root)?;
    let imgs = images(cfg)?;
    let scores = match &cfg.perception {
        Some(p) => Some(read_perception(&cfg.resolve(p))?),
        None => None,
    };
    let ids: Vec<&str> = imgs.iter().map(|(id, _)| id.as_str()).collect();
    let pool = thread_pool(cfg.jobs)?;
    let per = per_image(&pool, &ids, |id| {
        image_instances(&graph, id, scores.as_ref(), cfg)
    })?;
    let mut instances: Vec<BenchmarkInstance> = Vec::new();
    let mut skipped: Vec<Skip> = Vec::new();
    for g in per.into_iter().flatten() {
        match g {
            Ok(i) => instances.push(i),
            Err(s) => skipped.push(s),
        }
    }
    instances.sort_by(|a, b| a.id.cmp(&b.id));
    skipped.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let dir = root.join(BENCH_DIR);
    write_file(STAGE, &dir.join(INSTANCES_FILE), &jsonl(&instances))?;
    write_file(STAGE, &dir.join(SKIPPED_FILE), &jsonl(&skipped))?;
    Ok(format!(
        "wrote {} instances ({} skipped)",
        instances.len(),
        skipped.len()
    ))
}

#[derive(Serialize)]
struct ReportFile<'a> {
    seed: u64,
    config: serde_json::Value,
    report: &'a EvalReport,
}

fn required(cfg: &PipelineConfig, p: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    p.as_ref()
        .map(|p| cfg.resolve(p))
        .ok_or_else(|| CliError::Config(format!("eval.{what} is not set")))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io("eval", path, e))
}

/// Pre-flight id check, scoring, then JSON and CSV reports. Nothing is
/// written unless every embedding is present.
pub fn run_benchmark_eval(cfg: &PipelineConfig) -> Result<EvalReport, CliError> {
    const STAGE: &str = "eval";
    cfg.validate()?;
    let root = cfg.out_dir();
    let instances_path = match &cfg.eval.instances {
        Some(p) => cfg.resolve(p),
        None => root.join(BENCH_DIR).join(INSTANCES_FILE),
    };
    let queries_path = required(cfg, &cfg.eval.query_embeddings, "query_embeddings")?;
    let cands_path = required(cfg, &cfg.eval.candidate_embeddings, "candidate_embeddings")?;
    let instances = parse_instances(&read_text(&instances_path)?)
        .map_err(|e| CliError::data(STAGE, format!("{}: {e}", instances_path.display())))?;
    let queries = load_embeddings(&read_text(&queries_path)?)
        .map_err(|e| CliError::data(STAGE, format!("{}: {e}", queries_path.display())))?;
    let cands = load_embeddings(&read_text(&cands_path)?)
        .map_err(|e| CliError::data(STAGE, format!("{}: {e}", cands_path.display())))?;
    let pool = thread_pool(cfg.jobs)?;
    let report = pool
        .install(|| evaluate(&instances, &queries, &cands, cfg.eval.k))
        .map_err(|e| e.classify(STAGE))?;
    let dir = root.join(EVAL_DIR);
    let file = ReportFile {
        seed: cfg.seed,
        config: cfg.echo(),
        report: &report,
    };
    write_file(STAGE, &dir.join("report.json"), &pretty_json(&file))?;
    write_file(STAGE, &dir.join("report.csv"), report.to_csv().as_bytes())?;
    Ok(report)
}
