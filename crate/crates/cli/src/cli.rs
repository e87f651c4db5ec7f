//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::{cmd_gen_bench, run_benchmark_eval};
use crate::config::PipelineConfig;
use crate::encoder::{cmd_grad_check, cmd_train_toy, GradCheckArgs};
use crate::error::CliError;
use crate::pipeline::{
    cmd_anchor_images, cmd_build_graph, cmd_emit_samples, cmd_extract_subgraphs,
    cmd_gen_captions_prompts, cmd_gen_srp, run_dataset_build,
};

#[derive(Debug, Parser)]
#[command(
    name = "urbangraph",
    version,
    about = "Urban spatial graph datasets and benchmarks"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory (default: out).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for per-image stages.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load GeoJSON and write the spatial graph.
    BuildGraph,
    /// Add image viewpoints to the written graph.
    AnchorImages,
    /// Write one subgraph document per image.
    ExtractSubgraphs,
    /// Write spatial reasoning paths per image.
    GenSrp,
    /// Write caption prompts from the subgraph documents.
    GenCaptionsPrompts,
    /// Write stage-1 and stage-2 training samples from the paths.
    EmitSamples,
    /// Write benchmark instances for every image.
    GenBench,
    /// Score embeddings against benchmark instances.
    Eval,
    /// Train the toy encoder on a synthetic separable dataset.
    TrainToy,
    /// Compare analytic and finite-difference encoder gradients.
    GradCheck {
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Run every dataset stage into a fresh output tree.
    FullBuild,
}

pub fn load_config(g: &GlobalArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if g.out.is_some() {
        cfg.out = g.out.clone();
    }
    if g.jobs.is_some() {
        cfg.jobs = g.jobs;
    }
    Ok(cfg)
}

/// Runs one command and returns the line to print on success.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::BuildGraph => cmd_build_graph(&cfg),
        Command::AnchorImages => cmd_anchor_images(&cfg),
        Command::ExtractSubgraphs => cmd_extract_subgraphs(&cfg),
        Command::GenSrp => cmd_gen_srp(&cfg),
        Command::GenCaptionsPrompts => cmd_gen_captions_prompts(&cfg),
        Command::EmitSamples => cmd_emit_samples(&cfg),
        Command::GenBench => cmd_gen_bench(&cfg),
        Command::Eval => run_benchmark_eval(&cfg).map(|r| r.to_csv().trim_end().to_string()),
        Command::TrainToy => cmd_train_toy(&cfg).map(|s| json(&s)),
        Command::GradCheck {
            eps,
            samples,
            tolerance,
        } => {
            let args = GradCheckArgs {
                eps: *eps,
                samples: *samples,
                tolerance: *tolerance,
            };
            cmd_grad_check(&cfg, args).map(|r| {
                format!(
                    "max relative error {:.3e} over {} samples ({} redrawn)",
                    r.max_rel_error, r.sampled_params, r.resampled
                )
            })
        }
        Command::FullBuild => run_dataset_build(&cfg).map(|m| json(&m.counts)),
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("summary serializes")
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.global.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&cli) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
