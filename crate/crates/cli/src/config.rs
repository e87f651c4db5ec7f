//! Pipeline configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use urbangraph_core::bench::BenchConfig;
use urbangraph_core::graph::GraphBuildConfig;
use urbangraph_core::srp::SrpConfig;
use urbangraph_core::subgraph::ExtractConfig;
use urbangraph_encoder::{EncoderConfig, TrainConfig};

use crate::error::{Classify, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub instances: Option<PathBuf>,
    pub query_embeddings: Option<PathBuf>,
    pub candidate_embeddings: Option<PathBuf>,
    pub k: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            instances: None,
            query_embeddings: None,
            candidate_embeddings: None,
            k: 5,
        }
    }
}

/// Toy-training settings for the `train-toy` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySettings {
    pub pairs: usize,
    pub init_seed: u64,
}

impl Default for ToySettings {
    fn default() -> Self {
        Self {
            pairs: 64,
            init_seed: 11,
        }
    }
}

/// Everything a run needs. Relative input paths resolve against the
/// directory of the config file; the output directory and thread count are
/// run settings and stay out of the echo written into outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub city: String,
    pub geojson: Vec<PathBuf>,
    /// CSV with `id,lon,lat` columns.
    pub images: Option<PathBuf>,
    /// Optional CSV with `image_id,attribute,score` columns.
    pub perception: Option<PathBuf>,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
    pub graph: GraphBuildConfig,
    pub extract: ExtractConfig,
    pub srp: SrpConfig,
    pub bench: BenchConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub toy: ToySettings,
    pub eval: EvalSettings,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            city: "city".into(),
            geojson: Vec::new(),
            images: None,
            perception: None,
            seed: 0,
            out: None,
            jobs: None,
            graph: GraphBuildConfig::default(),
            extract: ExtractConfig::default(),
            srp: SrpConfig::default(),
            bench: BenchConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            toy: ToySettings::default(),
            eval: EvalSettings::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Checks every section and that every named input exists.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.city.trim().is_empty() {
            return Err(CliError::Config("city must not be empty".into()));
        }
        self.graph.validate().map_err(|e| e.classify("config"))?;
        self.extract.validate().map_err(|e| e.classify("config"))?;
        self.srp.validate().map_err(|e| e.classify("config"))?;
        self.bench.validate().map_err(|e| e.classify("config"))?;
        self.encoder.validate().map_err(|e| e.classify("config"))?;
        self.train.validate().map_err(|e| e.classify("config"))?;
        if self.eval.k == 0 {
            return Err(CliError::Config("eval.k must be at least 1".into()));
        }
        if self.toy.pairs < 2 {
            return Err(CliError::Config("toy.pairs must be at least 2".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        let inputs = self
            .geojson
            .iter()
            .chain(&self.images)
            .chain(&self.perception)
            .chain(&self.eval.instances)
            .chain(&self.eval.query_embeddings)
            .chain(&self.eval.candidate_embeddings);
        for p in inputs {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(CliError::Config(format!(
                    "input {} does not exist",
                    full.display()
                )));
            }
        }
        Ok(())
    }

    /// Pretty JSON echo; identical configs give identical bytes.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_gives_defaults() {
        let cfg = PipelineConfig::from_toml("", Path::new("/tmp")).unwrap();
        assert_eq!(cfg.eval.k, 5);
        assert_eq!(cfg.extract, ExtractConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_and_unknown_keys() {
        let cfg = PipelineConfig::from_toml(
            "city = \"Test\"\nseed = 9\n[extract]\nradius_m = 150.0\n[train]\nsteps = 3\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(
            (cfg.seed, cfg.extract.radius_m, cfg.train.steps),
            (9, 150.0, 3)
        );
        assert!(PipelineConfig::from_toml("colour = 1", Path::new(".")).is_err());
        assert!(PipelineConfig::from_toml("[train]\nspeed = 1", Path::new(".")).is_err());
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        let cfg =
            PipelineConfig::from_toml("geojson = [\"nope.geojson\"]", Path::new("/nonexistent"))
                .unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("nope.geojson"));
    }

    #[test]
    fn echo_leaves_out_run_settings() {
        let cfg = PipelineConfig {
            out: Some("/somewhere".into()),
            jobs: Some(3),
            ..PipelineConfig::default()
        };
        let echo = cfg.echo();
        assert!(echo.get("out").is_none() && echo.get("jobs").is_none());
        assert!(echo.get("base_dir").is_none());
    }
}
