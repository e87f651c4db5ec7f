use serde::{Deserialize, Serialize};

use crate::EncoderError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden_dim: usize,
    pub pe_dim: usize,
    pub edge_dim: usize,
    pub token_dim: usize,
    pub vocab_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub temperature: f64,
    pub leaky_slope: f64,
    /// Disabling layer normalization is only meant for gradient tests.
    pub layer_norm: bool,
    pub layer_norm_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            pe_dim: 64,
            edge_dim: 64,
            token_dim: 64,
            vocab_size: 65_536,
            num_layers: 2,
            num_heads: 4,
            f_min: 1.0 / 10_000.0,
            f_max: 1.0,
            temperature: 0.05,
            leaky_slope: 0.2,
            layer_norm: true,
            layer_norm_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::Config(m.to_string()));
        if self.hidden_dim == 0 || self.edge_dim == 0 || self.token_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.pe_dim == 0 || !self.pe_dim.is_multiple_of(4) {
            return bad("pe_dim must be a positive multiple of 4");
        }
        if self.num_heads == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return bad("hidden_dim must be divisible by num_heads");
        }
        if self.vocab_size == 0 || self.vocab_size > 1 << 24 {
            return bad("vocab_size must be in 1..=2^24");
        }
        if self.num_layers > 16 {
            return bad("at most 16 layers");
        }
        if self.hidden_dim > 4096
            || self.edge_dim > 4096
            || self.token_dim > 4096
            || self.pe_dim > 4096
        {
            return bad("dimensions above 4096 are not supported");
        }
        if !(self.f_min.is_finite()
            && self.f_max.is_finite()
            && 0.0 < self.f_min
            && self.f_min <= self.f_max)
        {
            return bad("need 0 < f_min <= f_max");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.leaky_slope.is_finite() && (0.0..=1.0).contains(&self.leaky_slope)) {
            return bad("leaky_slope must be in [0, 1]");
        }
        if !(self.layer_norm_eps.is_finite() && self.layer_norm_eps > 0.0) {
            return bad("layer_norm_eps must be positive");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainStage {
    /// Text queries only; every block trains at the base rate.
    One,
    /// Graph queries; text-side blocks train at `text_lr_ratio` of the base.
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: TrainStage,
    pub steps: usize,
    pub batch_size: usize,
    pub graph_lr: f64,
    pub text_lr_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: TrainStage::Two,
            steps: 200,
            batch_size: 32,
            graph_lr: 5e-5,
            text_lr_ratio: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.batch_size < 2 {
            return Err(EncoderError::Config("batch_size must be at least 2".into()));
        }
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.graph_lr) || !finite_nonneg(self.text_lr_ratio) {
            return Err(EncoderError::Config(
                "learning rates must be finite and >= 0".into(),
            ));
        }
        if !((0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0)
        {
            return Err(EncoderError::Config(
                "need betas in [0, 1) and adam_eps > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn text_lr(&self) -> f64 {
        match self.stage {
            TrainStage::One => self.graph_lr,
            TrainStage::Two => self.graph_lr * self.text_lr_ratio,
        }
    }
}
