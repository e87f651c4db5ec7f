//! Named parameter blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{EncoderConfig, EncoderError};

/// Which learning rate a block follows during graph-conditioned training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockGroup {
    Graph,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub group: BlockGroup,
    pub data: Vec<f64>,
}

/// Indices of one attention layer's blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerIdx {
    pub w_s: usize,
    pub w_t: usize,
    pub w_e: usize,
    pub att: usize,
    pub w_o: usize,
    pub ln_g: usize,
    pub ln_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub token_table: usize,
    pub text_proj: usize,
    pub node_w: usize,
    pub node_b: usize,
    pub edge_w1: usize,
    pub edge_b1: usize,
    pub edge_w2: usize,
    pub edge_b2: usize,
    pub layers: Vec<LayerIdx>,
    pub readout: usize,
}

/// Block names, shapes and groups for a config, in storage order.
pub(crate) fn block_specs(cfg: &EncoderConfig) -> Vec<(String, usize, usize, BlockGroup)> {
    use BlockGroup::*;
    let (d, e) = (cfg.hidden_dim, cfg.edge_dim);
    let mut v = vec![
        (
            "token_table".to_string(),
            cfg.vocab_size,
            cfg.token_dim,
            Text,
        ),
        ("text_proj".to_string(), cfg.token_dim, d, Text),
        (
            "node_proj.w".to_string(),
            cfg.token_dim + cfg.pe_dim,
            d,
            Graph,
        ),
        ("node_proj.b".to_string(), 1, d, Graph),
        (
            "edge_mlp.w1".to_string(),
            crate::RAW_EDGE_FEATURES,
            e,
            Graph,
        ),
        ("edge_mlp.b1".to_string(), 1, e, Graph),
        ("edge_mlp.w2".to_string(), e, e, Graph),
        ("edge_mlp.b2".to_string(), 1, e, Graph),
    ];
    for l in 0..cfg.num_layers {
        for (name, r, c) in [
            ("w_s", d, d),
            ("w_t", d, d),
            ("w_e", e, d),
            ("att", 1, d),
            ("w_o", d, d),
            ("ln_gamma", 1, d),
            ("ln_beta", 1, d),
        ] {
            v.push((format!("gat{l}.{name}"), r, c, Graph));
        }
    }
    v.push(("readout".to_string(), d, d, Graph));
    v
}

fn layout(cfg: &EncoderConfig) -> Layout {
    let base = 8;
    Layout {
        token_table: 0,
        text_proj: 1,
        node_w: 2,
        node_b: 3,
        edge_w1: 4,
        edge_b1: 5,
        edge_w2: 6,
        edge_b2: 7,
        layers: (0..cfg.num_layers)
            .map(|l| {
                let o = base + 7 * l;
                LayerIdx {
                    w_s: o,
                    w_t: o + 1,
                    w_e: o + 2,
                    att: o + 3,
                    w_o: o + 4,
                    ln_g: o + 5,
                    ln_b: o + 6,
                }
            })
            .collect(),
        readout: base + 7 * cfg.num_layers,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    cfg: EncoderConfig,
    pub(crate) layout: Layout,
    pub blocks: Vec<ParamBlock>,
}

impl EncoderParams {
    /// Deterministic initialization: Glorot-uniform matrices, unit layer-norm
    /// scales, zero biases and a uniform(-1, 1) token table.
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = block_specs(cfg)
            .into_iter()
            .map(|(name, rows, cols, group)| {
                let n = rows * cols;
                let data = if name == "token_table" {
                    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
                } else if name.ends_with("ln_gamma") {
                    vec![1.0; n]
                } else if rows == 1 && !name.ends_with("att") {
                    vec![0.0; n]
                } else {
                    let fan = if name.ends_with("att") {
                        cfg.head_dim() + 1
                    } else {
                        rows + cols
                    };
                    let limit = (6.0 / fan as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
                };
                ParamBlock {
                    name,
                    rows,
                    cols,
                    group,
                    data,
                }
            })
            .collect();
        Ok(Self {
            layout: layout(cfg),
            cfg: cfg.clone(),
            blocks,
        })
    }

    /// Rebuilds parameters from blocks read elsewhere; names and shapes must
    /// match the config's layout exactly.
    pub fn from_blocks(cfg: &EncoderConfig, blocks: Vec<ParamBlock>) -> Result<Self, EncoderError> {
        cfg.validate()?;
        let specs = block_specs(cfg);
        if specs.len() != blocks.len() {
            return Err(EncoderError::Shape(format!(
                "expected {} blocks, got {}",
                specs.len(),
                blocks.len()
            )));
        }
        for ((name, r, c, g), b) in specs.iter().zip(&blocks) {
            if (&b.name, b.rows, b.cols, b.group) != (name, *r, *c, *g) || b.data.len() != r * c {
                return Err(EncoderError::Shape(format!(
                    "block {:?} does not match layout entry {name:?} {r}x{c}",
                    b.name
                )));
            }
            if b.data.iter().any(|x| !x.is_finite()) {
                return Err(EncoderError::Numeric(format!(
                    "block {name:?} has non-finite values"
                )));
            }
        }
        Ok(Self {
            layout: layout(cfg),
            cfg: cfg.clone(),
            blocks,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub(crate) fn data(&self, i: usize) -> &[f64] {
        &self.blocks[i].data
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            blocks: self
                .blocks
                .iter()
                .map(|b| vec![0.0; b.data.len()])
                .collect(),
        }
    }
}

/// Gradients, one vector per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub blocks: Vec<Vec<f64>>,
}

impl Grads {
    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|x| x.is_finite())
    }
}
