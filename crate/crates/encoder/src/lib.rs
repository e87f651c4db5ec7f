//! Desk-scale spatial graph encoder.
//!
//! Nodes are embedded from hashed text tokens and a sinusoidal position code,
//! edges from distance, bearing and displacement, and both feed a stack of
//! edge-conditioned GATv2 layers. Training pairs the center-node readout with
//! pooled text embeddings under an InfoNCE objective. Every backward pass is
//! written by hand and checked against central differences.

mod checkpoint;
mod config;
mod features;
pub mod fixtures;
mod gradcheck;
mod loss;
mod model;
mod params;
mod tensor;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{EncoderConfig, TrainConfig, TrainStage};
pub use features::{
    edge_raw_features, node_text, prepare_graph, spatial_pe, tokenize, GraphInput, TextOverrides,
    DISPLACEMENT_SCALE, RAW_EDGE_FEATURES,
};
pub use gradcheck::{grad_check, BlockError, GradCheckReport};
pub use loss::{cosine, infonce_loss, infonce_with_grads};
pub use model::{
    batch_loss, batch_loss_and_grads, embed_query, embed_text, encode_edges, encode_nodes,
    gatv2_layer, graph_embedding, graph_embedding_of, node_states, ContrastiveBatch, Query,
};
pub use params::{BlockGroup, EncoderParams, Grads, ParamBlock};
pub use train::{
    dataset_loss, retrieval_hit_at_1, toy_dataset, train_toy, training_log_csv, Adam, Example,
    InstructionTemplate, InstructionVariant, StepLog, TrainOutcome, INSTRUCTION_TEMPLATES,
};

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("unknown center node {0:?}")]
    MissingCenter(String),
}
