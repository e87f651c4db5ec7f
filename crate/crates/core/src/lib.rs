//! Urban spatial graph toolkit.

pub mod bench;
pub mod geo;
pub mod graph;
pub mod srp;
pub mod subgraph;
pub mod synth;
