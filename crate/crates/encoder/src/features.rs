//! Tokens, positional codes and raw edge features.

use std::collections::HashMap;
use std::f64::consts::PI;

use urbangraph_core::geo::GeoPoint;
use urbangraph_core::graph::GraphNode;
use urbangraph_core::subgraph::Subgraph;

use crate::{EncoderConfig, EncoderError};

/// `[ln(1 + d), sin θ, cos θ, Δlon, Δlat]`.
pub const RAW_EDGE_FEATURES: usize = 5;

/// Displacements are given in thousandths of a degree, so a typical
/// neighbourhood edge lands near 0.1 instead of 1e-4.
pub const DISPLACEMENT_SCALE: f64 = 1000.0;

fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Lower-cased alphanumeric runs hashed into `0..vocab_size`.
pub fn tokenize(text: &str, vocab_size: usize) -> Vec<u32> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| (fnv1a64(w) % vocab_size as u64) as u32)
        .collect()
}

/// Name, category and attributes (key then value, in key order).
pub fn node_text(n: &GraphNode) -> String {
    let mut parts: Vec<&str> = Vec::new();
    parts.extend(n.name.as_deref());
    parts.extend(n.category.as_deref());
    for (k, v) in &n.attrs {
        parts.push(k);
        parts.push(v);
    }
    parts.join(" ")
}

/// Multi-frequency sinusoidal code of normalized longitude and latitude.
///
/// Layout: for lon then lat, for each frequency `f_k` (geometric from
/// `f_min` to `f_max`), `[sin 2πf_k c, cos 2πf_k c]`.
pub fn spatial_pe(p: GeoPoint, cfg: &EncoderConfig) -> Vec<f64> {
    let k_count = cfg.pe_dim / 4;
    let freq = |k: usize| {
        if k_count == 1 {
            cfg.f_max
        } else {
            cfg.f_min * (cfg.f_max / cfg.f_min).powf(k as f64 / (k_count - 1) as f64)
        }
    };
    let mut out = Vec::with_capacity(cfg.pe_dim);
    for c in [p.lon() / 180.0, p.lat() / 90.0] {
        for k in 0..k_count {
            let x = 2.0 * PI * freq(k) * c;
            out.push(x.sin());
            out.push(x.cos());
        }
    }
    out
}

/// Raw features of an edge traversed from `from` to `to`.
pub fn edge_raw_features(
    distance_m: f64,
    bearing_deg: f64,
    from: GeoPoint,
    to: GeoPoint,
) -> [f64; RAW_EDGE_FEATURES] {
    let theta = bearing_deg.to_radians();
    [
        distance_m.ln_1p(),
        theta.sin(),
        theta.cos(),
        (to.lon() - from.lon()) * DISPLACEMENT_SCALE,
        (to.lat() - from.lat()) * DISPLACEMENT_SCALE,
    ]
}

/// Externally supplied text embeddings by node id; they replace the pooled
/// token rows for those nodes.
pub type TextOverrides = HashMap<String, Vec<f64>>;

/// A subgraph prepared for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub node_ids: Vec<String>,
    pub tokens: Vec<Vec<u32>>,
    pub text_override: Vec<Option<Vec<f64>>>,
    /// `n × pe_dim`.
    pub pe: Vec<f64>,
    /// Directed `(src, dst)` pairs, both directions of every edge, sorted.
    pub edges: Vec<(usize, usize)>,
    pub raw: Vec<[f64; RAW_EDGE_FEATURES]>,
    pub center: usize,
}

impl GraphInput {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    /// The same graph with node `order[k]` stored at position `k`.
    pub fn permuted(&self, order: &[usize]) -> GraphInput {
        let n = self.len();
        let pe_dim = self.pe.len() / n.max(1);
        let mut new_pos = vec![0; n];
        for (k, &o) in order.iter().enumerate() {
            new_pos[o] = k;
        }
        let mut edges: Vec<((usize, usize), [f64; RAW_EDGE_FEATURES])> = self
            .edges
            .iter()
            .zip(&self.raw)
            .map(|(&(s, d), r)| ((new_pos[s], new_pos[d]), *r))
            .collect();
        edges.sort_by_key(|a| (a.0 .1, a.0 .0));
        GraphInput {
            node_ids: order.iter().map(|&o| self.node_ids[o].clone()).collect(),
            tokens: order.iter().map(|&o| self.tokens[o].clone()).collect(),
            text_override: order
                .iter()
                .map(|&o| self.text_override[o].clone())
                .collect(),
            pe: order
                .iter()
                .flat_map(|&o| self.pe[o * pe_dim..(o + 1) * pe_dim].iter().copied())
                .collect(),
            edges: edges.iter().map(|e| e.0).collect(),
            raw: edges.iter().map(|e| e.1).collect(),
            center: new_pos[self.center],
        }
    }
}

/// Tokenizes node text, encodes anchors and lists both directions of every
/// subgraph edge with its raw features.
pub fn prepare_graph(
    s: &Subgraph,
    center: &str,
    cfg: &EncoderConfig,
    overrides: Option<&TextOverrides>,
) -> Result<GraphInput, EncoderError> {
    let nodes: Vec<&GraphNode> = s.all_nodes().collect();
    let index: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let c = *index
        .get(center)
        .ok_or_else(|| EncoderError::MissingCenter(center.to_string()))?;
    let mut text_override = Vec::with_capacity(nodes.len());
    for n in &nodes {
        let o = overrides.and_then(|m| m.get(&n.id)).cloned();
        if let Some(v) = &o {
            if v.len() != cfg.token_dim || v.iter().any(|x| !x.is_finite()) {
                return Err(EncoderError::Shape(format!(
                    "text embedding for {:?} must be {} finite values",
                    n.id, cfg.token_dim
                )));
            }
        }
        text_override.push(o);
    }
    let mut edges = Vec::new();
    for e in &s.edges {
        let (Some(&a), Some(&b)) = (index.get(e.src.as_str()), index.get(e.dst.as_str())) else {
            return Err(EncoderError::Shape(format!(
                "edge {} -> {} leaves the subgraph",
                e.src, e.dst
            )));
        };
        if a == b {
            continue;
        }
        let (pa, pb) = (nodes[a].anchor, nodes[b].anchor);
        edges.push((
            (a, b),
            edge_raw_features(e.distance_m, e.bearing_deg, pa, pb),
        ));
        edges.push((
            (b, a),
            edge_raw_features(e.distance_m, e.bearing_from(&e.dst), pb, pa),
        ));
    }
    // Stable sort keeps parallel edges in subgraph order.
    edges.sort_by_key(|e| (e.0 .1, e.0 .0));
    Ok(GraphInput {
        node_ids: nodes.iter().map(|n| n.id.clone()).collect(),
        tokens: nodes
            .iter()
            .map(|n| tokenize(&node_text(n), cfg.vocab_size))
            .collect(),
        text_override,
        pe: nodes
            .iter()
            .flat_map(|n| spatial_pe(n.anchor, cfg))
            .collect(),
        edges: edges.iter().map(|e| e.0).collect(),
        raw: edges.iter().map(|e| e.1).collect(),
        center: c,
    })
}
