//! Localized context around an anchored image: subgraph extraction, the
//! structured network description and the caption prompt built from it.

mod describe;
mod serial;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::geo::{initial_bearing_deg, point_to_geometry_m, GeoPoint};
use crate::graph::{GraphEdge, GraphError, GraphNode, SpatialGraph};

pub use describe::{
    build_caption_prompt, describe_subgraph, CaptionPrompt, SubgraphDescription, CAPTION_TEMPLATE,
};
pub use serial::{
    parse_subgraph, serialize_subgraph, SubgraphFormatError, SUBGRAPH_SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub radius_m: f64,
    pub max_nearby: usize,
    pub max_onehop: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            radius_m: 200.0,
            max_nearby: 10,
            max_onehop: 12,
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.radius_m.is_finite() && self.radius_m > 0.0)
            || self.max_nearby == 0
            || self.max_onehop == 0
        {
            return Err(GraphError::InvalidConfig(format!(
                "extract config must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearbyEntry {
    pub node: GraphNode,
    pub distance_m: f64,
    pub bearing_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHopEntry {
    pub node: GraphNode,
    pub via: String,
    pub distance_m: f64,
    pub bearing_deg: f64,
}

/// Subgraph around one or more center nodes.
///
/// Distances and bearings are measured from the first center's anchor to the
/// closest point of each node's geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgraph {
    pub centers: Vec<GraphNode>,
    pub nearby: Vec<NearbyEntry>,
    pub onehop: Vec<OneHopEntry>,
    pub edges: Vec<GraphEdge>,
}

impl Subgraph {
    pub fn center_ids(&self) -> Vec<&str> {
        self.centers.iter().map(|n| n.id.as_str()).collect()
    }

    /// Every included node: centers, then nearby, then one-hop.
    pub fn all_nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.centers
            .iter()
            .chain(self.nearby.iter().map(|e| &e.node))
            .chain(self.onehop.iter().map(|e| &e.node))
    }

    pub fn node_count(&self) -> usize {
        self.centers.len() + self.nearby.len() + self.onehop.len()
    }

    /// Structural invariants; used when reading subgraphs from disk.
    pub fn check(&self, cfg: &ExtractConfig) -> Result<(), String> {
        if self.centers.is_empty() {
            return Err("no center node".into());
        }
        if self.nearby.len() > cfg.max_nearby || self.onehop.len() > cfg.max_onehop {
            return Err("section cap exceeded".into());
        }
        if self
            .nearby
            .windows(2)
            .any(|w| w[0].distance_m > w[1].distance_m)
        {
            return Err("nearby entries not sorted by distance".into());
        }
        let nearby: HashSet<&str> = self.nearby.iter().map(|e| e.node.id.as_str()).collect();
        if let Some(e) = self
            .onehop
            .iter()
            .find(|e| !nearby.contains(e.via.as_str()))
        {
            return Err(format!(
                "one-hop entry {:?} has via {:?} outside nearby",
                e.node.id, e.via
            ));
        }
        let mut ids = HashSet::new();
        for n in self.all_nodes() {
            if !ids.insert(n.id.as_str()) {
                return Err(format!("node {:?} included twice", n.id));
            }
        }
        if let Some(e) = self
            .edges
            .iter()
            .find(|e| !ids.contains(e.src.as_str()) || !ids.contains(e.dst.as_str()))
        {
            return Err(format!("edge {} -> {} leaves the subgraph", e.src, e.dst));
        }
        Ok(())
    }
}

fn measure_from(center: GeoPoint, node: &GraphNode) -> (f64, f64) {
    match point_to_geometry_m(center, &node.geometry) {
        Ok((d, q)) if d > 0.0 => (d, initial_bearing_deg(center, q).unwrap_or(0.0)),
        Ok((d, _)) => (d, 0.0),
        Err(_) => (f64::INFINITY, 0.0),
    }
}

fn by_distance_then_id(a: (f64, &str), b: (f64, &str)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

/// Extracts the nearby and one-hop context of `center`.
///
/// Nearby nodes are the center's direct neighbors plus every node whose anchor
/// lies within `radius_m`, ordered by (distance, id). One-hop nodes are the
/// remaining neighbors of nearby nodes, each tagged with the first nearby node
/// (in nearby order) that reaches it.
pub fn extract_subgraph(
    graph: &SpatialGraph,
    center: &str,
    cfg: &ExtractConfig,
) -> Result<Subgraph, GraphError> {
    cfg.validate()?;
    let c = graph
        .node(center)
        .ok_or_else(|| GraphError::UnknownNode(center.to_string()))?;
    let origin = c.anchor;

    let mut pool: BTreeSet<&str> = graph.neighbor_ids(center).into_iter().collect();
    pool.extend(
        graph
            .anchors_within(origin, cfg.radius_m)
            .into_iter()
            .map(|(n, _)| n.id.as_str()),
    );
    pool.remove(center);
    let mut nearby: Vec<(f64, f64, &GraphNode)> = pool
        .into_iter()
        .filter_map(|id| graph.node(id))
        .map(|n| {
            let (d, b) = measure_from(origin, n);
            (d, b, n)
        })
        .collect();
    nearby.sort_by(|a, b| by_distance_then_id((a.0, &a.2.id), (b.0, &b.2.id)));
    nearby.truncate(cfg.max_nearby);

    let mut included: HashSet<&str> = nearby.iter().map(|e| e.2.id.as_str()).collect();
    included.insert(center);
    let mut onehop: Vec<(f64, f64, &GraphNode, &str)> = Vec::new();
    let mut seen = HashSet::new();
    for (_, _, via) in &nearby {
        for id in graph.neighbor_ids(&via.id) {
            if included.contains(id) || !seen.insert(id) {
                continue;
            }
            if let Some(n) = graph.node(id) {
                let (d, b) = measure_from(origin, n);
                onehop.push((d, b, n, via.id.as_str()));
            }
        }
    }
    onehop.sort_by(|a, b| by_distance_then_id((a.0, &a.2.id), (b.0, &b.2.id)));
    onehop.truncate(cfg.max_onehop);
    included.extend(onehop.iter().map(|e| e.2.id.as_str()));

    let mut edges: Vec<GraphEdge> = Vec::new();
    let mut seen_edges = HashSet::new();
    for id in &included {
        for e in graph.edges_of(id) {
            if included.contains(e.src.as_str())
                && included.contains(e.dst.as_str())
                && seen_edges.insert((e.src.as_str(), e.dst.as_str(), e.kind))
            {
                edges.push(e.clone());
            }
        }
    }
    edges.sort_by(|a, b| (&a.src, &a.dst, a.kind).cmp(&(&b.src, &b.dst, b.kind)));

    Ok(Subgraph {
        centers: vec![c.clone()],
        nearby: nearby
            .into_iter()
            .map(|(distance_m, bearing_deg, n)| NearbyEntry {
                node: n.clone(),
                distance_m,
                bearing_deg,
            })
            .collect(),
        onehop: onehop
            .into_iter()
            .map(|(distance_m, bearing_deg, n, via)| OneHopEntry {
                node: n.clone(),
                via: via.to_string(),
                distance_m,
                bearing_deg,
            })
            .collect(),
        edges,
    })
}
