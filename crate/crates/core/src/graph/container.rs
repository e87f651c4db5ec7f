//! On-disk graph container: `nodes.jsonl`, `edges.jsonl` and `meta.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    BuildReport, GraphBuildConfig, GraphCounters, GraphEdge, GraphError, GraphNode, SpatialGraph,
};

pub const GRAPH_FORMAT: &str = "urbangraph.graph/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub format: String,
    pub config: GraphBuildConfig,
    pub counters: GraphCounters,
    #[serde(default)]
    pub build: BuildReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GraphMeta {
    pub fn of(graph: &SpatialGraph, seed: Option<u64>) -> Self {
        GraphMeta {
            format: GRAPH_FORMAT.to_string(),
            config: *graph.config(),
            counters: graph.counters(),
            build: graph.build_report().clone(),
            seed,
        }
    }
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    items: impl Iterator<Item = T>,
) -> Result<(), GraphError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the graph into `dir` (created if needed). Output is byte-identical
/// for identical graphs.
pub fn write_graph(
    graph: &SpatialGraph,
    dir: &Path,
    seed: Option<u64>,
) -> Result<GraphMeta, GraphError> {
    fs::create_dir_all(dir)?;
    let mut nodes: Vec<&GraphNode> = graph.nodes().collect();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    write_jsonl(&dir.join("nodes.jsonl"), nodes.into_iter())?;
    let mut edges: Vec<&GraphEdge> = graph.edges().iter().collect();
    edges.sort_by(|a, b| (&a.src, &a.dst, a.kind).cmp(&(&b.src, &b.dst, b.kind)));
    write_jsonl(&dir.join("edges.jsonl"), edges.into_iter())?;
    let meta = GraphMeta::of(graph, seed);
    let text = serde_json::to_string_pretty(&meta).map_err(std::io::Error::from)?;
    fs::write(dir.join("meta.json"), text + "\n")?;
    Ok(meta)
}

pub fn read_graph(dir: &Path) -> Result<(SpatialGraph, GraphMeta), GraphError> {
    let nodes = fs::read(dir.join("nodes.jsonl"))?;
    let edges = fs::read(dir.join("edges.jsonl"))?;
    let meta = fs::read(dir.join("meta.json"))?;
    read_graph_from(&nodes, &edges, &meta)
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(
    file: &str,
    bytes: &[u8],
) -> Result<Vec<T>, GraphError> {
    let text = std::str::from_utf8(bytes).map_err(|e| GraphError::Container {
        file: file.into(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| GraphError::Container {
            file: file.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Parses a container from its three files' contents.
pub fn read_graph_from(
    nodes: &[u8],
    edges: &[u8],
    meta: &[u8],
) -> Result<(SpatialGraph, GraphMeta), GraphError> {
    let meta: GraphMeta = serde_json::from_slice(meta).map_err(|e| GraphError::Container {
        file: "meta.json".into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if meta.format != GRAPH_FORMAT {
        return Err(GraphError::Container {
            file: "meta.json".into(),
            line: 0,
            message: format!("unsupported format {:?}", meta.format),
        });
    }
    let nodes: Vec<GraphNode> = parse_jsonl("nodes.jsonl", nodes)?;
    for (i, n) in nodes.iter().enumerate() {
        n.geometry.validate().map_err(|e| GraphError::Container {
            file: "nodes.jsonl".into(),
            line: i + 1,
            message: format!("node {:?}: {e}", n.id),
        })?;
    }
    let edges: Vec<GraphEdge> = parse_jsonl("edges.jsonl", edges)?;
    let mut graph = SpatialGraph::from_parts(nodes, edges, meta.config)?;
    graph.report = meta.build.clone();
    if graph.node_count() != meta.counters.nodes || graph.edge_count() != meta.counters.edges {
        return Err(GraphError::Container {
            file: "meta.json".into(),
            line: 0,
            message: format!(
                "counters say {} nodes / {} edges, files hold {} / {}",
                meta.counters.nodes,
                meta.counters.edges,
                graph.node_count(),
                graph.edge_count()
            ),
        });
    }
    Ok((graph, meta))
}
