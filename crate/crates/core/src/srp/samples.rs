//! Training records in the published JSON layouts.

use serde::{Deserialize, Serialize};

use super::{render_steps, AnnotatedPath, SrpError};
use crate::geo::Geometry;
use crate::graph::{GraphNode, NodeKind, SpatialGraph};

pub const STAGE1_INSTRUCTION: &str =
    "<image> Describe if this viewpoint is reachable or the destination is reachable from the viewpoint.";

pub const PATH_NOTE: &str = "Note on path notation: Triple indicates the decision point information in the path, \
the arrow '->' indicates the next step in the path, and parentheses (e.g., (50m, S)) immediately after a triple \
describe the distance and direction from the source to the target node.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    fn user(content: String) -> Self {
        Self {
            role: "user".into(),
            content,
        }
    }

    fn assistant(content: String) -> Self {
        Self {
            role: "assistant".into(),
            content,
        }
    }
}

/// Image-only record with a path as the positive text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Sample {
    pub messages: Vec<Message>,
    pub positive_messages: Vec<Vec<Message>>,
    pub label: u8,
    pub images: Vec<String>,
    pub graphs: Vec<String>,
    pub pair_type: String,
}

/// Image plus subgraph record with the path in the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Sample {
    pub messages: Vec<Message>,
    pub images: String,
    pub graphs: Vec<String>,
    pub summarization: String,
    pub image_coordinates: String,
    pub mapillary_node: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrainingSample {
    Stage1(Stage1Sample),
    Stage2(Stage2Sample),
}

fn coords(p: &AnnotatedPath) -> String {
    format!("({:.4}, {:.4})", p.origin.lon(), p.origin.lat())
}

/// Python-literal string quoting, as the published entity block uses.
fn py_str(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

fn wkt_like(node: &GraphNode) -> String {
    let a = node.anchor;
    let shape = match node.geometry {
        Geometry::Point(_) => "POINT",
        Geometry::LineString(_) => "LINE",
        Geometry::Polygon(_) => "POLYGON",
    };
    format!("{shape}(lon: {:.8}, lat: {:.8})", a.lon(), a.lat())
}

/// `{'name': {'id': ..., 'category': ..., 'coordinates': ...}, ...}` for every
/// node on the path, in path order.
fn entity_block(graph: &SpatialGraph, path: &AnnotatedPath) -> Result<String, SrpError> {
    let mut seen = std::collections::HashSet::new();
    let mut entries = Vec::new();
    for (i, id) in path.nodes.iter().enumerate() {
        let node = graph
            .node(id)
            .ok_or_else(|| SrpError::InvalidPath(format!("unknown node {id:?}")))?;
        let key = if i == 0 {
            super::annotate::clean_label(&node.id)
        } else {
            super::annotate::clean_label(node.display_name())
        };
        if !seen.insert(key.clone()) {
            continue;
        }
        let category = match (node.kind, node.category.as_deref()) {
            (NodeKind::Viewpoint, _) => "mapillary".to_string(),
            (_, Some(c)) if !c.is_empty() => c.to_string(),
            _ => "None".to_string(),
        };
        entries.push(format!(
            "{}: {{'id': {}, 'category': {}, 'coordinates': {}}}",
            py_str(&key),
            py_str(&node.id),
            py_str(&category),
            py_str(&wkt_like(node))
        ));
    }
    Ok(format!("{{{}}}", entries.join(", ")))
}

/// Builds one record per path. Stage 2 needs the image's subgraph file.
pub fn emit_training_samples(
    graph: &SpatialGraph,
    paths: &[AnnotatedPath],
    image_path: &str,
    subgraph_file: Option<&str>,
    stage: Stage,
) -> Result<Vec<TrainingSample>, SrpError> {
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        match stage {
            Stage::One => out.push(TrainingSample::Stage1(Stage1Sample {
                messages: vec![Message::user(STAGE1_INSTRUCTION.to_string())],
                positive_messages: vec![vec![Message::user(format!(
                    "Spatial Reasoning Path:\n{}",
                    super::render_srp(p)
                ))]],
                label: 1,
                images: vec![image_path.to_string()],
                graphs: Vec::new(),
                pair_type: "stage1_image_only".to_string(),
            })),
            Stage::Two => {
                let file = subgraph_file.ok_or_else(|| {
                    SrpError::Config("stage 2 samples need a subgraph file".into())
                })?;
                let summary = format!(
                    "You can reach {} from the current location shown in the image with id {} at {}.",
                    p.destination,
                    p.image_id,
                    coords(p)
                );
                let content = format!(
                    "<graph><image> {PATH_NOTE} Spatial Reasoning Path: {}. Based on the spatial context represented \
                     in graph and the spatial reasoning path, you can reach {} from the current location shown in \
                     the image with id {} at {}.\nHere are relevant place entities informations: {}",
                    render_steps(&p.steps),
                    p.destination,
                    p.image_id,
                    coords(p),
                    entity_block(graph, p)?
                );
                out.push(TrainingSample::Stage2(Stage2Sample {
                    messages: vec![Message::user(content), Message::assistant(summary.clone())],
                    images: image_path.to_string(),
                    graphs: vec![file.to_string()],
                    summarization: summary,
                    image_coordinates: coords(p),
                    mapillary_node: p.image_id.clone(),
                }));
            }
        }
    }
    Ok(out)
}
