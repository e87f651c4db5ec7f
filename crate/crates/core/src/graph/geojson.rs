use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{GraphError, GraphNode, NodeKind};
use crate::geo::Geometry;

/// A feature that was not ingested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Position in the input feature array.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
    /// Features whose `kind` was missing or unrecognized and were loaded as POIs.
    pub defaulted_kind: usize,
}

/// Byte offset of a serde_json error position (1-based line and column).
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for _ in 1..line {
        match bytes[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => return bytes.len(),
        }
    }
    (offset + column.saturating_sub(1)).min(bytes.len())
}

fn syntax_error(bytes: &[u8], e: &serde_json::Error) -> GraphError {
    GraphError::GeoJson {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    }
}

fn attr_string(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(_) | Value::Number(_) => Some(v.to_string()),
        other => Some(other.to_string()),
    }
}

/// Parses a GeoJSON FeatureCollection into graph nodes.
///
/// Each feature needs a geometry (Point, LineString or Polygon) and may carry
/// `kind`, `name`, `category` and `id` properties; every other property is
/// kept as a string attribute. Invalid features are skipped and listed in the
/// report; only malformed JSON or a non-collection document is an error.
pub fn load_geojson(bytes: &[u8]) -> Result<(Vec<GraphNode>, LoadReport), GraphError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| syntax_error(bytes, &e))?;
    let not_collection = || GraphError::GeoJson {
        offset: 0,
        message: "expected a FeatureCollection".into(),
    };
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(not_collection());
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(not_collection)?;

    let mut report = LoadReport::default();
    let mut nodes = Vec::with_capacity(features.len());
    let mut seen = HashSet::new();
    for (i, feature) in features.iter().enumerate() {
        let empty = serde_json::Map::new();
        let props = feature
            .get("properties")
            .and_then(Value::as_object)
            .unwrap_or(&empty);
        let id = match feature.get("id").or_else(|| props.get("id")) {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("feature-{i}"),
        };
        let reject = |reason: String| Rejection {
            id: Some(id.clone()),
            index: Some(i),
            reason,
        };

        let geometry = match feature.get("geometry") {
            None | Some(Value::Null) => {
                report.rejected.push(reject("missing geometry".into()));
                continue;
            }
            Some(g) => match Geometry::deserialize(g) {
                Ok(g) => g,
                Err(e) => {
                    report
                        .rejected
                        .push(reject(format!("invalid geometry: {e}")));
                    continue;
                }
            },
        };
        if !seen.insert(id.clone()) {
            report.rejected.push(reject("duplicate id".into()));
            continue;
        }
        let kind = match props
            .get("kind")
            .and_then(Value::as_str)
            .and_then(NodeKind::parse)
        {
            Some(k) => k,
            None => {
                report.defaulted_kind += 1;
                NodeKind::Poi
            }
        };
        let mut node = GraphNode::new(id, kind, geometry);
        let mut attrs = BTreeMap::new();
        for (key, value) in props {
            match key.as_str() {
                "id" | "kind" => {}
                "name" => node.name = attr_string(value).filter(|s| !s.trim().is_empty()),
                "category" => node.category = attr_string(value),
                _ => {
                    if let Some(s) = attr_string(value) {
                        attrs.insert(key.clone(), s);
                    }
                }
            }
        }
        node.attrs = attrs;
        nodes.push(node);
    }
    report.accepted = nodes.len();
    Ok((nodes, report))
}

/// Writes nodes as a FeatureCollection with one feature per line, in the
/// layout `load_geojson` reads back.
pub fn to_geojson(nodes: &[GraphNode]) -> String {
    let mut out = String::from("{\"type\":\"FeatureCollection\",\"features\":[\n");
    for (i, n) in nodes.iter().enumerate() {
        let mut props = serde_json::Map::new();
        props.insert("kind".into(), Value::from(n.kind.as_str()));
        if let Some(name) = &n.name {
            props.insert("name".into(), Value::from(name.as_str()));
        }
        if let Some(c) = &n.category {
            props.insert("category".into(), Value::from(c.as_str()));
        }
        for (k, v) in &n.attrs {
            props.insert(k.clone(), Value::from(v.as_str()));
        }
        let feature = serde_json::json!({
            "type": "Feature",
            "id": n.id,
            "properties": props,
            "geometry": n.geometry,
        });
        out.push_str(&feature.to_string());
        out.push_str(if i + 1 < nodes.len() { ",\n" } else { "\n" });
    }
    out.push_str("]}\n");
    out
}
