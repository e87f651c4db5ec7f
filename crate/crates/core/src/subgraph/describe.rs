use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Subgraph;
use crate::geo::{cardinal8, ZERO_DISTANCE_M};
use crate::graph::{EdgeKind, GraphEdge, GraphNode};

/// Caption-generation prompt with a `{subgraph_desc}` slot.
pub const CAPTION_TEMPLATE: &str = include_str!("caption_prompt.txt");
const CAPTION_SCHEMA_VERSION: &str = "1";
const SLOT: &str = "{subgraph_desc}";

/// Attribute keys rendered first, in this order; others follow sorted.
const ATTRIBUTE_ORDER: [&str; 11] = [
    "building_use",
    "historic_district",
    "architect",
    "building_type",
    "street",
    "housenumber",
    "postcode",
    "planning_area",
    "district",
    "city",
    "country",
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphDescription {
    pub overview: String,
    pub center_section: String,
    pub nearby_section: String,
    pub onehop_section: String,
    pub connections_section: String,
}

impl SubgraphDescription {
    /// Sections joined by blank lines; empty sections are skipped.
    pub fn to_text(&self) -> String {
        [
            &self.overview,
            &self.center_section,
            &self.nearby_section,
            &self.onehop_section,
            &self.connections_section,
        ]
        .into_iter()
        .filter(|s| !s.is_empty())
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join("\n\n")
    }
}

impl std::fmt::Display for SubgraphDescription {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionPrompt {
    pub full_text: String,
    pub schema_version: String,
}

fn attribute_key(key: &str) -> &str {
    key.strip_prefix("addr:").unwrap_or(key)
}

fn attribute_rank(key: &str) -> usize {
    ATTRIBUTE_ORDER
        .iter()
        .position(|k| *k == attribute_key(key))
        .unwrap_or(ATTRIBUTE_ORDER.len())
}

fn render_attributes(node: &GraphNode) -> Option<String> {
    let mut attrs: Vec<(&String, &String)> = node
        .attrs
        .iter()
        .filter(|(_, v)| !v.trim().is_empty())
        .collect();
    if attrs.is_empty() {
        return None;
    }
    attrs.sort_by(|a, b| {
        attribute_rank(a.0)
            .cmp(&attribute_rank(b.0))
            .then_with(|| a.0.cmp(b.0))
    });
    let parts: Vec<String> = attrs
        .iter()
        .map(|(k, v)| format!("{}: {}", attribute_key(k).replace('_', " "), v))
        .collect();
    Some(parts.join("; "))
}

fn direction_phrase(distance_m: f64, bearing_deg: f64) -> String {
    if distance_m < ZERO_DISTANCE_M {
        return "at the center location".to_string();
    }
    let word = cardinal8(bearing_deg).map(|c| c.word()).unwrap_or("north");
    format!("{distance_m:.1}m {word} ({bearing_deg:.0}°) of the center")
}

fn node_line(node: &GraphNode, relative: &str) -> String {
    let mut line = String::new();
    if node.is_named() {
        let _ = write!(line, "{} ", node.display_name());
    }
    let _ = write!(
        line,
        "(id: {}) | Type: {} | Geometry: {}",
        node.id,
        node.kind.label(),
        node.geometry.kind()
    );
    if let Some(c) = node.category.as_deref().filter(|c| !c.is_empty()) {
        let _ = write!(line, " | Category: {c}");
    }
    if let Some(a) = render_attributes(node) {
        let _ = write!(line, " | Attributes: {a}");
    }
    let _ = write!(
        line,
        " | Coordinates: ({:.6}, {:.6}) | Relative direction: {relative}",
        node.anchor.lon(),
        node.anchor.lat()
    );
    line
}

fn relation_phrase(edge: &GraphEdge, names: &HashMap<&str, &GraphNode>) -> String {
    match edge.kind {
        EdgeKind::OnSameStreet => match &edge.via {
            Some(road) => match names.get(road.as_str()) {
                Some(n) if n.is_named() => format!("on same street ({})", n.display_name()),
                _ => format!("on same street ({road})"),
            },
            None => "on same street".to_string(),
        },
        other => other.as_str().to_string(),
    }
}

fn edge_line(edge: &GraphEdge, names: &HashMap<&str, &GraphNode>) -> String {
    let label = |id: &str| match names.get(id) {
        Some(n) if n.is_named() => format!("{} ({id})", n.display_name()),
        _ => id.to_string(),
    };
    let mut line = format!(
        "- {} -> {}: {}",
        label(&edge.src),
        label(&edge.dst),
        relation_phrase(edge, names)
    );
    if edge.distance_m < ZERO_DISTANCE_M {
        let _ = write!(line, ", touching (0.0m)");
    } else {
        let word = cardinal8(edge.bearing_deg)
            .map(|c| c.word())
            .unwrap_or("north");
        let _ = write!(
            line,
            ", direction {word} ({:.0}°), distance {:.1}m",
            edge.bearing_deg, edge.distance_m
        );
    }
    if let Some(p) = edge.crossing_point {
        let _ = write!(line, ", crossing at ({:.6}, {:.6})", p.lon(), p.lat());
    }
    line
}

/// Renders the five-section network description. Output depends only on the
/// subgraph contents, so identical subgraphs give identical bytes.
pub fn describe_subgraph(s: &Subgraph) -> SubgraphDescription {
    let overview = format!(
        "This network contains {} locations, with {} center nodes and {} connections.",
        s.node_count(),
        s.centers.len(),
        s.edges.len()
    );

    let mut center_section = String::from("Center Nodes:");
    for c in &s.centers {
        let _ = write!(center_section, "\n- {}", node_line(c, "center"));
    }

    let mut nearby_section = String::from("Nearby Locations (sorted by distance):");
    if s.nearby.is_empty() {
        nearby_section.push_str("\nNone.");
    }
    for (i, e) in s.nearby.iter().enumerate() {
        let _ = write!(
            nearby_section,
            "\n{}. {}",
            i + 1,
            node_line(&e.node, &direction_phrase(e.distance_m, e.bearing_deg))
        );
    }

    let names: HashMap<&str, &GraphNode> = s.all_nodes().map(|n| (n.id.as_str(), n)).collect();
    let mut onehop_section = String::from("Locations Connected to Nearby Areas:");
    if s.onehop.is_empty() {
        onehop_section.push_str("\nNone.");
    }
    for (i, e) in s.onehop.iter().enumerate() {
        let via = names
            .get(e.via.as_str())
            .map(|n| n.display_name())
            .unwrap_or(&e.via);
        let _ = write!(
            onehop_section,
            "\n{}. {} | Connected via: {via}",
            i + 1,
            node_line(&e.node, &direction_phrase(e.distance_m, e.bearing_deg))
        );
    }

    let is_center = |id: &str| s.centers.iter().any(|c| c.id == id);
    let (image_edges, other_edges): (Vec<&GraphEdge>, Vec<&GraphEdge>) = s
        .edges
        .iter()
        .partition(|e| is_center(&e.src) || is_center(&e.dst));
    let mut connections_section =
        String::from("Connections in the Network:\nImage location to nearby areas:");
    if image_edges.is_empty() {
        connections_section.push_str("\nNone.");
    }
    for e in image_edges {
        let _ = write!(connections_section, "\n{}", edge_line(e, &names));
    }
    connections_section.push_str("\nAmong nearby areas:");
    if other_edges.is_empty() {
        connections_section.push_str("\nNone.");
    }
    for e in other_edges {
        let _ = write!(connections_section, "\n{}", edge_line(e, &names));
    }

    SubgraphDescription {
        overview,
        center_section,
        nearby_section,
        onehop_section,
        connections_section,
    }
}

/// Fills the caption template with a description.
pub fn build_caption_prompt(d: &SubgraphDescription) -> CaptionPrompt {
    CaptionPrompt {
        full_text: CAPTION_TEMPLATE.replacen(SLOT, &d.to_text(), 1),
        schema_version: CAPTION_SCHEMA_VERSION.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPoint, Geometry};
    use crate::graph::NodeKind;

    fn lone() -> Subgraph {
        let n = GraphNode::new(
            "img",
            NodeKind::Viewpoint,
            Geometry::Point(GeoPoint::new(1.0, 2.0).unwrap()),
        );
        Subgraph {
            centers: vec![n],
            nearby: vec![],
            onehop: vec![],
            edges: vec![],
        }
    }

    #[test]
    fn center_only_counts() {
        let d = describe_subgraph(&lone());
        assert_eq!(
            d.overview,
            "This network contains 1 locations, with 1 center nodes and 0 connections."
        );
        assert_eq!(d, describe_subgraph(&lone()));
    }

    #[test]
    fn attribute_order() {
        let n = GraphNode::new(
            "b",
            NodeKind::Poi,
            Geometry::Point(GeoPoint::new(1.0, 2.0).unwrap()),
        )
        .with_attr("zoning", "mixed")
        .with_attr("country", "Singapore")
        .with_attr("addr:street", "Kallang Road")
        .with_attr("building_use", "shophouse")
        .with_attr("amenity", "cafe");
        assert_eq!(
            render_attributes(&n).unwrap(),
            "building use: shophouse; street: Kallang Road; country: Singapore; amenity: cafe; zoning: mixed"
        );
    }

    #[test]
    fn prompt_layout() {
        let d = describe_subgraph(&lone());
        let p = build_caption_prompt(&d);
        assert!(p
            .full_text
            .contains(&format!("## Network Structure:\n{}", d.to_text())));
        assert!(p.full_text.contains("Image:") && p.full_text.contains("Summarization:"));
        assert!(!p.full_text.contains(SLOT));
        let empty = build_caption_prompt(&SubgraphDescription::default());
        assert!(empty.full_text.contains("## Network Structure:\n\n"));
    }
}
