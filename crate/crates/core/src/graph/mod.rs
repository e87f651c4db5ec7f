//! City-scale urban spatial graph: typed entity nodes, typed spatial relations
//! with geodesic annotations, GeoJSON ingestion and rule-based edge derivation.

mod build;
mod container;
mod geojson;
mod index;
mod validate;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::geo::{
    cell_id, cells_in_bbox, closest_points, initial_bearing_deg, point_to_geometry_m, BBox, CellId,
    GeoError, GeoPoint, Geometry,
};

pub use build::{build_graph, build_graph_with, BuildStrategy};
pub use container::{read_graph, read_graph_from, write_graph, GraphMeta, GRAPH_FORMAT};
pub use geojson::{load_geojson, to_geojson, LoadReport, Rejection};
pub use validate::{validate_graph, ValidationReport, Violation};

use index::ExtentIndex;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("duplicate node id {0:?}")]
    DuplicateId(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("invalid graph config: {0}")]
    InvalidConfig(String),
    #[error("image {image_id:?} has no road within {cutoff_m} m")]
    Unanchorable { image_id: String, cutoff_m: f64 },
    #[error("node {0:?} already exists with different kind or location")]
    ConflictingNode(String),
    #[error("malformed GeoJSON at byte {offset}: {message}")]
    GeoJson { offset: usize, message: String },
    #[error("{file}:{line}: {message}")]
    Container {
        file: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The six entity categories of the graph schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Viewpoint,
    Road,
    Intersection,
    Poi,
    Aoi,
    TransitFacility,
}

impl NodeKind {
    pub const ALL: [NodeKind; 6] = [
        NodeKind::Viewpoint,
        NodeKind::Road,
        NodeKind::Intersection,
        NodeKind::Poi,
        NodeKind::Aoi,
        NodeKind::TransitFacility,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Viewpoint => "viewpoint",
            NodeKind::Road => "road",
            NodeKind::Intersection => "intersection",
            NodeKind::Poi => "poi",
            NodeKind::Aoi => "aoi",
            NodeKind::TransitFacility => "transit_facility",
        }
    }

    /// Human-readable type label.
    pub fn label(self) -> &'static str {
        match self {
            NodeKind::Viewpoint => "Street-view viewpoint",
            NodeKind::Road => "Road",
            NodeKind::Intersection => "Intersection",
            NodeKind::Poi => "POI",
            NodeKind::Aoi => "AOI",
            NodeKind::TransitFacility => "Transit facility",
        }
    }

    pub fn parse(s: &str) -> Option<NodeKind> {
        match s.to_ascii_lowercase().as_str() {
            "viewpoint" | "image" | "mapillary" => Some(NodeKind::Viewpoint),
            "road" | "street" => Some(NodeKind::Road),
            "intersection" => Some(NodeKind::Intersection),
            "poi" => Some(NodeKind::Poi),
            "aoi" | "area" => Some(NodeKind::Aoi),
            "transit" | "transit_facility" => Some(NodeKind::TransitFacility),
            _ => None,
        }
    }
}

/// The six relation types of the graph schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    OnSameStreet,
    Crossing,
    Nearest,
    Near,
    Bounds,
    Intersects,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 6] = [
        EdgeKind::OnSameStreet,
        EdgeKind::Crossing,
        EdgeKind::Nearest,
        EdgeKind::Near,
        EdgeKind::Bounds,
        EdgeKind::Intersects,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::OnSameStreet => "on_same_street",
            EdgeKind::Crossing => "crossing",
            EdgeKind::Nearest => "nearest",
            EdgeKind::Near => "near",
            EdgeKind::Bounds => "bounds",
            EdgeKind::Intersects => "intersects",
        }
    }
}

impl std::fmt::Display for NodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, String>,
    pub geometry: Geometry,
    pub anchor: GeoPoint,
}

impl GraphNode {
    pub fn new(id: impl Into<String>, kind: NodeKind, geometry: Geometry) -> Self {
        let anchor = geometry.anchor();
        Self {
            id: id.into(),
            kind,
            name: None,
            category: None,
            attrs: BTreeMap::new(),
            geometry,
            anchor,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }

    /// Name when present and non-empty, otherwise the id.
    pub fn display_name(&self) -> &str {
        match &self.name {
            Some(n) if !n.trim().is_empty() => n,
            _ => &self.id,
        }
    }

    pub fn is_named(&self) -> bool {
        self.name.as_deref().is_some_and(|n| !n.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
    pub distance_m: f64,
    pub bearing_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossing_point: Option<GeoPoint>,
    /// Shared road id for `on_same_street` edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<String>,
}

impl GraphEdge {
    /// The endpoint opposite to `id`.
    pub fn other(&self, id: &str) -> &str {
        if self.src == id {
            &self.dst
        } else {
            &self.src
        }
    }

    /// Bearing when the edge is traversed starting from `from`.
    pub fn bearing_from(&self, from: &str) -> f64 {
        if self.src == from {
            self.bearing_deg
        } else {
            (self.bearing_deg + 180.0) % 360.0
        }
    }
}

/// Distance, bearing and closest-point pair between two nodes' geometries.
///
/// This is the annotation every derived edge carries: for a point and an
/// extended geometry it is the point-to-geometry distance, for two extended
/// geometries the distance between their lines/boundaries. Bearing points
/// from `src` towards `dst` and is 0 for zero-length relations.
pub fn relation_measure(
    src: &GraphNode,
    dst: &GraphNode,
) -> Result<(f64, f64, GeoPoint, GeoPoint), GeoError> {
    let (d, a, b) = closest_points(&src.geometry, &dst.geometry)?;
    let bearing = if d > 0.0 {
        initial_bearing_deg(a, b).unwrap_or(0.0)
    } else {
        0.0
    };
    Ok((d, bearing, a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphBuildConfig {
    pub nearest_cutoff_m: f64,
    pub near_threshold_m: f64,
    pub snap_tolerance_m: f64,
    pub bounds_buffer_m: f64,
    pub cell_level: u8,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        Self {
            nearest_cutoff_m: 100.0,
            near_threshold_m: 50.0,
            snap_tolerance_m: 1.0,
            bounds_buffer_m: 15.0,
            cell_level: 14,
        }
    }
}

impl GraphBuildConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        for (name, v) in [
            ("nearest_cutoff_m", self.nearest_cutoff_m),
            ("near_threshold_m", self.near_threshold_m),
            ("snap_tolerance_m", self.snap_tolerance_m),
            ("bounds_buffer_m", self.bounds_buffer_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GraphError::InvalidConfig(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if self.cell_level > crate::geo::MAX_CELL_LEVEL {
            return Err(GraphError::InvalidConfig(format!(
                "cell_level {} > 24",
                self.cell_level
            )));
        }
        Ok(())
    }

    /// Level of the internal geometry index: the finest level whose cells are
    /// still at least `nearest_cutoff_m` tall.
    pub(crate) fn extent_level(&self) -> u8 {
        let steps = 180.0 * crate::geo::METERS_PER_DEGREE / self.nearest_cutoff_m.max(1e-3);
        (steps.log2().floor().max(0.0) as u8).min(crate::geo::MAX_CELL_LEVEL)
    }
}

/// Per-kind node and edge counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphCounters {
    pub nodes: usize,
    pub edges: usize,
    pub nodes_by_kind: BTreeMap<NodeKind, usize>,
    pub edges_by_kind: BTreeMap<EdgeKind, usize>,
}

/// Nodes dropped during a build.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub skipped: Vec<Rejection>,
}

/// An immutable-after-build urban spatial graph.
///
/// Edges are stored once with a direction (`src` → `dst`) and indexed from
/// both endpoints, so connectivity is undirected while bearings keep their
/// orientation.
#[derive(Debug, Clone)]
pub struct SpatialGraph {
    config: GraphBuildConfig,
    nodes: Vec<GraphNode>,
    index_of: HashMap<String, usize>,
    edges: Vec<GraphEdge>,
    adjacency: Vec<Vec<usize>>,
    cell_index: HashMap<CellId, Vec<usize>>,
    extent: ExtentIndex,
    report: BuildReport,
}

impl SpatialGraph {
    /// Assembles a graph from already-derived parts without checking edge
    /// consistency (see [`validate_graph`]). Edges whose endpoints are missing
    /// are kept but not indexed.
    pub fn from_parts(
        nodes: Vec<GraphNode>,
        edges: Vec<GraphEdge>,
        config: GraphBuildConfig,
    ) -> Result<Self, GraphError> {
        config.validate()?;
        let mut graph = SpatialGraph {
            config,
            nodes: Vec::with_capacity(nodes.len()),
            index_of: HashMap::with_capacity(nodes.len()),
            edges: Vec::new(),
            adjacency: Vec::with_capacity(nodes.len()),
            cell_index: HashMap::new(),
            extent: ExtentIndex::new(config.extent_level()),
            report: BuildReport::default(),
        };
        for node in nodes {
            graph.insert_node(node)?;
        }
        for edge in edges {
            graph.insert_edge(edge);
        }
        Ok(graph)
    }

    fn insert_node(&mut self, node: GraphNode) -> Result<usize, GraphError> {
        if self.index_of.contains_key(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        let idx = self.nodes.len();
        let cell = cell_id(node.anchor, self.config.cell_level)?;
        self.cell_index.entry(cell).or_default().push(idx);
        self.extent.insert(idx, &node.geometry);
        self.index_of.insert(node.id.clone(), idx);
        self.nodes.push(node);
        self.adjacency.push(Vec::new());
        Ok(idx)
    }

    fn insert_edge(&mut self, edge: GraphEdge) {
        let e = self.edges.len();
        if let (Some(&s), Some(&d)) = (self.index_of.get(&edge.src), self.index_of.get(&edge.dst)) {
            self.adjacency[s].push(e);
            if s != d {
                self.adjacency[d].push(e);
            }
        }
        self.edges.push(edge);
    }

    pub fn config(&self) -> &GraphBuildConfig {
        &self.config
    }

    pub fn build_report(&self) -> &BuildReport {
        &self.report
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.index_of.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index_of.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges incident to `id`, in insertion order.
    pub fn edges_of<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a GraphEdge> + 'a {
        let list: &[usize] = self
            .index_of
            .get(id)
            .map(|&i| self.adjacency[i].as_slice())
            .unwrap_or(&[]);
        list.iter().map(move |&e| &self.edges[e])
    }

    /// Distinct neighbor ids of `id`, sorted.
    pub fn neighbor_ids(&self, id: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .edges_of(id)
            .map(|e| e.other(id))
            .filter(|o| *o != id)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// First edge between `a` and `b` in relation order (nearest, near, ...).
    pub fn edge_between(&self, a: &str, b: &str) -> Option<&GraphEdge> {
        self.edges_of(a)
            .filter(|e| e.other(a) == b)
            .min_by_key(|e| relation_rank(e.kind))
    }

    pub fn counters(&self) -> GraphCounters {
        let mut c = GraphCounters {
            nodes: self.nodes.len(),
            edges: self.edges.len(),
            ..Default::default()
        };
        for n in &self.nodes {
            *c.nodes_by_kind.entry(n.kind).or_default() += 1;
        }
        for e in &self.edges {
            *c.edges_by_kind.entry(e.kind).or_default() += 1;
        }
        c
    }

    /// Node ids stored under `cell` (anchors only), when `cell` is at the graph's cell level.
    pub fn nodes_in_cell(&self, cell: CellId) -> impl Iterator<Item = &GraphNode> {
        self.cell_index
            .get(&cell)
            .into_iter()
            .flatten()
            .map(move |&i| &self.nodes[i])
    }

    pub fn cell_index_len(&self) -> usize {
        self.cell_index.values().map(Vec::len).sum()
    }

    /// Nodes whose anchor lies within `radius_m` of `p`, with their distances,
    /// sorted by (distance, id).
    pub fn anchors_within(&self, p: GeoPoint, radius_m: f64) -> Vec<(&GraphNode, f64)> {
        let bbox = BBox::around(p, radius_m);
        let mut out = Vec::new();
        for cell in cells_in_bbox(&bbox, self.config.cell_level) {
            if let Some(list) = self.cell_index.get(&cell) {
                for &i in list {
                    let d = crate::geo::haversine_m(p, self.nodes[i].anchor);
                    if d <= radius_m {
                        out.push((&self.nodes[i], d));
                    }
                }
            }
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.id.cmp(&b.0.id)));
        out
    }

    /// Up to `k` nodes accepted by `keep`, ordered by geometry distance from
    /// `p` (ties by id), searching no farther than `max_radius_m`.
    pub fn nearest_by_geometry(
        &self,
        p: GeoPoint,
        k: usize,
        max_radius_m: f64,
        keep: impl Fn(&GraphNode) -> bool,
    ) -> Vec<(&GraphNode, f64)> {
        let mut radius = 250.0f64.min(max_radius_m);
        loop {
            let mut found: Vec<(&GraphNode, f64)> = self
                .extent
                .query(&BBox::around(p, radius))
                .into_iter()
                .map(|i| &self.nodes[i])
                .filter(|n| keep(n))
                .filter_map(|n| {
                    let d = point_to_geometry_m(p, &n.geometry).ok()?.0;
                    (d <= radius).then_some((n, d))
                })
                .collect();
            if found.len() >= k || radius >= max_radius_m {
                found.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.id.cmp(&b.0.id)));
                found.truncate(k);
                return found;
            }
            radius = (radius * 2.0).min(max_radius_m);
        }
    }

    /// Adds a viewpoint for a street-view image and links it to its nearest
    /// road. Repeating the call with the same id and location returns the
    /// existing node.
    pub fn anchor_image(&mut self, image_id: &str, p: GeoPoint) -> Result<String, GraphError> {
        if let Some(existing) = self.node(image_id) {
            return if existing.kind == NodeKind::Viewpoint
                && existing.geometry == Geometry::Point(p)
            {
                Ok(existing.id.clone())
            } else {
                Err(GraphError::ConflictingNode(image_id.to_string()))
            };
        }
        let node = GraphNode::new(image_id, NodeKind::Viewpoint, Geometry::Point(p));
        let road = build::nearest_road(self, &node, BuildStrategy::Indexed).ok_or_else(|| {
            GraphError::Unanchorable {
                image_id: image_id.to_string(),
                cutoff_m: self.config.nearest_cutoff_m,
            }
        })?;
        let road_id = self.nodes[road].id.clone();
        self.insert_node(node)?;
        let edge = build::annotated_edge(self, image_id, &road_id, EdgeKind::Nearest, None, None)?;
        self.insert_edge(edge);
        Ok(image_id.to_string())
    }

    pub(crate) fn index(&self, id: &str) -> Option<usize> {
        self.index_of.get(id).copied()
    }

    pub(crate) fn node_at(&self, idx: usize) -> &GraphNode {
        &self.nodes[idx]
    }
}

/// Preference among parallel edges when a single relation is needed.
pub(crate) fn relation_rank(kind: EdgeKind) -> u8 {
    match kind {
        EdgeKind::Nearest => 0,
        EdgeKind::Near => 1,
        EdgeKind::Crossing => 2,
        EdgeKind::OnSameStreet => 3,
        EdgeKind::Intersects => 4,
        EdgeKind::Bounds => 5,
    }
}
