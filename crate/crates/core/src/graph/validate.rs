use serde::Serialize;

use super::{relation_measure, EdgeKind, NodeKind, SpatialGraph};
use crate::geo::{cell_id, haversine_m};

const DISTANCE_TOLERANCE_M: f64 = 0.1;
const BEARING_TOLERANCE_DEG: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    DanglingEdge {
        edge: usize,
        missing: String,
    },
    SelfLoop {
        edge: usize,
        node: String,
    },
    AsymmetricAdjacency {
        node: String,
        edge: usize,
    },
    UnindexedNode {
        node: String,
    },
    InvalidGeometry {
        node: String,
        reason: String,
    },
    AnchorMismatch {
        node: String,
        off_by_m: f64,
    },
    EndpointKinds {
        edge: usize,
        kind: EdgeKind,
        src: NodeKind,
        dst: NodeKind,
    },
    DistanceMismatch {
        edge: usize,
        stored: f64,
        recomputed: f64,
    },
    BearingMismatch {
        edge: usize,
        stored: f64,
        recomputed: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub nodes_checked: usize,
    pub edges_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn kinds_allowed(kind: EdgeKind, src: NodeKind, dst: NodeKind) -> bool {
    use NodeKind::*;
    match kind {
        EdgeKind::Nearest => matches!(src, Viewpoint | Poi | TransitFacility) && dst == Road,
        EdgeKind::Near => src == Road && dst == Poi,
        EdgeKind::Crossing => src == Road && dst == Intersection,
        EdgeKind::OnSameStreet => src == Poi && dst == Poi,
        EdgeKind::Bounds | EdgeKind::Intersects => src == Road && dst == Aoi,
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Checks structural and geometric consistency of a graph.
pub fn validate_graph(graph: &SpatialGraph) -> ValidationReport {
    let mut report = ValidationReport {
        nodes_checked: graph.node_count(),
        edges_checked: graph.edge_count(),
        ..Default::default()
    };
    let v = &mut report.violations;

    for (i, node) in graph.nodes.iter().enumerate() {
        if let Err(e) = node.geometry.validate() {
            v.push(Violation::InvalidGeometry {
                node: node.id.clone(),
                reason: e.to_string(),
            });
            continue;
        }
        let off = haversine_m(node.anchor, node.geometry.anchor());
        if off > DISTANCE_TOLERANCE_M {
            v.push(Violation::AnchorMismatch {
                node: node.id.clone(),
                off_by_m: off,
            });
        }
        let indexed = cell_id(node.anchor, graph.config.cell_level)
            .ok()
            .and_then(|c| graph.cell_index.get(&c))
            .is_some_and(|list| list.contains(&i));
        if !indexed {
            v.push(Violation::UnindexedNode {
                node: node.id.clone(),
            });
        }
        for &e in &graph.adjacency[i] {
            let edge = &graph.edges[e];
            if edge.src != node.id && edge.dst != node.id {
                v.push(Violation::AsymmetricAdjacency {
                    node: node.id.clone(),
                    edge: e,
                });
            }
        }
    }

    for (e, edge) in graph.edges.iter().enumerate() {
        let (s, d) = (graph.index(&edge.src), graph.index(&edge.dst));
        for (id, idx) in [(&edge.src, s), (&edge.dst, d)] {
            if idx.is_none() {
                v.push(Violation::DanglingEdge {
                    edge: e,
                    missing: id.clone(),
                });
            }
        }
        let (Some(s), Some(d)) = (s, d) else { continue };
        if s == d {
            v.push(Violation::SelfLoop {
                edge: e,
                node: edge.src.clone(),
            });
            continue;
        }
        for end in [s, d] {
            if !graph.adjacency[end].contains(&e) {
                v.push(Violation::AsymmetricAdjacency {
                    node: graph.nodes[end].id.clone(),
                    edge: e,
                });
            }
        }
        let (src, dst) = (graph.node_at(s), graph.node_at(d));
        if !kinds_allowed(edge.kind, src.kind, dst.kind) {
            v.push(Violation::EndpointKinds {
                edge: e,
                kind: edge.kind,
                src: src.kind,
                dst: dst.kind,
            });
        }
        let Ok((dist, bearing, _, _)) = relation_measure(src, dst) else {
            continue;
        };
        if !((edge.distance_m - dist).abs() <= DISTANCE_TOLERANCE_M) {
            v.push(Violation::DistanceMismatch {
                edge: e,
                stored: edge.distance_m,
                recomputed: dist,
            });
        }
        if !(angle_diff(edge.bearing_deg, bearing) <= BEARING_TOLERANCE_DEG) {
            v.push(Violation::BearingMismatch {
                edge: e,
                stored: edge.bearing_deg,
                recomputed: bearing,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPoint, Geometry};
    use crate::graph::{build_graph, GraphBuildConfig, GraphNode};

    fn sample() -> SpatialGraph {
        let road = GraphNode::new(
            "r",
            NodeKind::Road,
            Geometry::line_string(vec![
                GeoPoint::new(0.0, 0.0).unwrap(),
                GeoPoint::new(0.001, 0.0).unwrap(),
            ])
            .unwrap(),
        );
        let poi = GraphNode::new(
            "p",
            NodeKind::Poi,
            Geometry::Point(GeoPoint::new(0.0005, 0.0002).unwrap()),
        );
        build_graph(vec![road, poi], GraphBuildConfig::default()).unwrap()
    }

    #[test]
    fn clean_graph_passes() {
        let g = sample();
        assert_eq!(g.edge_count(), 1);
        assert!(validate_graph(&g).is_ok());
    }

    #[test]
    fn injected_faults_are_reported() {
        let g = sample();
        let nodes: Vec<_> = g.nodes().cloned().collect();
        let mut edges = g.edges().to_vec();
        let mut dangling = edges[0].clone();
        dangling.dst = "ghost".into();
        edges.push(dangling);
        edges[0].distance_m += 5.0;
        edges[0].bearing_deg = (edges[0].bearing_deg + 90.0) % 360.0;
        let bad = SpatialGraph::from_parts(nodes, edges, *g.config()).unwrap();
        let report = validate_graph(&bad);
        let names: Vec<_> = report
            .violations
            .iter()
            .map(|v| {
                serde_json::to_value(v).unwrap()["violation"]
                    .as_str()
                    .unwrap()
                    .to_string()
            })
            .collect();
        assert!(names.contains(&"dangling_edge".to_string()));
        assert!(names.contains(&"distance_mismatch".to_string()));
        assert!(names.contains(&"bearing_mismatch".to_string()));
    }
}
