//! Rule-based relation derivation.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::geojson::Rejection;
use super::{
    relation_measure, BuildReport, EdgeKind, GraphBuildConfig, GraphEdge, GraphError, GraphNode,
    NodeKind, SpatialGraph,
};
use crate::geo::{
    haversine_m, polyline_crosses_polygon, segments_within, GeoPoint, Geometry, METERS_PER_DEGREE,
};

/// How candidate pairs are found. Both strategies apply the same geometric
/// tests and thresholds and produce identical graphs; `Exhaustive` compares
/// every pair and exists as a reference for the indexed path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BuildStrategy {
    #[default]
    Indexed,
    Exhaustive,
}

pub fn build_graph(
    nodes: Vec<GraphNode>,
    config: GraphBuildConfig,
) -> Result<SpatialGraph, GraphError> {
    build_graph_with(nodes, config, BuildStrategy::Indexed)
}

/// Builds the graph from entity nodes. Input order does not matter: nodes are
/// processed in id order and edges are emitted sorted.
pub fn build_graph_with(
    mut nodes: Vec<GraphNode>,
    config: GraphBuildConfig,
    strategy: BuildStrategy,
) -> Result<SpatialGraph, GraphError> {
    config.validate()?;
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = nodes.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(GraphError::DuplicateId(w[0].id.clone()));
    }
    let mut report = BuildReport::default();
    let mut kept = Vec::with_capacity(nodes.len());
    for mut node in nodes {
        match node.geometry.validate() {
            Ok(()) => {
                node.anchor = node.geometry.anchor();
                kept.push(node);
            }
            Err(e) => report.skipped.push(Rejection {
                id: Some(node.id),
                index: None,
                reason: e.to_string(),
            }),
        }
    }
    log::debug!(
        "building graph from {} nodes ({} skipped)",
        kept.len(),
        report.skipped.len()
    );
    let mut graph = SpatialGraph::from_parts(kept, Vec::new(), config)?;
    graph.report = report;

    let roads: Vec<usize> = (0..graph.nodes.len())
        .filter(|&i| graph.nodes[i].kind == NodeKind::Road)
        .collect();
    let mut edges = Vec::new();

    for (point, members) in detect_crossings(&graph, &roads, strategy) {
        let mut id = format!("ix:{:.7},{:.7}", point.lon(), point.lat());
        let mut k = 2;
        while graph.contains(&id) {
            id = format!("ix:{:.7},{:.7}#{k}", point.lon(), point.lat());
            k += 1;
        }
        let mut names: Vec<&str> = members
            .iter()
            .filter(|&&r| graph.nodes[r].is_named())
            .map(|&r| graph.nodes[r].display_name())
            .collect();
        names.sort_unstable();
        names.dedup();
        let mut node = GraphNode::new(id.clone(), NodeKind::Intersection, Geometry::Point(point))
            .with_category("intersection");
        if let Some(name) = intersection_name(&names) {
            node = node.with_name(name);
        }
        let road_ids: Vec<String> = members.iter().map(|&r| graph.nodes[r].id.clone()).collect();
        graph.insert_node(node)?;
        for road in road_ids {
            edges.push(annotated_edge(
                &graph,
                &road,
                &id,
                EdgeKind::Crossing,
                Some(point),
                None,
            )?);
        }
    }

    let cutoff = config.nearest_cutoff_m.max(config.near_threshold_m);
    let anchored: Vec<(usize, Vec<(usize, f64)>)> = (0..graph.nodes.len())
        .into_par_iter()
        .filter(|&i| {
            matches!(
                graph.nodes[i].kind,
                NodeKind::Viewpoint | NodeKind::Poi | NodeKind::TransitFacility
            )
        })
        .map(|i| (i, roads_within(&graph, &graph.nodes[i], cutoff, strategy)))
        .collect();

    let mut by_street: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, near_roads) in &anchored {
        let node = &graph.nodes[*i];
        let nearest = near_roads
            .first()
            .filter(|(_, d)| *d <= config.nearest_cutoff_m)
            .map(|(r, _)| *r);
        if let Some(r) = nearest {
            edges.push(annotated_edge(
                &graph,
                &node.id,
                &graph.nodes[r].id,
                EdgeKind::Nearest,
                None,
                None,
            )?);
            if node.kind == NodeKind::Poi {
                by_street.entry(r).or_default().push(*i);
            }
        }
        if node.kind == NodeKind::Poi {
            for &(r, d) in near_roads {
                if Some(r) != nearest && d <= config.near_threshold_m {
                    edges.push(annotated_edge(
                        &graph,
                        &graph.nodes[r].id,
                        &node.id,
                        EdgeKind::Near,
                        None,
                        None,
                    )?);
                }
            }
        }
    }

    for (road, pois) in &by_street {
        for (a, &i) in pois.iter().enumerate() {
            for &j in &pois[a + 1..] {
                let (s, d) = (&graph.nodes[i].id, &graph.nodes[j].id);
                let via = Some(graph.nodes[*road].id.clone());
                edges.push(annotated_edge(
                    &graph,
                    s,
                    d,
                    EdgeKind::OnSameStreet,
                    None,
                    via,
                )?);
            }
        }
    }

    let aoi_edges: Vec<Result<Vec<GraphEdge>, GraphError>> = (0..graph.nodes.len())
        .into_par_iter()
        .filter(|&i| graph.nodes[i].kind == NodeKind::Aoi)
        .map(|i| area_edges(&graph, i, &roads, strategy))
        .collect();
    for group in aoi_edges {
        edges.extend(group?);
    }

    edges.sort_by(|a, b| (&a.src, &a.dst, a.kind).cmp(&(&b.src, &b.dst, b.kind)));
    for edge in edges {
        graph.insert_edge(edge);
    }
    Ok(graph)
}

fn intersection_name(names: &[&str]) -> Option<String> {
    match names {
        [] => None,
        [one] => Some(format!("Intersection on {one}")),
        [a, b] => Some(format!("Intersection of {a} and {b}")),
        [rest @ .., last] => Some(format!("Intersection of {} and {last}", rest.join(", "))),
    }
}

/// Annotated edge between two existing nodes.
pub(crate) fn annotated_edge(
    graph: &SpatialGraph,
    src: &str,
    dst: &str,
    kind: EdgeKind,
    crossing_point: Option<GeoPoint>,
    via: Option<String>,
) -> Result<GraphEdge, GraphError> {
    let s = graph
        .node(src)
        .ok_or_else(|| GraphError::UnknownNode(src.to_string()))?;
    let d = graph
        .node(dst)
        .ok_or_else(|| GraphError::UnknownNode(dst.to_string()))?;
    let (distance_m, bearing_deg, _, _) = relation_measure(s, d)?;
    Ok(GraphEdge {
        src: src.to_string(),
        dst: dst.to_string(),
        kind,
        distance_m,
        bearing_deg,
        crossing_point,
        via,
    })
}

fn candidates(
    graph: &SpatialGraph,
    geometry: &Geometry,
    radius_m: f64,
    strategy: BuildStrategy,
) -> Vec<usize> {
    match strategy {
        BuildStrategy::Indexed => graph.extent.query(&geometry.bbox().expanded(radius_m)),
        BuildStrategy::Exhaustive => (0..graph.nodes.len()).collect(),
    }
}

/// Roads within `radius_m` of `node`, sorted by (distance, id).
fn roads_within(
    graph: &SpatialGraph,
    node: &GraphNode,
    radius_m: f64,
    strategy: BuildStrategy,
) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = candidates(graph, &node.geometry, radius_m, strategy)
        .into_iter()
        .filter(|&r| graph.nodes[r].kind == NodeKind::Road && graph.nodes[r].id != node.id)
        .filter_map(|r| {
            let d = relation_measure(node, &graph.nodes[r]).ok()?.0;
            (d <= radius_m).then_some((r, d))
        })
        .collect();
    out.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| graph.nodes[a.0].id.cmp(&graph.nodes[b.0].id))
    });
    out
}

pub(crate) fn nearest_road(
    graph: &SpatialGraph,
    node: &GraphNode,
    strategy: BuildStrategy,
) -> Option<usize> {
    roads_within(graph, node, graph.config.nearest_cutoff_m, strategy)
        .first()
        .map(|(r, _)| *r)
}

/// Crossing points between roads, merged into clusters no wider than the
/// snap tolerance, each with the sorted set of member roads.
fn detect_crossings(
    graph: &SpatialGraph,
    roads: &[usize],
    strategy: BuildStrategy,
) -> Vec<(GeoPoint, Vec<usize>)> {
    let snap = graph.config.snap_tolerance_m;
    let hits: Vec<(GeoPoint, usize, usize)> = roads
        .par_iter()
        .flat_map_iter(|&i| {
            let gi = &graph.nodes[i].geometry;
            let others: Vec<usize> = match strategy {
                BuildStrategy::Indexed => candidates(graph, gi, snap, strategy)
                    .into_iter()
                    .filter(|&j| j > i && graph.nodes[j].kind == NodeKind::Road)
                    .collect(),
                BuildStrategy::Exhaustive => roads.iter().copied().filter(|&j| j > i).collect(),
            };
            others
                .into_iter()
                .flat_map(move |j| {
                    segments_within(gi, &graph.nodes[j].geometry, snap)
                        .into_iter()
                        .map(move |p| (p, i, j))
                })
                .collect::<Vec<_>>()
        })
        .collect();

    // Union-find over hit points closer than the snap tolerance.
    let mut order: Vec<usize> = (0..hits.len()).collect();
    order.sort_by(|&a, &b| hits[a].0.lat().total_cmp(&hits[b].0.lat()));
    let mut parent: Vec<usize> = (0..hits.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let dlat = snap / METERS_PER_DEGREE;
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if hits[b].0.lat() - hits[a].0.lat() > dlat {
                break;
            }
            if haversine_m(hits[a].0, hits[b].0) <= snap {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for h in 0..hits.len() {
        let root = find(&mut parent, h);
        clusters.entry(root).or_default().push(h);
    }
    let mut out: Vec<(GeoPoint, Vec<usize>)> = clusters
        .into_values()
        .map(|members| {
            let n = members.len() as f64;
            let lon = members.iter().map(|&h| hits[h].0.lon()).sum::<f64>() / n;
            let lat = members.iter().map(|&h| hits[h].0.lat()).sum::<f64>() / n;
            let mut rs: Vec<usize> = members
                .iter()
                .flat_map(|&h| [hits[h].1, hits[h].2])
                .collect();
            rs.sort_unstable();
            rs.dedup();
            (GeoPoint::new(lon, lat).expect("mean of valid points"), rs)
        })
        .collect();
    out.sort_by(|a, b| {
        a.0.lon()
            .total_cmp(&b.0.lon())
            .then(a.0.lat().total_cmp(&b.0.lat()))
    });
    out
}

/// `bounds` and `intersects` edges for one AOI.
fn area_edges(
    graph: &SpatialGraph,
    aoi: usize,
    roads: &[usize],
    strategy: BuildStrategy,
) -> Result<Vec<GraphEdge>, GraphError> {
    let area = &graph.nodes[aoi];
    let Geometry::Polygon(ring) = &area.geometry else {
        return Ok(Vec::new());
    };
    let buffer = graph.config.bounds_buffer_m;
    let cands: Vec<usize> = match strategy {
        BuildStrategy::Indexed => candidates(graph, &area.geometry, buffer, strategy)
            .into_iter()
            .filter(|&r| graph.nodes[r].kind == NodeKind::Road)
            .collect(),
        BuildStrategy::Exhaustive => roads.to_vec(),
    };
    let mut out = Vec::new();
    for r in cands {
        let road = &graph.nodes[r];
        if let Some(x) = polyline_crosses_polygon(&road.geometry, ring) {
            out.push(annotated_edge(
                graph,
                &road.id,
                &area.id,
                EdgeKind::Intersects,
                Some(x),
                None,
            )?);
        } else if relation_measure(road, area)?.0 <= buffer {
            out.push(annotated_edge(
                graph,
                &road.id,
                &area.id,
                EdgeKind::Bounds,
                None,
                None,
            )?);
        }
    }
    Ok(out)
}
