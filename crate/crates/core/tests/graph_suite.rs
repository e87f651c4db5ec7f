//! Graph construction against brute-force re-derivations, ingestion,
//! validation and the on-disk container.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{fixtures_dir, golden};
use proptest::prelude::*;
use urbangraph_core::geo::{
    closest_points, point_to_geometry_m, polyline_crosses_polygon, GeoPoint, Geometry,
};
use urbangraph_core::graph::{
    build_graph, build_graph_with, load_geojson, read_graph, to_geojson, validate_graph,
    write_graph, BuildStrategy, EdgeKind, GraphBuildConfig, GraphEdge, GraphNode, NodeKind,
    SpatialGraph, Violation,
};
use urbangraph_core::synth::{fixture_city, random_city};

const FIXTURE_SEED: u64 = 20_240_601;

type EdgeKey = (String, String, EdgeKind);

fn key(e: &GraphEdge) -> EdgeKey {
    (e.src.clone(), e.dst.clone(), e.kind)
}

fn edge_set(g: &SpatialGraph) -> BTreeSet<EdgeKey> {
    g.edges().iter().map(key).collect()
}

fn node_set(g: &SpatialGraph) -> BTreeSet<(String, NodeKind)> {
    g.nodes().map(|n| (n.id.clone(), n.kind)).collect()
}

fn roads_of(nodes: &[GraphNode]) -> Vec<&GraphNode> {
    nodes.iter().filter(|n| n.kind == NodeKind::Road).collect()
}

/// Nearest road by scanning every road, ties to the smaller id.
fn nearest_oracle<'a>(p: GeoPoint, roads: &[&'a GraphNode], cutoff: f64) -> Option<&'a GraphNode> {
    roads
        .iter()
        .map(|r| (point_to_geometry_m(p, &r.geometry).unwrap().0, *r))
        .filter(|(d, _)| *d <= cutoff)
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)))
        .map(|x| x.1)
}

/// Quadratic re-derivation of every non-crossing relation.
fn relation_oracle(nodes: &[GraphNode], cfg: &GraphBuildConfig) -> BTreeSet<EdgeKey> {
    let roads = roads_of(nodes);
    let mut out = BTreeSet::new();
    let mut by_road: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for n in nodes {
        let Geometry::Point(p) = n.geometry else {
            continue;
        };
        if !matches!(
            n.kind,
            NodeKind::Viewpoint | NodeKind::Poi | NodeKind::TransitFacility
        ) {
            continue;
        }
        let nearest = nearest_oracle(p, &roads, cfg.nearest_cutoff_m);
        if let Some(r) = nearest {
            out.insert((n.id.clone(), r.id.clone(), EdgeKind::Nearest));
            if n.kind == NodeKind::Poi {
                by_road.entry(r.id.clone()).or_default().push(n.id.clone());
            }
        }
        if n.kind == NodeKind::Poi {
            for r in &roads {
                let d = point_to_geometry_m(p, &r.geometry).unwrap().0;
                if d <= cfg.near_threshold_m
                    && Some(r.id.as_str()) != nearest.map(|x| x.id.as_str())
                {
                    out.insert((r.id.clone(), n.id.clone(), EdgeKind::Near));
                }
            }
        }
    }
    for pois in by_road.values_mut() {
        pois.sort();
        for (i, a) in pois.iter().enumerate() {
            for b in &pois[i + 1..] {
                out.insert((a.clone(), b.clone(), EdgeKind::OnSameStreet));
            }
        }
    }
    for a in nodes.iter().filter(|n| n.kind == NodeKind::Aoi) {
        let Geometry::Polygon(ring) = &a.geometry else {
            continue;
        };
        for r in &roads {
            if polyline_crosses_polygon(&r.geometry, ring).is_some() {
                out.insert((r.id.clone(), a.id.clone(), EdgeKind::Intersects));
            } else if closest_points(&r.geometry, &a.geometry).unwrap().0 <= cfg.bounds_buffer_m {
                out.insert((r.id.clone(), a.id.clone(), EdgeKind::Bounds));
            }
        }
    }
    out
}

/// Crossing structure: every pair of touching roads shares an intersection
/// node, and every intersection joins at least two roads.
fn check_crossings(g: &SpatialGraph, nodes: &[GraphNode], snap: f64) {
    let roads = roads_of(nodes);
    let mut junctions: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in g.edges().iter().filter(|e| e.kind == EdgeKind::Crossing) {
        assert_eq!(g.node(&e.src).unwrap().kind, NodeKind::Road);
        assert_eq!(g.node(&e.dst).unwrap().kind, NodeKind::Intersection);
        junctions.entry(&e.dst).or_default().insert(&e.src);
    }
    assert!(junctions.values().all(|rs| rs.len() >= 2));
    let ix_count = g
        .nodes()
        .filter(|n| n.kind == NodeKind::Intersection)
        .count();
    assert_eq!(ix_count, junctions.len());
    for (i, a) in roads.iter().enumerate() {
        for b in &roads[i + 1..] {
            if closest_points(&a.geometry, &b.geometry).unwrap().0 <= snap {
                assert!(
                    junctions
                        .values()
                        .any(|rs| rs.contains(a.id.as_str()) && rs.contains(b.id.as_str())),
                    "{} and {} touch without a junction",
                    a.id,
                    b.id
                );
            }
        }
    }
}

#[test]
fn indexed_build_equals_quadratic_build_on_20_cities() {
    let cfg = GraphBuildConfig::default();
    for seed in 0..20u64 {
        let nodes = random_city(seed, 60 + seed as usize * 3, 120, 8, 1500.0);
        let fast = build_graph_with(nodes.clone(), cfg, BuildStrategy::Indexed).unwrap();
        let slow = build_graph_with(nodes.clone(), cfg, BuildStrategy::Exhaustive).unwrap();
        assert!(fast.node_count() <= 500, "{}", fast.node_count());
        assert_eq!(node_set(&fast), node_set(&slow));
        assert_eq!(fast.edges(), slow.edges());

        let derived: BTreeSet<EdgeKey> = edge_set(&fast)
            .into_iter()
            .filter(|k| k.2 != EdgeKind::Crossing)
            .collect();
        assert_eq!(derived, relation_oracle(&nodes, &cfg), "seed {seed}");
        check_crossings(&fast, &nodes, cfg.snap_tolerance_m);
        assert!(validate_graph(&fast).is_ok());
    }
}

#[test]
fn fixture_city_file_is_current_and_counts_match() {
    let city = fixture_city(FIXTURE_SEED);
    // Viewpoints live in images.csv, not in the entity file.
    let entities: Vec<GraphNode> = city
        .nodes
        .iter()
        .filter(|n| n.kind != NodeKind::Viewpoint)
        .cloned()
        .collect();
    golden("city/city.geojson", &to_geojson(&entities));
    let mut csv = String::from("id,lon,lat\n");
    for (id, p) in &city.images {
        csv.push_str(&format!("{id},{},{}\n", p.lon(), p.lat()));
    }
    golden("city/images.csv", &csv);

    let text = std::fs::read_to_string(fixtures_dir().join("city/city.geojson")).unwrap();
    let (nodes, report) = load_geojson(text.as_bytes()).unwrap();
    assert_eq!(nodes.len(), 155);
    assert!(report.rejected.is_empty());
    // Line-count oracle: one feature per line, kind in its properties.
    for kind in ["road", "poi", "aoi"] {
        let lines = text
            .lines()
            .filter(|l| l.contains(&format!("\"kind\":\"{kind}\"")))
            .count();
        let loaded = nodes.iter().filter(|n| n.kind.as_str() == kind).count();
        assert_eq!(lines, loaded, "{kind}");
    }
    assert_eq!(
        nodes.iter().filter(|n| n.kind == NodeKind::Road).count(),
        100
    );
}

#[test]
fn fixture_city_builds_cleanly_and_anchors_match_scan() {
    let city = fixture_city(FIXTURE_SEED);
    let cfg = GraphBuildConfig::default();
    let mut g = build_graph(city.nodes.clone(), cfg).unwrap();
    assert!(validate_graph(&g).is_ok(), "{:?}", validate_graph(&g));
    let quadratic = build_graph_with(city.nodes.clone(), cfg, BuildStrategy::Exhaustive).unwrap();
    assert_eq!(g.edges(), quadratic.edges());

    // Anchoring the same 20 images again is a no-op.
    let before = g.edges().to_vec();
    for (id, p) in &city.images {
        assert_eq!(&g.anchor_image(id, *p).unwrap(), id);
    }
    assert_eq!(g.edges(), &before[..]);

    // Fresh anchoring into a graph without viewpoints matches a full scan.
    let entities: Vec<GraphNode> = city
        .nodes
        .iter()
        .filter(|n| n.kind != NodeKind::Viewpoint)
        .cloned()
        .collect();
    let roads: Vec<GraphNode> = roads_of(&entities).into_iter().cloned().collect();
    let road_refs: Vec<&GraphNode> = roads.iter().collect();
    let mut g = build_graph(entities, cfg).unwrap();
    for (id, p) in &city.images {
        g.anchor_image(id, *p).unwrap();
        let e = g
            .edges_of(id)
            .find(|e| e.kind == EdgeKind::Nearest)
            .unwrap();
        let want = nearest_oracle(*p, &road_refs, cfg.nearest_cutoff_m).unwrap();
        assert_eq!(e.dst, want.id);
    }
    assert!(validate_graph(&g).is_ok());
}

fn pt(lon: f64, lat: f64) -> GeoPoint {
    GeoPoint::new(lon, lat).unwrap()
}

#[test]
fn poi_attaches_to_the_closest_of_three_roads() {
    let road = |id: &str, lat: f64| {
        GraphNode::new(
            id,
            NodeKind::Road,
            Geometry::line_string(vec![pt(-0.001, lat), pt(0.001, lat)]).unwrap(),
        )
    };
    let poi = GraphNode::new("poi", NodeKind::Poi, Geometry::Point(pt(0.0, 0.0)));
    let nodes = vec![
        road("a", 0.0003),
        road("b", -0.0002),
        road("c", 0.0005),
        poi,
    ];
    let g = build_graph(nodes.clone(), GraphBuildConfig::default()).unwrap();
    let nearest: Vec<&GraphEdge> = g
        .edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::Nearest)
        .collect();
    assert_eq!(nearest.len(), 1);
    let want = nearest_oracle(pt(0.0, 0.0), &roads_of(&nodes), 100.0).unwrap();
    assert_eq!(nearest[0].dst, want.id);
    assert_eq!(want.id, "b");

    // One POI and one road within the cutoff: exactly one edge.
    let g = build_graph(
        vec![road("a", 0.0003), nodes[3].clone()],
        GraphBuildConfig::default(),
    )
    .unwrap();
    assert_eq!(g.edge_count(), 1);
    assert_eq!(g.edges()[0].kind, EdgeKind::Nearest);
}

#[test]
fn roads_sharing_a_vertex_make_one_intersection() {
    let nodes = vec![
        GraphNode::new(
            "x",
            NodeKind::Road,
            Geometry::line_string(vec![pt(0.0, 0.0), pt(0.001, 0.0)]).unwrap(),
        )
        .with_name("Kallang Road"),
        GraphNode::new(
            "y",
            NodeKind::Road,
            Geometry::line_string(vec![pt(0.001, 0.0), pt(0.001, 0.001)]).unwrap(),
        )
        .with_name("Geylang Road"),
    ];
    let g = build_graph(nodes, GraphBuildConfig::default()).unwrap();
    let ix: Vec<&GraphNode> = g
        .nodes()
        .filter(|n| n.kind == NodeKind::Intersection)
        .collect();
    assert_eq!(ix.len(), 1);
    assert_eq!(
        ix[0].name.as_deref(),
        Some("Intersection of Geylang Road and Kallang Road")
    );
    assert_eq!(
        g.edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::Crossing)
            .count(),
        2
    );
}

#[test]
fn validation_finds_injected_faults() {
    let city = fixture_city(FIXTURE_SEED);
    let g = build_graph(city.nodes, GraphBuildConfig::default()).unwrap();
    let nodes: Vec<GraphNode> = g.nodes().cloned().collect();

    let mut edges = g.edges().to_vec();
    edges.push(GraphEdge {
        src: nodes[0].id.clone(),
        dst: "ghost".into(),
        kind: EdgeKind::Near,
        distance_m: 0.0,
        bearing_deg: 0.0,
        crossing_point: None,
        via: None,
    });
    let bad = SpatialGraph::from_parts(nodes.clone(), edges, *g.config()).unwrap();
    let report = validate_graph(&bad);
    assert_eq!(report.violations.len(), 1, "{:?}", report.violations);
    assert!(matches!(
        &report.violations[0],
        Violation::DanglingEdge { missing, .. } if missing == "ghost"
    ));

    let mut edges = g.edges().to_vec();
    let i = edges.iter().position(|e| e.kind == EdgeKind::Near).unwrap();
    edges[i].distance_m += 1.0;
    let bad = SpatialGraph::from_parts(nodes, edges, *g.config()).unwrap();
    let report = validate_graph(&bad);
    assert_eq!(report.violations.len(), 1);
    assert!(matches!(
        report.violations[0],
        Violation::DistanceMismatch { edge, .. } if edge == i
    ));
}

#[test]
fn geojson_edge_cases() {
    let (nodes, report) = load_geojson(br#"{"type":"FeatureCollection","features":[]}"#).unwrap();
    assert!(nodes.is_empty() && report.rejected.is_empty());
    let (nodes, _) = load_geojson(
        br#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"kind":"poi"},"geometry":{"type":"Point","coordinates":[1,2]}}]}"#,
    )
    .unwrap();
    assert_eq!(nodes.len(), 1);
    assert_eq!(nodes[0].kind, NodeKind::Poi);
    // An open ring is rejected per feature, not fatally.
    let (nodes, report) = load_geojson(
        br#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"kind":"aoi"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}}]}"#,
    )
    .unwrap();
    assert!(nodes.is_empty());
    assert_eq!(report.rejected.len(), 1);
}

#[test]
fn container_round_trip_is_exact_and_stable() {
    let city = fixture_city(FIXTURE_SEED);
    let mut g = build_graph(city.nodes, GraphBuildConfig::default()).unwrap();
    for (id, p) in &city.images {
        g.anchor_image(id, *p).unwrap();
    }
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let meta = write_graph(&g, a.path(), Some(7)).unwrap();
    let (back, meta_back) = read_graph(a.path()).unwrap();
    assert_eq!(meta, meta_back);
    assert_eq!(node_set(&back), node_set(&g));
    let mut nodes_a: Vec<&GraphNode> = g.nodes().collect();
    let mut nodes_b: Vec<&GraphNode> = back.nodes().collect();
    nodes_a.sort_by(|x, y| x.id.cmp(&y.id));
    nodes_b.sort_by(|x, y| x.id.cmp(&y.id));
    assert_eq!(nodes_a, nodes_b);
    assert_eq!(back.edges(), g.edges());
    write_graph(&back, b.path(), Some(7)).unwrap();
    for f in ["nodes.jsonl", "edges.jsonl", "meta.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn build_ignores_input_order(seed in any::<u64>(), rot in 0usize..200) {
        let nodes = random_city(seed, 25, 40, 3, 800.0);
        let mut shuffled = nodes.clone();
        let len = shuffled.len();
        shuffled.rotate_left(rot % len);
        shuffled.reverse();
        let a = build_graph(nodes, GraphBuildConfig::default()).unwrap();
        let b = build_graph(shuffled, GraphBuildConfig::default()).unwrap();
        prop_assert_eq!(node_set(&a), node_set(&b));
        prop_assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn enlarging_near_threshold_keeps_near_edges(seed in any::<u64>(), extra in 1.0f64..40.0) {
        let nodes = random_city(seed, 20, 40, 0, 600.0);
        let small = GraphBuildConfig { near_threshold_m: 30.0, ..GraphBuildConfig::default() };
        let large = GraphBuildConfig { near_threshold_m: 30.0 + extra, ..small };
        let a = build_graph(nodes.clone(), small).unwrap();
        let b = build_graph(nodes, large).unwrap();
        let near = |g: &SpatialGraph| -> BTreeSet<EdgeKey> {
            edge_set(g).into_iter().filter(|k| k.2 == EdgeKind::Near).collect()
        };
        prop_assert!(near(&a).is_subset(&near(&b)));
    }

    #[test]
    fn stored_annotations_recompute(seed in any::<u64>()) {
        let g = build_graph(random_city(seed, 20, 30, 3, 700.0), GraphBuildConfig::default()).unwrap();
        let report = validate_graph(&g);
        prop_assert!(report.is_ok(), "{:?}", report.violations);
    }
}
