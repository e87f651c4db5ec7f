//! Small deterministic batches shared by tests, the CLI and the acceptance
//! suite.

use urbangraph_core::geo::{destination_point, GeoPoint, Geometry};
use urbangraph_core::graph::{build_graph, GraphBuildConfig, GraphNode, NodeKind};
use urbangraph_core::subgraph::{extract_subgraph, ExtractConfig};

use crate::features::{prepare_graph, tokenize};
use crate::train::{InstructionTemplate, InstructionVariant};
use crate::{ContrastiveBatch, EncoderConfig, EncoderError, Query, TrainStage};

const SITES: [(&str, &str, &str, &str, &str); 4] = [
    (
        "Orchard Road",
        "Penang Lane",
        "Kopi Corner",
        "cafe",
        "Lumen Books",
    ),
    (
        "Mercer Street",
        "Hollis Avenue",
        "Bayview Dental",
        "clinic",
        "Tidal Bakery",
    ),
    (
        "Quarry Way",
        "Ashgrove Row",
        "Station Pharmacy",
        "pharmacy",
        "Redfern Hall",
    ),
    (
        "Juniper Drive",
        "Calder Street",
        "Northside Gym",
        "fitness",
        "Marrow Deli",
    ),
];

/// Four queries, each a 4-node subgraph centered on a POI that touches both
/// roads and the other POI, at mid latitude. Targets describe the center.
pub fn four_node_batch(cfg: &EncoderConfig) -> Result<ContrastiveBatch, EncoderError> {
    cfg.validate()?;
    let mut nodes = Vec::new();
    for (k, (road_a, road_b, poi, category, other)) in SITES.iter().enumerate() {
        let o = GeoPoint::new(-73.99 + 0.03 * k as f64, 40.70 + 0.01 * k as f64)
            .map_err(|e| EncoderError::Config(e.to_string()))?;
        let h = 20.0 + 35.0 * k as f64;
        let line = |c: GeoPoint| {
            Geometry::line_string(vec![
                destination_point(c, h, 200.0),
                destination_point(c, h + 180.0, 200.0),
            ])
            .map_err(|e| EncoderError::Config(e.to_string()))
        };
        let o2 = destination_point(o, h + 90.0, 45.0);
        let p1 = destination_point(destination_point(o, h + 90.0, 14.0 + k as f64), h, 10.0);
        let p2 = destination_point(
            destination_point(o, h + 90.0, 6.0),
            h + 180.0,
            40.0 + 7.0 * k as f64,
        );
        nodes.push(GraphNode::new(format!("a{k}"), NodeKind::Road, line(o)?).with_name(*road_a));
        nodes.push(GraphNode::new(format!("b{k}"), NodeKind::Road, line(o2)?).with_name(*road_b));
        nodes.push(
            GraphNode::new(format!("c{k}"), NodeKind::Poi, Geometry::Point(p1))
                .with_name(*poi)
                .with_category(*category),
        );
        nodes.push(
            GraphNode::new(format!("d{k}"), NodeKind::Poi, Geometry::Point(p2))
                .with_name(*other)
                .with_category("shop"),
        );
    }
    let graph = build_graph(nodes, GraphBuildConfig::default())
        .map_err(|e| EncoderError::Config(format!("fixture graph: {e}")))?;
    let instruction = InstructionTemplate::get(TrainStage::Two, InstructionVariant::Context)
        .expect("template exists")
        .instruct(None);
    let mut queries = Vec::new();
    let mut targets = Vec::new();
    for (k, (road_a, road_b, poi, ..)) in SITES.iter().enumerate() {
        let center = format!("c{k}");
        let sub = extract_subgraph(&graph, &center, &ExtractConfig::default())
            .map_err(|e| EncoderError::Config(format!("fixture subgraph: {e}")))?;
        queries.push(Query::Graph {
            graph: prepare_graph(&sub, &center, cfg, None)?,
            instruction: tokenize(&instruction, cfg.vocab_size),
        });
        targets.push(tokenize(
            &format!("{poi} on {road_a} near {road_b}"),
            cfg.vocab_size,
        ));
    }
    Ok(ContrastiveBatch { queries, targets })
}
