use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{annotate_path, triple_count, SrpConfig, SrpError};
use crate::geo::{point_to_geometry_m, GeometryKind};
use crate::graph::{GraphError, NodeKind, SpatialGraph};

/// A reachable destination with its shortest (fewest-edge) path from the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub node_id: String,
    pub kind: NodeKind,
    pub named: bool,
    /// Edges on the shortest path.
    pub hops: usize,
    /// Distance from the start anchor to the candidate's geometry.
    pub distance_m: f64,
    pub path: Vec<String>,
}

/// Candidates grouped by geometry, each group in priority order
/// (distance, named first, id).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Candidates {
    pub polygonal: Vec<Candidate>,
    pub linear: Vec<Candidate>,
    pub point: Vec<Candidate>,
}

impl Candidates {
    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.polygonal.iter().chain(&self.linear).chain(&self.point)
    }

    pub fn len(&self) -> usize {
        self.polygonal.len() + self.linear.len() + self.point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn priority(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    a.distance_m
        .total_cmp(&b.distance_m)
        .then(b.named.cmp(&a.named))
        .then_with(|| a.node_id.cmp(&b.node_id))
}

/// Breadth-first search from `start` over at most `max_hops` edges.
/// Neighbors are expanded in id order, so each node's recorded path is the
/// lexicographically first among its shortest paths.
pub fn discover_destinations(
    graph: &SpatialGraph,
    start: &str,
    cfg: &SrpConfig,
) -> Result<Candidates, SrpError> {
    cfg.validate()?;
    let origin = graph
        .node(start)
        .ok_or_else(|| GraphError::UnknownNode(start.to_string()))?
        .anchor;
    let mut parent: HashMap<&str, (&str, usize)> = HashMap::new();
    parent.insert(start, (start, 0));
    let mut queue = VecDeque::from([start]);
    let mut out = Candidates::default();
    while let Some(id) = queue.pop_front() {
        let depth = parent[id].1;
        if depth == cfg.max_hops {
            continue;
        }
        for next in graph.neighbor_ids(id) {
            if parent.contains_key(next) {
                continue;
            }
            parent.insert(next, (id, depth + 1));
            queue.push_back(next);
        }
    }
    for (&id, &(_, hops)) in &parent {
        if id == start {
            continue;
        }
        let node = graph.node(id).expect("discovered nodes exist");
        let mut path = vec![id.to_string()];
        let mut cur = id;
        while cur != start {
            cur = parent[cur].0;
            path.push(cur.to_string());
        }
        path.reverse();
        let distance_m = point_to_geometry_m(origin, &node.geometry)
            .map(|r| r.0)
            .unwrap_or(f64::INFINITY);
        let c = Candidate {
            node_id: id.to_string(),
            kind: node.kind,
            named: node.is_named(),
            hops,
            distance_m,
            path,
        };
        match node.geometry.kind() {
            GeometryKind::Polygon => out.polygonal.push(c),
            GeometryKind::LineString => out.linear.push(c),
            GeometryKind::Point => out.point.push(c),
        }
    }
    for group in [&mut out.polygonal, &mut out.linear, &mut out.point] {
        group.sort_by(priority);
    }
    Ok(out)
}

/// Picks up to `per_hop_quota` destinations for every hop count (counted in
/// rendered triples) within `[min_hops, max_hops]`, nearest first, skipping
/// excluded kinds and paths longer than `max_path_m`. A destination whose
/// label was already chosen (split ways of one street, say) is skipped, so
/// each selected path names a different place. Output is ordered by hop
/// count, then priority.
pub fn select_paths(
    graph: &SpatialGraph,
    candidates: &Candidates,
    cfg: &SrpConfig,
) -> Result<Vec<Vec<String>>, SrpError> {
    cfg.validate()?;
    let mut by_hops: BTreeMap<usize, Vec<&Candidate>> = BTreeMap::new();
    for c in candidates.iter() {
        if cfg.excluded_kinds.contains(&c.kind) || c.path.len() < 2 {
            continue;
        }
        let hops = triple_count(graph, &c.path)?;
        if (cfg.min_hops..=cfg.max_hops).contains(&hops) {
            by_hops.entry(hops).or_default().push(c);
        }
    }
    let mut out = Vec::new();
    let mut labels = HashSet::new();
    for (_, mut group) in by_hops {
        group.sort_by(|a, b| priority(a, b));
        let mut taken = 0;
        for c in group {
            if taken == cfg.per_hop_quota {
                break;
            }
            let p = annotate_path(graph, &c.path)?;
            if p.length_m() <= cfg.max_path_m && labels.insert(p.destination) {
                out.push(c.path.clone());
                taken += 1;
            }
        }
    }
    Ok(out)
}
