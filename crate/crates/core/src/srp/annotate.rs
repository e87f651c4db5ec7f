use super::{AnnotatedPath, PathStep, SrpError, Triple};
use crate::geo::{closest_points, GeoPoint, Transition, ZERO_DISTANCE_M};
use crate::graph::{EdgeKind, GraphEdge, GraphNode, NodeKind, SpatialGraph};

/// Entity label safe for the path notation (no tuple delimiters or arrows).
pub(crate) fn clean_label(s: &str) -> String {
    s.replace("->", "-")
        .chars()
        .map(|c| match c {
            '(' => '[',
            ')' => ']',
            ',' => ';',
            '→' => '-',
            c if c.is_control() => ' ',
            c => c,
        })
        .collect::<String>()
        .trim()
        .to_string()
}

fn label(node: &GraphNode) -> String {
    clean_label(node.display_name())
}

/// Whether edge `i` of `nodes` is the exit leg of a road-intersection-road
/// pass, which the notation folds into the preceding crossing triple.
fn is_folded(graph: &SpatialGraph, nodes: &[&GraphNode], edges: &[&GraphEdge], i: usize) -> bool {
    i >= 1
        && i + 1 < edges.len()
        && nodes[i - 1].kind == NodeKind::Road
        && nodes[i].kind == NodeKind::Intersection
        && nodes[i + 1].kind == NodeKind::Road
        && edges[i - 1].kind == EdgeKind::Crossing
        && edges[i].kind == EdgeKind::Crossing
        && graph.contains(&nodes[i].id)
}

fn crossing_relation(graph: &SpatialGraph, intersection: &str) -> &'static str {
    let roads = graph
        .edges_of(intersection)
        .filter(|e| e.kind == EdgeKind::Crossing)
        .count();
    if roads > 2 {
        "complex_crossing"
    } else {
        "intersection"
    }
}

fn resolve<'g>(
    graph: &'g SpatialGraph,
    path: &[String],
) -> Result<(Vec<&'g GraphNode>, Vec<&'g GraphEdge>), SrpError> {
    if path.len() < 2 {
        return Err(SrpError::InvalidPath(
            "a path needs at least one edge".into(),
        ));
    }
    let nodes = path
        .iter()
        .map(|id| {
            graph
                .node(id)
                .ok_or_else(|| SrpError::InvalidPath(format!("unknown node {id:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let edges = path
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            graph.edge_between(&w[0], &w[1]).ok_or_else(|| {
                SrpError::InvalidPath(format!("no edge {} -> {} at step {i}", w[0], w[1]))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((nodes, edges))
}

/// Number of triples the path renders to.
pub fn triple_count(graph: &SpatialGraph, path: &[String]) -> Result<usize, SrpError> {
    let (nodes, edges) = resolve(graph, path)?;
    Ok((0..edges.len())
        .filter(|&i| !is_folded(graph, &nodes, &edges, i))
        .count())
}

/// Turns a node-id path starting at an image into triples and transitions.
///
/// Each edge `u -> v` leaves `u` at its point closest to `v` and enters `v` at
/// its point closest to that exit. Travel along `u` from the previous entry to
/// the exit becomes a standalone move; the exit-to-entry gap becomes the
/// triple's trailing tuple when it is the first or last triple or the gap is
/// not negligible.
pub fn annotate_path(graph: &SpatialGraph, path: &[String]) -> Result<AnnotatedPath, SrpError> {
    let (nodes, edges) = resolve(graph, path)?;
    let origin = nodes[0].anchor;
    let last = edges.len() - 1;
    let mut cur: GeoPoint = origin;
    let mut steps = Vec::new();
    let mut spans = Vec::new();

    for i in 0..edges.len() {
        let (u, v, e) = (nodes[i], nodes[i + 1], edges[i]);
        if is_folded(graph, &nodes, &edges, i) {
            continue;
        }
        let (_, exit, entry) = closest_points(&u.geometry, &v.geometry)?;
        let travel = Transition::between(cur, exit);
        if travel.distance_m >= ZERO_DISTANCE_M && !steps.is_empty() {
            steps.push(PathStep::Move { transition: travel });
            spans.push((cur, exit));
        }
        let relation = match e.kind {
            EdgeKind::Crossing => {
                let ix = if u.kind == NodeKind::Intersection {
                    &u.id
                } else {
                    &v.id
                };
                crossing_relation(graph, ix).to_string()
            }
            EdgeKind::OnSameStreet => match e.via.as_deref().and_then(|r| graph.node(r)) {
                Some(road) => label(road),
                None => e.kind.as_str().to_string(),
            },
            kind => kind.as_str().to_string(),
        };
        let gap = Transition::between(exit, entry);
        let trailing = (i == 0 || i == last || gap.distance_m >= ZERO_DISTANCE_M).then_some(gap);
        if trailing.is_some() {
            spans.push((exit, entry));
        }
        let source = if i == 0 { clean_label(&u.id) } else { label(u) };
        steps.push(PathStep::Triple {
            triple: Triple {
                source,
                relation,
                target: label(v),
            },
            trailing,
        });
        cur = entry;
    }

    let hops = steps.iter().filter(|s| s.is_triple()).count();
    Ok(AnnotatedPath {
        image_id: clean_label(&nodes[0].id),
        origin,
        steps,
        destination: label(nodes[last + 1]),
        hops,
        nodes: path.to_vec(),
        spans,
    })
}
