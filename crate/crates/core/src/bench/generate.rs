//! Benchmark instance generation from an anchored spatial graph.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::perception::{discretize_perception, PerceptionAttribute, PerceptionScheme, SCORE_MAX};
use super::{BenchError, BenchmarkInstance, Task};
use crate::geo::{
    destination_point, point_in_polygon, point_to_geometry_m, Cardinal, GeoPoint, Geometry,
};
use crate::graph::{GraphNode, NodeKind, SpatialGraph};
use crate::srp::Message;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub candidates: usize,
    /// Distance distractors are the true distance times each multiplier.
    pub distance_multipliers: Vec<f64>,
    /// How far entity searches reach from the viewpoint.
    pub search_radius_m: f64,
    pub walk_distances_m: Vec<f64>,
    /// A walk target counts as encountered only within this distance.
    pub landmark_tolerance_m: f64,
    pub image_dir: String,
    pub graph_dir: String,
    pub perception: Vec<PerceptionScheme>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            candidates: 20,
            distance_multipliers: vec![
                3.0, 9.0, 15.0, 24.0, 36.0, 48.0, 60.0, 75.0, 90.0, 110.0, 130.0, 155.0, 180.0,
                210.0, 240.0, 280.0, 320.0, 370.0, 420.0,
            ],
            search_radius_m: 3000.0,
            walk_distances_m: vec![50.0, 100.0, 150.0, 200.0],
            landmark_tolerance_m: 60.0,
            image_dir: "images".into(),
            graph_dir: "subgraphs".into(),
            perception: PerceptionAttribute::ALL
                .into_iter()
                .map(PerceptionScheme::default_for)
                .collect(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.candidates < 2 {
            return Err(BenchError::Config("need at least 2 candidates".into()));
        }
        if self.distance_multipliers.len() + 1 < self.candidates
            || self
                .distance_multipliers
                .iter()
                .any(|m| !(m.is_finite() && *m > 1.0))
        {
            return Err(BenchError::Config(format!(
                "need {} distance multipliers, all finite and > 1",
                self.candidates - 1
            )));
        }
        if !(self.search_radius_m.is_finite() && self.search_radius_m > 0.0)
            || !(self.landmark_tolerance_m.is_finite() && self.landmark_tolerance_m > 0.0)
            || self.walk_distances_m.is_empty()
            || self
                .walk_distances_m
                .iter()
                .any(|d| !(d.is_finite() && *d > 0.0))
        {
            return Err(BenchError::Config(
                "radii and walk distances must be positive".into(),
            ));
        }
        for s in &self.perception {
            s.validate()?;
        }
        Ok(())
    }

    pub fn scheme(&self, attr: PerceptionAttribute) -> PerceptionScheme {
        self.perception
            .iter()
            .find(|s| s.attribute == attr)
            .cloned()
            .unwrap_or_else(|| PerceptionScheme::default_for(attr))
    }

    pub fn image_ref(&self, id: &str) -> String {
        format!("{}/{id}.jpg", self.image_dir)
    }

    pub fn graph_ref(&self, id: &str) -> String {
        format!("{}/{id}.subgraph", self.graph_dir)
    }
}

/// Why an instance could not be built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub instance_id: String,
    pub reason: String,
}

impl std::fmt::Display for Skip {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} skipped: {}", self.instance_id, self.reason)
    }
}

/// Generator result: an instance, or a skip when the graph lacks entities.
pub type Generated = Result<BenchmarkInstance, Skip>;

fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// RNG for one instance; the same (seed, id) always yields the same stream.
pub fn seeded_rng(seed: u64, instance_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(instance_id))
}

fn viewpoint<'g>(g: &'g SpatialGraph, id: &str) -> Result<&'g GraphNode, BenchError> {
    let n = g
        .node(id)
        .ok_or_else(|| BenchError::Data(format!("unknown viewpoint {id:?}")))?;
    if n.kind != NodeKind::Viewpoint || g.neighbor_ids(id).is_empty() {
        return Err(BenchError::Data(format!(
            "{id:?} is not an anchored viewpoint"
        )));
    }
    Ok(n)
}

fn user(content: String) -> Vec<Message> {
    vec![Message {
        role: "user".into(),
        content,
    }]
}

/// Shuffles `truth` in among `distractors` and assembles the instance.
#[allow(clippy::too_many_arguments)]
fn assemble(
    id: String,
    task: Task,
    city: &str,
    prompt: String,
    images: Vec<String>,
    graphs: Vec<String>,
    truth: String,
    distractors: Vec<String>,
    seed: u64,
) -> BenchmarkInstance {
    let mut candidates = Vec::with_capacity(distractors.len() + 1);
    candidates.push(truth.clone());
    candidates.extend(distractors);
    candidates.shuffle(&mut seeded_rng(seed, &id));
    let ground_truth_idx = candidates
        .iter()
        .position(|c| *c == truth)
        .expect("truth kept");
    BenchmarkInstance {
        id,
        task,
        city: city.to_string(),
        messages: user(prompt),
        images,
        graphs,
        candidates,
        ground_truth: truth,
        ground_truth_idx,
    }
}

fn within<'g>(
    g: &'g SpatialGraph,
    p: GeoPoint,
    cfg: &BenchConfig,
    keep: impl Fn(&GraphNode) -> bool,
) -> Vec<(&'g GraphNode, f64)> {
    g.nearest_by_geometry(p, usize::MAX, cfg.search_radius_m, keep)
}

fn nearest(
    g: &SpatialGraph,
    p: GeoPoint,
    radius_m: f64,
    keep: impl Fn(&GraphNode) -> bool,
) -> Option<&GraphNode> {
    g.nearest_by_geometry(p, 1, radius_m, keep)
        .first()
        .map(|x| x.0)
}

fn is_named_landmark(n: &GraphNode) -> bool {
    matches!(n.kind, NodeKind::Poi | NodeKind::Aoi) && n.is_named()
}

/// Higher-level place qualifier of an area ("Queens").
fn area_qualifier(n: &GraphNode) -> Option<&str> {
    ["district", "planning_area", "city"]
        .iter()
        .find_map(|k| n.attrs.get(*k))
        .map(String::as_str)
        .filter(|q| Some(*q) != n.name.as_deref())
}

/// Components of a location description.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocationParts {
    pub road: Option<String>,
    pub intersection: Option<String>,
    pub landmark: Option<String>,
    pub area: Option<String>,
    pub qualifier: Option<String>,
}

impl LocationParts {
    pub fn at(g: &SpatialGraph, p: GeoPoint, radius_m: f64) -> Self {
        let name = |n: &GraphNode| n.display_name().to_string();
        let road = nearest(g, p, radius_m, |n| n.kind == NodeKind::Road && n.is_named()).map(name);
        let intersection = nearest(g, p, radius_m, |n| n.kind == NodeKind::Intersection).map(name);
        let landmark = nearest(g, p, radius_m, is_named_landmark).map(name);
        let inside = |n: &GraphNode| match &n.geometry {
            Geometry::Polygon(ring) => point_in_polygon(p, ring),
            _ => false,
        };
        let area = g
            .nearest_by_geometry(p, usize::MAX, radius_m, |n| {
                n.kind == NodeKind::Aoi && n.is_named()
            })
            .into_iter()
            .map(|x| x.0)
            .min_by_key(|n| !inside(n));
        Self {
            road,
            intersection,
            landmark,
            qualifier: area.and_then(area_qualifier).map(str::to_string),
            area: area.map(name),
        }
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(r) = &self.road {
            parts.push(format!("on {r}"));
        }
        if let Some(i) = &self.intersection {
            parts.push(format!("near {i}"));
        }
        if let Some(l) = &self.landmark {
            parts.push(format!("close to {l}"));
        }
        if let Some(a) = &self.area {
            match &self.qualifier {
                Some(q) => parts.push(format!("in {a}, {q}")),
                None => parts.push(format!("in {a}")),
            }
        }
        parts.join(", ")
    }
}

/// Textual location of an anchored viewpoint: nearest named road, nearest
/// intersection, nearest named POI or area and the containing (else nearest)
/// area. Missing components are left out.
pub fn gen_geolocation_label(
    g: &SpatialGraph,
    viewpoint_id: &str,
    cfg: &BenchConfig,
) -> Result<String, BenchError> {
    let vp = viewpoint(g, viewpoint_id)?;
    Ok(LocationParts::at(g, vp.anchor, cfg.search_radius_m).label())
}

fn instance_id(task: Task, viewpoint_id: &str) -> String {
    format!("{task}/{viewpoint_id}")
}

fn skip(id: &str, reason: impl Into<String>) -> Generated {
    Err(Skip {
        instance_id: id.to_string(),
        reason: reason.into(),
    })
}

/// Geolocation: the true label against labels computed at nearby road
/// anchors, nearest first.
pub fn gen_geolocation(
    g: &SpatialGraph,
    viewpoint_id: &str,
    city: &str,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<Generated, BenchError> {
    let vp = viewpoint(g, viewpoint_id)?;
    let id = instance_id(Task::Geolocation, viewpoint_id);
    let truth = LocationParts::at(g, vp.anchor, cfg.search_radius_m).label();
    if truth.is_empty() {
        return Ok(skip(&id, "no named entity near the viewpoint"));
    }
    let mut seen = HashSet::from([truth.clone()]);
    let mut distractors = Vec::new();
    for (road, _) in within(g, vp.anchor, cfg, |n| n.kind == NodeKind::Road) {
        if distractors.len() + 1 == cfg.candidates {
            break;
        }
        let l = LocationParts::at(g, road.anchor, cfg.search_radius_m).label();
        if !l.is_empty() && seen.insert(l.clone()) {
            distractors.push(l);
        }
    }
    if distractors.len() + 1 < cfg.candidates {
        return Ok(skip(
            &id,
            format!("only {} distinct locations", distractors.len() + 1),
        ));
    }
    Ok(Ok(assemble(
        id,
        Task::Geolocation,
        city,
        "<image> Where is this street view image taken? Select the correct location:".into(),
        vec![cfg.image_ref(viewpoint_id)],
        vec![],
        truth,
        distractors,
        seed,
    )))
}

/// Image retrieval: a graph plus a location phrase against the images of the
/// nearest other viewpoints.
pub fn gen_image_retrieval(
    g: &SpatialGraph,
    viewpoint_id: &str,
    city: &str,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<Generated, BenchError> {
    let vp = viewpoint(g, viewpoint_id)?;
    let id = instance_id(Task::ImageRetrieval, viewpoint_id);
    let parts = LocationParts::at(g, vp.anchor, cfg.search_radius_m);
    let mut phrase = match (&parts.intersection, &parts.road) {
        (Some(i), _) => format!("near {i}"),
        (None, Some(r)) => format!("on {r}"),
        (None, None) => return Ok(skip(&id, "no road or intersection nearby")),
    };
    if let Some(a) = &parts.area {
        phrase.push_str(&format!(" in {a}"));
    }
    let others: Vec<String> = g
        .nearest_by_geometry(vp.anchor, cfg.candidates, cfg.search_radius_m, |n| {
            n.kind == NodeKind::Viewpoint && n.id != viewpoint_id
        })
        .into_iter()
        .map(|(n, _)| cfg.image_ref(&n.id))
        .take(cfg.candidates - 1)
        .collect();
    if others.len() + 1 < cfg.candidates {
        return Ok(skip(
            &id,
            format!("only {} images in the graph", others.len() + 1),
        ));
    }
    Ok(Ok(assemble(
        id,
        Task::ImageRetrieval,
        city,
        format!("<graph> With reference to the spatial graph, pick the image captured {phrase}."),
        vec![],
        vec![cfg.graph_ref(viewpoint_id)],
        cfg.image_ref(viewpoint_id),
        others,
        seed,
    )))
}

/// Perception: the labels of an evenly spaced score grid over (0, 10]; the
/// truth is the grid score nearest to `score`.
pub fn gen_perception(
    g: &SpatialGraph,
    viewpoint_id: &str,
    city: &str,
    attr: PerceptionAttribute,
    score: f64,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<Generated, BenchError> {
    viewpoint(g, viewpoint_id)?;
    if !(0.0..=SCORE_MAX).contains(&score) {
        return Err(BenchError::Data(format!(
            "{attr:?} score {score} for {viewpoint_id} outside [0, {SCORE_MAX}]"
        )));
    }
    let task = Task::Perception(attr);
    let scheme = cfg.scheme(attr);
    let step = SCORE_MAX / cfg.candidates as f64;
    let grid: Vec<f64> = (1..=cfg.candidates).map(|i| i as f64 * step).collect();
    let snapped = ((score / step).round().max(1.0) * step).min(SCORE_MAX);
    let mut labels = Vec::with_capacity(grid.len());
    let mut truth = None;
    for s in grid {
        let l = discretize_perception(s, &scheme)?;
        if (s - snapped).abs() < step / 2.0 {
            truth = Some(l);
        } else {
            labels.push(l);
        }
    }
    Ok(Ok(assemble(
        instance_id(task, viewpoint_id),
        task,
        city,
        format!(
            "<graph><image> Given the spatial graph, what is the perception of {} for this urban location?",
            attr.as_str()
        ),
        vec![cfg.image_ref(viewpoint_id)],
        vec![cfg.graph_ref(viewpoint_id)],
        truth.expect("snapped score lies on the grid"),
        labels,
        seed,
    )))
}

/// Distinct names of matching entities, nearest first.
fn nearest_names(
    g: &SpatialGraph,
    p: GeoPoint,
    cfg: &BenchConfig,
    keep: impl Fn(&GraphNode) -> bool,
) -> Vec<String> {
    let mut seen = HashSet::new();
    within(g, p, cfg, |n| keep(n) && n.is_named())
        .into_iter()
        .map(|(n, _)| n.display_name().to_string())
        .filter(|name| seen.insert(name.clone()))
        .take(cfg.candidates)
        .collect()
}

/// Spatial grounding: nearest street, nearest POI, distance between
/// categories, or a walk in a compass direction.
pub fn gen_spatial_grounding(
    g: &SpatialGraph,
    viewpoint_id: &str,
    city: &str,
    task: Task,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<Generated, BenchError> {
    let vp = viewpoint(g, viewpoint_id)?;
    let id = instance_id(task, viewpoint_id);
    let images = vec![cfg.image_ref(viewpoint_id)];
    let graphs = vec![cfg.graph_ref(viewpoint_id)];
    let (prompt, truth, distractors) = match task {
        Task::NearestStreet | Task::NearestPoi => {
            let (kind, what, prompt) = if task == Task::NearestStreet {
                (
                    NodeKind::Road,
                    "streets",
                    "<graph><image> Using the provided spatial graph, what street is this location on or nearest to?",
                )
            } else {
                (
                    NodeKind::Poi,
                    "POIs",
                    "<graph><image> Using the provided spatial graph, which POI is nearest to the current image location?",
                )
            };
            let mut names = nearest_names(g, vp.anchor, cfg, |n| n.kind == kind);
            if names.len() < cfg.candidates {
                return Ok(skip(
                    &id,
                    format!("only {} named {what} in range", names.len()),
                ));
            }
            let truth = names.remove(0);
            (prompt.to_string(), truth, names)
        }
        Task::Distance => {
            match distance_question(g, vp.anchor, cfg) {
                Some((cat_a, cat_b, d)) if d.round() >= 1.0 => {
                    let truth = d.round();
                    let mut seen = HashSet::from([truth as u64]);
                    let distractors: Vec<String> = cfg
                        .distance_multipliers
                        .iter()
                        .map(|m| (d * m).round() as u64)
                        .filter(|v| seen.insert(*v))
                        .take(cfg.candidates - 1)
                        .map(|v| format!("{v} meters"))
                        .collect();
                    if distractors.len() + 1 < cfg.candidates {
                        return Ok(skip(&id, "distance distractors collapse after rounding"));
                    }
                    (
                    format!("<image><graph> How far is the nearest {cat_a} from the closest {cat_b}?"),
                    format!("{truth} meters"),
                    distractors,
                )
                }
                Some(_) => return Ok(skip(&id, "entities closer than one meter")),
                None => return Ok(skip(&id, "fewer than two POI categories in range")),
            }
        }
        Task::DistanceDirection => {
            let mut rng = seeded_rng(seed, &format!("{id}/walk"));
            let Some((dist, dir, target)) = walk_target(g, vp.anchor, cfg, &mut rng) else {
                return Ok(skip(&id, "no landmark at the end of any walk"));
            };
            let mut pool = nearest_names(
                g,
                vp.anchor,
                &BenchConfig {
                    candidates: usize::MAX,
                    ..cfg.clone()
                },
                |n| matches!(n.kind, NodeKind::Poi | NodeKind::Aoi),
            );
            pool.retain(|n| *n != target);
            if pool.len() + 1 < cfg.candidates {
                return Ok(skip(
                    &id,
                    format!("only {} landmarks in range", pool.len() + 1),
                ));
            }
            let distractors: Vec<String> = pool
                .choose_multiple(&mut rng, cfg.candidates - 1)
                .cloned()
                .collect();
            (
                format!(
                    "<graph><image> Refer to the spatial graph, if you walk approximately {} meters {} from here, what landmark will you encounter?",
                    dist.round(),
                    dir.word()
                ),
                target,
                distractors,
            )
        }
        other => {
            return Err(BenchError::Config(format!(
                "{other} is not a spatial grounding task"
            )))
        }
    };
    Ok(Ok(assemble(
        id,
        task,
        city,
        prompt,
        images,
        graphs,
        truth,
        distractors,
        seed,
    )))
}

/// The POI nearest to `p` that has a category, the closest POI of a different
/// category to it, and the distance between the two.
pub fn distance_question(
    g: &SpatialGraph,
    p: GeoPoint,
    cfg: &BenchConfig,
) -> Option<(String, String, f64)> {
    let has_cat = |n: &GraphNode| n.kind == NodeKind::Poi && n.category.is_some();
    let a = nearest(g, p, cfg.search_radius_m, has_cat)?;
    let cat_a = a.category.clone()?;
    let (b, d) = g
        .nearest_by_geometry(a.anchor, 1, cfg.search_radius_m, |n| {
            has_cat(n) && n.category.as_deref() != Some(&cat_a)
        })
        .into_iter()
        .next()?;
    Some((cat_a, b.category.clone()?, d))
}

/// Picks a (distance, direction) walk whose end point has a named landmark
/// within tolerance; walks are tried in a seeded order.
fn walk_target(
    g: &SpatialGraph,
    origin: GeoPoint,
    cfg: &BenchConfig,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, Cardinal, String)> {
    let mut walks: Vec<(f64, Cardinal)> = cfg
        .walk_distances_m
        .iter()
        .flat_map(|&d| Cardinal::ALL.into_iter().map(move |c| (d, c)))
        .collect();
    walks.shuffle(rng);
    // Consume one draw so distractor sampling does not mirror the walk order.
    let _: u32 = rng.gen();
    walks.into_iter().find_map(|(d, c)| {
        let end = destination_point(origin, c.center_bearing(), d);
        let (n, dist) = g
            .nearest_by_geometry(end, 1, cfg.landmark_tolerance_m, is_named_landmark)
            .into_iter()
            .next()?;
        let from_origin = point_to_geometry_m(origin, &n.geometry).ok()?.0;
        // The landmark must lie ahead, not be the one already at hand.
        (dist <= cfg.landmark_tolerance_m && from_origin > d / 2.0)
            .then(|| (d, c, n.display_name().to_string()))
    })
}
