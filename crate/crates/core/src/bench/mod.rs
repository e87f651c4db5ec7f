//! Embedding-based ranking benchmark: instances, metrics and evaluation.

mod generate;
mod metrics;
mod perception;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use generate::{
    distance_question, gen_geolocation, gen_geolocation_label, gen_image_retrieval, gen_perception,
    gen_spatial_grounding, seeded_rng, BenchConfig, Generated, LocationParts, Skip,
};
pub use metrics::{cosine, hit_at_k, ndcg_at_k, pairwise_sum, rank_candidates, Ranking};
pub use perception::{
    discretize_perception, PerceptionAttribute, PerceptionBin, PerceptionScheme, SCORE_MAX,
};

use crate::srp::Message;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{} embedding(s) missing: {}", .0.len(), .0.join(", "))]
    MissingEmbeddings(Vec<String>),
    #[error("embedding file line {line}: {message}")]
    EmbeddingFile { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    Geolocation,
    ImageRetrieval,
    Perception(PerceptionAttribute),
    NearestStreet,
    NearestPoi,
    Distance,
    DistanceDirection,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Geolocation => f.write_str("geolocation"),
            Task::ImageRetrieval => f.write_str("image_retrieval"),
            Task::Perception(a) => write!(f, "perception:{}", a.as_str()),
            Task::NearestStreet => f.write_str("nearest_street"),
            Task::NearestPoi => f.write_str("nearest_poi"),
            Task::Distance => f.write_str("distance"),
            Task::DistanceDirection => f.write_str("distance_direction"),
        }
    }
}

impl FromStr for Task {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "geolocation" => Task::Geolocation,
            "image_retrieval" => Task::ImageRetrieval,
            "nearest_street" => Task::NearestStreet,
            "nearest_poi" => Task::NearestPoi,
            "distance" => Task::Distance,
            "distance_direction" => Task::DistanceDirection,
            other => match other
                .strip_prefix("perception:")
                .and_then(PerceptionAttribute::parse)
            {
                Some(a) => Task::Perception(a),
                None => return Err(BenchError::Data(format!("unknown task {other:?}"))),
            },
        })
    }
}

impl Serialize for Task {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Task {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One ranking question. Candidates are texts, or image paths for image
/// retrieval.
///
/// Reading accepts `candidate_images` for `candidates`, `null` image and
/// graph lists, and a missing `ground_truth_idx` (located by value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct BenchmarkInstance {
    pub id: String,
    pub task: Task,
    pub city: String,
    pub messages: Vec<Message>,
    pub images: Vec<String>,
    pub graphs: Vec<String>,
    pub candidates: Vec<String>,
    pub ground_truth: String,
    pub ground_truth_idx: usize,
}

#[derive(Deserialize)]
struct RawInstance {
    id: String,
    task: Task,
    city: String,
    messages: Vec<Message>,
    #[serde(default)]
    images: Option<Vec<String>>,
    #[serde(default)]
    graphs: Option<Vec<String>>,
    #[serde(alias = "candidate_images")]
    candidates: Vec<String>,
    ground_truth: String,
    #[serde(default)]
    ground_truth_idx: Option<usize>,
}

impl TryFrom<RawInstance> for BenchmarkInstance {
    type Error = BenchError;

    fn try_from(r: RawInstance) -> Result<Self, BenchError> {
        let idx = match r.ground_truth_idx {
            Some(i) => i,
            None => r
                .candidates
                .iter()
                .position(|c| *c == r.ground_truth)
                .ok_or_else(|| {
                    BenchError::Data(format!(
                        "instance {}: ground truth not among candidates",
                        r.id
                    ))
                })?,
        };
        let inst = BenchmarkInstance {
            id: r.id,
            task: r.task,
            city: r.city,
            messages: r.messages,
            images: r.images.unwrap_or_default(),
            graphs: r.graphs.unwrap_or_default(),
            candidates: r.candidates,
            ground_truth: r.ground_truth,
            ground_truth_idx: idx,
        };
        inst.check()?;
        Ok(inst)
    }
}

impl BenchmarkInstance {
    pub fn check(&self) -> Result<(), BenchError> {
        if self.ground_truth_idx >= self.candidates.len()
            || self.candidates[self.ground_truth_idx] != self.ground_truth
        {
            return Err(BenchError::Data(format!(
                "instance {}: ground truth index {} does not point at the ground truth",
                self.id, self.ground_truth_idx
            )));
        }
        Ok(())
    }

    /// Embedding id of the query.
    pub fn query_id(&self) -> &str {
        &self.id
    }

    /// Embedding id of candidate `k`.
    pub fn candidate_id(&self, k: usize) -> String {
        format!("{}#{k}", self.id)
    }
}

/// Parses benchmark instances, one JSON object per line.
pub fn parse_instances(text: &str) -> Result<Vec<BenchmarkInstance>, BenchError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst: BenchmarkInstance = serde_json::from_str(line)
            .map_err(|e| BenchError::Data(format!("instances line {}: {e}", i + 1)))?;
        inst.check()?;
        out.push(inst);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Vectors by id, all of one dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn insert(&mut self, rec: EmbeddingRecord) -> Result<(), BenchError> {
        if rec.vector.is_empty() || rec.vector.iter().any(|x| !x.is_finite()) {
            return Err(BenchError::Data(format!(
                "embedding {:?} is empty or not finite",
                rec.id
            )));
        }
        if self.vectors.is_empty() {
            self.dim = rec.vector.len();
        } else if rec.vector.len() != self.dim {
            return Err(BenchError::Data(format!(
                "embedding {:?} has dimension {}, expected {}",
                rec.id,
                rec.vector.len(),
                self.dim
            )));
        }
        if self.vectors.insert(rec.id.clone(), rec.vector).is_some() {
            return Err(BenchError::Data(format!(
                "duplicate embedding {:?}",
                rec.id
            )));
        }
        Ok(())
    }

    /// Records in id order, for writing.
    pub fn records(&self) -> Vec<EmbeddingRecord> {
        let mut out: Vec<EmbeddingRecord> = self
            .vectors
            .iter()
            .map(|(id, v)| EmbeddingRecord {
                id: id.clone(),
                vector: v.clone(),
            })
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }
}

/// Reads `{"id": ..., "vector": [...]}` lines.
pub fn load_embeddings(text: &str) -> Result<EmbeddingStore, BenchError> {
    let mut store = EmbeddingStore::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let wrap = |message: String| BenchError::EmbeddingFile {
            line: i + 1,
            message,
        };
        let rec: EmbeddingRecord = serde_json::from_str(line).map_err(|e| wrap(e.to_string()))?;
        store.insert(rec).map_err(|e| wrap(e.to_string()))?;
    }
    Ok(store)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub task: Task,
    pub city: String,
    pub hit_at_5: f64,
    pub ndcg_at_5: f64,
    pub n_instances: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = ["task", "city", "hit_at_5", "ndcg_at_5", "n_instances"];
        w.write_record(header).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.task.to_string(),
                r.city.clone(),
                format!("{:.4}", r.hit_at_5),
                format!("{:.4}", r.ndcg_at_5),
                r.n_instances.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Every embedding id the instances need that the stores lack, sorted.
pub fn missing_embeddings(
    instances: &[BenchmarkInstance],
    queries: &EmbeddingStore,
    candidates: &EmbeddingStore,
) -> Vec<String> {
    let mut missing: Vec<String> = Vec::new();
    for inst in instances {
        if queries.get(inst.query_id()).is_none() {
            missing.push(format!("query:{}", inst.query_id()));
        }
        for k in 0..inst.candidates.len() {
            let id = inst.candidate_id(k);
            if candidates.get(&id).is_none() {
                missing.push(format!("candidate:{id}"));
            }
        }
    }
    missing.sort();
    missing.dedup();
    missing
}

/// Hit@k and NDCG@k per (task, city), in percent.
///
/// All embedding ids are checked before any scoring. Per-instance scores are
/// computed in parallel, then summed per group in instance-id order, so the
/// report does not depend on input order or thread count.
pub fn evaluate(
    instances: &[BenchmarkInstance],
    queries: &EmbeddingStore,
    candidates: &EmbeddingStore,
    k: usize,
) -> Result<EvalReport, BenchError> {
    for inst in instances {
        inst.check()?;
    }
    let missing = missing_embeddings(instances, queries, candidates);
    if !missing.is_empty() {
        return Err(BenchError::MissingEmbeddings(missing));
    }
    if !instances.is_empty() && queries.dim() != candidates.dim() {
        return Err(BenchError::Data(format!(
            "query embeddings have dimension {}, candidate embeddings {}",
            queries.dim(),
            candidates.dim()
        )));
    }
    let scored: Vec<(&BenchmarkInstance, f64, f64)> = instances
        .par_iter()
        .map(|inst| {
            let q = queries.get(inst.query_id()).expect("pre-flight checked");
            let ids: Vec<String> = std::iter::once(inst.query_id().to_string())
                .chain((0..inst.candidates.len()).map(|k| inst.candidate_id(k)))
                .collect();
            let cands: Vec<&[f64]> = ids[1..]
                .iter()
                .map(|id| candidates.get(id).expect("pre-flight checked"))
                .collect();
            let r = rank_candidates(q, &cands, Some(&ids))?;
            Ok((
                inst,
                hit_at_k(&r, inst.ground_truth_idx, k),
                ndcg_at_k(&r, inst.ground_truth_idx, k),
            ))
        })
        .collect::<Result<_, BenchError>>()?;

    // (task, city) -> (instance id, hit, ndcg)
    type Group<'a> = Vec<(&'a str, f64, f64)>;
    let mut groups: BTreeMap<(Task, &str), Group> = BTreeMap::new();
    for (inst, h, n) in scored {
        groups
            .entry((inst.task, inst.city.as_str()))
            .or_default()
            .push((inst.id.as_str(), h, n));
    }
    let rows = groups
        .into_iter()
        .map(|((task, city), mut items)| {
            items.sort_by(|a, b| a.0.cmp(b.0));
            let n = items.len();
            let hits: Vec<f64> = items.iter().map(|x| x.1).collect();
            let ndcgs: Vec<f64> = items.iter().map(|x| x.2).collect();
            EvalRow {
                task,
                city: city.to_string(),
                hit_at_5: 100.0 * pairwise_sum(&hits) / n as f64,
                ndcg_at_5: 100.0 * pairwise_sum(&ndcgs) / n as f64,
                n_instances: n,
            }
        })
        .collect();
    Ok(EvalReport { k, rows })
}

/// Embeddings that put each instance's ground truth at the given 1-based
/// rank: the query is the first basis vector and candidate scores fall with
/// rank.
pub fn planted_embeddings(
    instances: &[BenchmarkInstance],
    ranks: &[usize],
    dim: usize,
) -> Result<(EmbeddingStore, EmbeddingStore), BenchError> {
    if dim < 2 || ranks.len() != instances.len() {
        return Err(BenchError::Config(
            "one rank per instance and dim >= 2".into(),
        ));
    }
    let mut queries = EmbeddingStore::default();
    let mut cands = EmbeddingStore::default();
    let unit = |cos: f64| {
        let mut v = vec![0.0; dim];
        v[0] = cos;
        v[1] = (1.0 - cos * cos).sqrt();
        v
    };
    for (inst, &rank) in instances.iter().zip(ranks) {
        let n = inst.candidates.len();
        if rank == 0 || rank > n {
            return Err(BenchError::Config(format!(
                "rank {rank} outside 1..={n} for {}",
                inst.id
            )));
        }
        queries.insert(EmbeddingRecord {
            id: inst.query_id().to_string(),
            vector: unit(1.0),
        })?;
        // Remaining ranks go to the other candidates in index order.
        let mut others = (1..=n).filter(|&r| r != rank);
        for k in 0..n {
            let r = if k == inst.ground_truth_idx {
                rank
            } else {
                others.next().expect("n - 1 other ranks")
            };
            cands.insert(EmbeddingRecord {
                id: inst.candidate_id(k),
                vector: unit(1.0 - 0.04 * r as f64),
            })?;
        }
    }
    Ok((queries, cands))
}
