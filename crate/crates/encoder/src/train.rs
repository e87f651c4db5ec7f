//! Adam training on a seeded toy dataset, plus the fixed instruction texts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use urbangraph_core::geo::{destination_point, GeoPoint, Geometry};
use urbangraph_core::graph::{build_graph, GraphBuildConfig, GraphNode, NodeKind};
use urbangraph_core::subgraph::{extract_subgraph, ExtractConfig};

use crate::features::{prepare_graph, tokenize};
use crate::loss::cosine;
use crate::model::{batch_loss, batch_loss_and_grads, embed_query, embed_text};
use crate::params::{BlockGroup, EncoderParams, Grads};
use crate::{ContrastiveBatch, EncoderConfig, EncoderError, Query, TrainConfig, TrainStage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionVariant {
    Path,
    Caption,
    Context,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstructionTemplate {
    pub stage: TrainStage,
    pub variant: InstructionVariant,
    pub text: &'static str,
}

pub const INSTRUCTION_TEMPLATES: [InstructionTemplate; 4] = [
    InstructionTemplate {
        stage: TrainStage::One,
        variant: InstructionVariant::Path,
        text: "Describe whether the {destination} is reachable from this viewpoint.",
    },
    InstructionTemplate {
        stage: TrainStage::One,
        variant: InstructionVariant::Caption,
        text: "Provide a detailed description of the image content.",
    },
    InstructionTemplate {
        stage: TrainStage::Two,
        variant: InstructionVariant::Path,
        text: "Refer to the image and spatial graph, describe the pedestrian navigation context and spatial paths from this viewpoint.",
    },
    InstructionTemplate {
        stage: TrainStage::Two,
        variant: InstructionVariant::Context,
        text: "Use the image and graph together to describe the scene and its spatial context.",
    },
];

impl InstructionTemplate {
    pub fn get(
        stage: TrainStage,
        variant: InstructionVariant,
    ) -> Option<&'static InstructionTemplate> {
        INSTRUCTION_TEMPLATES
            .iter()
            .find(|t| t.stage == stage && t.variant == variant)
    }

    /// `Instruct: {τ}` with the destination placeholder filled when given.
    pub fn instruct(&self, destination: Option<&str>) -> String {
        let text = match destination {
            Some(d) => self.text.replace("{destination}", d),
            None => self.text.to_string(),
        };
        format!("Instruct: {text}")
    }
}

/// Adam with one learning rate per parameter block. Every step records the
/// rate it applied to each block so callers can audit the schedule.
#[derive(Debug, Clone)]
pub struct Adam {
    lrs: Vec<f64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    applied: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &EncoderParams, cfg: &TrainConfig) -> Self {
        let lrs = params
            .blocks
            .iter()
            .map(|b| match b.group {
                BlockGroup::Graph => cfg.graph_lr,
                BlockGroup::Text => cfg.text_lr(),
            })
            .collect();
        let zeros: Vec<Vec<f64>> = params
            .blocks
            .iter()
            .map(|b| vec![0.0; b.data.len()])
            .collect();
        Self {
            lrs,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
            applied: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (bi, block) in params.blocks.iter_mut().enumerate() {
            let lr = self.lrs[bi];
            let (m, v, g) = (&mut self.m[bi], &mut self.v[bi], &grads.blocks[bi]);
            for k in 0..block.data.len() {
                // Untouched token rows keep zero moments; skipping them is
                // exact and keeps large vocabularies cheap.
                if g[k] == 0.0 && m[k] == 0.0 && v[k] == 0.0 {
                    continue;
                }
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                block.data[k] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        self.applied.push(self.lrs.clone());
    }

    /// Per step, the learning rate applied to each block.
    pub fn applied_rates(&self) -> &[Vec<f64>] {
        &self.applied
    }
}

/// One query/target pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub query: Query,
    pub target: Vec<u32>,
    pub target_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub lr_graph: f64,
    pub lr_text: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub history: Vec<StepLog>,
    pub optimizer: Adam,
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let syllables = rng.gen_range(2..4);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(C[rng.gen_range(0..C.len())] as char);
        w.push(V[rng.gen_range(0..V.len())] as char);
    }
    let mut cs = w.chars();
    match cs.next() {
        Some(f) => f.to_uppercase().chain(cs).collect(),
        None => w,
    }
}

/// `n` separable pairs. Each viewpoint sits 12 m from its own road with its
/// own POI nearby, far from every other site; the target names both.
pub fn toy_dataset(
    cfg: &EncoderConfig,
    stage: TrainStage,
    n: usize,
    seed: u64,
) -> Result<Vec<Example>, EncoderError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::new();
    let mut sites = Vec::new();
    let mut used = std::collections::BTreeSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        let w = pseudo_word(rng);
        if used.insert(w.clone()) {
            return w;
        }
    };
    for k in 0..n {
        let vp = GeoPoint::new(
            103.6 + 0.02 * (k % 16) as f64,
            1.25 + 0.02 * (k / 16) as f64,
        )
        .map_err(|e| EncoderError::Config(e.to_string()))?;
        let heading = rng.gen_range(0.0..180.0);
        let foot = destination_point(vp, heading + 90.0, 12.0);
        let road_name = format!("{} Street", fresh(&mut rng));
        let poi_name = format!("{} {}", fresh(&mut rng), fresh(&mut rng));
        let road = Geometry::line_string(vec![
            destination_point(foot, heading, 150.0),
            destination_point(foot, heading + 180.0, 150.0),
        ])
        .map_err(|e| EncoderError::Config(e.to_string()))?;
        let poi = destination_point(foot, heading + 90.0, 20.0);
        let vid = format!("v{k:03}");
        nodes.push(GraphNode::new(
            vid.clone(),
            NodeKind::Viewpoint,
            Geometry::Point(vp),
        ));
        nodes.push(GraphNode::new(format!("r{k:03}"), NodeKind::Road, road).with_name(&road_name));
        nodes.push(
            GraphNode::new(format!("p{k:03}"), NodeKind::Poi, Geometry::Point(poi))
                .with_name(&poi_name)
                .with_category("shop"),
        );
        sites.push((vid, road_name, poi_name));
    }
    let graph = build_graph(nodes, GraphBuildConfig::default())
        .map_err(|e| EncoderError::Config(format!("toy graph: {e}")))?;
    let stage_tpl =
        InstructionTemplate::get(stage, InstructionVariant::Path).expect("template exists");
    let mut out = Vec::with_capacity(n);
    for (vid, road, poi) in sites {
        let target_text = format!("{road} near {poi}");
        let query = match stage {
            TrainStage::Two => {
                let sub = extract_subgraph(&graph, &vid, &ExtractConfig::default())
                    .map_err(|e| EncoderError::Config(format!("toy subgraph: {e}")))?;
                Query::Graph {
                    graph: prepare_graph(&sub, &vid, cfg, None)?,
                    instruction: tokenize(&stage_tpl.instruct(None), cfg.vocab_size),
                }
            }
            TrainStage::One => Query::Text(tokenize(
                &format!("{road} {poi} {}", stage_tpl.instruct(Some(&poi))),
                cfg.vocab_size,
            )),
        };
        out.push(Example {
            query,
            target: tokenize(&target_text, cfg.vocab_size),
            target_text,
        });
    }
    Ok(out)
}

fn batch_of(examples: &[Example], idx: &[usize]) -> ContrastiveBatch {
    ContrastiveBatch {
        queries: idx.iter().map(|&i| examples[i].query.clone()).collect(),
        targets: idx.iter().map(|&i| examples[i].target.clone()).collect(),
    }
}

/// Loss of the whole dataset treated as one batch.
pub fn dataset_loss(params: &EncoderParams, examples: &[Example]) -> Result<f64, EncoderError> {
    let all: Vec<usize> = (0..examples.len()).collect();
    batch_loss(params, &batch_of(examples, &all))
}

/// Fraction of queries whose own target has the highest cosine among all
/// targets; ties go to the lower index.
pub fn retrieval_hit_at_1(
    params: &EncoderParams,
    examples: &[Example],
) -> Result<f64, EncoderError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let targets = examples
        .iter()
        .map(|e| embed_text(params, &e.target))
        .collect::<Result<Vec<_>, _>>()?;
    let mut hits = 0usize;
    for (i, e) in examples.iter().enumerate() {
        let q = embed_query(params, &e.query)?;
        let mut best = (0, f64::NEG_INFINITY);
        for (j, t) in targets.iter().enumerate() {
            let c = cosine(&q, t);
            if c > best.1 {
                best = (j, c);
            }
        }
        hits += usize::from(best.0 == i);
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Runs `tc.steps` Adam steps over seeded shuffles of `examples`. A final
/// short batch of fewer than two pairs is dropped.
pub fn train_toy(
    examples: &[Example],
    params: EncoderParams,
    tc: &TrainConfig,
) -> Result<TrainOutcome, EncoderError> {
    tc.validate()?;
    if examples.len() < 2 {
        return Err(EncoderError::Shape("need at least two examples".into()));
    }
    let mut params = params;
    let mut opt = Adam::new(&params, tc);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(tc.steps);
    'outer: loop {
        order.shuffle(&mut rng);
        for chunk in order.chunks(tc.batch_size) {
            if history.len() == tc.steps {
                break 'outer;
            }
            if chunk.len() < 2 {
                continue;
            }
            let step = history.len();
            let (loss, grads) = batch_loss_and_grads(&params, &batch_of(examples, chunk))
                .map_err(|e| EncoderError::Numeric(format!("step {step}: {e}")))?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(EncoderError::Numeric(format!(
                    "step {step}: non-finite loss or gradient (loss {loss})"
                )));
            }
            opt.step(&mut params, &grads);
            history.push(StepLog {
                step,
                loss,
                lr_graph: tc.graph_lr,
                lr_text: tc.text_lr(),
            });
        }
        if tc.steps == 0 {
            break;
        }
    }
    Ok(TrainOutcome {
        params,
        history,
        optimizer: opt,
    })
}

/// The loss history as CSV with a header row.
pub fn training_log_csv(history: &[StepLog]) -> Result<String, EncoderError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in history {
        w.serialize(row)
            .map_err(|e| EncoderError::Numeric(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| EncoderError::Numeric(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
