//! Spatial reasoning paths: destination discovery, path selection, geometric
//! annotation, the textual path notation and training-record emission.

mod annotate;
mod discover;
mod samples;
mod text;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geo::{GeoError, GeoPoint, Transition};
use crate::graph::{GraphError, NodeKind};

pub use annotate::{annotate_path, triple_count};
pub use discover::{discover_destinations, select_paths, Candidate, Candidates};
pub use samples::{
    emit_training_samples, Message, Stage, Stage1Sample, Stage2Sample, TrainingSample, PATH_NOTE,
    STAGE1_INSTRUCTION,
};
pub use text::{parse_srp, parse_srp_steps, render_srp, render_steps, SrpParseError};

#[derive(Debug, thiserror::Error)]
pub enum SrpError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid SRP config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub source: String,
    pub relation: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum PathStep {
    Triple {
        triple: Triple,
        trailing: Option<Transition>,
    },
    Move {
        transition: Transition,
    },
}

impl PathStep {
    pub fn is_triple(&self) -> bool {
        matches!(self, PathStep::Triple { .. })
    }
}

/// A rendered-ready reasoning path.
///
/// `nodes` and `spans` are only known for paths annotated from a graph: the
/// node-id sequence walked and, for every transition in step order, the pair
/// of coordinates it was measured between. Parsed paths leave them empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPath {
    pub image_id: String,
    pub origin: GeoPoint,
    pub steps: Vec<PathStep>,
    pub destination: String,
    pub hops: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spans: Vec<(GeoPoint, GeoPoint)>,
}

impl AnnotatedPath {
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.steps.iter().filter_map(|s| match s {
            PathStep::Triple { triple, .. } => Some(triple),
            PathStep::Move { .. } => None,
        })
    }

    /// Every transition in step order (moves and trailing tuples).
    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.steps.iter().filter_map(|s| match s {
            PathStep::Triple { trailing, .. } => trailing.as_ref(),
            PathStep::Move { transition } => Some(transition),
        })
    }

    /// Sum of all transition distances.
    pub fn length_m(&self) -> f64 {
        self.transitions().map(|t| t.distance_m).sum()
    }

    /// Structural invariants that can be checked from the steps alone.
    pub fn check(&self) -> Result<(), String> {
        if self.hops == 0 || self.hops != self.triples().count() {
            return Err(format!(
                "hops {} but {} triples",
                self.hops,
                self.triples().count()
            ));
        }
        if self.triples().next().map(|t| t.source.as_str()) != Some(self.image_id.as_str()) {
            return Err("first triple does not start at the image".into());
        }
        let mut prev_move = false;
        for s in &self.steps {
            let is_move = !s.is_triple();
            if is_move && prev_move {
                return Err("two consecutive move steps".into());
            }
            prev_move = is_move;
        }
        let triples: Vec<&Triple> = self.triples().collect();
        for w in triples.windows(2) {
            let via_crossing =
                matches!(w[0].relation.as_str(), "intersection" | "complex_crossing");
            if w[0].target != w[1].source && !via_crossing {
                return Err(format!(
                    "triples do not chain: {:?} then {:?}",
                    w[0].target, w[1].source
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrpConfig {
    pub max_hops: usize,
    pub min_hops: usize,
    pub max_path_m: f64,
    pub per_hop_quota: usize,
    pub excluded_kinds: BTreeSet<NodeKind>,
}

impl Default for SrpConfig {
    fn default() -> Self {
        Self {
            max_hops: 8,
            min_hops: 2,
            max_path_m: 2000.0,
            per_hop_quota: 1,
            excluded_kinds: BTreeSet::from([NodeKind::Intersection]),
        }
    }
}

impl SrpConfig {
    pub fn validate(&self) -> Result<(), SrpError> {
        if self.min_hops == 0 || self.min_hops > self.max_hops {
            return Err(SrpError::Config(format!(
                "need 1 <= min_hops <= max_hops, got {} and {}",
                self.min_hops, self.max_hops
            )));
        }
        if !(self.max_path_m.is_finite() && self.max_path_m > 0.0) || self.per_hop_quota == 0 {
            return Err(SrpError::Config(
                "max_path_m and per_hop_quota must be positive".into(),
            ));
        }
        Ok(())
    }
}
