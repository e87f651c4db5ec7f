//! Cosine ranking, Hit@k and single-relevant NDCG@k.

use serde::{Deserialize, Serialize};

use super::BenchError;

/// Candidate indices in ranked order with their cosine scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
}

impl Ranking {
    /// 1-based rank of candidate `idx`.
    pub fn rank_of(&self, idx: usize) -> Option<usize> {
        self.order.iter().position(|&i| i == idx).map(|p| p + 1)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

/// Ranks candidates by descending cosine similarity to `query`, ties broken
/// by ascending candidate index. `ids` name the vectors in error messages
/// (query first, then candidates).
pub fn rank_candidates(
    query: &[f64],
    candidates: &[&[f64]],
    ids: Option<&[String]>,
) -> Result<Ranking, BenchError> {
    let name = |i: usize| {
        ids.and_then(|ids| ids.get(i).cloned()).unwrap_or_else(|| {
            if i == 0 {
                "query".into()
            } else {
                format!("candidate {}", i - 1)
            }
        })
    };
    if norm(query) == 0.0 {
        return Err(BenchError::Data(format!("{} has zero norm", name(0))));
    }
    for (i, c) in candidates.iter().enumerate() {
        if c.len() != query.len() {
            return Err(BenchError::Data(format!(
                "{} has dimension {}, query has {}",
                name(i + 1),
                c.len(),
                query.len()
            )));
        }
        if norm(c) == 0.0 {
            return Err(BenchError::Data(format!("{} has zero norm", name(i + 1))));
        }
    }
    let sims: Vec<f64> = candidates.iter().map(|c| cosine(query, c)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    let scores = order.iter().map(|&i| sims[i]).collect();
    Ok(Ranking { order, scores })
}

pub fn hit_at_k(r: &Ranking, gt: usize, k: usize) -> f64 {
    match r.rank_of(gt) {
        Some(rank) if rank <= k => 1.0,
        _ => 0.0,
    }
}

/// With one relevant item the ideal DCG is 1, so NDCG is the item's gain.
pub fn ndcg_at_k(r: &Ranking, gt: usize, k: usize) -> f64 {
    match r.rank_of(gt) {
        Some(rank) if rank <= k => 1.0 / ((rank + 1) as f64).log2(),
        _ => 0.0,
    }
}

/// Pairwise (cascade) summation: the result depends only on the order of
/// `xs`, and rounding error grows with log n rather than n.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}
