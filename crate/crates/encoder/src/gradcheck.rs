//! Central-difference verification of the analytic gradients.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{batch_loss_and_grads, batch_loss_signed};
use crate::{ContrastiveBatch, EncoderError, EncoderParams, Query};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub name: String,
    pub samples: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub sampled_params: usize,
    pub max_rel_error: f64,
    pub per_block: Vec<BlockError>,
    /// Draws thrown away because the perturbation crossed a LeakyReLU kink.
    pub resampled: usize,
}

const MAX_DRAWS_PER_SAMPLE: usize = 64;

/// Token rows the batch actually reads; other rows have exactly zero
/// gradient and say nothing about the backward pass.
fn used_rows(b: &ContrastiveBatch) -> Vec<usize> {
    let mut rows = BTreeSet::new();
    for q in &b.queries {
        match q {
            Query::Graph { graph, instruction } => {
                rows.extend(instruction.iter().map(|&t| t as usize));
                for (toks, o) in graph.tokens.iter().zip(&graph.text_override) {
                    if o.is_none() {
                        rows.extend(toks.iter().map(|&t| t as usize));
                    }
                }
            }
            Query::Text(t) => rows.extend(t.iter().map(|&t| t as usize)),
        }
    }
    for t in &b.targets {
        rows.extend(t.iter().map(|&t| t as usize));
    }
    rows.into_iter().collect()
}

/// Compares analytic gradients with `(L(x+eps) − L(x−eps)) / 2eps` on
/// `samples` scalars drawn round-robin over every block. Draws whose
/// perturbation flips any LeakyReLU input sign are redrawn.
pub fn grad_check(
    params: &EncoderParams,
    batch: &ContrastiveBatch,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport, EncoderError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(EncoderError::Config(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let (_, analytic) = batch_loss_and_grads(params, batch)?;
    let (_, base_signs) = batch_loss_signed(params, batch)?;
    let rows = used_rows(batch);
    let td = params.config().token_dim;
    let nb = params.blocks.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_block: Vec<BlockError> = params
        .blocks
        .iter()
        .map(|b| BlockError {
            name: b.name.clone(),
            samples: 0,
            max_rel_error: 0.0,
        })
        .collect();
    let mut resampled = 0;
    let mut work = params.clone();
    let samples = samples.max(nb);

    for s in 0..samples {
        let bi = s % nb;
        let len = params.blocks[bi].data.len();
        let mut accepted = None;
        for _ in 0..MAX_DRAWS_PER_SAMPLE {
            let k = if bi == params.layout.token_table && !rows.is_empty() {
                rows[rng.gen_range(0..rows.len())] * td + rng.gen_range(0..td)
            } else {
                rng.gen_range(0..len)
            };
            let x = params.blocks[bi].data[k];
            work.blocks[bi].data[k] = x + eps;
            let (lp, sp) = batch_loss_signed(&work, batch)?;
            work.blocks[bi].data[k] = x - eps;
            let (lm, sm) = batch_loss_signed(&work, batch)?;
            work.blocks[bi].data[k] = x;
            if sp != base_signs || sm != base_signs {
                resampled += 1;
                continue;
            }
            accepted = Some(((lp - lm) / (2.0 * eps), analytic.blocks[bi][k]));
            break;
        }
        let (gn, ga) = accepted.ok_or_else(|| {
            EncoderError::Numeric(format!(
                "every draw in block {} sits on a LeakyReLU kink",
                params.blocks[bi].name
            ))
        })?;
        let rel = (ga - gn).abs() / ga.abs().max(gn.abs()).max(1e-8);
        let be = &mut per_block[bi];
        be.samples += 1;
        be.max_rel_error = be.max_rel_error.max(rel);
    }
    let max_rel_error = per_block
        .iter()
        .map(|b| b.max_rel_error)
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        eps,
        sampled_params: samples,
        max_rel_error,
        per_block,
        resampled,
    })
}
