//! Contrastive objective over (anchor, positive, negatives) fingerprints and
//! its exact gradient with respect to the projection.
//!
//! For one triple with similarities `s+ = f.f+` and `s_j = f.f-_j` the
//! objective term is
//!
//! ```text
//! J = s+/tau - log sum_j exp(s_j/tau)                  (negatives only)
//! J = s+/tau - log(exp(s+/tau) + sum_j exp(s_j/tau))   (standard InfoNCE)
//! ```
//!
//! and training minimizes `loss = -sum J`. Each fingerprint is
//! `f = u/|u|` with `u = W^T x`, so `dJ/du = (I - f f^T) dJ/df / |u|` and
//! `dJ/dW = x (dJ/du)^T`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::embedder::EmbedderParams;
use super::featurize::SparseFeatures;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Denominator sums over the negatives only.
    #[default]
    NegativesOnly,
    /// Denominator also contains the positive pair.
    StandardInfoNce,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Objective term with the positive pair absent from the denominator.
pub fn info_nce_term(anchor: &[f64], positive: &[f64], negatives: &[&[f64]], tau: f64) -> Result<f64> {
    objective_term(anchor, positive, negatives, tau, LossVariant::NegativesOnly)
}

pub fn objective_term(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    tau: f64,
    variant: LossVariant,
) -> Result<f64> {
    if positive.len() != anchor.len() {
        return Err(Error::Shape {
            expected: anchor.len(),
            found: positive.len(),
        });
    }
    if let Some(n) = negatives.iter().find(|n| n.len() != anchor.len()) {
        return Err(Error::Shape {
            expected: anchor.len(),
            found: n.len(),
        });
    }
    if negatives.is_empty() {
        return Err(Error::Corpus("objective needs at least one negative".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("temperature {tau} must be positive")));
    }
    let pos = dot(anchor, positive) / tau;
    let negs = negatives.iter().map(|n| dot(anchor, n) / tau);
    let lse = match variant {
        LossVariant::NegativesOnly => log_sum_exp(negs),
        LossVariant::StandardInfoNce => log_sum_exp(std::iter::once(pos).chain(negs)),
    };
    Ok(pos - lse)
}

/// Indices into a feature table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub anchor: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

/// Loss `-sum J` over the triples and its gradient with respect to the
/// projection, laid out like [`EmbedderParams::projection`].
pub fn loss_and_gradient(
    params: &EmbedderParams,
    features: &[SparseFeatures],
    triples: &[Triple],
    variant: LossVariant,
) -> Result<(f64, Vec<f64>)> {
    let d = params.dim;
    let tau = params.tau;
    let mut grad = vec![0.0; params.projection.len()];
    if triples.is_empty() {
        return Ok((0.0, grad));
    }

    // Embed every distinct feature row once.
    let mut slot_of: HashMap<usize, usize> = HashMap::new();
    let mut rows: Vec<usize> = Vec::new();
    for t in triples {
        if t.negatives.is_empty() {
            return Err(Error::Corpus(format!(
                "triple with anchor {} has no negatives",
                t.anchor
            )));
        }
        for &i in std::iter::once(&t.anchor)
            .chain(std::iter::once(&t.positive))
            .chain(&t.negatives)
        {
            if i >= features.len() {
                return Err(Error::Corpus(format!("feature index {i} out of range")));
            }
            slot_of.entry(i).or_insert_with(|| {
                rows.push(i);
                rows.len() - 1
            });
        }
    }
    let mut embeddings = Vec::with_capacity(rows.len());
    let mut norms = Vec::with_capacity(rows.len());
    for &i in &rows {
        let (e, n) = params.embed_with_norm(&features[i])?;
        embeddings.push(e);
        norms.push(n);
    }
    let mut grad_e = vec![vec![0.0; d]; rows.len()];

    let mut loss = 0.0;
    let mut weights = Vec::new();
    for t in triples {
        let a = slot_of[&t.anchor];
        let p = slot_of[&t.positive];
        let s_pos = dot(&embeddings[a], &embeddings[p]);
        let z_pos = s_pos / tau;
        let z_neg: Vec<f64> = t
            .negatives
            .iter()
            .map(|n| dot(&embeddings[a], &embeddings[slot_of[n]]) / tau)
            .collect();

        // softmax weights over the denominator terms
        let (lse, pos_weight) = match variant {
            LossVariant::NegativesOnly => (log_sum_exp(z_neg.iter().copied()), 0.0),
            LossVariant::StandardInfoNce => {
                let lse = log_sum_exp(std::iter::once(z_pos).chain(z_neg.iter().copied()));
                (lse, (z_pos - lse).exp())
            }
        };
        weights.clear();
        weights.extend(z_neg.iter().map(|z| (z - lse).exp()));
        loss -= z_pos - lse;

        // d(loss)/ds = -dJ/ds
        let c_pos = -(1.0 - pos_weight) / tau;
        accumulate_pair(&mut grad_e, &embeddings, a, p, c_pos);
        for (n, w) in t.negatives.iter().zip(&weights) {
            accumulate_pair(&mut grad_e, &embeddings, a, slot_of[n], w / tau);
        }
    }

    for (slot, &row) in rows.iter().enumerate() {
        let e = &embeddings[slot];
        let g = &grad_e[slot];
        let eg = dot(e, g);
        let inv = 1.0 / norms[slot];
        let r: Vec<f64> = g.iter().zip(e).map(|(gk, ek)| (gk - ek * eg) * inv).collect();
        for &(i, x) in &features[row].entries {
            let base = i as usize * d;
            for (gw, rk) in grad[base..base + d].iter_mut().zip(&r) {
                *gw += x * rk;
            }
        }
    }
    Ok((loss, grad))
}

/// Adds `c * d(a.b)` to the gradients of the two embeddings.
fn accumulate_pair(grad_e: &mut [Vec<f64>], emb: &[Vec<f64>], a: usize, b: usize, c: f64) {
    for k in 0..emb[a].len() {
        grad_e[a][k] += c * emb[b][k];
        grad_e[b][k] += c * emb[a][k];
    }
}
