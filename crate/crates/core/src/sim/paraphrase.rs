//! Paraphrase attack on knowledge keys, plus a simulated rewriter.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SeedHash;
use crate::client::{chat_all, Backend, BackendKind, ChatRequest, DecodeConfig, ModelHandle};
use crate::error::Result;
use crate::types::{KnowledgeQuestion, ModelResponse, SecretKey};

pub const REWRITER_SYSTEM_PROMPT: &str = "You are a question-rewriting assistant. Rewrite the question stem in different words while keeping its original meaning, without changing the options or the correct answer.";

/// The attack prompt for one question. The answer slot carries the correct
/// option as `L) text`.
pub fn attack_prompt(question: &KnowledgeQuestion) -> String {
    let answer = question
        .choices
        .get(&question.ground_truth)
        .map(|t| format!("{}) {t}", question.ground_truth))
        .unwrap_or_default();
    format!(
        "Please rewrite only the question: Question: {}. Answer: {answer}.",
        question.stem
    )
}

fn question_slot(prompt: &str) -> Option<&str> {
    let rest = prompt.strip_prefix("Please rewrite only the question: Question: ")?;
    let end = rest.rfind(". Answer: ")?;
    Some(&rest[..end])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParaphraseOutcome {
    pub key: SecretKey,
    pub warnings: Vec<String>,
}

/// Rewrites every knowledge stem with `rewriter`. Ids, choices, ground
/// truths, order and the key version are kept, so fingerprints taken with
/// the rewritten key stay comparable with the original ones.
pub fn paraphrase_key(key: &SecretKey, rewriter: &ModelHandle, max_parallel: usize) -> Result<ParaphraseOutcome> {
    key.validate()?;
    let requests: Vec<ChatRequest> = key
        .knowledge
        .iter()
        .map(|q| ChatRequest {
            system: Some(REWRITER_SYSTEM_PROMPT.into()),
            prompt: attack_prompt(q),
        })
        .collect();
    let responses = chat_all(rewriter, &requests, max_parallel, |i| {
        format!("rewriting question {}", key.knowledge[i].id)
    })?;
    let mut out = key.clone();
    let mut warnings = Vec::new();
    for (q, r) in out.knowledge.iter_mut().zip(responses) {
        let stem = r.text.trim();
        if stem.is_empty() {
            warnings.push(format!("question {}: empty rewrite, original stem kept", q.id));
        } else {
            q.stem = stem.to_string();
        }
    }
    out.provenance.push(format!("paraphrased by {}", rewriter.id()));
    Ok(ParaphraseOutcome { key: out, warnings })
}

/// Phrase substitutions the simulated rewriter may apply, longest first.
const REWRITES: &[(&str, &str)] = &[
    (
        "Evaluate the accuracy of these statements",
        "Assess the correctness of the following statements",
    ),
    ("what day of the week will it be in", "which weekday will it be after"),
    ("comes first in alphabetical order", "is first alphabetically"),
    ("Which of the following", "Which of these"),
    ("greatest common divisor", "largest common factor"),
    ("interior angles", "inner angles"),
    ("Solve for x:", "Find x if"),
    ("If today is", "Suppose today is"),
    ("the area of", "the surface area of"),
    ("How many", "What number of"),
    ("What is", "Tell me"),
    ("divided by", "split by"),
    ("with sides", "having sides"),
    ("with side", "having side"),
    ("third letter", "3rd letter"),
    ("remainder", "leftover"),
    ("perimeter", "boundary length"),
    ("utilized", "used"),
    ("employed", "used"),
    ("enhance", "improve"),
    ("letters", "characters"),
    ("numbers", "values"),
    ("rectangle", "rectangular shape"),
    ("polygon", "closed figure"),
];

/// Deterministic stand-in for an external rewriting model. Each phrase of
/// the substitution table found in a stem is rewritten with probability
/// `strength`, decided by a hash of seed, stem and phrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatedRewriter {
    pub strength: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimulatedRewriter {
    fn default() -> Self {
        SimulatedRewriter {
            strength: 0.5,
            seed: 0,
        }
    }
}

impl SimulatedRewriter {
    pub fn rewrite(&self, stem: &str) -> String {
        let h = SeedHash::new(self.seed).str(stem);
        let mut out = stem.to_string();
        for (from, to) in REWRITES {
            if out.contains(from) && h.str(from).unit() < self.strength {
                out = out.replace(from, to);
            }
        }
        if out != stem && !out.ends_with(['.', '?', '!']) {
            out.push('.');
        }
        out
    }
}

impl Backend for SimulatedRewriter {
    fn kind(&self) -> BackendKind {
        BackendKind::Simulated
    }

    fn complete(&self, request: &ChatRequest, _: &DecodeConfig, _: Duration) -> Result<ModelResponse> {
        let text = question_slot(&request.prompt)
            .map(|q| self.rewrite(q))
            .unwrap_or_default();
        Ok(ModelResponse::text_only(text))
    }
}
