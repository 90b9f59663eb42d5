//! Trigger-level fingerprints: templated responses to the key's trigger
//! prompts, embedded by a trainable extractor and compared by cosine.

mod embedder;
mod featurize;
mod objective;
mod template;
mod train;

pub use embedder::{
    embed, EmbedderParams, Extractor, TrainingProvenance, DEFAULT_EMBEDDING_DIM, DEFAULT_TAU,
};
pub use featurize::{featurize, featurize_sparse, FeaturizerConfig, SparseFeatures};
pub(crate) use featurize::splitmix64;
pub use objective::{info_nce_term, loss_and_gradient, objective_term, LossVariant, Triple};
pub use template::{format_trajectory, mean_token_entropy, render_trajectory};
pub use train::{
    train_extractor, ProtectedSet, TrainConfig, TrainedExtractor, TrainingCorpus,
    TrajectoryRecord, WarmupCosine,
};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::client::{complete_all, ModelHandle};
use crate::codec::Artifact;
use crate::error::{Error, Result};
use crate::types::{PromptTrigger, SecretKey, TriggerFingerprint};

/// Contents of a trigger file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSet {
    pub provenance: String,
    pub triggers: Vec<PromptTrigger>,
}

impl Artifact for TriggerSet {
    const KIND: &'static str = "trigger_set";

    fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for t in &self.triggers {
            if t.text.is_empty() {
                return Err(Error::validation("text", format!("trigger {} is empty", t.id)));
            }
            if !ids.insert(t.id.as_str()) {
                return Err(Error::validation("id", format!("duplicate trigger id {}", t.id)));
            }
        }
        Ok(())
    }
}

/// Queries `model` with every trigger and embeds the templated responses.
pub fn extract_trigger_fingerprint(
    model: &ModelHandle,
    key: &SecretKey,
    params: &EmbedderParams,
    include_entropy: bool,
    max_parallel: usize,
) -> Result<TriggerFingerprint> {
    if key.triggers.is_empty() {
        return Err(Error::Input("key has no triggers".into()));
    }
    params.validate()?;
    let prompts = key.triggers.iter().map(|t| t.text.clone()).collect();
    let responses = complete_all(model, prompts, max_parallel, |i| {
        format!("model {} on trigger {}", model.id(), key.triggers[i].id)
    })?;
    let vectors = responses
        .iter()
        .zip(&key.triggers)
        .map(|(response, trigger)| {
            let trajectory = render_trajectory(response, include_entropy).map_err(|e| match e {
                Error::Capability(_) => Error::Capability(format!(
                    "model {} returned no token log-probabilities for trigger {}; \
                     rerun in no-entropy mode (--no-entropy)",
                    model.id(),
                    trigger.id
                )),
                other => other.context(format!("trigger {}", trigger.id)),
            })?;
            embed(&trajectory, params).map_err(|e| e.context(format!("trigger {}", trigger.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TriggerFingerprint {
        model_id: model.id().to_string(),
        key_version: key.version.clone(),
        embedder_id: params.embedder_id(),
        include_entropy,
        vectors,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Negative mean per-trigger cosine similarity, in `[-1, 1]`.
pub fn trigger_distance(protected: &TriggerFingerprint, suspect: &TriggerFingerprint) -> Result<f64> {
    if protected.key_version != suspect.key_version {
        return Err(Error::Incompatible(format!(
            "key versions {:?} and {:?} differ",
            protected.key_version, suspect.key_version
        )));
    }
    if protected.embedder_id != suspect.embedder_id {
        return Err(Error::Incompatible(format!(
            "extracted with different embedders ({} vs {})",
            protected.embedder_id, suspect.embedder_id
        )));
    }
    if protected.vectors.len() != suspect.vectors.len() {
        return Err(Error::Incompatible(format!(
            "{} vs {} trigger rows",
            protected.vectors.len(),
            suspect.vectors.len()
        )));
    }
    if protected.vectors.is_empty() {
        return Err(Error::Input("fingerprints have no rows".into()));
    }
    let mut total = 0.0;
    for (a, b) in protected.vectors.iter().zip(&suspect.vectors) {
        if a.len() != b.len() {
            return Err(Error::Shape {
                expected: a.len(),
                found: b.len(),
            });
        }
        total += cosine(a, b);
    }
    Ok(-(total / protected.vectors.len() as f64))
}
