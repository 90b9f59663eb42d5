use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::featurize::{featurize_sparse, FeaturizerConfig, SparseFeatures};
use super::train::TrainConfig;
use crate::codec::Artifact;
use crate::error::{Error, Result};

pub const DEFAULT_EMBEDDING_DIM: usize = 64;
pub const DEFAULT_TAU: f64 = 0.04;

/// Featurizer plus the trainable `hash_dim x dim` projection, stored
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderParams {
    pub featurizer: FeaturizerConfig,
    pub dim: usize,
    pub tau: f64,
    pub projection: Vec<f64>,
}

impl EmbedderParams {
    /// Entries i.i.d. uniform on `[-1/sqrt(F), 1/sqrt(F)]`.
    pub fn random_init(featurizer: FeaturizerConfig, dim: usize, tau: f64, seed: u64) -> Result<Self> {
        featurizer.validate()?;
        let bound = 1.0 / (featurizer.hash_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..featurizer.hash_dim * dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let params = EmbedderParams {
            featurizer,
            dim,
            tau,
            projection,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        self.featurizer.validate()?;
        if self.dim == 0 {
            return Err(Error::validation("dim", "must be positive"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::validation("tau", format!("{} is not a positive temperature", self.tau)));
        }
        if self.projection.len() != self.featurizer.hash_dim * self.dim {
            return Err(Error::validation(
                "projection",
                format!(
                    "has {} entries, expected {} x {}",
                    self.projection.len(),
                    self.featurizer.hash_dim,
                    self.dim
                ),
            ));
        }
        if let Some(i) = self.projection.iter().position(|w| !w.is_finite()) {
            return Err(Error::validation("projection", format!("entry {i} is not finite")));
        }
        Ok(())
    }

    pub fn row(&self, feature: usize) -> &[f64] {
        &self.projection[feature * self.dim..(feature + 1) * self.dim]
    }

    /// Stable identifier derived from every parameter.
    pub fn embedder_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"duffin-embedder");
        for n in &self.featurizer.ngram_sizes {
            h.update((*n as u64).to_le_bytes());
        }
        h.update((self.featurizer.hash_dim as u64).to_le_bytes());
        h.update(self.featurizer.hash_seed.to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        h.update(self.tau.to_bits().to_le_bytes());
        for w in &self.projection {
            h.update(w.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        format!("emb-{hex}")
    }

    /// `W^T x` for a sparse feature vector.
    pub fn project(&self, features: &SparseFeatures) -> Vec<f64> {
        let mut u = vec![0.0; self.dim];
        for &(i, x) in &features.entries {
            for (uk, wk) in u.iter_mut().zip(self.row(i as usize)) {
                *uk += x * wk;
            }
        }
        u
    }

    pub fn embed_features(&self, features: &SparseFeatures) -> Result<Vec<f64>> {
        let (e, _) = self.embed_with_norm(features)?;
        Ok(e)
    }

    /// Unit embedding together with the norm of the projection it came from.
    pub(crate) fn embed_with_norm(&self, features: &SparseFeatures) -> Result<(Vec<f64>, f64)> {
        let mut u = self.project(features);
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Degenerate(
                "projected feature vector has zero or non-finite norm".into(),
            ));
        }
        for v in &mut u {
            *v /= norm;
        }
        Ok((u, norm))
    }
}

/// `normalize(W^T featurize(trajectory))`.
pub fn embed(trajectory: &str, params: &EmbedderParams) -> Result<Vec<f64>> {
    params.embed_features(&featurize_sparse(trajectory, &params.featurizer))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingProvenance {
    pub corpus_hash: String,
    pub config: TrainConfig,
    pub final_loss: Option<f64>,
    pub loss_trace: Vec<f64>,
}

/// Contents of an extractor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extractor {
    pub embedder_id: String,
    pub params: EmbedderParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingProvenance>,
}

impl Extractor {
    pub fn new(params: EmbedderParams, training: Option<TrainingProvenance>) -> Self {
        Extractor {
            embedder_id: params.embedder_id(),
            params,
            training,
        }
    }
}

impl Artifact for Extractor {
    const KIND: &'static str = "extractor";

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.embedder_id != self.params.embedder_id() {
            return Err(Error::validation(
                "embedder_id",
                "does not match the stored parameters",
            ));
        }
        Ok(())
    }
}
