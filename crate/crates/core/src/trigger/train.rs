use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::embedder::{EmbedderParams, Extractor, TrainingProvenance, DEFAULT_EMBEDDING_DIM, DEFAULT_TAU};
use super::featurize::{featurize_sparse, FeaturizerConfig};
use super::objective::{loss_and_gradient, LossVariant, Triple};
use crate::codec::{self, Artifact};
use crate::error::{Error, Result};

/// A protected model with its pirated variants (positives) and the
/// independent models it must be separated from (negatives).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectedSet {
    pub model_id: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub model_id: String,
    pub trigger_id: String,
    pub trajectory: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingCorpus {
    pub protected: Vec<ProtectedSet>,
    pub records: Vec<TrajectoryRecord>,
}

impl Artifact for TrainingCorpus {
    const KIND: &'static str = "trajectory_corpus";

    fn validate(&self) -> Result<()> {
        TrainingCorpus::validate(self)
    }
}

impl TrainingCorpus {
    fn index(&self) -> Result<BTreeMap<(&str, &str), usize>> {
        let mut index = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if index
                .insert((r.model_id.as_str(), r.trigger_id.as_str()), i)
                .is_some()
            {
                return Err(Error::validation(
                    "records",
                    format!("duplicate record ({}, {})", r.model_id, r.trigger_id),
                ));
            }
        }
        Ok(index)
    }

    /// Triggers recorded for `model`, in record order.
    pub fn triggers_of<'a>(&'a self, model: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.records
            .iter()
            .filter(move |r| r.model_id == model)
            .map(|r| r.trigger_id.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        let index = self.index()?;
        for set in &self.protected {
            if set.negatives.is_empty() {
                return Err(Error::validation(
                    "protected.negatives",
                    format!("{} has no independent models", set.model_id),
                ));
            }
            let pos: BTreeSet<&String> = set.positives.iter().collect();
            if let Some(m) = set.negatives.iter().find(|m| pos.contains(m)) {
                return Err(Error::validation(
                    "protected.negatives",
                    format!("{m} is both a positive and a negative of {}", set.model_id),
                ));
            }
            for trigger in self.triggers_of(&set.model_id) {
                for m in set.positives.iter().chain(&set.negatives) {
                    if !index.contains_key(&(m.as_str(), trigger)) {
                        return Err(Error::validation(
                            "records",
                            format!("no trajectory for ({m}, {trigger})"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// One triple per (protected, positive, trigger); the negatives are the
    /// trajectories of every independent model on the same trigger. Triple
    /// indices point into `records`.
    pub fn triples(&self) -> Result<Vec<Triple>> {
        self.validate()?;
        let index = self.index()?;
        let mut out = Vec::new();
        for set in &self.protected {
            for positive in &set.positives {
                for trigger in self.triggers_of(&set.model_id) {
                    out.push(Triple {
                        anchor: index[&(set.model_id.as_str(), trigger)],
                        positive: index[&(positive.as_str(), trigger)],
                        negatives: set
                            .negatives
                            .iter()
                            .map(|n| index[&(n.as_str(), trigger)])
                            .collect(),
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn content_hash(&self) -> Result<String> {
        let bytes = codec::serialize(self)?;
        let digest = Sha256::digest(&bytes);
        Ok(digest[..16].iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub tau: f64,
    #[serde(default)]
    pub loss_variant: LossVariant,
    #[serde(default)]
    pub featurizer: FeaturizerConfig,
    pub dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 24,
            batch_size: 24,
            peak_lr: 1e-4,
            warmup_fraction: 0.03,
            seed: 0,
            tau: DEFAULT_TAU,
            loss_variant: LossVariant::default(),
            featurizer: FeaturizerConfig::default(),
            dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl Artifact for TrainConfig {
    const KIND: &'static str = "train_config";

    fn validate(&self) -> Result<()> {
        TrainConfig::validate(self)
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::validation("warmup_fraction", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be positive"));
        }
        if !(self.peak_lr >= 0.0) || !self.peak_lr.is_finite() {
            return Err(Error::validation("peak_lr", "must be finite and >= 0"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::validation("tau", "must be positive"));
        }
        self.featurizer.validate()
    }

    pub fn initial_params(&self) -> Result<EmbedderParams> {
        EmbedderParams::random_init(self.featurizer.clone(), self.dim, self.tau, self.seed)
    }
}

/// Linear warmup to the peak rate followed by cosine decay towards zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupCosine {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl WarmupCosine {
    pub fn new(peak: f64, warmup_fraction: f64, total_steps: usize) -> Self {
        WarmupCosine {
            peak,
            warmup_steps: (warmup_fraction * total_steps as f64).floor() as usize,
            total_steps,
        }
    }

    /// Learning rate for zero-based `step`.
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let decay_steps = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / decay_steps as f64).min(1.0);
        0.5 * self.peak * (1.0 + (PI * progress).cos())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedExtractor {
    pub params: EmbedderParams,
    /// Mean per-triple loss of every epoch, measured before each update.
    pub loss_trace: Vec<f64>,
}

impl TrainedExtractor {
    pub fn into_extractor(self, corpus: &TrainingCorpus, config: &TrainConfig) -> Result<Extractor> {
        let provenance = TrainingProvenance {
            corpus_hash: corpus.content_hash()?,
            config: config.clone(),
            final_loss: self.loss_trace.last().copied(),
            loss_trace: self.loss_trace,
        };
        Ok(Extractor::new(self.params, Some(provenance)))
    }
}

/// Mini-batch gradient descent on the contrastive loss.
pub fn train_extractor(corpus: &TrainingCorpus, config: &TrainConfig) -> Result<TrainedExtractor> {
    config.validate()?;
    let mut params = config.initial_params()?;
    let mut triples = corpus.triples()?;
    if config.epochs == 0 || triples.is_empty() {
        return Ok(TrainedExtractor {
            params,
            loss_trace: Vec::new(),
        });
    }
    let features: Vec<_> = corpus
        .records
        .iter()
        .map(|r| featurize_sparse(&r.trajectory, &config.featurizer))
        .collect();

    let steps_per_epoch = triples.len().div_ceil(config.batch_size);
    let schedule = WarmupCosine::new(
        config.peak_lr,
        config.warmup_fraction,
        steps_per_epoch * config.epochs,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c_4e55_0001);
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        for i in (1..triples.len()).rev() {
            let j = rng.gen_range(0..=i);
            triples.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in triples.chunks(config.batch_size) {
            let (loss, grad) = loss_and_gradient(&params, &features, batch, config.loss_variant)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            epoch_loss += loss;
            let lr = schedule.lr(step);
            for (w, g) in params.projection.iter_mut().zip(&grad) {
                *w -= lr * g;
            }
            if params.projection.iter().any(|w| !w.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    loss: f64::NAN,
                });
            }
            step += 1;
        }
        let mean = epoch_loss / triples.len() as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        loss_trace.push(mean);
    }
    Ok(TrainedExtractor { params, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_corpus() -> TrainingCorpus {
        let mut records = Vec::new();
        for (m, style) in [("p", "sure thing"), ("p1", "sure thing!"), ("q", "nope, no"), ("q1", "nope no")] {
            for t in ["t1", "t2", "t3"] {
                records.push(TrajectoryRecord {
                    model_id: m.into(),
                    trigger_id: t.into(),
                    trajectory: format!("Output: {style} about {t}"),
                });
            }
        }
        TrainingCorpus {
            protected: vec![
                ProtectedSet {
                    model_id: "p".into(),
                    positives: vec!["p1".into()],
                    negatives: vec!["q".into(), "q1".into()],
                },
                ProtectedSet {
                    model_id: "q".into(),
                    positives: vec!["q1".into()],
                    negatives: vec!["p".into(), "p1".into()],
                },
            ],
            records,
        }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 4,
            peak_lr: 0.005,
            featurizer: FeaturizerConfig {
                hash_dim: 256,
                ..FeaturizerConfig::default()
            },
            dim: 8,
            tau: 0.5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_shape() {
        let s = WarmupCosine::new(1e-4, 0.03, 1000);
        assert_eq!(s.warmup_steps, 30);
        assert!((s.lr(0) - 1e-4 / 30.0).abs() < 1e-18);
        assert!((s.lr(29) - 1e-4).abs() < 1e-18);
        assert!((s.lr(30) - 1e-4).abs() < 1e-18);
        assert!(s.lr(999) < 1e-8);
        for k in 30..999 {
            assert!(s.lr(k + 1) <= s.lr(k));
        }
        let no_warmup = WarmupCosine::new(1.0, 0.0, 10);
        assert_eq!(no_warmup.lr(0), 1.0);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_config()
        };
        let out = train_extractor(&tiny_corpus(), &cfg).unwrap();
        assert_eq!(out.params, cfg.initial_params().unwrap());
        assert!(out.loss_trace.is_empty());
    }

    #[test]
    fn deterministic() {
        let a = train_extractor(&tiny_corpus(), &tiny_config()).unwrap();
        let b = train_extractor(&tiny_corpus(), &tiny_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_trace.len(), 5);
    }

    #[test]
    fn loss_decreases_on_tiny_corpus() {
        let out = train_extractor(&tiny_corpus(), &tiny_config()).unwrap();
        assert!(out.loss_trace.last() < out.loss_trace.first(), "{:?}", out.loss_trace);
    }

    #[test]
    fn divergence_detected() {
        // normalization makes the loss scale-free, so blow the weights up
        // within the first step
        let cfg = TrainConfig {
            peak_lr: f64::MAX,
            tau: 1e-3,
            ..tiny_config()
        };
        assert!(matches!(
            train_extractor(&tiny_corpus(), &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn corpus_validation() {
        let mut c = tiny_corpus();
        c.protected[0].negatives.push("p1".into());
        assert!(c.validate().is_err());

        let mut c = tiny_corpus();
        c.protected[0].negatives.clear();
        assert!(c.validate().is_err());

        let mut c = tiny_corpus();
        c.records.retain(|r| !(r.model_id == "q1" && r.trigger_id == "t2"));
        assert!(c.validate().is_err());
    }

    #[test]
    fn triples_cover_every_positive_and_trigger() {
        let t = tiny_corpus().triples().unwrap();
        assert_eq!(t.len(), 2 * 3);
        assert!(t.iter().all(|t| t.negatives.len() == 2));
    }

    #[test]
    fn warmup_fraction_bounds() {
        let cfg = TrainConfig {
            warmup_fraction: 1.0,
            ..tiny_config()
        };
        assert!(cfg.validate().is_err());
    }
}
