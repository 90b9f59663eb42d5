//! Ownership verdicts and evaluation metrics.

mod eval;
mod metrics;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use eval::{
    evaluate, EvaluationSummary, FamilyEvaluation, LabelFile, Member, Population,
    SuspectEvaluation,
};
pub use metrics::{rank, roc_auc, roc_curve, ScoreSet};

use crate::codec::Artifact;
use crate::error::{Error, Result};
use crate::knowledge::{domain_similarity_profile, hamming_distance};
use crate::trigger::trigger_distance;
use crate::types::{
    KnowledgeFingerprint, Level, TriggerFingerprint, VerdictProvenance, VerificationVerdict,
};

/// `alpha * d_T + beta * d_K_norm`.
pub fn merged_distance(d_t: f64, d_k_norm: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&d_t) {
        return Err(Error::Domain(format!("d_T = {d_t} outside [-1, 1]")));
    }
    if !(0.0..=1.0).contains(&d_k_norm) {
        return Err(Error::Domain(format!("d_K_norm = {d_k_norm} outside [0, 1]")));
    }
    check_weights(alpha, beta)?;
    Ok(alpha * d_t + beta * d_k_norm)
}

fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0) {
        return Err(Error::Domain(format!(
            "weights alpha = {alpha}, beta = {beta} must be non-negative with a positive sum"
        )));
    }
    Ok(())
}

/// The fingerprints available for one model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FingerprintSet {
    pub model_id: String,
    pub trigger: Option<TriggerFingerprint>,
    pub knowledge: Option<KnowledgeFingerprint>,
}

impl FingerprintSet {
    pub fn new(model_id: impl Into<String>) -> Self {
        FingerprintSet {
            model_id: model_id.into(),
            ..Default::default()
        }
    }

    fn trigger_fp(&self, level: Level) -> Result<&TriggerFingerprint> {
        self.trigger.as_ref().ok_or_else(|| {
            Error::Input(format!("{} has no trigger fingerprint ({level} level)", self.model_id))
        })
    }

    fn knowledge_fp(&self, level: Level) -> Result<&KnowledgeFingerprint> {
        self.knowledge.as_ref().ok_or_else(|| {
            Error::Input(format!("{} has no knowledge fingerprint ({level} level)", self.model_id))
        })
    }

    fn key_version(&self) -> Option<&str> {
        self.trigger
            .as_ref()
            .map(|t| t.key_version.as_str())
            .or(self.knowledge.as_ref().map(|k| k.key_version.as_str()))
    }
}

/// Trigger distance of a pair.
pub fn level_trigger_distance(a: &FingerprintSet, b: &FingerprintSet) -> Result<f64> {
    trigger_distance(a.trigger_fp(Level::Trigger)?, b.trigger_fp(Level::Trigger)?)
}

/// Raw mismatch count, normalized distance, and vector length.
pub fn level_knowledge_distance(a: &FingerprintSet, b: &FingerprintSet) -> Result<(usize, f64, usize)> {
    let (fa, fb) = (a.knowledge_fp(Level::Knowledge)?, b.knowledge_fp(Level::Knowledge)?);
    let raw = hamming_distance(fa, fb)?;
    let len = fa.answers.len();
    if len == 0 {
        return Err(Error::Input("knowledge fingerprints are empty".into()));
    }
    Ok((raw, raw as f64 / len as f64, len))
}

/// Distance used at `level`: `d_T`, `d_K_norm`, or their weighted sum.
pub fn pair_distance(a: &FingerprintSet, b: &FingerprintSet, level: Level, alpha: f64, beta: f64) -> Result<f64> {
    match level {
        Level::Trigger => level_trigger_distance(a, b),
        Level::Knowledge => level_knowledge_distance(a, b).map(|(_, n, _)| n),
        Level::Merged => merged_distance(
            level_trigger_distance(a, b)?,
            level_knowledge_distance(a, b)?.1,
            alpha,
            beta,
        ),
    }
}

/// Negated distances from a suspect to the protected model (position 0)
/// and to each negative model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogitVector {
    pub level: Level,
    pub entries: Vec<f64>,
    pub labels: Vec<String>,
}

impl LogitVector {
    pub fn validate(&self) -> Result<()> {
        if self.entries.len() < 2 {
            return Err(Error::validation("entries", "need at least two entries"));
        }
        if self.entries.len() != self.labels.len() {
            return Err(Error::validation("labels", "one label per entry required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(l) = self.labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::validation("labels", format!("duplicate label {l}")));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> LogitVector {
        LogitVector {
            entries: self.entries.iter().map(|e| e * factor).collect(),
            ..self.clone()
        }
    }
}

/// Elementwise sum of a trigger-level and a knowledge-level vector.
pub fn merge_logits(trigger: &LogitVector, knowledge: &LogitVector) -> Result<LogitVector> {
    if trigger.labels != knowledge.labels {
        return Err(Error::Alignment(format!(
            "label orders differ: {:?} vs {:?}",
            trigger.labels, knowledge.labels
        )));
    }
    Ok(LogitVector {
        level: Level::Merged,
        entries: trigger
            .entries
            .iter()
            .zip(&knowledge.entries)
            .map(|(a, b)| a + b)
            .collect(),
        labels: trigger.labels.clone(),
    })
}

pub fn build_logit_vector(
    suspect: &FingerprintSet,
    protected: &FingerprintSet,
    negatives: &[FingerprintSet],
    level: Level,
) -> Result<LogitVector> {
    let candidates: Vec<&FingerprintSet> = std::iter::once(protected).chain(negatives).collect();
    let labels: Vec<String> = candidates.iter().map(|c| c.model_id.clone()).collect();
    let vector = match level {
        Level::Trigger => LogitVector {
            level,
            entries: candidates
                .iter()
                .map(|c| level_trigger_distance(suspect, c).map(|d| -d))
                .collect::<Result<_>>()?,
            labels,
        },
        Level::Knowledge => LogitVector {
            level,
            entries: candidates
                .iter()
                .map(|c| level_knowledge_distance(suspect, c).map(|(_, d, _)| -d))
                .collect::<Result<_>>()?,
            labels,
        },
        Level::Merged => merge_logits(
            &build_logit_vector(suspect, protected, negatives, Level::Trigger)?,
            &build_logit_vector(suspect, protected, negatives, Level::Knowledge)?,
        )?,
    };
    vector.validate()?;
    Ok(vector)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub alpha: f64,
    pub beta: f64,
    pub threshold: f64,
    pub level: Level,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            alpha: 1.0,
            beta: 1.0,
            threshold: 0.0,
            level: Level::Merged,
        }
    }
}

/// Compares a suspect with a protected model. At a single level the merged
/// distance degenerates to `alpha * d_T` or `beta * d_K_norm`.
pub fn verify(
    suspect: &FingerprintSet,
    protected: &FingerprintSet,
    config: &VerifyConfig,
) -> Result<VerificationVerdict> {
    check_weights(config.alpha, config.beta)?;
    let level = config.level;
    let d_t = if level.uses_trigger() {
        Some(level_trigger_distance(protected, suspect)?)
    } else {
        None
    };
    let knowledge = if level.uses_knowledge() {
        Some(level_knowledge_distance(protected, suspect)?)
    } else {
        None
    };
    let d_merged = match (d_t, knowledge) {
        (Some(t), Some((_, k, _))) => merged_distance(t, k, config.alpha, config.beta)?,
        (Some(t), None) => config.alpha * t,
        (None, Some((_, k, _))) => config.beta * k,
        (None, None) => unreachable!("every level uses at least one fingerprint"),
    };
    let key_version = protected
        .key_version()
        .unwrap_or_default()
        .to_string();
    let verdict = VerificationVerdict {
        level,
        d_t,
        d_k_raw: knowledge.map(|k| k.0),
        d_k_norm: knowledge.map(|k| k.1),
        knowledge_len: knowledge.map(|k| k.2),
        alpha: config.alpha,
        beta: config.beta,
        d_merged,
        threshold: config.threshold,
        is_pirated: d_merged <= config.threshold,
        provenance: VerdictProvenance {
            protected_model: protected.model_id.clone(),
            suspect_model: suspect.model_id.clone(),
            key_version,
            embedder_id: if level.uses_trigger() {
                protected.trigger.as_ref().map(|t| t.embedder_id.clone())
            } else {
                None
            },
        },
    };
    verdict.validate()?;
    Ok(verdict)
}

/// Midpoint between the largest positive and the smallest negative merged
/// distance of a labelled calibration set.
pub fn calibrate_threshold(positive_distances: &[f64], negative_distances: &[f64]) -> Result<f64> {
    let worst_positive = positive_distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_negative = negative_distances.iter().copied().fold(f64::INFINITY, f64::min);
    if !worst_positive.is_finite() || !best_negative.is_finite() {
        return Err(Error::Input("calibration needs positive and negative distances".into()));
    }
    Ok(0.5 * (worst_positive + best_negative))
}

/// Verdict plus the material needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictReport {
    pub verdict: VerificationVerdict,
    pub logits: Vec<LogitVector>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub domain_profile: BTreeMap<String, f64>,
}

impl Artifact for VerdictReport {
    const KIND: &'static str = "verdict_report";

    fn validate(&self) -> Result<()> {
        self.verdict.validate()?;
        self.logits.iter().try_for_each(LogitVector::validate)
    }
}

impl Artifact for VerificationVerdict {
    const KIND: &'static str = "verdict";

    fn validate(&self) -> Result<()> {
        VerificationVerdict::validate(self)
    }
}

/// Builds the full report for one suspect: verdict, logit vectors against
/// the protected model and any negatives, and the per-domain profile.
pub fn verdict_report(
    suspect: &FingerprintSet,
    protected: &FingerprintSet,
    negatives: &[FingerprintSet],
    config: &VerifyConfig,
) -> Result<VerdictReport> {
    let verdict = verify(suspect, protected, config)?;
    let mut logits = Vec::new();
    if !negatives.is_empty() {
        let levels: &[Level] = match config.level {
            Level::Trigger => &[Level::Trigger],
            Level::Knowledge => &[Level::Knowledge],
            Level::Merged => &[Level::Trigger, Level::Knowledge, Level::Merged],
        };
        for &level in levels {
            logits.push(build_logit_vector(suspect, protected, negatives, level)?);
        }
    }
    let domain_profile = match (&protected.knowledge, &suspect.knowledge) {
        (Some(p), Some(s)) if config.level.uses_knowledge() => domain_similarity_profile(p, s)?,
        _ => BTreeMap::new(),
    };
    Ok(VerdictReport {
        verdict,
        logits,
        domain_profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Answer, Choice};

    #[test]
    fn merged_examples() {
        assert_eq!(merged_distance(-1.0, 0.0, 1.0, 1.0).unwrap(), -1.0);
        assert_eq!(merged_distance(0.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((merged_distance(-0.5, 0.2, 2.0, 1.0).unwrap() + 0.8).abs() < 1e-12);
    }

    #[test]
    fn merged_domain_errors() {
        assert!(merged_distance(1.5, 0.0, 1.0, 1.0).is_err());
        assert!(merged_distance(0.0, -0.1, 1.0, 1.0).is_err());
        assert!(merged_distance(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(merged_distance(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn merge_examples() {
        let lt = LogitVector {
            level: Level::Trigger,
            entries: vec![-0.1, -0.5],
            labels: vec!["p".into(), "n".into()],
        };
        let lk = LogitVector {
            level: Level::Knowledge,
            entries: vec![-0.2, -0.9],
            labels: vec!["p".into(), "n".into()],
        };
        let lm = merge_logits(&lt, &lk).unwrap();
        assert!((lm.entries[0] + 0.3).abs() < 1e-12);
        assert!((lm.entries[1] + 1.4).abs() < 1e-12);
        let swapped = LogitVector {
            labels: vec!["n".into(), "p".into()],
            ..lk
        };
        assert!(matches!(merge_logits(&lt, &swapped), Err(Error::Alignment(_))));
    }

    fn kset(id: &str, answers: &str) -> FingerprintSet {
        FingerprintSet {
            model_id: id.into(),
            trigger: None,
            knowledge: Some(KnowledgeFingerprint {
                model_id: id.into(),
                key_version: "k".into(),
                domains: vec!["d".into()],
                questions_per_domain: answers.len(),
                answers: answers
                    .chars()
                    .map(|c| Choice::from_letter(c).map_or(Answer::Unparseable, Answer::Choice))
                    .collect(),
            }),
        }
    }

    fn tset(id: &str, rows: Vec<Vec<f64>>) -> TriggerFingerprint {
        TriggerFingerprint {
            model_id: id.into(),
            key_version: "k".into(),
            embedder_id: "e".into(),
            include_entropy: true,
            vectors: rows,
        }
    }

    #[test]
    fn knowledge_logits_are_negated_normalized_distances() {
        let s = kset("s", "AAAAAAAAAA");
        let p = kset("p", "AAAAAAAAAB");
        let n1 = kset("n1", "AAAAABBBBB");
        let n2 = kset("n2", "AAABBBBBBB");
        let l = build_logit_vector(&s, &p, &[n1, n2], Level::Knowledge).unwrap();
        assert_eq!(l.labels, ["p", "n1", "n2"]);
        let expected = [-0.1, -0.5, -0.7];
        for (a, b) in l.entries.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_suspect_is_pirated() {
        let mut p = kset("p", "ABCD");
        p.trigger = Some(tset("p", vec![vec![1.0, 0.0]]));
        let mut s = p.clone();
        s.model_id = "s".into();
        let v = verify(&s, &p, &VerifyConfig::default()).unwrap();
        assert_eq!(v.d_merged, -1.0);
        assert!(v.is_pirated);
        assert_eq!(v.d_k_raw, Some(0));
    }

    #[test]
    fn dissimilar_suspect_is_not_pirated() {
        let mut p = kset("p", "AAAA");
        p.trigger = Some(tset("p", vec![vec![1.0, 0.0]]));
        let mut s = kset("s", "BBBB");
        s.trigger = Some(tset("s", vec![vec![0.0, 1.0]]));
        let v = verify(&s, &p, &VerifyConfig::default()).unwrap();
        assert_eq!(v.d_merged, 1.0);
        assert!(!v.is_pirated);
    }

    #[test]
    fn knowledge_only_verdict() {
        let p = kset("p", "AAAA");
        let s = kset("s", "AABB");
        let cfg = VerifyConfig {
            level: Level::Knowledge,
            beta: 2.0,
            ..VerifyConfig::default()
        };
        let v = verify(&s, &p, &cfg).unwrap();
        assert!(v.d_t.is_none());
        assert_eq!(v.d_merged, 1.0);
        assert_eq!(v.d_k_norm, Some(0.5));
    }

    #[test]
    fn missing_fingerprint_is_input_error() {
        let p = kset("p", "AAAA");
        let s = kset("s", "AAAA");
        assert!(matches!(
            verify(&s, &p, &VerifyConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn calibration_midpoint() {
        assert_eq!(calibrate_threshold(&[-0.9, -0.6], &[-0.2, 0.4]).unwrap(), -0.4);
        assert!(calibrate_threshold(&[], &[0.1]).is_err());
    }
}
