//! Population-level evaluation: IP-ROC per protected model and Rank per
//! pirated suspect.
//!
//! For a protected model `p` every other model is a suspect scored by
//! `-distance(p, suspect)`. Suspects of `p`'s family are positives, all
//! others negatives. IP-ROC is the ROC-AUC of those two score sets, and a
//! positive suspect's Rank counts the negatives scoring at least as high.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::metrics::{rank, roc_auc, roc_curve, ScoreSet};
use super::{pair_distance, FingerprintSet};
use crate::codec::Artifact;
use crate::error::{Error, Result};
use crate::knowledge::domain_similarity_profile;
use crate::types::Level;

pub const POOLING_RULE: &str = "per protected model: one score per suspect, -distance(protected, suspect); \
     positives = suspects of the protected model's family, negatives = every other suspect";

/// Maps models to families and names each family's protected model.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFile {
    /// family -> protected model id
    pub protected: BTreeMap<String, String>,
    /// model id -> family
    pub families: BTreeMap<String, String>,
}

impl Artifact for LabelFile {
    const KIND: &'static str = "labels";

    fn validate(&self) -> Result<()> {
        for (family, model) in &self.protected {
            match self.families.get(model) {
                Some(f) if f == family => {}
                Some(f) => {
                    return Err(Error::Labeling(format!(
                        "protected model {model} of family {family} is labelled {f}"
                    )))
                }
                None => {
                    return Err(Error::Labeling(format!(
                        "protected model {model} of family {family} has no family label"
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub family: String,
    pub fingerprints: FingerprintSet,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Population {
    pub members: Vec<Member>,
    /// Model ids of the protected models, one per evaluated family.
    pub protected: Vec<String>,
    /// Fingerprints a protected model is compared with, when they differ
    /// from its member fingerprints (for example, taken with the original
    /// key while suspects used a paraphrased one).
    pub references: BTreeMap<String, FingerprintSet>,
}

impl Population {
    /// Pairs fingerprints with labels; every model must be labelled.
    pub fn from_labels(labels: &LabelFile, sets: Vec<FingerprintSet>) -> Result<Population> {
        Artifact::validate(labels)?;
        let mut members = Vec::with_capacity(sets.len());
        for set in sets {
            let family = labels.families.get(&set.model_id).ok_or_else(|| {
                Error::Labeling(format!("suspect {} has no family label", set.model_id))
            })?;
            members.push(Member {
                family: family.clone(),
                fingerprints: set,
            });
        }
        members.sort_by(|a, b| a.fingerprints.model_id.cmp(&b.fingerprints.model_id));
        let present: BTreeSet<&str> = members.iter().map(|m| m.fingerprints.model_id.as_str()).collect();
        for model in labels.protected.values() {
            if !present.contains(model.as_str()) {
                return Err(Error::Labeling(format!("no fingerprints for protected model {model}")));
            }
        }
        Ok(Population {
            members,
            protected: labels.protected.values().cloned().collect(),
            references: BTreeMap::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuspectEvaluation {
    pub model_id: String,
    pub family: String,
    pub positive: bool,
    pub similarity: f64,
    /// Rank among the negatives; positives only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// ROC-AUC of this suspect alone against every negative; positives only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip_roc: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub domain_profile: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyEvaluation {
    pub family: String,
    pub protected_model: String,
    pub ip_roc: f64,
    pub rank1_fraction: f64,
    pub roc_curve: Vec<[f64; 2]>,
    pub suspects: Vec<SuspectEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSummary {
    pub level: Level,
    pub alpha: f64,
    pub beta: f64,
    pub pooling: String,
    pub families: Vec<FamilyEvaluation>,
    pub mean_ip_roc: f64,
    pub rank1_fraction: f64,
}

impl Artifact for EvaluationSummary {
    const KIND: &'static str = "evaluation_summary";

    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

impl EvaluationSummary {
    pub fn family(&self, name: &str) -> Option<&FamilyEvaluation> {
        self.families.iter().find(|f| f.family == name)
    }
}

pub fn evaluate(population: &Population, level: Level, alpha: f64, beta: f64) -> Result<EvaluationSummary> {
    let by_id: BTreeMap<&str, &Member> = population
        .members
        .iter()
        .map(|m| (m.fingerprints.model_id.as_str(), m))
        .collect();
    let mut families = Vec::new();
    for protected_id in &population.protected {
        let protected = by_id
            .get(protected_id.as_str())
            .ok_or_else(|| Error::Labeling(format!("unknown protected model {protected_id}")))?;
        let reference = population
            .references
            .get(protected_id)
            .unwrap_or(&protected.fingerprints);
        let mut suspects = Vec::new();
        for m in &population.members {
            if m.fingerprints.model_id == *protected_id {
                continue;
            }
            let d = pair_distance(reference, &m.fingerprints, level, alpha, beta)
                .map_err(|e| e.context(format!("{protected_id} vs {}", m.fingerprints.model_id)))?;
            let domain_profile = match (&reference.knowledge, &m.fingerprints.knowledge) {
                (Some(p), Some(s)) if level.uses_knowledge() => domain_similarity_profile(p, s)?,
                _ => BTreeMap::new(),
            };
            suspects.push(SuspectEvaluation {
                model_id: m.fingerprints.model_id.clone(),
                family: m.family.clone(),
                positive: m.family == protected.family,
                similarity: -d,
                rank: None,
                ip_roc: None,
                domain_profile,
            });
        }
        let scores = ScoreSet::new(
            suspects.iter().filter(|s| s.positive).map(|s| s.similarity).collect(),
            suspects.iter().filter(|s| !s.positive).map(|s| s.similarity).collect(),
        );
        let ip_roc = roc_auc(&scores).map_err(|e| e.context(format!("family {}", protected.family)))?;
        let curve = roc_curve(&scores)?;
        for s in suspects.iter_mut().filter(|s| s.positive) {
            s.rank = Some(rank(s.similarity, &scores.negatives));
            s.ip_roc = Some(roc_auc(&ScoreSet::new(vec![s.similarity], scores.negatives.clone()))?);
        }
        let ranks: Vec<usize> = suspects.iter().filter_map(|s| s.rank).collect();
        families.push(FamilyEvaluation {
            family: protected.family.clone(),
            protected_model: protected_id.clone(),
            ip_roc,
            rank1_fraction: ranks.iter().filter(|&&r| r == 1).count() as f64 / ranks.len() as f64,
            roc_curve: curve,
            suspects,
        });
    }
    if families.is_empty() {
        return Err(Error::Input("no protected models to evaluate".into()));
    }
    let mean_ip_roc = families.iter().map(|f| f.ip_roc).sum::<f64>() / families.len() as f64;
    let (ones, total) = families.iter().flat_map(|f| &f.suspects).fold((0, 0), |(o, t), s| match s.rank {
        Some(1) => (o + 1, t + 1),
        Some(_) => (o, t + 1),
        None => (o, t),
    });
    Ok(EvaluationSummary {
        level,
        alpha,
        beta,
        pooling: POOLING_RULE.into(),
        families,
        mean_ip_roc,
        rank1_fraction: if total == 0 { 0.0 } else { ones as f64 / total as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Answer, Choice, KnowledgeFingerprint};

    fn member(id: &str, family: &str, answers: &str) -> Member {
        Member {
            family: family.into(),
            fingerprints: FingerprintSet {
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
            },
        }
    }

    #[test]
    fn perfectly_separable() {
        let pop = Population {
            members: vec![
                member("a", "A", "AAAAAAAA"),
                member("a1", "A", "AAAAAAAB"),
                member("b", "B", "BBBBBBBB"),
                member("b1", "B", "BBBBBBBA"),
            ],
            protected: vec!["a".into(), "b".into()],
            references: BTreeMap::new(),
        };
        let s = evaluate(&pop, Level::Knowledge, 1.0, 1.0).unwrap();
        assert!(s.families.iter().all(|f| f.ip_roc == 1.0));
        assert_eq!(s.rank1_fraction, 1.0);
        assert_eq!(s.mean_ip_roc, 1.0);
    }

    #[test]
    fn tie_with_best_negative_ranks_two() {
        let pop = Population {
            members: vec![
                member("a", "A", "AAAA"),
                member("a1", "A", "AABB"),
                member("x", "X", "AABB"),
                member("y", "Y", "BBBB"),
            ],
            protected: vec!["a".into()],
            references: BTreeMap::new(),
        };
        let s = evaluate(&pop, Level::Knowledge, 1.0, 1.0).unwrap();
        let a1 = s.families[0].suspects.iter().find(|s| s.model_id == "a1").unwrap();
        assert_eq!(a1.rank, Some(2));
        assert_eq!(s.families[0].ip_roc, 0.75);
    }

    #[test]
    fn unlabeled_suspect_rejected() {
        let labels = LabelFile {
            protected: [("A".to_string(), "a".to_string())].into(),
            families: [("a".to_string(), "A".to_string())].into(),
        };
        let sets = vec![
            member("a", "A", "AA").fingerprints,
            member("z", "Z", "AB").fingerprints,
        ];
        assert!(matches!(
            Population::from_labels(&labels, sets),
            Err(Error::Labeling(_))
        ));
    }
}
