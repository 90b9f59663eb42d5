//! Knowledge-level fingerprints: answers to a domain-stratified set of
//! multiple-choice questions, compared position by position.

mod distance;
mod prompt;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use distance::{
    domain_similarity_profile, edit_distance, hamming_distance, jaccard_similarity,
};
pub(crate) use distance::levenshtein_words;
pub use prompt::{answer_prompt, parse_choice, split_answer_prompt, ANSWER_INSTRUCTION};

use crate::client::{complete_all, ModelHandle};
use crate::codec::Artifact;
use crate::error::{Error, Result};
use crate::types::{Answer, KnowledgeFingerprint, KnowledgeQuestion, PromptTrigger, SecretKey};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolDomain {
    pub domain: String,
    pub questions: Vec<KnowledgeQuestion>,
}

/// Candidate questions grouped by domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionPool {
    pub provenance: String,
    pub domains: Vec<PoolDomain>,
}

impl Artifact for QuestionPool {
    const KIND: &'static str = "question_pool";

    fn validate(&self) -> Result<()> {
        QuestionPool::validate(self)
    }
}

impl QuestionPool {
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for d in &self.domains {
            if !names.insert(d.domain.as_str()) {
                return Err(Error::validation("domains", format!("duplicate domain {:?}", d.domain)));
            }
            if d.questions.is_empty() {
                return Err(Error::validation("domains", format!("domain {:?} is empty", d.domain)));
            }
            for q in &d.questions {
                q.validate()?;
                if q.domain != d.domain {
                    return Err(Error::validation(
                        "domain",
                        format!("question {} is labelled {:?} inside {:?}", q.id, q.domain, d.domain),
                    ));
                }
                if !ids.insert(q.id.as_str()) {
                    return Err(Error::validation("id", format!("duplicate question id {}", q.id)));
                }
            }
        }
        Ok(())
    }

    pub fn questions(&self) -> impl Iterator<Item = &KnowledgeQuestion> {
        self.domains.iter().flat_map(|d| &d.questions)
    }

    pub fn len(&self) -> usize {
        self.domains.iter().map(|d| d.questions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub raw: String,
    pub parsed: Answer,
}

/// Asks every model every question and returns one record list per model,
/// in pool order.
pub fn collect_answers(
    model: &ModelHandle,
    questions: &[&KnowledgeQuestion],
    max_parallel: usize,
) -> Result<Vec<AnswerRecord>> {
    let prompts = questions.iter().map(|q| answer_prompt(q)).collect();
    let responses = complete_all(model, prompts, max_parallel, |i| {
        format!("model {} on question {}", model.id(), questions[i].id)
    })?;
    Ok(responses
        .into_iter()
        .zip(questions)
        .map(|(r, q)| AnswerRecord {
            question_id: q.id.clone(),
            parsed: parse_choice(&r.text),
            raw: r.text,
        })
        .collect())
}

/// Keeps a question iff a strict majority of the protected models give a
/// parseable answer to it. Correctness is not checked.
pub fn filter_questions(
    pool: &QuestionPool,
    protected: &[ModelHandle],
    max_parallel: usize,
) -> Result<QuestionPool> {
    if protected.is_empty() {
        return Err(Error::Input("filtering needs at least one protected model".into()));
    }
    pool.validate()?;
    let all: Vec<&KnowledgeQuestion> = pool.questions().collect();
    let mut valid = vec![0usize; all.len()];
    for model in protected {
        for (count, record) in valid.iter_mut().zip(collect_answers(model, &all, max_parallel)?) {
            if record.parsed.is_parseable() {
                *count += 1;
            }
        }
    }
    let keep = |count: usize| 2 * count > protected.len();
    let mut offset = 0;
    let mut domains = Vec::with_capacity(pool.domains.len());
    for d in &pool.domains {
        let questions: Vec<KnowledgeQuestion> = d
            .questions
            .iter()
            .zip(&valid[offset..offset + d.questions.len()])
            .filter(|(_, &c)| keep(c))
            .map(|(q, _)| q.clone())
            .collect();
        offset += d.questions.len();
        if questions.is_empty() {
            return Err(Error::DomainExhausted {
                domain: d.domain.clone(),
            });
        }
        domains.push(PoolDomain {
            domain: d.domain.clone(),
            questions,
        });
    }
    Ok(QuestionPool {
        provenance: format!(
            "{} | filtered by {}",
            pool.provenance,
            protected.iter().map(ModelHandle::id).collect::<Vec<_>>().join(",")
        ),
        domains,
    })
}

fn domain_rng(seed: u64, domain: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(domain.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(bytes))
}

/// Samples exactly `q` questions per domain without replacement.
///
/// Output is domain-major in pool order, then in sampled order. Each
/// domain draws from its own generator seeded by `(seed, domain)`.
pub fn build_knowledge_key(pool: &QuestionPool, q: usize, seed: u64) -> Result<Vec<KnowledgeQuestion>> {
    let mut out = Vec::with_capacity(q * pool.domains.len());
    for d in &pool.domains {
        let n = d.questions.len();
        if n < q {
            return Err(Error::InsufficientQuestions {
                domain: d.domain.clone(),
                available: n,
                required: q,
            });
        }
        let mut rng = domain_rng(seed, &d.domain);
        let mut order: Vec<usize> = (0..n).collect();
        for i in 0..q {
            let j = rng.gen_range(i..n);
            order.swap(i, j);
        }
        out.extend(order[..q].iter().map(|&i| d.questions[i].clone()));
    }
    Ok(out)
}

/// Content-derived key version: identical inputs give identical versions.
pub fn key_version(triggers: &[PromptTrigger], knowledge: &[KnowledgeQuestion], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for t in triggers {
        for part in [t.id.as_str(), "\u{1f}", t.text.as_str(), "\u{1e}"] {
            h.update(part.as_bytes());
        }
    }
    for q in knowledge {
        for part in [q.id.as_str(), "\u{1f}", q.stem.as_str(), "\u{1e}"] {
            h.update(part.as_bytes());
        }
        for (letter, text) in &q.choices {
            h.update(format!("{letter}\u{1f}{text}\u{1e}").as_bytes());
        }
    }
    let digest = h.finalize();
    format!("key-{}", digest[..8].iter().map(|b| format!("{b:02x}")).collect::<String>())
}

/// Bundles triggers and a sampled question set into a [`SecretKey`].
pub fn assemble_key(
    triggers: Vec<PromptTrigger>,
    filtered: &QuestionPool,
    q: usize,
    seed: u64,
) -> Result<SecretKey> {
    let knowledge = build_knowledge_key(filtered, q, seed)?;
    let key = SecretKey {
        version: key_version(&triggers, &knowledge, seed),
        seed,
        domains: filtered.domains.iter().map(|d| d.domain.clone()).collect(),
        questions_per_domain: q,
        triggers,
        knowledge,
        provenance: vec![format!("pool: {}", filtered.provenance)],
    };
    key.validate()?;
    Ok(key)
}

pub fn extract_knowledge_fingerprint(
    model: &ModelHandle,
    key: &SecretKey,
    max_parallel: usize,
) -> Result<KnowledgeFingerprint> {
    extract_knowledge_records(model, key, max_parallel).map(|(fp, _)| fp)
}

/// Like [`extract_knowledge_fingerprint`], also returning the raw answers.
pub fn extract_knowledge_records(
    model: &ModelHandle,
    key: &SecretKey,
    max_parallel: usize,
) -> Result<(KnowledgeFingerprint, Vec<AnswerRecord>)> {
    if key.knowledge.is_empty() {
        return Err(Error::Input("key has no knowledge questions".into()));
    }
    let questions: Vec<&KnowledgeQuestion> = key.knowledge.iter().collect();
    let records = collect_answers(model, &questions, max_parallel)?;
    let fp = KnowledgeFingerprint {
        model_id: model.id().to_string(),
        key_version: key.version.clone(),
        domains: key.domains.clone(),
        questions_per_domain: key.questions_per_domain,
        answers: records.iter().map(|r| r.parsed).collect(),
    };
    fp.validate()?;
    Ok((fp, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::StubBackend;
    use crate::types::Choice;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn question(domain: &str, i: usize) -> KnowledgeQuestion {
        let choices = Choice::ALL
            .iter()
            .map(|&c| (c, format!("option {c} of {domain}-{i}")))
            .collect();
        KnowledgeQuestion {
            id: format!("{domain}-{i}"),
            domain: domain.into(),
            stem: format!("Question {i} about {domain}?"),
            choices,
            ground_truth: Choice::A,
        }
    }

    fn pool(domains: &[&str], per: usize) -> QuestionPool {
        QuestionPool {
            provenance: "test".into(),
            domains: domains
                .iter()
                .map(|d| PoolDomain {
                    domain: d.to_string(),
                    questions: (0..per).map(|i| question(d, i)).collect(),
                })
                .collect(),
        }
    }

    /// Answers parseably exactly for the listed question ids.
    fn answering(ids: &[&str], pool: &QuestionPool) -> ModelHandle {
        let entries: BTreeMap<String, String> = pool
            .questions()
            .filter(|q| ids.contains(&q.id.as_str()))
            .map(|q| (answer_prompt(q), "The answer is (A).".to_string()))
            .collect();
        ModelHandle::new(
            format!("m{}", ids.len()),
            Arc::new(StubBackend::table(entries, Some("No idea.".into()))),
        )
    }

    #[test]
    fn strict_majority_filter() {
        let p = pool(&["x"], 3);
        // x-0 parseable by 2 of 3, x-1 by 1 of 3, x-2 by 3 of 3
        let models = vec![
            answering(&["x-0", "x-1", "x-2"], &p),
            answering(&["x-0", "x-2"], &p),
            answering(&["x-2"], &p),
        ];
        let kept = filter_questions(&p, &models, 2).unwrap();
        let ids: Vec<&str> = kept.questions().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, ["x-0", "x-2"]);
    }

    #[test]
    fn tie_is_dropped() {
        let p = pool(&["x"], 2);
        let models = vec![answering(&["x-0", "x-1"], &p), answering(&["x-1"], &p)];
        let kept = filter_questions(&p, &models, 1).unwrap();
        let ids: Vec<&str> = kept.questions().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, ["x-1"]);
    }

    #[test]
    fn exhausted_domain_reported() {
        let p = pool(&["x", "y"], 2);
        let models = vec![answering(&["x-0"], &p)];
        match filter_questions(&p, &models, 1) {
            Err(Error::DomainExhausted { domain }) => assert_eq!(domain, "y"),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn key_sizes() {
        let domains: Vec<String> = (0..14).map(|i| format!("d{i}")).collect();
        let names: Vec<&str> = domains.iter().map(String::as_str).collect();
        let p = pool(&names, 25);
        assert_eq!(build_knowledge_key(&p, 20, 1).unwrap().len(), 280);
        for q in [1, 5, 10, 20, 25] {
            assert_eq!(build_knowledge_key(&p, q, 1).unwrap().len(), 14 * q);
        }
    }

    #[test]
    fn whole_domain_when_q_equals_size() {
        let p = pool(&["x"], 6);
        let k = build_knowledge_key(&p, 6, 3).unwrap();
        let ids: BTreeSet<&str> = k.iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids.len(), 6);
        assert_eq!(build_knowledge_key(&p, 6, 3).unwrap(), k);
    }

    #[test]
    fn insufficient_questions() {
        let p = pool(&["x"], 3);
        assert!(matches!(
            build_knowledge_key(&p, 4, 0),
            Err(Error::InsufficientQuestions {
                available: 3,
                required: 4,
                ..
            })
        ));
    }

    #[test]
    fn sampling_depends_on_seed() {
        let p = pool(&["x"], 40);
        assert_ne!(
            build_knowledge_key(&p, 10, 1).unwrap(),
            build_knowledge_key(&p, 10, 2).unwrap()
        );
    }

    #[test]
    fn fingerprint_from_refusing_model() {
        let p = pool(&["x", "y"], 3);
        let key = assemble_key(vec![], &p, 2, 5).unwrap();
        let refuser = ModelHandle::new("r", Arc::new(StubBackend::constant("I refuse.")));
        let fp = extract_knowledge_fingerprint(&refuser, &key, 2).unwrap();
        assert_eq!(fp.answers, vec![Answer::Unparseable; 4]);
    }

    #[test]
    fn fingerprint_follows_key_order() {
        let p = pool(&["x", "y"], 4);
        let key = assemble_key(vec![], &p, 3, 11).unwrap();
        let entries: BTreeMap<String, String> = key
            .knowledge
            .iter()
            .enumerate()
            .map(|(i, q)| (answer_prompt(q), format!("{}", Choice::ALL[i % 4])))
            .collect();
        let m = ModelHandle::new("t", Arc::new(StubBackend::table(entries, None)));
        let fp = extract_knowledge_fingerprint(&m, &key, 3).unwrap();
        let expected: Vec<Answer> = (0..6).map(|i| Answer::Choice(Choice::ALL[i % 4])).collect();
        assert_eq!(fp.answers, expected);
        assert_eq!(extract_knowledge_fingerprint(&m, &key, 1).unwrap(), fp);
    }
}
