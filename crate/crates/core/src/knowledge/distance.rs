use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{Answer, KnowledgeFingerprint};

fn check_same_key(a: &KnowledgeFingerprint, b: &KnowledgeFingerprint) -> Result<()> {
    if a.key_version != b.key_version {
        return Err(Error::Incompatible(format!(
            "key versions {:?} and {:?} differ",
            a.key_version, b.key_version
        )));
    }
    if a.answers.len() != b.answers.len() {
        return Err(Error::Incompatible(format!(
            "answer vectors have lengths {} and {}",
            a.answers.len(),
            b.answers.len()
        )));
    }
    Ok(())
}

/// Positions whose entries differ. `∅` equals only `∅`.
pub fn hamming_distance(a: &KnowledgeFingerprint, b: &KnowledgeFingerprint) -> Result<usize> {
    check_same_key(a, b)?;
    Ok(a.answers.iter().zip(&b.answers).filter(|(x, y)| x != y).count())
}

/// Levenshtein distance over the answer sequences with unit costs.
pub fn edit_distance(a: &KnowledgeFingerprint, b: &KnowledgeFingerprint) -> Result<usize> {
    check_same_key(a, b)?;
    Ok(levenshtein(&a.answers, &b.answers))
}

pub(crate) fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word-level edit distance between two texts.
pub(crate) fn levenshtein_words(a: &str, b: &str) -> usize {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    levenshtein(&a, &b)
}

/// Multiset Jaccard over position-free symbol counts:
/// `sum_s min(a_s, b_s) / sum_s max(a_s, b_s)`. Two empty vectors score 1.
pub fn jaccard_similarity(a: &KnowledgeFingerprint, b: &KnowledgeFingerprint) -> Result<f64> {
    check_same_key(a, b)?;
    let counts = |answers: &[Answer]| {
        let mut c = [0usize; 5];
        for ans in answers {
            c[ans.symbol_index()] += 1;
        }
        c
    };
    let (ca, cb) = (counts(&a.answers), counts(&b.answers));
    let inter: usize = ca.iter().zip(&cb).map(|(x, y)| x.min(y)).sum();
    let union: usize = ca.iter().zip(&cb).map(|(x, y)| x.max(y)).sum();
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Per-domain agreement, `1 - mismatches / Q`.
pub fn domain_similarity_profile(
    a: &KnowledgeFingerprint,
    b: &KnowledgeFingerprint,
) -> Result<BTreeMap<String, f64>> {
    check_same_key(a, b)?;
    if a.domains != b.domains || a.questions_per_domain != b.questions_per_domain {
        return Err(Error::Incompatible("fingerprints disagree on the domain layout".into()));
    }
    let q = a.questions_per_domain;
    let mut out = BTreeMap::new();
    if q == 0 {
        return Ok(out);
    }
    for (i, domain) in a.domains.iter().enumerate() {
        let range = i * q..(i + 1) * q;
        let mismatches = a.answers[range.clone()]
            .iter()
            .zip(&b.answers[range])
            .filter(|(x, y)| x != y)
            .count();
        out.insert(domain.clone(), 1.0 - mismatches as f64 / q as f64);
    }
    Ok(out)
}
