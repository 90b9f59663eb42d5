//! Domain types shared across the crate.
//!
//! Every type here is plain data: immutable once validated, `Send + Sync`,
//! and serializable through [`crate::codec`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance on the unit norm of fingerprint rows.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// The sentinel written for answers that could not be parsed.
pub const UNPARSEABLE: &str = "∅";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerCategory {
    Safety,
    MathReasoning,
    Commonsense,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTrigger {
    pub id: String,
    pub text: String,
    pub category: TriggerCategory,
}

/// A multiple-choice letter. The alphabet is fixed to A-D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    C,
    D,
}

impl Choice {
    pub const ALL: [Choice; 4] = [Choice::A, Choice::B, Choice::C, Choice::D];

    pub fn letter(self) -> char {
        match self {
            Choice::A => 'A',
            Choice::B => 'B',
            Choice::C => 'C',
            Choice::D => 'D',
        }
    }

    pub fn from_letter(c: char) -> Option<Choice> {
        match c.to_ascii_uppercase() {
            'A' => Some(Choice::A),
            'B' => Some(Choice::B),
            'C' => Some(Choice::C),
            'D' => Some(Choice::D),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// One entry of a knowledge fingerprint: a choice letter, or the
/// unparseable sentinel `∅`, which is a symbol of its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Answer {
    Choice(Choice),
    Unparseable,
}

impl Answer {
    /// All five symbols, in a fixed order.
    pub const ALPHABET: [Answer; 5] = [
        Answer::Choice(Choice::A),
        Answer::Choice(Choice::B),
        Answer::Choice(Choice::C),
        Answer::Choice(Choice::D),
        Answer::Unparseable,
    ];

    pub fn choice(self) -> Option<Choice> {
        match self {
            Answer::Choice(c) => Some(c),
            Answer::Unparseable => None,
        }
    }

    pub fn is_parseable(self) -> bool {
        matches!(self, Answer::Choice(_))
    }

    pub fn symbol_index(self) -> usize {
        match self {
            Answer::Choice(c) => c.index(),
            Answer::Unparseable => 4,
        }
    }
}

impl From<Choice> for Answer {
    fn from(c: Choice) -> Self {
        Answer::Choice(c)
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Choice(c) => write!(f, "{c}"),
            Answer::Unparseable => f.write_str(UNPARSEABLE),
        }
    }
}

impl FromStr for Answer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(Answer::Choice(Choice::A)),
            "B" => Ok(Answer::Choice(Choice::B)),
            "C" => Ok(Answer::Choice(Choice::C)),
            "D" => Ok(Answer::Choice(Choice::D)),
            UNPARSEABLE => Ok(Answer::Unparseable),
            other => Err(Error::validation(
                "answers",
                format!("{other:?} is not one of A, B, C, D, {UNPARSEABLE}"),
            )),
        }
    }
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeQuestion {
    pub id: String,
    pub domain: String,
    pub stem: String,
    pub choices: BTreeMap<Choice, String>,
    pub ground_truth: Choice,
}

impl KnowledgeQuestion {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("knowledge.id", "must be non-empty"));
        }
        if self.stem.trim().is_empty() {
            return Err(Error::validation(
                "knowledge.stem",
                format!("question {} has an empty stem", self.id),
            ));
        }
        if self.choices.len() < 2 {
            return Err(Error::validation(
                "knowledge.choices",
                format!("question {} needs at least two choices", self.id),
            ));
        }
        if !self.choices.contains_key(&self.ground_truth) {
            return Err(Error::validation(
                "knowledge.ground_truth",
                format!(
                    "question {}: {} is not among its choices",
                    self.id, self.ground_truth
                ),
            ));
        }
        Ok(())
    }
}

/// The private key: triggers plus the domain-stratified question list.
///
/// `knowledge` is stored domain-major in the order given by `domains`, and
/// within a domain in sampled order; this order is the position order of
/// every knowledge fingerprint extracted with the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecretKey {
    pub version: String,
    pub seed: u64,
    pub domains: Vec<String>,
    pub questions_per_domain: usize,
    pub triggers: Vec<PromptTrigger>,
    pub knowledge: Vec<KnowledgeQuestion>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<String>,
}

impl SecretKey {
    pub fn knowledge_len(&self) -> usize {
        self.domains.len() * self.questions_per_domain
    }

    /// Questions of one domain, in key order.
    pub fn domain_questions<'a>(
        &'a self,
        domain: &'a str,
    ) -> impl Iterator<Item = &'a KnowledgeQuestion> + 'a {
        self.knowledge.iter().filter(move |q| q.domain == domain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version.is_empty() {
            return Err(Error::validation("version", "must be non-empty"));
        }
        let mut ids = BTreeSet::new();
        for t in &self.triggers {
            if t.id.is_empty() {
                return Err(Error::validation("triggers.id", "must be non-empty"));
            }
            if t.text.is_empty() {
                return Err(Error::validation(
                    "triggers.text",
                    format!("trigger {} has empty text", t.id),
                ));
            }
            if !ids.insert(t.id.as_str()) {
                return Err(Error::validation(
                    "triggers.id",
                    format!("duplicate id {}", t.id),
                ));
            }
        }
        let distinct: BTreeSet<&str> = self.domains.iter().map(String::as_str).collect();
        if distinct.len() != self.domains.len() {
            return Err(Error::validation("domains", "domain labels must be distinct"));
        }
        if self.knowledge.len() != self.knowledge_len() {
            return Err(Error::validation(
                "knowledge",
                format!(
                    "expected {} questions ({} domains x {}), found {}",
                    self.knowledge_len(),
                    self.domains.len(),
                    self.questions_per_domain,
                    self.knowledge.len()
                ),
            ));
        }
        for (i, q) in self.knowledge.iter().enumerate() {
            q.validate()?;
            if !ids.insert(q.id.as_str()) {
                return Err(Error::validation(
                    "knowledge.id",
                    format!("duplicate id {}", q.id),
                ));
            }
            let expected = &self.domains[i / self.questions_per_domain.max(1)];
            if &q.domain != expected {
                return Err(Error::validation(
                    "knowledge.domain",
                    format!(
                        "position {i} holds a {:?} question where {expected:?} is expected",
                        q.domain
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenCandidate {
    pub token: String,
    pub logprob: f64,
}

/// One model output. `token_logprobs`, when present, holds the returned
/// candidate list for every generated token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<Vec<TokenCandidate>>>,
    #[serde(default)]
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ModelResponse {
    pub fn text_only(text: impl Into<String>) -> Self {
        ModelResponse {
            text: text.into(),
            token_logprobs: None,
            truncated: false,
            warnings: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(tokens) = &self.token_logprobs {
            for (i, cands) in tokens.iter().enumerate() {
                if cands.is_empty() {
                    return Err(Error::validation(
                        "token_logprobs",
                        format!("token {i} has no candidates"),
                    ));
                }
                if let Some(c) = cands.iter().find(|c| !(c.logprob <= 0.0)) {
                    return Err(Error::validation(
                        "token_logprobs",
                        format!("token {i} candidate {:?} has log-probability {}", c.token, c.logprob),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-trigger unit embeddings for one model, in key trigger order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerFingerprint {
    pub model_id: String,
    pub key_version: String,
    pub embedder_id: String,
    pub include_entropy: bool,
    pub vectors: Vec<Vec<f64>>,
}

impl TriggerFingerprint {
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vectors.is_empty() {
            return Err(Error::validation("vectors", "fingerprint has no rows"));
        }
        let d = self.dim();
        for (i, row) in self.vectors.iter().enumerate() {
            if row.len() != d {
                return Err(Error::validation(
                    "vectors",
                    format!("row {i} has {} columns, expected {d}", row.len()),
                ));
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
                return Err(Error::validation(
                    "vectors",
                    format!("row {i} has norm {norm}, expected 1"),
                ));
            }
        }
        Ok(())
    }
}

/// Answer vector over the key's knowledge questions, in key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeFingerprint {
    pub model_id: String,
    pub key_version: String,
    pub domains: Vec<String>,
    pub questions_per_domain: usize,
    pub answers: Vec<Answer>,
}

impl KnowledgeFingerprint {
    pub fn expected_len(&self) -> usize {
        self.domains.len() * self.questions_per_domain
    }

    pub fn validate(&self) -> Result<()> {
        if self.answers.len() != self.expected_len() {
            return Err(Error::validation(
                "answers",
                format!(
                    "length {} does not match {} domains x {} questions = {}",
                    self.answers.len(),
                    self.domains.len(),
                    self.questions_per_domain,
                    self.expected_len()
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Trigger,
    Knowledge,
    Merged,
}

impl Level {
    pub fn uses_trigger(self) -> bool {
        matches!(self, Level::Trigger | Level::Merged)
    }

    pub fn uses_knowledge(self) -> bool {
        matches!(self, Level::Knowledge | Level::Merged)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Trigger => "trigger",
            Level::Knowledge => "knowledge",
            Level::Merged => "merged",
        })
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trigger" => Ok(Level::Trigger),
            "knowledge" => Ok(Level::Knowledge),
            "merged" => Ok(Level::Merged),
            other => Err(Error::Input(format!(
                "unknown level {other:?} (expected trigger, knowledge or merged)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictProvenance {
    pub protected_model: String,
    pub suspect_model: String,
    pub key_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder_id: Option<String>,
}

/// Outcome of comparing one suspect against one protected model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationVerdict {
    pub level: Level,
    #[serde(rename = "d_T", default, skip_serializing_if = "Option::is_none")]
    pub d_t: Option<f64>,
    #[serde(rename = "d_K_raw", default, skip_serializing_if = "Option::is_none")]
    pub d_k_raw: Option<usize>,
    #[serde(rename = "d_K_norm", default, skip_serializing_if = "Option::is_none")]
    pub d_k_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_len: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub d_merged: f64,
    pub threshold: f64,
    pub is_pirated: bool,
    pub provenance: VerdictProvenance,
}

impl VerificationVerdict {
    pub fn validate(&self) -> Result<()> {
        if self.level.uses_trigger() && self.d_t.is_none() {
            return Err(Error::validation("d_T", format!("required at {} level", self.level)));
        }
        if self.level.uses_knowledge() {
            let (Some(raw), Some(norm), Some(len)) = (self.d_k_raw, self.d_k_norm, self.knowledge_len)
            else {
                return Err(Error::validation(
                    "d_K_norm",
                    format!("d_K_raw, d_K_norm and knowledge_len are required at {} level", self.level),
                ));
            };
            if len == 0 || raw > len || (norm - raw as f64 / len as f64).abs() > 1e-12 {
                return Err(Error::validation(
                    "d_K_norm",
                    format!("{norm} is not {raw}/{len}"),
                ));
            }
        }
        if self.is_pirated != (self.d_merged <= self.threshold) {
            return Err(Error::validation(
                "is_pirated",
                format!(
                    "{} contradicts d_merged {} against threshold {}",
                    self.is_pirated, self.d_merged, self.threshold
                ),
            ));
        }
        Ok(())
    }
}
