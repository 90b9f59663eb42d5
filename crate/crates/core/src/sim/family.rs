use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::text::{styled_response, Perturbation, Style};
use super::SeedHash;
use crate::client::{Backend, BackendKind, ChatRequest, DecodeConfig};
use crate::error::{Error, Result};
use crate::knowledge::{levenshtein_words, split_answer_prompt};
use crate::types::{Answer, Choice, KnowledgeQuestion, ModelResponse, TokenCandidate};

/// A family's answer to one question and how easily a reworded stem moves
/// it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeTendency {
    pub answer: Answer,
    pub flip_base: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    id: String,
    stem: String,
    letters: Vec<Choice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFamilyProfile {
    pub family_id: String,
    pub style_seed: u64,
    pub knowledge: BTreeMap<String, KnowledgeTendency>,
    pub domain_skill: BTreeMap<String, f64>,
    /// choices block -> questions sharing it
    #[serde(skip)]
    index: BTreeMap<String, Vec<Entry>>,
    #[serde(skip, default = "placeholder_style")]
    style: Style,
}

fn placeholder_style() -> Style {
    Style::new(0)
}

fn choices_key<'a>(choices: impl IntoIterator<Item = (Choice, &'a str)>) -> String {
    choices
        .into_iter()
        .map(|(c, t)| format!("{c}) {t}\n"))
        .collect()
}

/// Accuracy-like skill of a family on a domain.
fn skill(style_seed: u64, domain: &str) -> f64 {
    0.3 + 0.55 * SeedHash::new(style_seed).str("skill").str(domain).unit()
}

fn other_letter(letters: &[Choice], avoid: Answer, h: SeedHash) -> Answer {
    let options: Vec<Choice> = letters
        .iter()
        .copied()
        .filter(|&c| Answer::Choice(c) != avoid)
        .collect();
    if options.is_empty() {
        return avoid;
    }
    Answer::Choice(options[h.below(options.len())])
}

impl ModelFamilyProfile {
    /// Builds the profile of a family over `questions`. Each question's
    /// tendency depends only on the family seed and that question, so
    /// profiles built over overlapping question sets agree.
    pub fn generate(family_id: impl Into<String>, style_seed: u64, questions: &[KnowledgeQuestion]) -> Self {
        let mut knowledge = BTreeMap::new();
        let mut domain_skill = BTreeMap::new();
        let mut index: BTreeMap<String, Vec<Entry>> = BTreeMap::new();
        for q in questions {
            let s = *domain_skill
                .entry(q.domain.clone())
                .or_insert_with(|| skill(style_seed, &q.domain));
            let h = SeedHash::new(style_seed).str("know").str(&q.id);
            let letters: Vec<Choice> = q.choices.keys().copied().collect();
            let answer = if h.str("correct").unit() < s {
                Answer::Choice(q.ground_truth)
            } else if h.str("refuse").unit() < 0.25 {
                Answer::Unparseable
            } else {
                other_letter(&letters, Answer::Choice(q.ground_truth), h.str("wrong"))
            };
            knowledge.insert(
                q.id.clone(),
                KnowledgeTendency {
                    answer,
                    flip_base: 0.4 * h.str("flip").unit(),
                },
            );
            index
                .entry(choices_key(q.choices.iter().map(|(c, t)| (*c, t.as_str()))))
                .or_default()
                .push(Entry {
                    id: q.id.clone(),
                    stem: q.stem.clone(),
                    letters,
                });
        }
        ModelFamilyProfile {
            family_id: family_id.into(),
            style_seed,
            knowledge,
            domain_skill,
            index,
            style: Style::new(style_seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (id, t) in &self.knowledge {
            if !(0.0..=1.0).contains(&t.flip_base) {
                return Err(Error::validation("flip_base", format!("{id}: {} outside [0, 1]", t.flip_base)));
            }
        }
        Ok(())
    }

    /// Family answer to a knowledge prompt, before variant perturbation.
    /// Returns the answer with the letters on offer and a key for the
    /// perturbation hash.
    fn family_answer(&self, stem: &str, choices: &[(Choice, &str)]) -> (Answer, Vec<Choice>, String) {
        let letters: Vec<Choice> = choices.iter().map(|(c, _)| *c).collect();
        let candidates = self.index.get(&choices_key(choices.iter().copied()));
        let entry = candidates.and_then(|entries| {
            entries.iter().find(|e| e.stem == stem).or_else(|| {
                entries
                    .iter()
                    .min_by_key(|e| levenshtein_words(&e.stem, stem))
            })
        });
        let Some(entry) = entry else {
            // unseen question: a stable guess from the prompt itself
            let h = SeedHash::new(self.style_seed).str("unseen").str(stem);
            let answer = if h.str("refuse").unit() < 0.1 {
                Answer::Unparseable
            } else {
                Answer::Choice(letters[h.below(letters.len())])
            };
            return (answer, letters, stem.to_string());
        };
        let tendency = self.knowledge[&entry.id];
        if entry.stem == stem {
            return (tendency.answer, entry.letters.clone(), entry.id.clone());
        }
        // a reworded stem moves the answer in proportion to how much changed
        let original: Vec<&str> = entry.stem.split_whitespace().collect();
        let changed = levenshtein_words(&entry.stem, stem) as f64 / original.len().max(1) as f64;
        let p_move = tendency.flip_base * (2.0 * changed).min(1.0);
        let h = SeedHash::new(self.style_seed).str("reworded").str(&entry.id);
        let answer = if h.str(stem).unit() < p_move {
            other_letter(&entry.letters, tendency.answer, h.str("to"))
        } else {
            tendency.answer
        };
        (answer, entry.letters.clone(), entry.id.clone())
    }
}

/// Serializable description of a simulated model, as stored in handle
/// files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatedModelSpec {
    pub family_id: String,
    pub style_seed: u64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub variant_seed: u64,
}

impl SimulatedModelSpec {
    pub fn instantiate(&self, questions: &[KnowledgeQuestion]) -> Result<SimulatedModel> {
        let family = Arc::new(ModelFamilyProfile::generate(
            self.family_id.clone(),
            self.style_seed,
            questions,
        ));
        spawn_variant(&family, self.epsilon, self.variant_seed)
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedModel {
    pub family: Arc<ModelFamilyProfile>,
    pub epsilon: f64,
    pub variant_seed: u64,
}

pub fn spawn_variant(family: &Arc<ModelFamilyProfile>, epsilon: f64, seed: u64) -> Result<SimulatedModel> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside [0, 1]")));
    }
    Ok(SimulatedModel {
        family: Arc::clone(family),
        epsilon,
        variant_seed: seed,
    })
}

impl SimulatedModel {
    pub fn base(family: &Arc<ModelFamilyProfile>) -> SimulatedModel {
        SimulatedModel {
            family: Arc::clone(family),
            epsilon: 0.0,
            variant_seed: 0,
        }
    }

    pub fn spec(&self) -> SimulatedModelSpec {
        SimulatedModelSpec {
            family_id: self.family.family_id.clone(),
            style_seed: self.family.style_seed,
            epsilon: self.epsilon,
            variant_seed: self.variant_seed,
        }
    }
}

const ANSWER_FORMS: &[&str] = &["The answer is ({}).", "{}", "Answer: {}", "I think the answer is {}."];
const UNSURE_FORMS: &[&str] = &[
    "I'm not sure about this one.",
    "I cannot determine that from the options given.",
    "None of these look right to me.",
    "Unclear.",
];

fn confident_tokens(text: &str, confidence: f64) -> (Vec<String>, Vec<Vec<TokenCandidate>>) {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let candidates = tokens
        .iter()
        .map(|t| {
            vec![
                TokenCandidate {
                    token: t.clone(),
                    logprob: confidence.ln(),
                },
                TokenCandidate {
                    token: "the".into(),
                    logprob: (1.0 - confidence).ln(),
                },
            ]
        })
        .collect();
    (tokens, candidates)
}

/// Deterministic response of `model` to `prompt`.
///
/// Knowledge prompts get the family answer, moved to a different letter
/// when the variant's hash for that question falls below epsilon. Any
/// other prompt gets family-styled text with per-token candidates.
pub fn simulate_response(model: &SimulatedModel, prompt: &str) -> ModelResponse {
    let family = &model.family;
    let (tokens, candidates) = if let Some((stem, choices)) = split_answer_prompt(prompt) {
        let (mut answer, letters, key) = family.family_answer(stem, &choices);
        let h = SeedHash::new(model.variant_seed).str("flip").str(&key);
        if model.epsilon > 0.0 && h.unit() < model.epsilon {
            answer = other_letter(&letters, answer, h.str("to"));
        }
        let form = SeedHash::new(family.style_seed).str("answer-form").below(ANSWER_FORMS.len());
        let text = match answer {
            Answer::Choice(c) => ANSWER_FORMS[form].replace("{}", &c.to_string()),
            Answer::Unparseable => UNSURE_FORMS[form].to_string(),
        };
        confident_tokens(&text, 0.9)
    } else {
        let styled = styled_response(
            family.style_seed,
            &family.style,
            Perturbation {
                epsilon: model.epsilon,
                seed: model.variant_seed,
            },
            prompt,
        );
        (styled.tokens, styled.candidates)
    };
    ModelResponse {
        text: tokens.join(" "),
        token_logprobs: Some(candidates),
        truncated: false,
        warnings: Vec::new(),
    }
}

impl Backend for SimulatedModel {
    fn kind(&self) -> BackendKind {
        BackendKind::Simulated
    }

    fn complete(&self, request: &ChatRequest, decode: &DecodeConfig, _timeout: Duration) -> Result<ModelResponse> {
        if request.prompt.is_empty() {
            return Err(Error::Input("empty prompt".into()));
        }
        let mut response = simulate_response(self, &request.prompt);
        let max = decode.max_tokens as usize;
        let mut tokens: Vec<&str> = response.text.split(' ').collect();
        if tokens.len() > max {
            tokens.truncate(max);
            response.text = tokens.join(" ");
            response.truncated = true;
            if let Some(c) = &mut response.token_logprobs {
                c.truncate(max);
            }
        }
        response.token_logprobs = match decode.top_logprobs {
            Some(k) if k > 0 => response.token_logprobs.map(|all| {
                all.into_iter()
                    .map(|mut c| {
                        c.truncate(k as usize);
                        c
                    })
                    .collect()
            }),
            _ => None,
        };
        Ok(response)
    }
}

/// Seeded generator of independent families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyWorld {
    pub seed: u64,
}

impl FamilyWorld {
    pub fn new(seed: u64) -> Self {
        FamilyWorld { seed }
    }

    pub fn style_seed(&self, family: usize) -> u64 {
        SeedHash::new(self.seed).str("family").num(family as u64).value()
    }

    pub fn variant_seed(&self, family: usize, variant: usize) -> u64 {
        SeedHash::new(self.seed)
            .str("variant")
            .num(family as u64)
            .num(variant as u64)
            .value()
    }

    pub fn family(&self, family: usize, questions: &[KnowledgeQuestion]) -> Arc<ModelFamilyProfile> {
        Arc::new(ModelFamilyProfile::generate(
            format!("fam{family}"),
            self.style_seed(family),
            questions,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{answer_prompt, parse_choice};
    use crate::sim::sample_pool;

    fn questions() -> Vec<KnowledgeQuestion> {
        sample_pool(10, 1).questions().cloned().collect()
    }

    fn answers(model: &SimulatedModel, qs: &[KnowledgeQuestion]) -> Vec<Answer> {
        qs.iter()
            .map(|q| parse_choice(&simulate_response(model, &answer_prompt(q)).text))
            .collect()
    }

    #[test]
    fn zero_epsilon_matches_base() {
        let qs = questions();
        let fam = FamilyWorld::new(1).family(0, &qs);
        let base = SimulatedModel::base(&fam);
        let v = spawn_variant(&fam, 0.0, 77).unwrap();
        assert_eq!(answers(&base, &qs), answers(&v, &qs));
        assert_eq!(
            simulate_response(&base, "Tell me a story.").text,
            simulate_response(&v, "Tell me a story.").text
        );
    }

    #[test]
    fn full_epsilon_changes_every_answer() {
        let qs = questions();
        let fam = FamilyWorld::new(1).family(0, &qs);
        let base = answers(&SimulatedModel::base(&fam), &qs);
        let v = answers(&spawn_variant(&fam, 1.0, 5).unwrap(), &qs);
        assert!(base.iter().zip(&v).all(|(a, b)| a != b));
    }

    #[test]
    fn answers_follow_the_profile() {
        let qs = questions();
        let fam = FamilyWorld::new(2).family(1, &qs);
        let got = answers(&SimulatedModel::base(&fam), &qs);
        for (q, a) in qs.iter().zip(got) {
            assert_eq!(fam.knowledge[&q.id].answer, a, "{}", q.id);
        }
    }

    #[test]
    fn seeds_matter() {
        let qs = questions();
        let fam = FamilyWorld::new(3).family(0, &qs);
        let a = spawn_variant(&fam, 0.5, 1).unwrap();
        let b = spawn_variant(&fam, 0.5, 2).unwrap();
        assert_ne!(answers(&a, &qs), answers(&b, &qs));
        let p = "Describe your favourite season.";
        assert_ne!(simulate_response(&a, p).text, simulate_response(&b, p).text);
        assert_eq!(simulate_response(&a, p), simulate_response(&a, p));
    }

    #[test]
    fn epsilon_out_of_range() {
        let fam = FamilyWorld::new(0).family(0, &[]);
        assert!(matches!(spawn_variant(&fam, 1.5, 0), Err(Error::Domain(_))));
        assert!(matches!(spawn_variant(&fam, -0.1, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn families_differ_more_than_clones() {
        let qs = questions();
        let world = FamilyWorld::new(4);
        let a = answers(&SimulatedModel::base(&world.family(0, &qs)), &qs);
        let b = answers(&SimulatedModel::base(&world.family(1, &qs)), &qs);
        assert!(a.iter().zip(&b).filter(|(x, y)| x != y).count() > 0);
    }

    #[test]
    fn backend_respects_decode() {
        let fam = FamilyWorld::new(0).family(0, &[]);
        let m = SimulatedModel::base(&fam);
        let decode = DecodeConfig {
            temperature: 0.0,
            max_tokens: 3,
            top_logprobs: Some(2),
        };
        let r = m
            .complete(&ChatRequest::user("Why?"), &decode, Duration::from_secs(1))
            .unwrap();
        assert!(r.truncated);
        let lp = r.token_logprobs.unwrap();
        assert_eq!(lp.len(), 3);
        assert!(lp.iter().all(|c| c.len() == 2));
        let text_only = DecodeConfig {
            top_logprobs: None,
            ..decode
        };
        let r = m
            .complete(&ChatRequest::user("Why?"), &text_only, Duration::from_secs(1))
            .unwrap();
        assert!(r.token_logprobs.is_none());
    }
}
