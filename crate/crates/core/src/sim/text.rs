//! Family-styled free text for trigger prompts.
//!
//! A response is the prompt's content skeleton (shared by every model)
//! dressed in the family's style: opener, connectors, pet words, closer and
//! a refusal habit. Each token is then replaced by a random content word
//! with probability epsilon.

use super::SeedHash;
use crate::types::TokenCandidate;

const CONTENT: &[&str] = &[
    "time", "people", "water", "system", "energy", "number", "answer", "light", "market",
    "change", "value", "process", "question", "distance", "pressure", "result", "method",
    "balance", "weather", "history", "signal", "pattern", "memory", "source", "surface",
    "reason", "effect", "cause", "rate", "speed", "money", "price", "safety", "rule", "law",
    "risk", "tool", "lock", "door", "plant", "animal", "city", "road", "train", "hour", "day",
    "step", "total", "part", "whole", "sum", "fraction", "point", "line", "shape", "area",
    "volume", "weight", "length", "heat", "cold", "rain", "cloud", "river", "stone", "metal",
    "glass", "paper", "fire", "smoke", "sound", "voice", "story", "book", "letter", "word",
    "food", "bread", "salt", "sugar", "health", "doctor", "school", "teacher", "student",
    "child", "family", "friend", "worker", "machine", "engine", "power", "current", "field",
    "force", "motion", "orbit", "planet", "season", "summer", "winter", "morning", "evening",
    "account", "record", "detail", "example", "context", "purpose", "limit", "range", "level",
];

const OPENERS: &[&str] = &[
    "Sure!", "Certainly.", "Well,", "Okay, so", "Great question.", "Let me think.", "Hmm,",
    "Of course.", "Alright,", "Good point.", "Indeed,", "So,", "Absolutely.", "Right,",
    "Here goes:", "To begin,",
];

const PET_WORDS: &[&str] = &[
    "basically", "essentially", "notably", "honestly", "arguably", "clearly", "frankly",
    "generally", "typically", "importantly", "interestingly", "simply", "really", "actually",
    "certainly", "surely", "naturally", "overall", "roughly", "precisely", "specifically",
    "admittedly", "ultimately", "practically", "literally", "largely", "mostly", "quite",
    "rather", "indeed",
];

const CONNECTORS: &[&str] = &[
    "and", "so", "then", "thus", "hence", "also", "plus", "while", "because", "therefore",
    "meanwhile", "moreover",
];

const CLOSERS: &[&str] = &[
    "Hope this helps.", "Cheers.", "That is all.", "Done.", "Good luck!", "Enjoy.",
    "Thanks!", "Best.",
];

const REFUSALS: &[&str] = &[
    "I cannot help with that request.", "Sorry, I am unable to assist with this.",
    "I must decline this one.", "That is not something I can do.",
    "I will not provide that.", "Apologies, but I cannot comply.",
];

/// Style parameters of one family, derived from its style seed.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Style {
    opener: usize,
    closer: usize,
    refusal: usize,
    pets: [usize; 3],
    connectors: [usize; 2],
    pet_rate: f64,
    verbosity: f64,
    refusal_rate: f64,
    confidence: f64,
}

impl Style {
    pub fn new(style_seed: u64) -> Style {
        let h = SeedHash::new(style_seed).str("style");
        let pick = |tag: &str, n: usize| h.str(tag).below(n);
        let mut pets = [0; 3];
        for i in 0..pets.len() {
            // distinct pet words within a family
            let mut k = h.str("pet").num(i as u64).below(PET_WORDS.len());
            while pets[..i].contains(&k) {
                k = (k + 1) % PET_WORDS.len();
            }
            pets[i] = k;
        }
        let c0 = pick("conn0", CONNECTORS.len());
        let c1 = (c0 + 1 + pick("conn1", CONNECTORS.len() - 1)) % CONNECTORS.len();
        Style {
            opener: pick("opener", OPENERS.len()),
            closer: pick("closer", CLOSERS.len()),
            refusal: pick("refusal", REFUSALS.len()),
            pets,
            connectors: [c0, c1],
            pet_rate: 0.04 + 0.06 * h.str("pet-rate").unit(),
            verbosity: 0.95 + 0.1 * h.str("verbosity").unit(),
            refusal_rate: 0.05 + 0.25 * h.str("refusal-rate").unit(),
            confidence: 0.45 + 0.5 * h.str("confidence").unit(),
        }
    }
}

/// Perturbation applied on top of the family style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Perturbation {
    pub epsilon: f64,
    pub seed: u64,
}

impl Perturbation {
    fn hits(&self, prompt_hash: u64, position: usize) -> bool {
        self.epsilon > 0.0
            && SeedHash::new(self.seed)
                .str("token")
                .num(prompt_hash)
                .num(position as u64)
                .unit()
                < self.epsilon
    }
}

pub(crate) struct StyledText {
    pub tokens: Vec<String>,
    pub candidates: Vec<Vec<TokenCandidate>>,
}

#[cfg(test)]
impl StyledText {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split_whitespace().map(str::to_string)
}

/// Generates the styled response of a family to `prompt`.
pub(crate) fn styled_response(
    style_seed: u64,
    style: &Style,
    perturbation: Perturbation,
    prompt: &str,
) -> StyledText {
    let ph = SeedHash::new(0).str(prompt).value();
    let fam = SeedHash::new(style_seed).num(ph);

    let mut tokens: Vec<String> = Vec::new();
    let refuse = fam.str("refuse").unit() < style.refusal_rate;
    tokens.extend(words(OPENERS[style.opener]));
    if refuse {
        tokens.extend(words(REFUSALS[style.refusal]));
    }
    let base_len = 18 + (ph % 10) as usize;
    let len = ((base_len as f64) * style.verbosity * if refuse { 0.4 } else { 1.0 }).round() as usize;
    let skeleton = SeedHash::new(0x5ce1e70).num(ph);
    for j in 0..len.max(3) {
        tokens.push(CONTENT[skeleton.num(j as u64).below(CONTENT.len())].to_string());
        let slot = fam.str("slot").num(j as u64).unit();
        if slot < style.pet_rate {
            let which = fam.str("which").num(j as u64).below(style.pets.len());
            tokens.push(PET_WORDS[style.pets[which]].to_string());
        } else if slot < style.pet_rate + 0.05 && j + 1 < len {
            let which = fam.str("conn").num(j as u64).below(2);
            tokens.push(CONNECTORS[style.connectors[which]].to_string());
        }
    }
    tokens.extend(words(CLOSERS[style.closer]));

    let mut candidates = Vec::with_capacity(tokens.len());
    for (j, token) in tokens.iter_mut().enumerate() {
        let jitter = fam.str("conf").num(j as u64).unit() - 0.5;
        let mut p_top = style.confidence + 0.2 * jitter;
        if perturbation.hits(ph, j) {
            let pert = SeedHash::new(perturbation.seed).str("swap").num(ph).num(j as u64);
            *token = CONTENT[pert.below(CONTENT.len())].to_string();
            p_top = 0.25 + 0.5 * pert.str("conf").unit();
        }
        let p_top = p_top.clamp(0.05, 0.99);
        let mut cands = vec![TokenCandidate {
            token: token.clone(),
            logprob: p_top.ln(),
        }];
        for (k, w) in [0.5, 0.25, 0.15, 0.1].iter().enumerate() {
            let alt = CONTENT[fam.str("alt").num(j as u64).num(k as u64).below(CONTENT.len())];
            cands.push(TokenCandidate {
                token: alt.to_string(),
                logprob: ((1.0 - p_top) * w).ln(),
            });
        }
        candidates.push(cands);
    }
    StyledText { tokens, candidates }
}
