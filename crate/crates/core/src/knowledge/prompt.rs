use std::sync::OnceLock;

use regex::Regex;

use crate::types::{Answer, Choice, KnowledgeQuestion};

/// Final line of every knowledge prompt.
pub const ANSWER_INSTRUCTION: &str = "Answer with the single letter of the correct choice.";

/// Stem, one `L) text` line per choice in letter order, then the
/// instruction line.
pub fn answer_prompt(question: &KnowledgeQuestion) -> String {
    let mut out = String::with_capacity(question.stem.len() + 64);
    out.push_str(&question.stem);
    out.push('\n');
    for (letter, text) in &question.choices {
        out.push_str(&format!("{letter}) {text}\n"));
    }
    out.push_str(ANSWER_INSTRUCTION);
    out
}

/// Splits a knowledge prompt back into stem and choice lines. Returns
/// `None` when the prompt does not end with the instruction line.
pub fn split_answer_prompt(prompt: &str) -> Option<(&str, Vec<(Choice, &str)>)> {
    let body = prompt.strip_suffix(ANSWER_INSTRUCTION)?.strip_suffix('\n')?;
    let mut lines: Vec<&str> = body.split('\n').collect();
    let mut choices = Vec::new();
    while let Some(line) = lines.last() {
        let mut chars = line.chars();
        match (chars.next().and_then(Choice::from_letter), chars.next(), chars.next()) {
            (Some(c), Some(')'), Some(' ')) if line.as_bytes()[0].is_ascii_uppercase() => {
                choices.push((c, &line[3..]));
                lines.pop();
            }
            _ => break,
        }
    }
    if lines.is_empty() || choices.is_empty() {
        return None;
    }
    choices.reverse();
    let stem_len = lines.iter().map(|l| l.len() + 1).sum::<usize>() - 1;
    Some((&body[..stem_len], choices))
}

fn answer_is_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)answer\s+is\s*:?\s*\(?\s*([a-z])\b").expect("valid regex")
    })
}

fn standalone_letter() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([A-D])\b").expect("valid regex"))
}

/// Extracts the chosen letter from a free-form answer.
///
/// The last `answer is (L)` / `answer is L` (any case) with `L` in A-D
/// wins; otherwise the last standalone capital A-D; otherwise `∅`.
pub fn parse_choice(text: &str) -> Answer {
    let from_pattern = answer_is_pattern()
        .captures_iter(text)
        .filter_map(|c| c[1].chars().next().and_then(Choice::from_letter))
        .last();
    if let Some(c) = from_pattern {
        return Answer::Choice(c);
    }
    standalone_letter()
        .captures_iter(text)
        .filter_map(|c| c[1].chars().next().and_then(Choice::from_letter))
        .last()
        .map_or(Answer::Unparseable, Answer::Choice)
}
