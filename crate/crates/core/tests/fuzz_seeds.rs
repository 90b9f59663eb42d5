//! Replays the checked-in fuzz corpus through the same entry points as the
//! fuzz targets.

use std::path::PathBuf;

use duffin_core::client::{parse_chat_response, HandleSpec};
use duffin_core::codec::{self, Artifact};
use duffin_core::knowledge::{parse_choice, split_answer_prompt, QuestionPool};
use duffin_core::trigger::{Extractor, TrainConfig, TrainingCorpus};
use duffin_core::verify::LabelFile;
use duffin_core::{KnowledgeFingerprint, SecretKey, TriggerFingerprint};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Every artifact seed must decode as the kind it declares.
fn decodes<T: Artifact>(target: &str) {
    for (name, bytes) in seeds(target) {
        if codec::peek_kind(&bytes).ok().as_deref() == Some(T::KIND) {
            codec::deserialize::<T>(&bytes).unwrap_or_else(|e| panic!("{target}/{name}: {e}"));
        }
    }
}

#[test]
fn artifact_seeds_decode() {
    decodes::<SecretKey>("decode_secret_key");
    decodes::<TriggerFingerprint>("decode_fingerprint");
    decodes::<KnowledgeFingerprint>("decode_fingerprint");
    decodes::<QuestionPool>("decode_question_pool");
    decodes::<TrainingCorpus>("decode_training_corpus");
    decodes::<Extractor>("decode_extractor");
    decodes::<TrainConfig>("decode_extractor");
    decodes::<HandleSpec>("decode_handle");
    decodes::<LabelFile>("decode_labels");
    for (_, bytes) in seeds("decode_training_corpus") {
        let corpus: TrainingCorpus = codec::deserialize(&bytes).unwrap();
        assert!(!corpus.triples().unwrap().is_empty());
    }
}

#[test]
fn peek_kind_seeds() {
    for (name, bytes) in seeds("peek_kind") {
        let kind = codec::peek_kind(&bytes);
        match name.as_str() {
            "knowledge.json" => assert_eq!(kind.unwrap(), "knowledge_fingerprint"),
            _ => assert!(kind.is_err(), "{name}"),
        }
    }
}

#[test]
fn text_parser_seeds() {
    for (_, bytes) in seeds("parse_choice") {
        let _ = parse_choice(std::str::from_utf8(&bytes).unwrap());
    }
    let parsed: Vec<bool> = seeds("split_answer_prompt")
        .iter()
        .map(|(_, b)| split_answer_prompt(std::str::from_utf8(b).unwrap()).is_some())
        .collect();
    // full, multiline, no_choices
    assert_eq!(parsed, vec![true, true, false]);
}

#[test]
fn chat_response_seeds() {
    for (name, bytes) in seeds("parse_chat_response") {
        let r = parse_chat_response(&bytes);
        match name.as_str() {
            "logprobs.json" => assert_eq!(r.unwrap().token_logprobs.unwrap()[0].len(), 2),
            "plain.json" => assert!(r.unwrap().truncated),
            _ => assert!(r.is_err(), "{name}"),
        }
    }
}
