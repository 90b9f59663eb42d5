//! Canonical on-disk form of every artifact.
//!
//! A document is one pretty-printed JSON object:
//!
//! ```json
//! {
//!   "version": "duffin/1",
//!   "kind": "secret_key",
//!   "run_config": { ... },
//!   "payload": { ... }
//! }
//! ```
//!
//! `run_config` is optional and records the parameters of the run that
//! produced the file. Map-valued fields use ordered maps, so identical
//! values always produce identical bytes.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{KnowledgeFingerprint, SecretKey, TriggerFingerprint};

pub const FORMAT_VERSION: &str = "duffin/1";

/// A type that can be stored as a standalone document.
pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn validate(&self) -> Result<()>;
}

impl Artifact for SecretKey {
    const KIND: &'static str = "secret_key";

    fn validate(&self) -> Result<()> {
        SecretKey::validate(self)
    }
}

impl Artifact for TriggerFingerprint {
    const KIND: &'static str = "trigger_fingerprint";

    fn validate(&self) -> Result<()> {
        TriggerFingerprint::validate(self)
    }
}

impl Artifact for KnowledgeFingerprint {
    const KIND: &'static str = "knowledge_fingerprint";

    fn validate(&self) -> Result<()> {
        KnowledgeFingerprint::validate(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope<T> {
    pub version: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<Value>,
    pub payload: T,
}

#[derive(Deserialize)]
struct Header {
    version: String,
    kind: String,
}

pub fn serialize<T: Artifact>(value: &T) -> Result<Vec<u8>> {
    encode(value, None)
}

pub fn serialize_with_run<T: Artifact>(value: &T, run_config: &Value) -> Result<Vec<u8>> {
    encode(value, Some(run_config))
}

fn encode<T: Artifact>(value: &T, run_config: Option<&Value>) -> Result<Vec<u8>> {
    value.validate()?;

    #[derive(Serialize)]
    struct EnvelopeRef<'a, T> {
        version: &'static str,
        kind: &'static str,
        #[serde(skip_serializing_if = "Option::is_none")]
        run_config: Option<&'a Value>,
        payload: &'a T,
    }

    let mut out = serde_json::to_vec_pretty(&EnvelopeRef {
        version: FORMAT_VERSION,
        kind: T::KIND,
        run_config,
        payload: value,
    })
    .map_err(|e| Error::validation(T::KIND, e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn deserialize<T: Artifact>(bytes: &[u8]) -> Result<T> {
    deserialize_envelope(bytes).map(|env| env.payload)
}

fn header(bytes: &[u8]) -> Result<Header> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::Parse {
            offset: 0,
            message: "empty document".into(),
        });
    }
    let header: Header = serde_json::from_slice(bytes).map_err(|e| parse_error(bytes, &e))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: header.version,
            expected: FORMAT_VERSION.into(),
        });
    }
    Ok(header)
}

/// Kind of a document, after checking its version.
pub fn peek_kind(bytes: &[u8]) -> Result<String> {
    header(bytes).map(|h| h.kind)
}

/// Decodes a document, keeping the envelope metadata.
///
/// The header is checked before the payload is decoded, so a document with
/// an unknown version never yields a partially decoded value.
pub fn deserialize_envelope<T: Artifact>(bytes: &[u8]) -> Result<Envelope<T>> {
    let header = header(bytes)?;
    if header.kind != T::KIND {
        return Err(Error::Kind {
            found: header.kind,
            expected: T::KIND.into(),
        });
    }
    let env: Envelope<T> = serde_json::from_slice(bytes).map_err(|e| parse_error(bytes, &e))?;
    env.payload.validate()?;
    Ok(env)
}

/// Converts serde_json's line/column position into a byte offset.
fn parse_error(bytes: &[u8], err: &serde_json::Error) -> Error {
    let (line, column) = (err.line(), err.column());
    let mut offset = 0;
    if line > 0 {
        let mut remaining = line - 1;
        for (i, b) in bytes.iter().enumerate() {
            if remaining == 0 {
                offset = i;
                break;
            }
            if *b == b'\n' {
                remaining -= 1;
                offset = i + 1;
            }
        }
        offset = (offset + column.saturating_sub(1)).min(bytes.len());
    }
    Error::Parse {
        offset,
        message: err.to_string(),
    }
}

pub fn read_file<T: Artifact>(path: impl AsRef<std::path::Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    deserialize(&bytes).map_err(|e| e.context(path.display().to_string()))
}

pub fn read_envelope<T: Artifact>(path: impl AsRef<std::path::Path>) -> Result<Envelope<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    deserialize_envelope(&bytes).map_err(|e| e.context(path.display().to_string()))
}

pub fn write_file<T: Artifact>(
    path: impl AsRef<std::path::Path>,
    value: &T,
    run_config: Option<&Value>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(value, run_config)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::from(e).context(path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Answer, Choice};

    fn kfp(answers: Vec<Answer>, domains: usize, q: usize) -> KnowledgeFingerprint {
        KnowledgeFingerprint {
            model_id: "m".into(),
            key_version: "k1".into(),
            domains: (0..domains).map(|i| format!("d{i}")).collect(),
            questions_per_domain: q,
            answers,
        }
    }

    #[test]
    fn minimal_knowledge_fingerprint_serializes() {
        let fp = kfp(vec![Choice::A.into(), Choice::B.into()], 1, 2);
        let bytes = serialize(&fp).unwrap();
        let back: KnowledgeFingerprint = deserialize(&bytes).unwrap();
        assert_eq!(back, fp);
        assert_eq!(serialize(&back).unwrap(), bytes);
    }

    #[test]
    fn length_mismatch_is_a_validation_error() {
        let fp = kfp(vec![Choice::A.into(); 3], 2, 2);
        match serialize(&fp) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "answers"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn empty_stream_is_a_parse_error() {
        assert!(matches!(
            deserialize::<SecretKey>(b""),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let fp = kfp(vec![Answer::Unparseable], 1, 1);
        let text = String::from_utf8(serialize(&fp).unwrap()).unwrap();
        let text = text.replace(FORMAT_VERSION, "duffin/99");
        match deserialize::<KnowledgeFingerprint>(text.as_bytes()) {
            Err(Error::Version { found, .. }) => assert_eq!(found, "duffin/99"),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let fp = kfp(vec![Answer::Unparseable], 1, 1);
        let bytes = serialize(&fp).unwrap();
        assert!(matches!(
            deserialize::<TriggerFingerprint>(&bytes),
            Err(Error::Kind { .. })
        ));
    }

    #[test]
    fn parse_error_reports_byte_offset() {
        let doc = b"{\n  \"version\": \"duffin/1\",\n  oops\n}";
        match deserialize::<SecretKey>(doc) {
            Err(Error::Parse { offset, .. }) => assert_eq!(&doc[offset..offset + 4], b"oops"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn answers_outside_alphabet_are_rejected() {
        let fp = kfp(vec![Choice::A.into()], 1, 1);
        let text = String::from_utf8(serialize(&fp).unwrap()).unwrap();
        let text = text.replace("\"A\"", "\"E\"");
        assert!(deserialize::<KnowledgeFingerprint>(text.as_bytes()).is_err());
    }

    #[test]
    fn run_config_survives_round_trip() {
        let fp = kfp(vec![Answer::Unparseable, Choice::D.into()], 2, 1);
        let run = serde_json::json!({"command": "extract", "seed": 7});
        let bytes = serialize_with_run(&fp, &run).unwrap();
        let env: Envelope<KnowledgeFingerprint> = deserialize_envelope(&bytes).unwrap();
        assert_eq!(env.run_config.as_ref(), Some(&run));
        assert_eq!(serialize_with_run(&env.payload, &run).unwrap(), bytes);
    }
}
