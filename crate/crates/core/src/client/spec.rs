use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Backend, DecodeConfig, EndpointConfig, ModelHandle, RemoteBackend, StubBackend};
use crate::codec::Artifact;
use crate::error::{Error, Result};
use crate::sim::{SimulatedModelSpec, SimulatedRewriter};
use crate::types::KnowledgeQuestion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StubSpec {
    Echo,
    Constant {
        text: String,
    },
    Table {
        entries: BTreeMap<String, String>,
        #[serde(default)]
        fallback: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendSpec {
    RemoteEndpoint(EndpointConfig),
    Stub(StubSpec),
    Simulated(SimulatedModelSpec),
    SimulatedRewriter(SimulatedRewriter),
}

/// Serializable description of a model handle, as stored in handle files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandleSpec {
    pub id: String,
    pub backend: BackendSpec,
    #[serde(default)]
    pub decode: DecodeConfig,
}

impl Artifact for HandleSpec {
    const KIND: &'static str = "model_handle";

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("id", "must be non-empty"));
        }
        self.decode.validate()
    }
}

impl HandleSpec {
    /// Instantiates the handle. Simulated models answer knowledge prompts
    /// from a profile built over `questions`.
    pub fn build(&self, questions: &[KnowledgeQuestion]) -> Result<ModelHandle> {
        Artifact::validate(self)?;
        let backend: Arc<dyn Backend> = match &self.backend {
            BackendSpec::RemoteEndpoint(cfg) => Arc::new(RemoteBackend::new(&self.id, cfg.clone())?),
            BackendSpec::Stub(StubSpec::Echo) => Arc::new(StubBackend::echo()),
            BackendSpec::Stub(StubSpec::Constant { text }) => Arc::new(StubBackend::constant(text)),
            BackendSpec::Stub(StubSpec::Table { entries, fallback }) => {
                Arc::new(StubBackend::table(entries.clone(), fallback.clone()))
            }
            BackendSpec::Simulated(spec) => Arc::new(spec.instantiate(questions)?),
            BackendSpec::SimulatedRewriter(r) => Arc::new(r.clone()),
        };
        Ok(ModelHandle::new(self.id.clone(), backend).with_decode(self.decode.clone()))
    }
}
