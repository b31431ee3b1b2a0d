//! Model registry: maps model ids to an adapter and a checkpoint location.
//!
//! ```toml
//! [models."clip-vit-l-14"]
//! adapter = "clip"
//! checkpoint = "/models/clip-vit-l-14"
//! ```
//!
//! Ids of the form `mock-scorer:<seed>` and `mock-lm:<seed>` resolve without
//! an entry. Registry entries may alias them with adapter `mock-scorer` or
//! `mock-lm` and the seed as checkpoint. The `clip` and `gpt2` adapters are
//! recognized but have no implementation in this build.

use std::collections::BTreeMap;
use std::path::Path;

use densecap_core::backend::mock::{MockLm, MockScorer, MockWorld};
use densecap_core::backend::{LanguageModel, TextImageScorer};
use serde::Deserialize;

use crate::data_io::read_text;
use crate::error::{Error, Result};

pub type Scorer = Box<dyn TextImageScorer + Send + Sync>;
pub type Lm = Box<dyn LanguageModel + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub adapter: String,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    #[serde(default)]
    pub models: BTreeMap<String, ModelEntry>,
}

const REAL_ADAPTERS: [&str; 2] = ["clip", "gpt2"];

fn mock_seed(id: &str, prefix: &str) -> Option<u64> {
    id.strip_prefix(prefix)?.strip_prefix(':')?.parse().ok()
}

/// The mock language model built from the same world as a mock scorer id.
pub fn paired_language_model(scorer_id: &str) -> Option<String> {
    mock_seed(scorer_id, "mock-scorer").map(|s| format!("mock-lm:{s}"))
}

impl Registry {
    /// The registry used when no file is given: the real models named with
    /// their adapters and no checkpoints.
    pub fn builtin() -> Self {
        let entry = |adapter: &str| ModelEntry {
            adapter: adapter.into(),
            checkpoint: None,
        };
        Registry {
            models: BTreeMap::from([
                ("clip-vit-l-14".to_string(), entry("clip")),
                ("gpt2-medium".to_string(), entry("gpt2")),
            ]),
        }
    }

    pub fn parse(origin: &Path, text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", origin.display(), e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(path, &read_text(path)?)
    }

    /// Resolves `id` to a mock seed for `kind`, or explains why it cannot.
    fn mock_for(&self, id: &str, kind: &str) -> Result<u64> {
        if let Some(seed) = mock_seed(id, kind) {
            return Ok(seed);
        }
        let unavailable = |reason: String| Error::Unavailable { id: id.into(), reason };
        let entry = self
            .models
            .get(id)
            .ok_or_else(|| unavailable("not in the model registry".into()))?;
        if entry.adapter == kind {
            return entry
                .checkpoint
                .as_deref()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| unavailable(format!("{kind} entries need a numeric seed as checkpoint")));
        }
        if REAL_ADAPTERS.contains(&entry.adapter.as_str()) {
            return Err(unavailable(format!(
                "the {} adapter is not included in this build",
                entry.adapter
            )));
        }
        Err(unavailable(format!("adapter {:?} cannot serve as {kind}", entry.adapter)))
    }

    pub fn scorer(&self, id: &str) -> Result<Scorer> {
        let seed = self.mock_for(id, "mock-scorer")?;
        Ok(Box::new(MockWorld::new(seed).scorer()) as Box<MockScorer>)
    }

    pub fn language_model(&self, id: &str) -> Result<Lm> {
        let seed = self.mock_for(id, "mock-lm")?;
        Ok(Box::new(MockWorld::new(seed).language_model()) as Box<MockLm>)
    }
}
