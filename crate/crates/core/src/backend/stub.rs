use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Capabilities, CompletionBackend, CompletionRequest, CompletionResponse};
use crate::error::{Error, Result};
use crate::rng::prompt_hash;
use crate::tokenizer::{Tokenizer, WhitespaceTokenizer};

/// What the stub says for prompts not listed in `responses`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StubFallback {
    /// First line of `hint`.
    Echo { hint: String },
    /// `choices[h mod len]` where `h` is taken from the prompt hash.
    HashPick { choices: Vec<String> },
    Fixed { text: String },
}

impl Default for StubFallback {
    fn default() -> Self {
        StubFallback::Fixed { text: String::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubConfig {
    /// Exact answers keyed by hex SHA-256 of the prompt.
    #[serde(default)]
    pub responses: BTreeMap<String, String>,
    #[serde(default)]
    pub fallback: StubFallback,
}

/// Deterministic in-process backend.
#[derive(Debug, Clone)]
pub struct StubBackend {
    id: String,
    config: StubConfig,
    capabilities: Capabilities,
}

impl StubBackend {
    pub fn new(id: impl Into<String>, config: StubConfig, capabilities: Capabilities) -> Self {
        StubBackend {
            id: id.into(),
            config,
            capabilities,
        }
    }

    fn answer(&self, prompt: &str) -> Result<String> {
        let hash = prompt_hash(prompt);
        if let Some(text) = self.config.responses.get(&hash) {
            return Ok(text.clone());
        }
        Ok(match &self.config.fallback {
            StubFallback::Echo { hint } => hint.lines().next().unwrap_or("").to_owned(),
            StubFallback::HashPick { choices } => {
                if choices.is_empty() {
                    return Err(Error::Config("stub hash_pick needs at least one choice".into()));
                }
                let h = u64::from_str_radix(&hash[..16], 16).expect("hex digest");
                choices[(h % choices.len() as u64) as usize].clone()
            }
            StubFallback::Fixed { text } => text.clone(),
        })
    }
}

impl CompletionBackend for StubBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse> {
        req.validate()?;
        Ok(CompletionResponse {
            text: self.answer(&req.prompt)?,
            backend_id: self.id.clone(),
            latency_ms: 0,
        })
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        if !self.capabilities.tokenize {
            return Err(Error::Unsupported(format!("backend `{}` does not tokenize", self.id)));
        }
        WhitespaceTokenizer.tokenize(text)
    }
}
