//! Completion backends.
//!
//! [`CompletionBackend`] is the seam between the evaluation loop and whatever
//! produces text: [`HttpBackend`] talks to a completions-style inference
//! server, [`StubBackend`] answers from a fixture for tests and dry runs.

mod http;
mod stub;

use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

pub use http::{CompletionWireRequest, HttpBackend};
pub use stub::{StubBackend, StubConfig, StubFallback};

pub const DEFAULT_MAX_NEW_TOKENS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoding {
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_new_tokens: usize,
    pub decoding: Decoding,
    pub top_p: f64,
    pub temperature: f64,
}

impl CompletionRequest {
    /// Greedy decoding, top-p 1, temperature 1, at most 10 new tokens.
    pub fn greedy(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            decoding: Decoding::Greedy,
            top_p: 1.0,
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::validation("max_new_tokens", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    #[serde(default)]
    pub tokenize: bool,
}

/// How greedy decoding is expressed on the wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyEncoding {
    /// temperature 1 and top-p 1 as configured, plus `"do_sample": false`.
    #[default]
    Verbatim,
    /// For servers without a sampling switch: send temperature 0.
    ZeroTemperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Stub(StubConfig),
}

fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_in_flight() -> usize {
    4
}
fn default_completions_path() -> String {
    "/v1/completions".into()
}
fn default_tokenize_path() -> String {
    "/tokenize".into()
}
fn default_auth_header() -> String {
    "Authorization".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub id: String,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub capabilities: Capabilities,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    pub kind: BackendKind,
    #[serde(default = "default_completions_path")]
    pub completions_path: String,
    #[serde(default = "default_tokenize_path")]
    pub tokenize_path: String,
    /// Header that carries the token read from `auth_env`.
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    /// Environment variable holding the authorization token, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub greedy_encoding: GreedyEncoding,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl BackendDescriptor {
    pub fn stub(id: impl Into<String>, config: StubConfig) -> Self {
        BackendDescriptor {
            id: id.into(),
            endpoint: String::new(),
            model: String::new(),
            capabilities: Capabilities { tokenize: true },
            timeout_ms: default_timeout_ms(),
            max_in_flight: default_max_in_flight(),
            kind: BackendKind::Stub(config),
            completions_path: default_completions_path(),
            tokenize_path: default_tokenize_path(),
            auth_header: default_auth_header(),
            auth_env: None,
            greedy_encoding: GreedyEncoding::default(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn http(id: impl Into<String>, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        BackendDescriptor {
            endpoint: endpoint.into(),
            model: model.into(),
            capabilities: Capabilities::default(),
            kind: BackendKind::Http,
            ..BackendDescriptor::stub(id, StubConfig::default())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("backend.id", "must be non-empty"));
        }
        if self.max_in_flight == 0 {
            return Err(Error::validation(format!("backends[{}].max_in_flight", self.id), "must be at least 1"));
        }
        if self.retry.attempts == 0 {
            return Err(Error::validation(format!("backends[{}].retry.attempts", self.id), "must be at least 1"));
        }
        if matches!(self.kind, BackendKind::Http) && self.endpoint.is_empty() {
            return Err(Error::validation(format!("backends[{}].endpoint", self.id), "required for http backends"));
        }
        Ok(())
    }
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse>;

    /// The backend's own token segmentation of `text`.
    fn tokenize(&self, text: &str) -> Result<Vec<String>>;
}

/// Build a backend from its descriptor.
pub fn connect(desc: &BackendDescriptor) -> Result<Arc<dyn CompletionBackend>> {
    desc.validate()?;
    Ok(match &desc.kind {
        BackendKind::Http => Arc::new(HttpBackend::new(desc.clone())?),
        BackendKind::Stub(cfg) => Arc::new(StubBackend::new(desc.id.clone(), cfg.clone(), desc.capabilities)),
    })
}

/// Uses a backend's tokenize call as a [`Tokenizer`].
pub struct BackendTokenizer(pub Arc<dyn CompletionBackend>);

impl Tokenizer for BackendTokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        self.0.tokenize(text)
    }
}

/// Counting semaphore bounding outstanding requests per backend.
#[derive(Debug)]
pub struct Admission {
    limit: usize,
    state: Mutex<AdmissionState>,
    cv: Condvar,
}

#[derive(Debug, Default)]
struct AdmissionState {
    in_flight: usize,
    peak: usize,
}

pub struct Permit<'a> {
    admission: &'a Admission,
}

impl Admission {
    pub fn new(limit: usize) -> Self {
        Admission {
            limit: limit.max(1),
            state: Mutex::new(AdmissionState::default()),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("admission lock");
        while st.in_flight >= self.limit {
            st = self.cv.wait(st).expect("admission lock");
        }
        st.in_flight += 1;
        st.peak = st.peak.max(st.in_flight);
        Permit { admission: self }
    }

    /// Highest number of simultaneously admitted requests so far.
    pub fn peak(&self) -> usize {
        self.state.lock().expect("admission lock").peak
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.admission.state.lock().expect("admission lock");
        st.in_flight -= 1;
        self.admission.cv.notify_one();
    }
}
