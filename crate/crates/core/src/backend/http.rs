use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::{Client, RequestBuilder};
use serde::{Deserialize, Serialize};

use super::{
    Admission, BackendDescriptor, Capabilities, CompletionBackend, CompletionRequest, CompletionResponse,
    GreedyEncoding,
};
use crate::error::{Error, Result};

/// Body POSTed to the completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionWireRequest {
    pub model: String,
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub do_sample: Option<bool>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    text: String,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Serialize)]
struct TokenizeWireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
}

#[derive(Debug, Deserialize)]
struct TokenizeWireResponse {
    tokens: Vec<serde_json::Value>,
}

/// Client for a completions-style inference server.
pub struct HttpBackend {
    desc: BackendDescriptor,
    client: Client,
    admission: Admission,
    auth: Option<String>,
}

impl HttpBackend {
    pub fn new(desc: BackendDescriptor) -> Result<Self> {
        let client = Client::builder()
            .timeout(Duration::from_millis(desc.timeout_ms))
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        let auth = match &desc.auth_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| Error::Config(format!("backend `{}`: environment variable {var} is not set", desc.id)))?,
            ),
            None => None,
        };
        if desc.greedy_encoding == GreedyEncoding::ZeroTemperature {
            log::warn!(
                "backend `{}`: greedy decoding sent as temperature=0 instead of temperature=1 with sampling disabled",
                desc.id
            );
        }
        Ok(HttpBackend {
            admission: Admission::new(desc.max_in_flight),
            desc,
            client,
            auth,
        })
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }

    /// Most requests that were ever outstanding at once.
    pub fn peak_in_flight(&self) -> usize {
        self.admission.peak()
    }

    /// The exact body sent for `req`.
    pub fn wire_request(&self, req: &CompletionRequest) -> CompletionWireRequest {
        let (temperature, do_sample) = match self.desc.greedy_encoding {
            GreedyEncoding::Verbatim => (req.temperature, Some(false)),
            GreedyEncoding::ZeroTemperature => (0.0, None),
        };
        CompletionWireRequest {
            model: self.desc.model.clone(),
            prompt: req.prompt.clone(),
            max_tokens: req.max_new_tokens,
            temperature,
            top_p: req.top_p,
            do_sample,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.desc.endpoint.trim_end_matches('/'), path)
    }

    fn authorize(&self, builder: RequestBuilder) -> RequestBuilder {
        match &self.auth {
            Some(token) if self.desc.auth_header.eq_ignore_ascii_case("authorization") => {
                builder.header(&self.desc.auth_header, format!("Bearer {token}"))
            }
            Some(token) => builder.header(&self.desc.auth_header, token),
            None => builder,
        }
    }

    /// POST `body` to `path`, retrying transport failures with exponential backoff.
    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R> {
        let _permit = self.admission.acquire();
        let mut backoff = Duration::from_millis(self.desc.retry.initial_backoff_ms);
        let mut attempt = 1;
        loop {
            match self.post_once(path, body) {
                Err(e) if e.is_retryable() && attempt < self.desc.retry.attempts => {
                    log::debug!("backend `{}` attempt {attempt} failed: {e}; retrying", self.desc.id);
                    thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R> {
        let resp = self
            .authorize(self.client.post(self.url(path)).json(body))
            .send()
            .map_err(|e| self.classify(e))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| self.classify(e))?;
        if !status.is_success() {
            return Err(Error::Backend {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("backend `{}` sent an unexpected body ({e}): {text}", self.desc.id)))
    }

    fn classify(&self, e: reqwest::Error) -> Error {
        if e.is_timeout() {
            Error::Timeout(self.desc.timeout_ms)
        } else {
            Error::Transport(format!("backend `{}`: {e}", self.desc.id))
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.desc.id
    }

    fn capabilities(&self) -> Capabilities {
        self.desc.capabilities
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse> {
        req.validate()?;
        let started = Instant::now();
        let body = self.wire_request(req);
        let resp: WireResponse = self.post(&self.desc.completions_path, &body)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| Error::Format(format!("backend `{}` returned no choices", self.desc.id)))?;
        Ok(CompletionResponse {
            text,
            backend_id: self.desc.id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        if !self.desc.capabilities.tokenize {
            return Err(Error::Unsupported(format!("backend `{}` does not advertise tokenize", self.desc.id)));
        }
        let body = TokenizeWireRequest {
            model: &self.desc.model,
            prompt: text,
        };
        let resp: TokenizeWireResponse = self.post(&self.desc.tokenize_path, &body)?;
        Ok(resp
            .tokens
            .into_iter()
            .map(|t| match t {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            })
            .collect())
    }
}
