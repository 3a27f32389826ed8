//! Chat-completions transport, transcript store and mocks.
//!
//! Every exchange is keyed by a request digest: SHA-256 over model,
//! temperature, prompt and an ordinal counting earlier identical requests made
//! by the same client, so a run that sends the same prompt twice replays both
//! answers in order. Transcripts are one JSON file per exchange named
//! `<digest>.json`, written once and never overwritten.

use std::collections::{HashMap, VecDeque};
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use minilang::{parse_block, print_block, Block, Digest};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest as _, Sha256};

use super::extract::{code_blocks, extract_first_block};
use super::prompt::DEFAULT_VARIANTS;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_API_KEY_VAR: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LlmMode {
    Live,
    Replay,
    Mock,
}

impl FromStr for LlmMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(LlmMode::Live),
            "replay" => Ok(LlmMode::Replay),
            "mock" => Ok(LlmMode::Mock),
            _ => Err(format!("unknown llm mode `{s}` (live, replay, mock)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub api_key_env_var: String,
    pub model: String,
    pub temperature: f64,
    pub request_timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff: Duration,
    pub transcript_dir: Option<PathBuf>,
    pub mode: LlmMode,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            endpoint: DEFAULT_ENDPOINT.into(),
            api_key_env_var: DEFAULT_API_KEY_VAR.into(),
            model: DEFAULT_MODEL.into(),
            temperature: DEFAULT_TEMPERATURE,
            request_timeout: Duration::from_secs(60),
            max_retries: 5,
            backoff: Duration::from_secs(1),
            transcript_dir: None,
            mode: LlmMode::Mock,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub prompt: String,
    pub variant_count: usize,
    pub temperature: f64,
    pub model: String,
}

impl LlmRequest {
    pub fn new(prompt: impl Into<String>, config: &LlmClientConfig) -> Self {
        LlmRequest {
            prompt: prompt.into(),
            variant_count: DEFAULT_VARIANTS,
            temperature: config.temperature,
            model: config.model.clone(),
        }
    }

    /// Digest of the request body fields, `ordinal` disambiguating repeats.
    pub fn digest(&self, ordinal: u64) -> Digest {
        let mut h = Sha256::new();
        for part in [
            self.model.as_bytes(),
            self.temperature.to_string().as_bytes(),
            self.prompt.as_bytes(),
            ordinal.to_string().as_bytes(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        Digest::from(<[u8; 32]>::from(h.finalize()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmResponse {
    pub raw_text: String,
    pub extracted_blocks: Vec<String>,
}

impl LlmResponse {
    pub fn new(raw_text: String) -> Self {
        let extracted_blocks = code_blocks(&raw_text);
        LlmResponse {
            raw_text,
            extracted_blocks,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited by the endpoint")]
    RateLimited,
    #[error("endpoint returned HTTP {status}: {body}")]
    BadStatus { status: u16, body: String },
    #[error("request timed out")]
    TimedOut,
    #[error("no transcript for request {0}")]
    TranscriptMiss(Digest),
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("transcript store: {0}")]
    Transcript(#[from] io::Error),
    #[error("scripted mock has no responses left")]
    MockExhausted,
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::RateLimited => true,
            ClientError::BadStatus { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// Something that turns a prompt into assistant text.
pub trait Transport: Send + Sync {
    fn send(&self, req: &LlmRequest) -> Result<String, ClientError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(config: &LlmClientConfig) -> Result<Self, ClientError> {
        let api_key = std::env::var(&config.api_key_env_var)
            .map_err(|_| ClientError::MissingApiKey(config.api_key_env_var.clone()))?;
        Ok(Self::with_key(config, api_key))
    }

    pub fn with_key(config: &LlmClientConfig, api_key: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            agent,
            endpoint: config.endpoint.clone(),
            api_key,
        }
    }
}

/// JSON body of a chat-completions request: one user message, no system
/// prompt, the variant count asked for inside the prompt text.
pub fn request_body(req: &LlmRequest) -> serde_json::Value {
    json!({
        "model": req.model,
        "temperature": req.temperature,
        "messages": [{"role": "user", "content": req.prompt}],
    })
}

pub fn parse_completion(body: &str) -> Result<String, ClientError> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
    v["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ClientError::MalformedResponse("no choices[0].message.content".into()))
}

impl Transport for HttpTransport {
    fn send(&self, req: &LlmRequest) -> Result<String, ClientError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request_body(req))
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => ClientError::TimedOut,
                other => ClientError::Network(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Network(e.to_string()))?;
        match status {
            200..=299 => parse_completion(&body),
            429 => Err(ClientError::RateLimited),
            _ => Err(ClientError::BadStatus { status, body }),
        }
    }
}

/// Serves canned responses in order.
pub struct ScriptedMock {
    responses: Mutex<VecDeque<String>>,
}

impl ScriptedMock {
    pub fn new(responses: impl IntoIterator<Item = String>) -> Self {
        ScriptedMock {
            responses: Mutex::new(responses.into_iter().collect()),
        }
    }
}

impl Transport for ScriptedMock {
    fn send(&self, _req: &LlmRequest) -> Result<String, ClientError> {
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .ok_or(ClientError::MockExhausted)
    }
}

/// Offline stand-in that answers with rewrites of the code in the prompt:
/// the block verbatim, the block with one top-level statement dropped, the
/// block with two top-level statements exchanged, a declaration the target
/// language does not have, and a prose refusal. Which statements are
/// touched depends on the prompt digest, so answers are deterministic.
pub struct SyntheticMock;

impl SyntheticMock {
    pub fn answer(prompt: &str, variants: usize) -> String {
        let seed = Digest::of(prompt.as_bytes()).as_bytes()[0] as usize;
        let block = extract_first_block(prompt)
            .ok()
            .and_then(|code| parse_block(&code).ok())
            .unwrap_or_default();
        let n = block.statements.len();
        let mut out = String::new();
        for i in 0..variants {
            let text = match i % 5 {
                0 => Some(print_block(&block)),
                1 if n > 0 => {
                    let mut b = block.clone();
                    b.statements.remove((seed + i) % n);
                    Some(print_block(&b))
                }
                2 if n > 1 => {
                    let mut b: Block = block.clone();
                    let a = (seed + i) % n;
                    b.statements.swap(a, (a + 1) % n);
                    Some(print_block(&b))
                }
                3 => Some("class Faster {\n    int run() { return 0; }\n}".to_string()),
                4 => None,
                _ => Some(print_block(&block)),
            };
            match text {
                Some(code) => out.push_str(&format!("Version {}:\n```\n{code}\n```\n", i + 1)),
                None => out.push_str("The code is already efficient.\n"),
            }
        }
        out
    }
}

impl Transport for SyntheticMock {
    fn send(&self, req: &LlmRequest) -> Result<String, ClientError> {
        Ok(Self::answer(&req.prompt, req.variant_count))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transcript {
    pub request_digest: String,
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
    pub response: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone)]
pub struct TranscriptStore {
    dir: PathBuf,
}

impl TranscriptStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(TranscriptStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, digest: &Digest) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &Digest) -> io::Result<Option<Transcript>> {
        match std::fs::read_to_string(self.path(digest)) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Writes `t` unless a transcript with the same digest already exists.
    pub fn put(&self, digest: &Digest, t: &Transcript) -> io::Result<()> {
        use std::io::Write;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, t)?;
        tmp.write_all(b"\n")?;
        match tmp.persist_noclobber(self.path(digest)) {
            Ok(_) => Ok(()),
            Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => Ok(()),
            Err(e) => Err(e.error),
        }
    }
}

pub struct LlmClient {
    config: LlmClientConfig,
    transport: Option<Box<dyn Transport>>,
    store: Option<TranscriptStore>,
    ordinals: Mutex<HashMap<Digest, u64>>,
    requests: AtomicU64,
    sent: AtomicU64,
}

impl LlmClient {
    /// Client for `config.mode`: live uses HTTP, mock the synthetic mock,
    /// replay no transport at all.
    pub fn from_config(config: LlmClientConfig) -> Result<Self, ClientError> {
        let transport: Option<Box<dyn Transport>> = match config.mode {
            LlmMode::Live => Some(Box::new(HttpTransport::new(&config)?)),
            LlmMode::Mock => Some(Box::new(SyntheticMock)),
            LlmMode::Replay => None,
        };
        Self::with_transport(config, transport)
    }

    /// Client with an explicit transport. Replay mode ignores it.
    pub fn with_transport(
        config: LlmClientConfig,
        transport: Option<Box<dyn Transport>>,
    ) -> Result<Self, ClientError> {
        let store = config
            .transcript_dir
            .as_ref()
            .map(TranscriptStore::open)
            .transpose()?;
        let transport = if config.mode == LlmMode::Replay {
            None
        } else {
            transport
        };
        Ok(LlmClient {
            config,
            transport,
            store,
            ordinals: Mutex::new(HashMap::new()),
            requests: AtomicU64::new(0),
            sent: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    pub fn request(&self, prompt: impl Into<String>) -> LlmRequest {
        LlmRequest::new(prompt, &self.config)
    }

    /// Calls to [`LlmClient::complete`] so far.
    pub fn requests_issued(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// Calls that reached the transport (cache misses).
    pub fn transport_calls(&self) -> u64 {
        self.sent.load(Ordering::SeqCst)
    }

    pub fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, ClientError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let ordinal = {
            let mut ordinals = self.ordinals.lock().unwrap();
            let n = ordinals.entry(req.digest(0)).or_insert(0);
            *n += 1;
            *n - 1
        };
        let digest = req.digest(ordinal);
        if let Some(store) = &self.store {
            if let Some(t) = store.get(&digest)? {
                return Ok(LlmResponse::new(t.response));
            }
        }
        let transport = self
            .transport
            .as_ref()
            .ok_or(ClientError::TranscriptMiss(digest))?;
        let text = self.send_with_retry(transport.as_ref(), req)?;
        if let Some(store) = &self.store {
            let timestamp = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            store.put(
                &digest,
                &Transcript {
                    request_digest: digest.to_hex(),
                    model: req.model.clone(),
                    temperature: req.temperature,
                    prompt: req.prompt.clone(),
                    response: text.clone(),
                    timestamp,
                },
            )?;
        }
        Ok(LlmResponse::new(text))
    }

    fn send_with_retry(&self, t: &dyn Transport, req: &LlmRequest) -> Result<String, ClientError> {
        let mut delay = self.config.backoff;
        let mut attempt = 0;
        loop {
            self.sent.fetch_add(1, Ordering::SeqCst);
            match t.send(req) {
                Err(e) if e.retryable() && attempt < self.config.max_retries => {
                    log::warn!("llm request failed ({e}), retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
