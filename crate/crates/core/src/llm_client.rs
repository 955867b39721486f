//! Chat-completion transport with live, record and replay modes.
//!
//! Requests hash to a stable key over every field; record mode persists
//! responses under that key (one file per request, sharded by hash prefix,
//! written via temp-file-then-rename), and replay mode serves them back with
//! no network at all. Retries cover only rate limiting and transport
//! failures.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::time::{Duration, SystemTime};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

/// Field order fixed by hand to the sorted key order, so the canonical bytes
/// do not depend on feature flags of the JSON serializer.
#[derive(Serialize)]
struct CanonicalRequest<'a> {
    max_output_tokens: u32,
    model: &'a str,
    system: &'a str,
    temperature: f64,
    user: &'a str,
}

impl ChatRequest {
    /// Canonical byte form: compact JSON with sorted keys, message text
    /// untouched.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&CanonicalRequest {
            max_output_tokens: self.max_output_tokens,
            model: &self.model,
            system: &self.system,
            temperature: self.temperature,
            user: &self.user,
        })
        .expect("canonical request serialization cannot fail")
    }

    /// sha256 of the canonical bytes; the replay cache key.
    pub fn cache_key(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for TransportMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(TransportMode::Live),
            "record" => Ok(TransportMode::Record),
            "replay" => Ok(TransportMode::Replay),
            other => Err(format!("unknown mode '{other}' (expected live, record or replay)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    /// Assistant message content verbatim, trailing whitespace trimmed.
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub source: ResponseSource,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("replay cache has no entry for key {key}")]
    CacheMiss { key: String },
    #[error("authentication failure: {0}")]
    AuthError(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("transport failure: {0}")]
    TransportError(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("gave up after {attempts} attempts: {source}")]
    RetriesExhausted {
        attempts: u32,
        #[source]
        source: Box<ClientError>,
    },
    #[error("no price configured for model '{model}'")]
    UnknownModelPrice { model: String },
    #[error("cache error: {0}")]
    CacheError(String),
    #[error("client configuration error: {0}")]
    Config(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::RateLimited(_) | ClientError::TransportError(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay_ms: 500, multiplier: 2.0 }
    }
}

impl RetryPolicy {
    fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; the wait happens before attempt 2, 3, ...
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        Duration::from_millis((self.base_delay_ms as f64 * factor) as u64)
    }
}

#[derive(Debug)]
pub struct RetryOutcome {
    pub response: ChatResponse,
    pub attempts: u32,
}

/// Runs `op` under the retry policy. Only rate-limit and transport errors
/// retry; everything else fails on the spot. The terminal error carries the
/// attempt count.
pub fn with_retry<F>(policy: &RetryPolicy, mut op: F) -> Result<RetryOutcome, ClientError>
where
    F: FnMut() -> Result<ChatResponse, ClientError>,
{
    let max_attempts = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match op() {
            Ok(response) => return Ok(RetryOutcome { response, attempts: attempt }),
            Err(e) if e.is_retryable() && attempt < max_attempts => {
                std::thread::sleep(policy.delay_before(attempt));
            }
            Err(e) if e.is_retryable() => {
                return Err(ClientError::RetriesExhausted { attempts: attempt, source: Box::new(e) })
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    request: serde_json::Value,
    response: CachedResponse,
    timestamp: u64,
}

#[derive(Serialize, Deserialize)]
struct CachedResponse {
    text: String,
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Debug, Clone)]
struct Cache {
    root: PathBuf,
}

impl Cache {
    fn entry_path(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.json"))
    }

    fn load(&self, key: &str) -> Result<Option<CachedResponse>, ClientError> {
        let path = self.entry_path(key);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(ClientError::CacheError(format!("{}: {e}", path.display()))),
        };
        let entry: CacheEntry = serde_json::from_str(&text)
            .map_err(|e| ClientError::CacheError(format!("{}: {e}", path.display())))?;
        Ok(Some(entry.response))
    }

    fn store(&self, key: &str, request: &ChatRequest, response: &ChatResponse) -> Result<(), ClientError> {
        let path = self.entry_path(key);
        let dir = path.parent().expect("entry path has a parent");
        std::fs::create_dir_all(dir)
            .map_err(|e| ClientError::CacheError(format!("{}: {e}", dir.display())))?;
        let entry = CacheEntry {
            request: serde_json::from_str(&request.canonical_json())
                .expect("canonical json parses"),
            response: CachedResponse {
                text: response.text.clone(),
                prompt_tokens: response.prompt_tokens,
                completion_tokens: response.completion_tokens,
            },
            timestamp: SystemTime::now()
                .duration_since(SystemTime::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let body = serde_json::to_string_pretty(&entry)
            .map_err(|e| ClientError::CacheError(e.to_string()))?;
        // Concurrent writers race benignly: rename is atomic and both sides
        // carry the same response for the same key.
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        std::fs::write(&tmp, body)
            .map_err(|e| ClientError::CacheError(format!("{}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, &path)
            .map_err(|e| ClientError::CacheError(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}

struct HttpTransport {
    endpoint: String,
    api_key: String,
    http: reqwest::blocking::Client,
}

// The credential stays out of debug output.
impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

impl HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let payload = serde_json::json!({
            "model": request.model,
            "messages": [
                { "role": "system", "content": request.system },
                { "role": "user", "content": request.user },
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let response = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&payload)
            .send()
            .map_err(|e| ClientError::TransportError(e.to_string()))?;

        let status = response.status();
        let body = response
            .text()
            .map_err(|e| ClientError::TransportError(e.to_string()))?;
        match status.as_u16() {
            200 => parse_completion(&body),
            401 | 403 => Err(ClientError::AuthError(format!("HTTP {status}: {body}"))),
            429 => Err(ClientError::RateLimited(format!("HTTP {status}: {body}"))),
            500..=599 | 408 => Err(ClientError::TransportError(format!("HTTP {status}: {body}"))),
            // Remaining 4xx: the server understood us and said no; retrying
            // the same bytes cannot help.
            _ => Err(ClientError::MalformedResponse(format!("HTTP {status}: {body}"))),
        }
    }
}

fn parse_completion(body: &str) -> Result<ChatResponse, ClientError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| ClientError::MalformedResponse(format!("not JSON: {e}")))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .ok_or_else(|| {
            ClientError::MalformedResponse("missing choices[0].message.content".into())
        })?;
    let tokens = |ptr: &str| value.pointer(ptr).and_then(|v| v.as_u64()).unwrap_or(0);
    Ok(ChatResponse {
        text: content.trim_end().to_string(),
        prompt_tokens: tokens("/usage/prompt_tokens"),
        completion_tokens: tokens("/usage/completion_tokens"),
        source: ResponseSource::Live,
    })
}

pub struct ClientConfig {
    pub mode: TransportMode,
    pub endpoint: String,
    pub api_key: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub retry: RetryPolicy,
}

#[derive(Debug)]
pub struct LlmClient {
    mode: TransportMode,
    transport: Option<HttpTransport>,
    cache: Option<Cache>,
    retry: RetryPolicy,
}

impl LlmClient {
    /// Validates the mode's requirements up front: live and record need a
    /// credential, record and replay need a cache directory. Replay builds
    /// no HTTP client at all.
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        let transport = match config.mode {
            TransportMode::Live | TransportMode::Record => {
                let api_key = config
                    .api_key
                    .filter(|k| !k.is_empty())
                    .ok_or_else(|| ClientError::AuthError("no API credential configured".into()))?;
                Some(HttpTransport {
                    endpoint: config.endpoint,
                    api_key,
                    http: reqwest::blocking::Client::new(),
                })
            }
            TransportMode::Replay => None,
        };
        let cache = match config.mode {
            TransportMode::Live => None,
            TransportMode::Record | TransportMode::Replay => {
                let root = config.cache_dir.ok_or_else(|| {
                    ClientError::Config(format!("mode {:?} requires a cache directory", config.mode))
                })?;
                Some(Cache { root })
            }
        };
        Ok(LlmClient { mode: config.mode, transport, cache, retry: config.retry })
    }

    pub fn mode(&self) -> TransportMode {
        self.mode
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        match self.mode {
            TransportMode::Live => self.transport.as_ref().expect("live transport").send(request),
            TransportMode::Record => {
                let key = request.cache_key();
                let cache = self.cache.as_ref().expect("record cache");
                // Resume-friendly: a recorded entry short-circuits the call.
                if let Some(hit) = cache.load(&key)? {
                    return Ok(ChatResponse {
                        text: hit.text,
                        prompt_tokens: hit.prompt_tokens,
                        completion_tokens: hit.completion_tokens,
                        source: ResponseSource::Replay,
                    });
                }
                let response = self.transport.as_ref().expect("record transport").send(request)?;
                cache.store(&key, request, &response)?;
                Ok(response)
            }
            TransportMode::Replay => {
                let key = request.cache_key();
                let hit = self
                    .cache
                    .as_ref()
                    .expect("replay cache")
                    .load(&key)?
                    .ok_or(ClientError::CacheMiss { key })?;
                Ok(ChatResponse {
                    text: hit.text,
                    prompt_tokens: hit.prompt_tokens,
                    completion_tokens: hit.completion_tokens,
                    source: ResponseSource::Replay,
                })
            }
        }
    }

    pub fn complete_with_retry(&self, request: &ChatRequest) -> Result<RetryOutcome, ClientError> {
        with_retry(&self.retry, || self.complete(request))
    }
}

/// Running token totals and the estimated spend at the configured prices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub total_prompt_tokens: u64,
    pub total_completion_tokens: u64,
    pub estimated_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    /// Currency units per 1000 prompt tokens.
    pub input_per_1k: f64,
    /// Currency units per 1000 completion tokens.
    pub output_per_1k: f64,
}

pub type PriceTable = std::collections::BTreeMap<String, ModelPrice>;

pub fn ledger_add(
    ledger: &mut UsageLedger,
    model: &str,
    response: &ChatResponse,
    prices: &PriceTable,
) -> Result<(), ClientError> {
    let price = prices
        .get(model)
        .ok_or_else(|| ClientError::UnknownModelPrice { model: model.to_string() })?;
    ledger.total_prompt_tokens += response.prompt_tokens;
    ledger.total_completion_tokens += response.completion_tokens;
    ledger.estimated_cost += response.prompt_tokens as f64 * price.input_per_1k / 1000.0
        + response.completion_tokens as f64 * price.output_per_1k / 1000.0;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> ChatRequest {
        ChatRequest {
            model: "gpt-4".into(),
            system: "You are a machine translation system.".into(),
            user: "Navajo: x\nEnglish:".into(),
            temperature: 0.0,
            max_output_tokens: 512,
        }
    }

    fn response(text: &str) -> ChatResponse {
        ChatResponse {
            text: text.into(),
            prompt_tokens: 1000,
            completion_tokens: 1000,
            source: ResponseSource::Live,
        }
    }

    #[test]
    fn identical_requests_share_a_key() {
        assert_eq!(request().cache_key(), request().cache_key());
    }

    #[test]
    fn every_field_feeds_the_key() {
        let base = request();
        let mut temperature = request();
        temperature.temperature = 0.7;
        let mut model = request();
        model.model = "gpt-4-0613".into();
        let mut tokens = request();
        tokens.max_output_tokens = 256;
        let mut system = request();
        system.system.push('!');
        let mut user = request();
        user.user.push('!');
        for changed in [temperature, model, tokens, system, user] {
            assert_ne!(base.cache_key(), changed.cache_key());
        }
    }

    #[test]
    fn replay_with_empty_cache_is_a_miss_naming_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let client = LlmClient::new(ClientConfig {
            mode: TransportMode::Replay,
            endpoint: String::new(),
            api_key: None,
            cache_dir: Some(dir.path().to_path_buf()),
            retry: RetryPolicy::default(),
        })
        .unwrap();
        let req = request();
        match client.complete(&req) {
            Err(ClientError::CacheMiss { key }) => assert_eq!(key, req.cache_key()),
            other => panic!("expected CacheMiss, got {other:?}"),
        }
    }

    #[test]
    fn live_mode_without_credential_is_auth_error() {
        let err = LlmClient::new(ClientConfig {
            mode: TransportMode::Live,
            endpoint: "http://127.0.0.1:1/v1".into(),
            api_key: None,
            cache_dir: None,
            retry: RetryPolicy::default(),
        })
        .unwrap_err();
        assert!(matches!(err, ClientError::AuthError(_)));
    }

    #[test]
    fn retry_recovers_from_transient_failures() {
        let mut calls = 0;
        let outcome = with_retry(
            &RetryPolicy { max_attempts: 3, base_delay_ms: 0, multiplier: 2.0 },
            || {
                calls += 1;
                if calls < 3 {
                    Err(ClientError::RateLimited("slow down".into()))
                } else {
                    Ok(response("ok"))
                }
            },
        )
        .unwrap();
        assert_eq!(outcome.attempts, 3);
        assert_eq!(outcome.response.text, "ok");
    }

    #[test]
    fn auth_error_never_retries() {
        let mut calls = 0;
        let err = with_retry(
            &RetryPolicy { max_attempts: 5, base_delay_ms: 0, multiplier: 2.0 },
            || {
                calls += 1;
                Err(ClientError::AuthError("bad key".into()))
            },
        )
        .unwrap_err();
        assert_eq!(calls, 1);
        assert!(matches!(err, ClientError::AuthError(_)));
    }

    #[test]
    fn malformed_response_never_retries() {
        let mut calls = 0;
        let _ = with_retry(
            &RetryPolicy { max_attempts: 5, base_delay_ms: 0, multiplier: 2.0 },
            || {
                calls += 1;
                Err(ClientError::MalformedResponse("no choices".into()))
            },
        );
        assert_eq!(calls, 1);
    }

    #[test]
    fn budget_of_one_fails_after_one_attempt() {
        let mut calls = 0;
        let err = with_retry(
            &RetryPolicy { max_attempts: 1, base_delay_ms: 0, multiplier: 2.0 },
            || {
                calls += 1;
                Err(ClientError::TransportError("refused".into()))
            },
        )
        .unwrap_err();
        assert_eq!(calls, 1);
        match err {
            ClientError::RetriesExhausted { attempts, source } => {
                assert_eq!(attempts, 1);
                assert!(matches!(*source, ClientError::TransportError(_)));
            }
            other => panic!("expected RetriesExhausted, got {other:?}"),
        }
    }

    #[test]
    fn ledger_arithmetic() {
        let prices: PriceTable = [(
            "gpt-4".to_string(),
            ModelPrice { input_per_1k: 0.03, output_per_1k: 0.06 },
        )]
        .into();
        let mut ledger = UsageLedger::default();
        ledger_add(&mut ledger, "gpt-4", &response("x"), &prices).unwrap();
        assert!((ledger.estimated_cost - 0.09).abs() < 1e-12);
        assert_eq!(ledger.total_prompt_tokens, 1000);

        // Zero-token response leaves the ledger unchanged.
        let mut empty = response("y");
        empty.prompt_tokens = 0;
        empty.completion_tokens = 0;
        let before = ledger;
        ledger_add(&mut ledger, "gpt-4", &empty, &prices).unwrap();
        assert_eq!(ledger, before);

        // Additions commute.
        let mut a = UsageLedger::default();
        let r1 = response("1");
        let mut r2 = response("2");
        r2.prompt_tokens = 17;
        ledger_add(&mut a, "gpt-4", &r1, &prices).unwrap();
        ledger_add(&mut a, "gpt-4", &r2, &prices).unwrap();
        let mut b = UsageLedger::default();
        ledger_add(&mut b, "gpt-4", &r2, &prices).unwrap();
        ledger_add(&mut b, "gpt-4", &r1, &prices).unwrap();
        assert_eq!(a.total_prompt_tokens, b.total_prompt_tokens);
        assert_eq!(a.total_completion_tokens, b.total_completion_tokens);
        assert!((a.estimated_cost - b.estimated_cost).abs() < 1e-12);
    }

    #[test]
    fn unknown_model_price_rejected() {
        let prices = PriceTable::new();
        let mut ledger = UsageLedger::default();
        assert!(matches!(
            ledger_add(&mut ledger, "gpt-unknown", &response("x"), &prices),
            Err(ClientError::UnknownModelPrice { .. })
        ));
    }

    #[test]
    fn completion_parsing() {
        let ok = r#"{"choices":[{"message":{"content":"Hello.  \n"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#;
        let parsed = parse_completion(ok).unwrap();
        assert_eq!(parsed.text, "Hello.");
        assert_eq!(parsed.prompt_tokens, 12);
        assert_eq!(parsed.completion_tokens, 3);

        assert!(matches!(
            parse_completion(r#"{"choices":[]}"#),
            Err(ClientError::MalformedResponse(_))
        ));
        assert!(matches!(
            parse_completion("not json"),
            Err(ClientError::MalformedResponse(_))
        ));
    }
}
