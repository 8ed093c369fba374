//! Generative backends for paraphrase candidates.

use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeneratorError {
    #[error("generator timed out")]
    Timeout,
    #[error("generator unavailable: {0}")]
    Unavailable(String),
    #[error("bad generator response: {0}")]
    BadResponse(String),
}

impl GeneratorError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GeneratorError::Timeout | GeneratorError::Unavailable(_)
        )
    }
}

/// Wire format of a completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model_id: String,
    pub prompt: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub max_tokens: usize,
}

/// Wire format of a completion response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub completions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            backoff_ms: 250,
            timeout_ms: 60_000,
        }
    }
}

/// A text-completion backend with no knowledge of the corpus.
pub trait GeneratorClient: Send + Sync {
    fn model_id(&self) -> &str;

    /// Number of concurrent `complete` calls the backend accepts.
    fn max_parallelism(&self) -> usize {
        1
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy::default()
    }

    /// One attempt; retries are handled by [`generate_with_retry`].
    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, GeneratorError>;
}

/// Call the backend, retrying retryable failures per its policy.
pub fn generate_with_retry(
    client: &dyn GeneratorClient,
    request: &GenerationRequest,
) -> Result<Vec<String>, GeneratorError> {
    let policy = client.retry_policy();
    let mut attempt = 0;
    loop {
        match client.complete(request) {
            Ok(mut out) => {
                out.truncate(request.n);
                return Ok(out);
            }
            Err(e) if e.is_retryable() && attempt < policy.max_retries => {
                attempt += 1;
                log::debug!("generator attempt {attempt} failed: {e}; retrying");
                if policy.backoff_ms > 0 {
                    std::thread::sleep(Duration::from_millis(policy.backoff_ms * attempt as u64));
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Default model identifier: an open-weights 7B-class instruction model.
pub const DEFAULT_GENERATOR_MODEL: &str = "llama-3.1-7b-instruct";

/// JSON-over-HTTP completion endpoint client.
pub struct HttpGenerator {
    endpoint: String,
    model_id: String,
    policy: RetryPolicy,
    parallelism: usize,
    client: reqwest::blocking::Client,
}

impl HttpGenerator {
    pub fn new(
        endpoint: impl Into<String>,
        model_id: impl Into<String>,
        policy: RetryPolicy,
    ) -> Result<Self, GeneratorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(policy.timeout_ms))
            .build()
            .map_err(|e| GeneratorError::Unavailable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            policy,
            parallelism: 1,
            client,
        })
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }
}

impl GeneratorClient for HttpGenerator {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn max_parallelism(&self) -> usize {
        self.parallelism
    }

    fn retry_policy(&self) -> RetryPolicy {
        self.policy.clone()
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, GeneratorError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(request)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    GeneratorError::Timeout
                } else {
                    GeneratorError::Unavailable(e.to_string())
                }
            })?;
        let status = response.status();
        if status.is_server_error() {
            return Err(GeneratorError::Unavailable(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(GeneratorError::BadResponse(format!("status {status}")));
        }
        let body: GenerationResponse = response
            .json()
            .map_err(|e| GeneratorError::BadResponse(e.to_string()))?;
        Ok(body.completions)
    }
}

/// Offline stand-in that answers each prompt with word-order variants of
/// the text embedded in it (the part after the last `Text:` marker).
/// Deterministic given the request seed.
#[derive(Debug, Clone, Default)]
pub struct ShuffleParaphraser {
    pub parallelism: usize,
}

impl ShuffleParaphraser {
    pub const MODEL_ID: &'static str = "offline-shuffle";
}

impl GeneratorClient for ShuffleParaphraser {
    fn model_id(&self) -> &str {
        Self::MODEL_ID
    }

    fn max_parallelism(&self) -> usize {
        self.parallelism.max(1)
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, GeneratorError> {
        let text = request
            .prompt
            .rsplit("Text:")
            .next()
            .unwrap_or(&request.prompt)
            .trim();
        let words: Vec<&str> = text.split_whitespace().collect();
        let digest = Sha256::digest(text.as_bytes());
        let base = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(base ^ request.seed.unwrap_or(0));
        let listing: Vec<String> = (0..request.n)
            .map(|i| {
                let mut w = words.clone();
                w.shuffle(&mut rng);
                format!("{}. {}", i + 1, w.join(" "))
            })
            .collect();
        // one completion holding a numbered list, as instruction models tend to answer
        Ok(if listing.is_empty() {
            Vec::new()
        } else {
            vec![listing.join("\n")]
        })
    }
}
