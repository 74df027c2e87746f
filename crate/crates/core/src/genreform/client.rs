use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    ErrorResponseBody, GenerateRequestBody, GenerateResponseBody, GenerationResult, ScoreRequestBody,
    ScoreResponseBody,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    /// Correlates the response with this request.
    pub id: String,
    pub prompt: String,
    pub num_return: usize,
    pub beam_size: usize,
    pub max_new_tokens: usize,
}

impl GenerationRequest {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>) -> Self {
        GenerationRequest {
            id: id.into(),
            prompt: prompt.into(),
            num_return: 5,
            beam_size: 100,
            max_new_tokens: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_return == 0 || self.num_return > self.beam_size {
            return Err(Error::Usage(format!(
                "num_return must be in 1..=beam_size ({}), got {}",
                self.beam_size, self.num_return
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Usage("max_new_tokens must be >= 1".into()));
        }
        if self.prompt.trim().is_empty() {
            return Err(Error::Usage("empty prompt".into()));
        }
        Ok(())
    }

    pub fn to_body(&self) -> GenerateRequestBody {
        GenerateRequestBody {
            id: self.id.clone(),
            prompt: self.prompt.clone(),
            num_return: self.num_return,
            beam_size: self.beam_size,
            max_new_tokens: self.max_new_tokens,
        }
    }
}

/// Anything that can produce candidate reformulations for a prompt.
pub trait Generator: Send + Sync {
    /// Raw candidates in whatever order the backend returns them.
    fn candidates(&self, request: &GenerationRequest) -> Result<Vec<GenerationResult>>;
}

/// Scores a (query, passage) pair for re-ranking. Higher is more relevant.
pub trait RelevanceScorer: Send + Sync {
    fn score(&self, query: &str, passage: &str) -> Result<f64>;
}

/// Ask `client` for reformulations and return the `num_return` most likely,
/// best first.
pub fn generate(client: &dyn Generator, request: &GenerationRequest) -> Result<Vec<GenerationResult>> {
    request.validate()?;
    let mut results = client.candidates(request)?;
    for r in &results {
        if !r.log_likelihood.is_finite() || r.log_likelihood > 0.0 {
            return Err(Error::Protocol(format!(
                "log_likelihood must be finite and <= 0, got {} for {:?}",
                r.log_likelihood, r.text
            )));
        }
    }
    // Stable: equal likelihoods keep the service's order.
    results.sort_by(|a, b| b.log_likelihood.total_cmp(&a.log_likelihood));
    results.truncate(request.num_return);
    Ok(results)
}

/// Blocking HTTP client for the generation and scoring endpoints.
///
/// Safe to share across threads; each call is an independent request with
/// its own timeout.
pub struct HttpClient {
    base_url: String,
    agent: ureq::Agent,
    next_id: AtomicU64,
}

impl HttpClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            next_id: AtomicU64::new(0),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = format!("{}{}", self.base_url, path);
        let payload = serde_json::to_vec(body).expect("request bodies serialize");
        let transport = |e: ureq::Error| Error::Transport {
            endpoint: url.clone(),
            message: e.to_string(),
        };
        let mut response = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(&payload[..])
            .map_err(transport)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(transport)?;
        if !(200..300).contains(&status) {
            return Err(match serde_json::from_str::<ErrorResponseBody>(&text) {
                Ok(err) => Error::Service {
                    code: err.error.code,
                    message: err.error.message,
                },
                Err(_) => Error::Protocol(format!("HTTP {status} from {url} without an error body: {text:.200}")),
            });
        }
        let parsed: R = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("malformed response from {url}: {e}")))?;
        Ok(parsed)
    }
}

fn check_id(expected: &str, got: &str) -> Result<()> {
    if expected != got {
        return Err(Error::Protocol(format!("response id {got:?} does not match request id {expected:?}")));
    }
    Ok(())
}

impl Generator for HttpClient {
    fn candidates(&self, request: &GenerationRequest) -> Result<Vec<GenerationResult>> {
        let body: GenerateResponseBody = self.post("/generate", &request.to_body())?;
        check_id(&request.id, &body.id)?;
        Ok(body.results)
    }
}

impl RelevanceScorer for HttpClient {
    fn score(&self, query: &str, passage: &str) -> Result<f64> {
        let id = format!("score-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let request = ScoreRequestBody {
            id: id.clone(),
            query: query.to_string(),
            passage: passage.to_string(),
        };
        let body: ScoreResponseBody = self.post("/score", &request)?;
        check_id(&id, &body.id)?;
        Ok(body.score)
    }
}
