//! Generation backends: turn a serialized T′ into raw S′.
//!
//! Two implementations ship with the crate. [`MockBackend`] is a deterministic
//! template generator used by tests and offline runs; [`RemoteBackend`] posts
//! `{"input_text", "max_output_tokens"}` to an HTTP endpoint and reads
//! `{"output_text"}` back.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, LazyLock, Mutex};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::FeatureId;
use crate::dataset::truncate_tokens;
use crate::enrichment::EnrichedTuple;

pub const MOCK_BACKEND_ID: &str = "mock";
pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(600);
pub const DEFAULT_MAX_OUTPUT_TOKENS: usize = 512;

/// Emitted by the mock when the input carries no claim feature it can read.
pub const MOCK_FALLBACK: &str = "In an embodiment, the invention operates as described in the claims.";

static FEATURE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<feature \d+>(.*?)</feature>").unwrap());
static FIG_GROUP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<fig (\d+)>(.*?)</fig>").unwrap());
static COMPONENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<com>\s*(.*?)\s*<num>\s*(.*?)\s*</num>\s*</com>").unwrap());
static DESCRIPTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<desc (\d+)>(.*?)</desc>").unwrap());

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend request failed: {0}")]
    Failed(String),
    #[error("backend did not answer within {0:?}")]
    Timeout(Duration),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerationError {
    #[error("unknown generation backend `{0}`")]
    UnknownBackend(String),
}

pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Produces raw S′ for one serialized tuple. Must honour `deadline`.
    fn generate(
        &self,
        input_text: &str,
        max_output_tokens: usize,
        deadline: Duration,
    ) -> Result<String, BackendError>;
}

#[derive(Clone, Default)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn GenerationBackend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding only the mock backend.
    pub fn with_mock() -> Self {
        let mut registry = Self::new();
        registry.register(Arc::new(MockBackend));
        registry
    }

    pub fn register(&mut self, backend: Arc<dyn GenerationBackend>) {
        self.backends.insert(backend.id().to_string(), backend);
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn GenerationBackend>, GenerationError> {
        self.backends
            .get(id)
            .cloned()
            .ok_or_else(|| GenerationError::UnknownBackend(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        self.backends.keys().cloned().collect()
    }
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendRegistry")
            .field("backends", &self.ids())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub feature_id: FeatureId,
    pub input_text: String,
    pub max_output_tokens: usize,
    pub backend_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationStatus {
    Ok,
    Failed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub feature_id: FeatureId,
    pub raw_output: String,
    pub elapsed_seconds: f64,
    pub backend_id: String,
    pub status: GenerationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl GenerationResult {
    pub fn is_ok(&self) -> bool {
        self.status == GenerationStatus::Ok
    }
}

fn run_backend(
    request: &GenerationRequest,
    backend: &dyn GenerationBackend,
    deadline: Duration,
) -> GenerationResult {
    let started = Instant::now();
    let outcome = if request.input_text.trim().is_empty() {
        Err(BackendError::Failed("empty input text".into()))
    } else if request.max_output_tokens == 0 {
        Err(BackendError::Failed("max_output_tokens must be at least 1".into()))
    } else {
        backend.generate(&request.input_text, request.max_output_tokens, deadline)
    };
    let elapsed_seconds = started.elapsed().as_secs_f64();

    let (raw_output, status, diagnostic) = match outcome {
        Ok(text) if !text.trim().is_empty() => (text, GenerationStatus::Ok, None),
        Ok(_) => (
            String::new(),
            GenerationStatus::Failed,
            Some("backend returned empty output".to_string()),
        ),
        Err(e @ BackendError::Timeout(_)) => {
            (String::new(), GenerationStatus::Timeout, Some(e.to_string()))
        }
        Err(e) => (String::new(), GenerationStatus::Failed, Some(e.to_string())),
    };
    GenerationResult {
        feature_id: request.feature_id,
        raw_output,
        elapsed_seconds,
        backend_id: backend.id().to_string(),
        status,
        diagnostic,
    }
}

/// Dispatches one request. Backend failures come back as data; only a missing
/// backend is an error.
pub fn generate(
    request: &GenerationRequest,
    registry: &BackendRegistry,
    deadline: Duration,
) -> Result<GenerationResult, GenerationError> {
    let backend = registry.get(&request.backend_id)?;
    Ok(run_backend(request, backend.as_ref(), deadline))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOptions {
    pub max_output_tokens: usize,
    #[serde(with = "duration_secs")]
    pub deadline: Duration,
    pub parallelism: usize,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            deadline: DEFAULT_DEADLINE,
            parallelism: 1,
        }
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// Mean and spread of successful request durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    /// Successful requests; the statistics below cover only these.
    pub count: usize,
    pub failed: usize,
    pub mean_seconds: f64,
    /// Population standard deviation.
    pub stddev_seconds: f64,
    /// Wall-clock time for the whole batch.
    pub total_seconds: f64,
}

impl TimingSummary {
    pub fn from_results(results: &[GenerationResult], total_seconds: f64) -> Self {
        let ok: Vec<f64> = results
            .iter()
            .filter(|r| r.is_ok())
            .map(|r| r.elapsed_seconds)
            .collect();
        let count = ok.len();
        let (mean, stddev) = if count == 0 {
            (0.0, 0.0)
        } else {
            let mean = ok.iter().sum::<f64>() / count as f64;
            let var = ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64;
            (mean, var.sqrt())
        };
        Self {
            count,
            failed: results.len() - count,
            mean_seconds: mean,
            stddev_seconds: stddev,
            total_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectGeneration {
    pub results: Vec<GenerationResult>,
    pub summary: TimingSummary,
}

/// Generates every tuple, up to `parallelism` requests at a time. Results keep the
/// input order.
pub fn generate_project(
    tuples: &[EnrichedTuple],
    backend_id: &str,
    registry: &BackendRegistry,
    options: GenerationOptions,
) -> Result<ProjectGeneration, GenerationError> {
    let backend = registry.get(backend_id)?;
    let started = Instant::now();
    let requests: Vec<GenerationRequest> = tuples
        .iter()
        .map(|t| GenerationRequest {
            feature_id: t.feature_id,
            input_text: t.serialized.clone(),
            max_output_tokens: options.max_output_tokens,
            backend_id: backend_id.to_string(),
        })
        .collect();

    let slots: Mutex<Vec<Option<GenerationResult>>> = Mutex::new(vec![None; requests.len()]);
    let next = AtomicUsize::new(0);
    let workers = options.parallelism.max(1).min(requests.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(request) = requests.get(i) else {
                    break;
                };
                let result = run_backend(request, backend.as_ref(), options.deadline);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });

    let results: Vec<GenerationResult> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every request produces a result"))
        .collect();
    let summary = TimingSummary::from_results(&results, started.elapsed().as_secs_f64());
    Ok(ProjectGeneration { results, summary })
}

/// Deterministic stand-in for the fine-tuned model.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl GenerationBackend for MockBackend {
    fn id(&self) -> &str {
        MOCK_BACKEND_ID
    }

    fn generate(
        &self,
        input_text: &str,
        max_output_tokens: usize,
        _deadline: Duration,
    ) -> Result<String, BackendError> {
        Ok(truncate_tokens(&mock_generate(input_text), max_output_tokens))
    }
}

fn sentence_body(text: &str) -> String {
    crate::text::normalize_whitespace(text)
        .trim_end_matches(|c: char| matches!(c, '.' | ';' | ',' | ':') || c.is_whitespace())
        .to_string()
}

/// Template generator over the enrichment grammar.
///
/// Per figure group it writes `<fig N> illustrates <description>.` followed by one
/// `In an embodiment, the <name> <num> <n> </num> performs <feature>.` sentence per
/// component. Without components only the embodiment sentence for the feature is
/// written; input without a readable feature yields [`MOCK_FALLBACK`].
pub fn mock_generate(input_text: &str) -> String {
    let Some(feature) = FEATURE.captures(input_text).map(|c| sentence_body(&c[1])) else {
        return MOCK_FALLBACK.to_string();
    };
    let fragment = if feature.is_empty() {
        "the claimed operation".to_string()
    } else {
        feature
    };
    let descriptions: BTreeMap<u32, String> = DESCRIPTION
        .captures_iter(input_text)
        .filter_map(|c| Some((c[1].parse().ok()?, sentence_body(&c[2]))))
        .collect();

    let mut sentences = Vec::new();
    for group in FIG_GROUP.captures_iter(input_text) {
        let components: Vec<(String, String)> = COMPONENT
            .captures_iter(&group[2])
            .map(|c| (crate::text::normalize_whitespace(&c[1]), c[2].trim().to_string()))
            .collect();
        if components.is_empty() {
            continue;
        }
        let figure: u32 = group[1].parse().unwrap_or(0);
        let desc = descriptions
            .get(&figure)
            .filter(|d| !d.is_empty())
            .cloned()
            .unwrap_or_else(|| "an embodiment of the invention".to_string());
        sentences.push(format!("<fig {figure}> illustrates {desc}."));
        for (name, number) in components {
            sentences.push(format!(
                "In an embodiment, the {name} <num> {number} </num> performs {fragment}."
            ));
        }
    }
    if sentences.is_empty() {
        sentences.push(format!("In an embodiment, the system performs {fragment}."));
    }
    sentences.join(" ")
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    input_text: &'a str,
    max_output_tokens: usize,
}

#[derive(Deserialize)]
struct RemoteResponse {
    output_text: String,
}

/// HTTP backend speaking the JSON wire format described in the module docs.
pub struct RemoteBackend {
    id: String,
    endpoint: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(id: &str, endpoint: &str) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Failed(e.to_string()))?;
        Ok(Self {
            id: id.to_string(),
            endpoint: endpoint.to_string(),
            token: None,
            client,
        })
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl GenerationBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(
        &self,
        input_text: &str,
        max_output_tokens: usize,
        deadline: Duration,
    ) -> Result<String, BackendError> {
        let mut request = self
            .client
            .post(&self.endpoint)
            .timeout(deadline)
            .json(&RemoteRequest {
                input_text,
                max_output_tokens,
            });
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                BackendError::Timeout(deadline)
            } else {
                BackendError::Failed(e.to_string())
            }
        };
        let response = request.send().map_err(classify)?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(BackendError::Failed(format!("HTTP {status}: {}", body.trim())));
        }
        let body: RemoteResponse = response.json().map_err(classify)?;
        Ok(body.output_text)
    }
}
