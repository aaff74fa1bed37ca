//! Typed async client for the qnlearn HTTP service.

use std::time::Duration;

use qnlearn_api::*;
use qnlearn_core::experiment::BenchmarkReport;
use qnlearn_core::{Dataset, ErrorSummary, QnModel, RandomQnConfig, Trace, TrainReport};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),

    /// The service rejected the request or a job failed.
    #[error("{}", .body.error)]
    Api { status: Option<u16>, body: ApiError },

    #[error("job {id} returned a {got:?} result")]
    UnexpectedResult { id: u64, got: JobKind },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
    poll: Duration,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            http: reqwest::Client::new(),
            base: base.into().trim_end_matches('/').to_string(),
            poll: Duration::from_millis(50),
        }
    }

    /// Interval between job status checks.
    pub fn with_poll_interval(mut self, poll: Duration) -> Self {
        self.poll = poll;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ApiError {
            error: if text.is_empty() { status.to_string() } else { text },
            violations: Vec::new(),
        });
        Err(ClientError::Api {
            status: Some(status.as_u16()),
            body,
        })
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send().await?;
        Self::decode(resp).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("/health").await
    }

    pub async fn validate(&self, model: &QnModel) -> Result<ValidateResponse> {
        self.post("/v1/models/validate", model).await
    }

    pub async fn random_model(&self, cfg: &RandomQnConfig) -> Result<QnModel> {
        self.post("/v1/models/random", cfg).await
    }

    pub async fn transform_selfloop(&self, req: &SelfLoopRequest) -> Result<SelfLoopResponse> {
        self.post("/v1/models/transform-selfloop", req).await
    }

    pub async fn simulate(&self, req: &SimulateRequest) -> Result<Trace> {
        self.post("/v1/simulate", req).await
    }

    pub async fn predict(&self, req: &PredictRequest) -> Result<Trace> {
        self.post("/v1/predict", req).await
    }

    pub async fn whatif(&self, req: &WhatIfRequest) -> Result<WhatIfResponse> {
        self.post("/v1/whatif", req).await
    }

    pub async fn eval(&self, req: &EvalRequest) -> Result<EvalResponse> {
        self.post("/v1/eval", req).await
    }

    pub async fn bottleneck(&self, req: &BottleneckRequest) -> Result<BottleneckResponse> {
        self.post("/v1/bottleneck", req).await
    }

    pub async fn summary(&self, values: &[f64]) -> Result<ErrorSummary> {
        self.post(
            "/v1/summary",
            &SummaryRequest {
                values: values.to_vec(),
            },
        )
        .await
    }

    pub async fn submit_generate(&self, job: &GenerateJob) -> Result<JobCreated> {
        self.post("/v1/jobs/generate", job).await
    }

    pub async fn submit_train(&self, job: &TrainJob) -> Result<JobCreated> {
        self.post("/v1/jobs/train", job).await
    }

    pub async fn submit_benchmark(&self, job: &BenchmarkJob) -> Result<JobCreated> {
        self.post("/v1/jobs/benchmark", job).await
    }

    pub async fn job(&self, id: u64) -> Result<JobView> {
        self.get(&format!("/v1/jobs/{id}")).await
    }

    /// Polls job `id` until it finishes.
    pub async fn wait(&self, id: u64) -> Result<JobResult> {
        loop {
            match self.job(id).await?.status {
                JobStatus::Running => tokio::time::sleep(self.poll).await,
                JobStatus::Done { result } => return Ok(result),
                JobStatus::Failed { error } => {
                    return Err(ClientError::Api {
                        status: None,
                        body: error,
                    })
                }
            }
        }
    }

    pub async fn generate(&self, job: &GenerateJob) -> Result<Dataset> {
        let id = self.submit_generate(job).await?.id;
        match self.wait(id).await? {
            JobResult::Generate(ds) => Ok(ds),
            other => Err(unexpected(id, &other)),
        }
    }

    pub async fn train(&self, job: &TrainJob) -> Result<TrainReport> {
        let id = self.submit_train(job).await?.id;
        match self.wait(id).await? {
            JobResult::Train(r) => Ok(*r),
            other => Err(unexpected(id, &other)),
        }
    }

    pub async fn benchmark(&self, job: &BenchmarkJob) -> Result<BenchmarkReport> {
        let id = self.submit_benchmark(job).await?.id;
        match self.wait(id).await? {
            JobResult::Benchmark(r) => Ok(*r),
            other => Err(unexpected(id, &other)),
        }
    }
}

fn unexpected(id: u64, r: &JobResult) -> ClientError {
    let got = match r {
        JobResult::Generate(_) => JobKind::Generate,
        JobResult::Train(_) => JobKind::Train,
        JobResult::Benchmark(_) => JobKind::Benchmark,
    };
    ClientError::UnexpectedResult { id, got }
}

impl ClientError {
    /// HTTP status of a rejected request, if any.
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => status.and_then(|s| StatusCode::from_u16(s).ok()),
            ClientError::Http(e) => e.status(),
            ClientError::UnexpectedResult { .. } => None,
        }
    }
}
