//! Wire types of the qnlearn HTTP service. Station indices in these types
//! are 0-based; routing rows and traces use the same layout as the core
//! library.

use qnlearn_core::analysis::BottleneckShift;
use qnlearn_core::experiment::{BenchmarkReport, BenchmarkSpec, GenerationSpec};
use qnlearn_core::{Dataset, ErrorSummary, GridSpec, QnModel, Scenario, Trace, TrainConfig, TrainReport, Violation};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub valid: bool,
    pub violations: Vec<Violation>,
    /// Human-readable form of `violations`, one line each.
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfLoopRequest {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub pi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfLoopResponse {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
}

/// Ensemble simulation: the mean of `replications` paths sampled on `grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub model: QnModel,
    pub x0: Vec<u32>,
    pub grid: GridSpec,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub model: QnModel,
    pub x0: Vec<f64>,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub scenario: Scenario,
    pub grid: GridSpec,
    /// Measured trace to score the prediction against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Trace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub predicted: Trace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err_pct: Option<f64>,
}

/// Scores `model` on each trace, predicting from the trace's first row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub model: QnModel,
    pub traces: Vec<Trace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub err_pct: Vec<f64>,
    pub summary: ErrorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckRequest {
    pub model: QnModel,
    pub x0: Vec<f64>,
    pub dt: f64,
    /// When set, also add this many servers at a time until the bottleneck
    /// moves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_step: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckResponse {
    pub station: usize,
    /// Steady-state queue length over servers, per station.
    pub ratios: Vec<f64>,
    pub steady_state: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<BottleneckShift>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRequest {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateJob {
    pub model: QnModel,
    pub spec: GenerationSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub dataset: Dataset,
    #[serde(default)]
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkJob {
    pub spec: BenchmarkSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Generate,
    Train,
    Benchmark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobCreated {
    pub id: u64,
    pub kind: JobKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done { result: JobResult },
    Failed { error: ApiError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "output", rename_all = "snake_case")]
pub enum JobResult {
    Generate(Dataset),
    Train(Box<TrainReport>),
    Benchmark(Box<BenchmarkReport>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: u64,
    pub kind: JobKind,
    #[serde(flatten)]
    pub status: JobStatus,
}
