use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use qnlearn_api::*;
use qnlearn_core::experiment::{generate_dataset, run_benchmark};
use qnlearn_core::train;

use crate::error::{AppError, Body};
use crate::AppState;

#[derive(Default)]
pub struct JobTable {
    next: AtomicU64,
    jobs: Mutex<HashMap<u64, (JobKind, JobStatus)>>,
}

impl JobTable {
    fn insert(&self, kind: JobKind) -> u64 {
        let id = self.next.fetch_add(1, Ordering::Relaxed) + 1;
        self.jobs
            .lock()
            .expect("job table")
            .insert(id, (kind, JobStatus::Running));
        id
    }

    fn finish(&self, id: u64, status: JobStatus) {
        if let Some(entry) = self.jobs.lock().expect("job table").get_mut(&id) {
            entry.1 = status;
        }
    }

    fn view(&self, id: u64) -> Option<JobView> {
        self.jobs
            .lock()
            .expect("job table")
            .get(&id)
            .map(|(kind, status)| JobView {
                id,
                kind: *kind,
                status: status.clone(),
            })
    }
}

fn spawn(
    state: &AppState,
    kind: JobKind,
    work: impl FnOnce() -> qnlearn_core::Result<JobResult> + Send + 'static,
) -> (StatusCode, Json<JobCreated>) {
    let id = state.jobs.insert(kind);
    let jobs = state.jobs.clone();
    tokio::task::spawn_blocking(move || {
        tracing::info!(id, ?kind, "job started");
        let status = match work() {
            Ok(result) => JobStatus::Done { result },
            Err(e) => {
                tracing::warn!(id, error = %e, "job failed");
                JobStatus::Failed {
                    error: AppError::from(e).into_body(),
                }
            }
        };
        jobs.finish(id, status);
    });
    (StatusCode::ACCEPTED, Json(JobCreated { id, kind }))
}

pub async fn submit_generate(
    State(state): State<AppState>,
    Body(job): Body<GenerateJob>,
) -> Result<(StatusCode, Json<JobCreated>), AppError> {
    let model = job.model.validated()?;
    job.spec.check()?;
    Ok(spawn(&state, JobKind::Generate, move || {
        generate_dataset(&model, &job.spec, job.seed).map(JobResult::Generate)
    }))
}

pub async fn submit_train(
    State(state): State<AppState>,
    Body(job): Body<TrainJob>,
) -> Result<(StatusCode, Json<JobCreated>), AppError> {
    job.config.check()?;
    Ok(spawn(&state, JobKind::Train, move || {
        train(&job.dataset, &job.config).map(|r| JobResult::Train(Box::new(r)))
    }))
}

pub async fn submit_benchmark(
    State(state): State<AppState>,
    Body(job): Body<BenchmarkJob>,
) -> Result<(StatusCode, Json<JobCreated>), AppError> {
    job.spec.generation.check()?;
    job.spec.train.check()?;
    Ok(spawn(&state, JobKind::Benchmark, move || {
        run_benchmark(&job.spec, job.seed).map(|r| JobResult::Benchmark(Box::new(r)))
    }))
}

pub async fn status(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Json<JobView>, AppError> {
    state
        .jobs
        .view(id)
        .map(Json)
        .ok_or_else(|| AppError::new(StatusCode::NOT_FOUND, format!("no job {id}")))
}
