//! HTTP/JSON service over the qnlearn library. Short computations answer
//! directly; dataset generation, training and benchmarks run as background
//! jobs that clients poll.

mod error;
mod jobs;
mod routes;

use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;

pub use error::AppError;
use jobs::JobTable;

/// Request bodies carry whole datasets, so the default 2 MB cap is lifted.
const BODY_LIMIT: usize = 1 << 30;

#[derive(Clone, Default)]
pub struct AppState {
    jobs: Arc<JobTable>,
}

pub fn router() -> Router {
    Router::new()
        .route("/health", get(routes::health))
        .route("/v1/models/validate", post(routes::validate))
        .route("/v1/models/random", post(routes::random))
        .route("/v1/models/transform-selfloop", post(routes::transform_selfloop))
        .route("/v1/simulate", post(routes::simulate))
        .route("/v1/predict", post(routes::predict))
        .route("/v1/whatif", post(routes::whatif))
        .route("/v1/eval", post(routes::eval))
        .route("/v1/bottleneck", post(routes::bottleneck))
        .route("/v1/summary", post(routes::summary))
        .route("/v1/jobs/generate", post(jobs::submit_generate))
        .route("/v1/jobs/train", post(jobs::submit_train))
        .route("/v1/jobs/benchmark", post(jobs::submit_benchmark))
        .route("/v1/jobs/{id}", get(jobs::status))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(AppState::default())
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}
