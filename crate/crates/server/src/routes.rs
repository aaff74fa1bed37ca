use axum::Json;
use qnlearn_api::*;
use qnlearn_core::analysis::{bottleneck_ratios, predict_like, steady_state};
use qnlearn_core::{
    ensemble_average, forward_trajectory, prediction_error, random_model, selfloop_transform, shift_bottleneck,
    summarize_errors, whatif as run_whatif, EnsembleConfig, ErrorSummary, QnModel, RandomQnConfig, SelfLoopSpec,
};

use crate::error::{blocking, AppError, Body};

type Reply<T> = Result<Json<T>, AppError>;

pub async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

pub async fn validate(Body(model): Body<QnModel>) -> Json<ValidateResponse> {
    let violations = model.validate();
    Json(ValidateResponse {
        valid: violations.is_empty(),
        messages: violations.iter().map(ToString::to_string).collect(),
        violations,
    })
}

pub async fn random(Body(cfg): Body<RandomQnConfig>) -> Reply<QnModel> {
    Ok(Json(random_model(&cfg)?))
}

pub async fn transform_selfloop(Body(req): Body<SelfLoopRequest>) -> Reply<SelfLoopResponse> {
    let spec = SelfLoopSpec::new(req.pi)?;
    let (p, mu) = selfloop_transform(&req.p, &req.mu, &spec)?;
    Ok(Json(SelfLoopResponse { p, mu }))
}

pub async fn simulate(Body(req): Body<SimulateRequest>) -> Reply<qnlearn_core::Trace> {
    let trace = blocking(move || {
        let cfg = EnsembleConfig {
            replications: req.replications,
            grid: req.grid,
            seed: req.seed,
        };
        ensemble_average(&req.model, &req.x0, &cfg)
    })
    .await?;
    Ok(Json(trace))
}

pub async fn predict(Body(req): Body<PredictRequest>) -> Reply<qnlearn_core::Trace> {
    let trace = blocking(move || forward_trajectory(&req.model.validated()?, &req.x0, req.grid)).await?;
    Ok(Json(trace))
}

pub async fn whatif(Body(req): Body<WhatIfRequest>) -> Reply<WhatIfResponse> {
    let out = blocking(move || {
        let predicted = run_whatif(&req.scenario, req.grid)?;
        let err_pct = req
            .ground_truth
            .as_ref()
            .map(|gt| prediction_error(&predicted, gt))
            .transpose()?;
        Ok(WhatIfResponse { predicted, err_pct })
    })
    .await?;
    Ok(Json(out))
}

pub async fn eval(Body(req): Body<EvalRequest>) -> Reply<EvalResponse> {
    let out = blocking(move || {
        let model = req.model.validated()?;
        let err_pct = req
            .traces
            .iter()
            .map(|t| prediction_error(&predict_like(&model, t)?, t))
            .collect::<qnlearn_core::Result<Vec<_>>>()?;
        let summary = summarize_errors(&err_pct)?;
        Ok(EvalResponse { err_pct, summary })
    })
    .await?;
    Ok(Json(out))
}

pub async fn bottleneck(Body(req): Body<BottleneckRequest>) -> Reply<BottleneckResponse> {
    let out = blocking(move || {
        let model = req.model.validated()?;
        let st = steady_state(&model, &req.x0, req.dt)?;
        let ratios = bottleneck_ratios(&model, &req.x0, st.grid)?;
        let station = ratios
            .iter()
            .enumerate()
            .fold(0, |best, (i, &r)| if r > ratios[best] { i } else { best });
        let shift = req
            .server_step
            .map(|step| shift_bottleneck(&model, &req.x0, req.dt, step))
            .transpose()?;
        Ok(BottleneckResponse {
            station,
            ratios,
            steady_state: st.x,
            shift,
        })
    })
    .await?;
    Ok(Json(out))
}

pub async fn summary(Body(req): Body<SummaryRequest>) -> Reply<ErrorSummary> {
    Ok(Json(summarize_errors(&req.values)?))
}
