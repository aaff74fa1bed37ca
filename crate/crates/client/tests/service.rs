use qnlearn_api::*;
use qnlearn_client::Client;
use qnlearn_core::experiment::GenerationSpec;
use qnlearn_core::{load_balancer, GridSpec, Overrides, QnModel, RandomQnConfig, Scenario, TrainConfig};
use reqwest::StatusCode;

async fn spawn_server() -> Client {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(qnlearn_server::serve(listener));
    Client::new(format!("http://{addr}"))
}

#[tokio::test]
async fn health_and_validation() {
    let c = spawn_server().await;
    assert_eq!(c.health().await.unwrap().status, "ok");
    assert!(c.validate(&load_balancer()).await.unwrap().valid);
    let bad = QnModel {
        s: vec![1, 1],
        mu: vec![1.0, 1.0],
        p: vec![vec![0.0, 0.9], vec![1.0, 0.0]],
    };
    let v = c.validate(&bad).await.unwrap();
    assert!(!v.valid);
    assert_eq!(v.messages, vec!["row 1 sums to 0.9".to_string()]);
}

#[tokio::test]
async fn predictions_match_library() {
    let c = spawn_server().await;
    let grid = GridSpec::new(0.01, 2).unwrap();
    let tr = c
        .predict(&PredictRequest {
            model: load_balancer(),
            x0: vec![26.0, 86.0, 0.0],
            grid,
        })
        .await
        .unwrap();
    assert_eq!(tr.samples[1], vec![29.04, 82.83, 0.13]);

    let wrong = c
        .predict(&PredictRequest {
            model: load_balancer(),
            x0: vec![1.0, 2.0],
            grid,
        })
        .await
        .unwrap_err();
    assert_eq!(wrong.status(), Some(StatusCode::UNPROCESSABLE_ENTITY));

    let scenario = Scenario {
        base_model: load_balancer(),
        x0: vec![49.0, 47.0, 0.0],
        overrides: Overrides {
            s: Some(vec![1000, 6, 1]),
            ..Overrides::default()
        },
    };
    let grid = GridSpec::new(0.01, 101).unwrap();
    let wi = c
        .whatif(&WhatIfRequest {
            scenario,
            grid,
            ground_truth: None,
        })
        .await
        .unwrap();
    assert_eq!(wi.err_pct, None);
    let again = c
        .whatif(&WhatIfRequest {
            scenario: Scenario {
                base_model: load_balancer().with_servers(vec![1000, 6, 1]).unwrap(),
                x0: vec![49.0, 47.0, 0.0],
                overrides: Overrides::default(),
            },
            grid,
            ground_truth: Some(wi.predicted.clone()),
        })
        .await
        .unwrap();
    assert_eq!(again.err_pct, Some(0.0));
}

#[tokio::test]
async fn simulate_is_reproducible() {
    let c = spawn_server().await;
    let req = SimulateRequest {
        model: load_balancer(),
        x0: vec![10, 5, 0],
        grid: GridSpec::new(0.05, 21).unwrap(),
        replications: 8,
        seed: 3,
    };
    let a = c.simulate(&req).await.unwrap();
    assert_eq!(a, c.simulate(&req).await.unwrap());
    assert!(a.samples.iter().all(|r| (r.iter().sum::<f64>() - 15.0).abs() < 1e-9));
}

#[tokio::test]
async fn jobs_generate_then_train() {
    let c = spawn_server().await;
    let ds = c
        .generate(&GenerateJob {
            model: load_balancer(),
            spec: GenerationSpec {
                traces: 4,
                x0_range: [0, 20],
                replications: 10,
                dt: 0.01,
                points: Some(101),
                horizon: None,
            },
            seed: 1,
        })
        .await
        .unwrap();
    assert_eq!(ds.traces.len(), 4);
    let report = c
        .train(&TrainJob {
            dataset: ds.clone(),
            config: TrainConfig {
                max_iters: 20,
                ..TrainConfig::default()
            },
        })
        .await
        .unwrap();
    // the service result equals a local run bit for bit
    let local = qnlearn_core::train(
        &ds,
        &TrainConfig {
            max_iters: 20,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert_eq!(report.to_json().unwrap(), local.to_json().unwrap());

    let eval = c
        .eval(&EvalRequest {
            model: report.model.clone(),
            traces: ds.traces.clone(),
        })
        .await
        .unwrap();
    assert_eq!(eval.err_pct.len(), 4);
}

#[tokio::test]
async fn failed_and_missing_jobs() {
    let c = spawn_server().await;
    let empty = qnlearn_core::Dataset {
        s: vec![1, 1],
        dt: 0.1,
        traces: vec![],
    };
    let err = c
        .train(&TrainJob {
            dataset: empty,
            config: TrainConfig::default(),
        })
        .await
        .unwrap_err();
    assert!(err.to_string().contains("empty dataset"), "{err}");
    let missing = c.job(999).await.unwrap_err();
    assert_eq!(missing.status(), Some(StatusCode::NOT_FOUND));
}

#[tokio::test]
async fn model_utilities() {
    let c = spawn_server().await;
    let m = c.random_model(&RandomQnConfig::benchmark(4, 9)).await.unwrap();
    assert_eq!(m, qnlearn_core::random_model(&RandomQnConfig::benchmark(4, 9)).unwrap());
    let t = c
        .transform_selfloop(&SelfLoopRequest {
            p: vec![vec![0.5, 0.5], vec![1.0, 0.0]],
            mu: vec![2.0, 3.0],
            pi: vec![0.0, 0.0],
        })
        .await
        .unwrap();
    assert_eq!(t.p, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    assert_eq!(t.mu, vec![1.0, 3.0]);
    let s = c.summary(&[1.0, 2.0, 3.0, 4.0, 100.0]).await.unwrap();
    assert_eq!(s.outliers, vec![100.0]);
    let b = c
        .bottleneck(&BottleneckRequest {
            model: load_balancer().with_servers(vec![1000, 6, 1]).unwrap(),
            x0: vec![49.0, 47.0, 0.0],
            dt: 0.01,
            server_step: Some(20),
        })
        .await
        .unwrap();
    assert_eq!(b.station, 2);
    assert_eq!(b.shift.unwrap().shifted_to, 1);
    let malformed = c.summary(&[]).await.unwrap_err();
    assert_eq!(malformed.status(), Some(StatusCode::UNPROCESSABLE_ENTITY));
}
