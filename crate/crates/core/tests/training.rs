use qnlearn_core::experiment::{generate_dataset, GenerationSpec};
use qnlearn_core::learner::StopReason;
use qnlearn_core::*;

fn small_dataset(traces: usize) -> Dataset {
    let spec = GenerationSpec {
        traces,
        x0_range: [0, 20],
        replications: 10,
        dt: 0.01,
        points: Some(201),
        horizon: None,
    };
    generate_dataset(&load_balancer(), &spec, 11).unwrap()
}

#[test]
fn zero_iterations_returns_initial_model() {
    let ds = small_dataset(4);
    let cfg = TrainConfig {
        max_iters: 0,
        init_seed: 5,
        ..TrainConfig::default()
    };
    let report = train(&ds, &cfg).unwrap();
    assert_eq!(report.iterations, 0);
    assert_eq!(report.stop_reason, StopReason::MaxIters);
    assert_eq!(report.loss_history.len(), 1);
    let init = materialize(
        &RawParams::init(3, qnlearn_core::seed::derive(5, qnlearn_core::seed::Stream::Init, 0)),
        &ds.s,
    )
    .unwrap();
    assert_eq!(report.model, init);
}

#[test]
fn training_is_deterministic_and_feasible() {
    let ds = small_dataset(6);
    let cfg = TrainConfig {
        max_iters: 150,
        init_seed: 9,
        ..TrainConfig::default()
    };
    let a = train(&ds, &cfg).unwrap();
    let b = train(&ds, &cfg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert!(validate_model(&a.model).is_empty());
    assert!(a.validation_err_pct < a.loss_history[0].2);
    assert_eq!(a.train_traces.len() + a.validation_traces.len(), 6);
}

#[test]
fn report_json_loads_as_model() {
    let ds = small_dataset(4);
    let report = train(
        &ds,
        &TrainConfig {
            max_iters: 5,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    std::fs::write(&path, report.to_json().unwrap()).unwrap();
    assert_eq!(QnModel::load(&path).unwrap(), report.model);
}

#[test]
fn rejects_unusable_datasets() {
    let one = small_dataset(1);
    assert!(train(&one, &TrainConfig::default()).is_err());
    let empty = Dataset {
        s: vec![1000, 30, 25],
        dt: 0.01,
        traces: vec![],
    };
    assert!(matches!(
        train(&empty, &TrainConfig::default()),
        Err(Error::EmptyDataset)
    ));
    let mut mixed = small_dataset(3);
    mixed.traces[1].samples.iter_mut().for_each(|r| r.push(0.0));
    assert!(matches!(
        train(&mixed, &TrainConfig::default()),
        Err(Error::Dimension { .. })
    ));
    let bad = TrainConfig {
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    assert!(train(&small_dataset(3), &bad).is_err());
}

#[test]
fn dataset_round_trips_through_disk() {
    let ds = small_dataset(3);
    let dir = tempfile::tempdir().unwrap();
    let manifest = ds.save(dir.path()).unwrap();
    let back = Dataset::load(&manifest).unwrap();
    assert_eq!(back.s, ds.s);
    assert_eq!(back.traces.len(), 3);
    for (a, b) in back.traces.iter().zip(&ds.traces) {
        assert_eq!(a.samples, b.samples);
    }
    let first = std::fs::read(dir.path().join("trace_000.csv")).unwrap();
    ds.save(dir.path()).unwrap();
    assert_eq!(first, std::fs::read(dir.path().join("trace_000.csv")).unwrap());
}

#[test]
fn model_file_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let model = random_model(&RandomQnConfig::benchmark(6, 77)).unwrap();
    model.save(&a).unwrap();
    QnModel::load(&a).unwrap().save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
