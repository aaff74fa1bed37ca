//! Reproducible experiment pipelines: synthetic dataset generation and the
//! random-network benchmark (learn, then predict under unseen populations
//! and concurrency levels).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    prediction_error, shift_bottleneck, summarize_errors, BottleneckShift, ErrorSummary, ScatterPoint,
};
use crate::error::{Error, Result};
use crate::fluid::forward_trajectory;
use crate::learner::{train, TrainConfig, TrainReport};
use crate::model::{random_model, QnModel, RandomQnConfig};
use crate::seed::{self, Stream};
use crate::ssa::{ensemble_average, EnsembleConfig};
use crate::trace::{Dataset, GridSpec, Trace};

/// How synthetic traces are produced: `traces` initial populations, each
/// station's count uniform in `x0_range`, each trace the mean of
/// `replications` simulated paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub traces: usize,
    pub x0_range: [u32; 2],
    pub replications: usize,
    pub dt: f64,
    /// Grid points; derived from `T` when absent.
    #[serde(default, rename = "H", skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl GenerationSpec {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::resolve(self.dt, self.points, self.horizon)
    }

    pub fn check(&self) -> Result<()> {
        self.grid()?;
        if self.traces == 0 {
            return Err(Error::config("at least one trace is required"));
        }
        if self.replications == 0 {
            return Err(Error::config("at least one replication is required"));
        }
        let [lo, hi] = self.x0_range;
        if lo > hi || hi == 0 {
            return Err(Error::config(format!("bad population range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// Draws `count` initial populations with every station uniform in
/// `range`; all-empty draws are redrawn.
pub fn sample_populations(stations: usize, count: usize, range: [u32; 2], seed_value: u64) -> Result<Vec<Vec<u32>>> {
    let [lo, hi] = range;
    if lo > hi || hi == 0 {
        return Err(Error::config(format!("bad population range [{lo}, {hi}]")));
    }
    let mut rng = seed::rng(seed_value);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<u32> = (0..stations).map(|_| rng.random_range(lo..=hi)).collect();
        if x.iter().any(|&v| v > 0) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Ensemble-averaged traces of `model`, one per population.
pub fn simulate_traces(
    model: &QnModel,
    populations: &[Vec<u32>],
    replications: usize,
    grid: GridSpec,
    seed_value: u64,
) -> Result<Vec<Trace>> {
    populations
        .iter()
        .enumerate()
        .map(|(i, x0)| {
            let cfg = EnsembleConfig {
                replications,
                grid,
                seed: seed::derive(seed_value, Stream::Generation, i as u64),
            };
            ensemble_average(model, x0, &cfg)
        })
        .collect()
}

/// Synthetic dataset for `model`. Deterministic in `seed_value`.
pub fn generate_dataset(model: &QnModel, spec: &GenerationSpec, seed_value: u64) -> Result<Dataset> {
    spec.check()?;
    let populations = sample_populations(
        model.stations(),
        spec.traces,
        spec.x0_range,
        seed::derive(seed_value, Stream::Population, 0),
    )?;
    let traces = simulate_traces(model, &populations, spec.replications, spec.grid()?, seed_value)?;
    Ok(Dataset {
        s: model.s.clone(),
        dt: spec.dt,
        traces,
    })
}

/// The random-network benchmark: sample networks, learn each from synthetic
/// traces, then score predictions under unseen populations and after
/// relieving the bottleneck.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub models: usize,
    #[serde(rename = "M")]
    pub stations: usize,
    #[serde(default = "default_rate_range")]
    pub rate_range: [f64; 2],
    #[serde(default = "default_server_range")]
    pub server_range: [u32; 2],
    pub generation: GenerationSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// Unseen initial populations per model for the population what-if.
    pub unseen_populations: usize,
    /// Populations per model for the concurrency what-if.
    pub concurrency_populations: usize,
    #[serde(default = "default_server_step")]
    pub server_step: u32,
}

fn default_rate_range() -> [f64; 2] {
    [4.0, 30.0]
}

fn default_server_range() -> [u32; 2] {
    [15, 30]
}

fn default_server_step() -> u32 {
    20
}

/// One prediction compared with a fresh ground-truth simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub x0: Vec<u32>,
    #[serde(rename = "N")]
    pub population: f64,
    pub err_pct: f64,
    /// Error of the ground-truth parameters' own fluid prediction: the part
    /// of `err_pct` no fluid model can remove.
    pub fluid_floor_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub truth: QnModel,
    pub report: TrainReport,
    pub population: Vec<WhatIfResult>,
    pub shift: BottleneckShift,
    pub concurrency: Vec<WhatIfResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub spec: BenchmarkSpec,
    pub outcomes: Vec<ModelOutcome>,
    pub population_summary: ErrorSummary,
    pub concurrency_summary: ErrorSummary,
}

impl BenchmarkReport {
    pub fn population_scatter(&self) -> Vec<ScatterPoint> {
        self.scatter(|o| &o.population)
    }

    pub fn concurrency_scatter(&self) -> Vec<ScatterPoint> {
        self.scatter(|o| &o.concurrency)
    }

    fn scatter(&self, pick: impl Fn(&ModelOutcome) -> &Vec<WhatIfResult>) -> Vec<ScatterPoint> {
        self.outcomes
            .iter()
            .flat_map(|o| {
                let m = o.truth.stations();
                pick(o).iter().map(move |r| ScatterPoint {
                    population: r.population,
                    err_pct: r.err_pct,
                    stations: m,
                })
            })
            .collect()
    }
}

/// Scores `learned` against ensemble simulations of `truth` from each
/// population.
pub fn evaluate_whatif(
    truth: &QnModel,
    learned: &QnModel,
    populations: &[Vec<u32>],
    replications: usize,
    grid: GridSpec,
    seed_value: u64,
) -> Result<Vec<WhatIfResult>> {
    let reference = simulate_traces(truth, populations, replications, grid, seed_value)?;
    populations
        .iter()
        .zip(&reference)
        .map(|(x0, gt)| {
            let pred = forward_trajectory(learned, gt.initial(), grid)?;
            let floor = forward_trajectory(truth, gt.initial(), grid)?;
            Ok(WhatIfResult {
                x0: x0.clone(),
                population: gt.population(),
                err_pct: prediction_error(&pred, gt)?,
                fluid_floor_pct: prediction_error(&floor, gt)?,
            })
        })
        .collect()
}

/// Runs the learning and prediction steps for one ground-truth network.
pub fn benchmark_model(truth: &QnModel, spec: &BenchmarkSpec, seed_value: u64) -> Result<ModelOutcome> {
    let gen = &spec.generation;
    let grid = gen.grid()?;
    let dataset = generate_dataset(truth, gen, seed_value)?;
    let mut train_cfg = spec.train.clone();
    train_cfg.init_seed = seed::derive(seed_value, Stream::Init, 0);
    let report = train(&dataset, &train_cfg)?;
    let learned = &report.model;

    let m = truth.stations();
    let unseen = sample_populations(
        m,
        spec.unseen_populations,
        gen.x0_range,
        seed::derive(seed_value, Stream::Population, 1),
    )?;
    let population = evaluate_whatif(
        truth,
        learned,
        &unseen,
        gen.replications,
        grid,
        seed::derive(seed_value, Stream::Generation, 1),
    )?;

    // bottleneck found at the mid-range population of the ground truth
    let mid = f64::from(gen.x0_range[0] + gen.x0_range[1]) / 2.0;
    let shift = shift_bottleneck(truth, &vec![mid; m], gen.dt, spec.server_step)?;
    let truth_shifted = truth.with_servers(shift.s.clone())?;
    let learned_shifted = learned.with_servers(shift.s.clone())?;
    let pops = sample_populations(
        m,
        spec.concurrency_populations,
        gen.x0_range,
        seed::derive(seed_value, Stream::Population, 2),
    )?;
    let concurrency = evaluate_whatif(
        &truth_shifted,
        &learned_shifted,
        &pops,
        gen.replications,
        grid,
        seed::derive(seed_value, Stream::Generation, 2),
    )?;

    Ok(ModelOutcome {
        truth: truth.clone(),
        report,
        population,
        shift,
        concurrency,
    })
}

pub fn run_benchmark(spec: &BenchmarkSpec, seed_value: u64) -> Result<BenchmarkReport> {
    if spec.models == 0 {
        return Err(Error::config("benchmark needs at least one model"));
    }
    let outcomes = (0..spec.models)
        .map(|k| {
            let model_seed = seed::derive(seed_value, Stream::Model, k as u64);
            let truth = random_model(&RandomQnConfig {
                stations: spec.stations,
                rate_range: spec.rate_range,
                server_range: spec.server_range,
                seed: model_seed,
            })?;
            benchmark_model(&truth, spec, model_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let pop: Vec<f64> = outcomes
        .iter()
        .flat_map(|o| o.population.iter().map(|r| r.err_pct))
        .collect();
    let conc: Vec<f64> = outcomes
        .iter()
        .flat_map(|o| o.concurrency.iter().map(|r| r.err_pct))
        .collect();
    Ok(BenchmarkReport {
        seed: seed_value,
        spec: spec.clone(),
        population_summary: summarize_errors(&pop)?,
        concurrency_summary: summarize_errors(&conc)?,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_balancer;

    fn tiny() -> GenerationSpec {
        GenerationSpec {
            traces: 3,
            x0_range: [0, 10],
            replications: 4,
            dt: 0.01,
            points: Some(11),
            horizon: None,
        }
    }

    #[test]
    fn grid_from_h_or_t() {
        let mut g = tiny();
        assert_eq!(g.grid().unwrap().points, 11);
        g.points = None;
        g.horizon = Some(10.0);
        assert_eq!(g.grid().unwrap().points, 1001);
        g.points = Some(1000);
        assert!(g.grid().is_err());
        g.points = None;
        g.horizon = None;
        assert!(g.grid().is_err());
    }

    #[test]
    fn populations_in_range_and_nonempty() {
        let pops = sample_populations(3, 200, [0, 1], 5).unwrap();
        assert!(pops
            .iter()
            .all(|x| x.iter().all(|&v| v <= 1) && x.iter().any(|&v| v > 0)));
        assert_eq!(pops, sample_populations(3, 200, [0, 1], 5).unwrap());
        assert!(sample_populations(3, 1, [0, 0], 5).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let m = load_balancer();
        let a = generate_dataset(&m, &tiny(), 42).unwrap();
        let b = generate_dataset(&m, &tiny(), 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.traces.len(), 3);
        assert!(a.traces.iter().all(|t| t.points() == 11));
        assert_ne!(a, generate_dataset(&m, &tiny(), 43).unwrap());
    }

    #[test]
    fn minimal_generation() {
        let spec = GenerationSpec {
            traces: 1,
            replications: 1,
            points: Some(2),
            ..tiny()
        };
        let ds = generate_dataset(&load_balancer(), &spec, 0).unwrap();
        assert_eq!(ds.traces.len(), 1);
        assert_eq!(ds.traces[0].points(), 2);
    }
}
