use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qnlearn_api::*;
use qnlearn_client::Client;
use qnlearn_core::analysis::{comparison_csv, scatter_csv};
use qnlearn_core::experiment::{BenchmarkSpec, GenerationSpec};
use qnlearn_core::seed::{self, Stream};
use qnlearn_core::{
    ingest_external_traces, Dataset, GridSpec, Overrides, QnModel, RandomQnConfig, Scenario, Trace, TrainConfig,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Cli, Command, GridArgs};

/// Scenario file for `whatif`; the base model comes from `--model`.
#[derive(Deserialize)]
struct ScenarioFile {
    x0: Vec<f64>,
    #[serde(default)]
    overrides: Overrides,
}

#[derive(Serialize)]
struct Provenance<'a> {
    seed: u64,
    model: &'a QnModel,
    generation: &'a GenerationSpec,
}

pub async fn run(cli: Cli) -> Result<()> {
    let out = cli.out_dir.clone();
    match cli.command {
        Command::Serve { addr } => {
            let listener = tokio::net::TcpListener::bind(&addr).await?;
            eprintln!("listening on {}", listener.local_addr()?);
            qnlearn_server::serve(listener).await?;
            Ok(())
        }
        Command::Ingest { servers, points, files } => {
            let s = parse_list(&servers, "servers")?;
            let grid = points.map(|h| GridSpec { dt: 0.0, points: h });
            let ds = ingest(&files, s, grid)?;
            let manifest = ds.save(&out)?;
            eprintln!("ingested {} traces into {}", ds.traces.len(), manifest.display());
            Ok(())
        }
        command => {
            let client = connect(cli.server.as_deref()).await?;
            remote(command, &client, cli.seed, &out).await
        }
    }
}

fn ingest(files: &[PathBuf], s: Vec<u32>, grid: Option<GridSpec>) -> Result<Dataset> {
    // the step of an expected-H check is read from the first file
    let grid = match grid {
        Some(g) => {
            let first = Trace::load_csv(&files[0])?;
            Some(GridSpec {
                dt: first.dt,
                points: g.points,
            })
        }
        None => None,
    };
    Ok(ingest_external_traces(files, s, grid)?)
}

async fn connect(server: Option<&str>) -> Result<Client> {
    if let Some(url) = server {
        return Ok(Client::new(url));
    }
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(qnlearn_server::serve(listener));
    Ok(Client::new(format!("http://{addr}")))
}

async fn remote(command: Command, client: &Client, seed_value: u64, out: &Path) -> Result<()> {
    match command {
        Command::Generate {
            model,
            random_stations,
            config,
        } => {
            let spec: GenerationSpec = read_json(&config)?;
            let model = match (model, random_stations) {
                (Some(path), _) => load_model(&path)?,
                (None, Some(m)) => {
                    client
                        .random_model(&RandomQnConfig::benchmark(
                            m,
                            seed::derive(seed_value, Stream::Model, 0),
                        ))
                        .await?
                }
                (None, None) => bail!("pass --model or --random-stations"),
            };
            let ds = client
                .generate(&GenerateJob {
                    model: model.clone(),
                    spec: spec.clone(),
                    seed: seed_value,
                })
                .await?;
            create(out)?;
            let manifest = ds.save(out)?;
            model.save(out.join("model.json"))?;
            write_json(
                &out.join("provenance.json"),
                &Provenance {
                    seed: seed_value,
                    model: &model,
                    generation: &spec,
                },
            )?;
            eprintln!("wrote {} traces, manifest {}", ds.traces.len(), manifest.display());
        }
        Command::Simulate {
            model,
            x0,
            replications,
            grid,
        } => {
            let req = SimulateRequest {
                model: load_model(&model)?,
                x0: parse_list(&x0, "x0")?,
                grid: grid_of(grid)?,
                replications,
                seed: seed_value,
            };
            let trace = client.simulate(&req).await?;
            create(out)?;
            write_file(&out.join("simulated.csv"), &trace.to_csv_string())?;
        }
        Command::Train {
            dataset,
            config,
            servers,
        } => {
            let mut ds = Dataset::load(&dataset)?;
            if let Some(s) = servers {
                let s: Vec<u32> = parse_list(&s, "servers")?;
                if s.len() != ds.stations() {
                    bail!(
                        "--servers has {} entries, dataset has {} stations",
                        s.len(),
                        ds.stations()
                    );
                }
                ds.s = s;
            }
            let mut cfg: TrainConfig = match config {
                Some(path) => read_json(&path)?,
                None => TrainConfig::default(),
            };
            cfg.init_seed = seed_value;
            let report = client
                .train(&TrainJob {
                    dataset: ds,
                    config: cfg,
                })
                .await?;
            create(out)?;
            report.model.save(out.join("model.json"))?;
            write_file(&out.join("report.json"), &report.to_json()?)?;
            println!(
                "validation error {:.4}% (best at iteration {}, stopped after {} on {})",
                report.validation_err_pct, report.best_iteration, report.iterations, report.stop_reason
            );
        }
        Command::Predict { model, x0, grid } => {
            let req = PredictRequest {
                model: load_model(&model)?,
                x0: parse_list(&x0, "x0")?,
                grid: grid_of(grid)?,
            };
            let trace = client.predict(&req).await?;
            create(out)?;
            write_file(&out.join("predicted.csv"), &trace.to_csv_string())?;
        }
        Command::Whatif {
            model,
            scenario,
            ground_truth,
            grid,
        } => {
            let file: ScenarioFile = read_json(&scenario)?;
            let truth = ground_truth.as_deref().map(Trace::load_csv).transpose()?;
            let grid = match (&truth, grid.points, grid.horizon) {
                (Some(t), None, None) => t.grid(),
                _ => grid_of(grid)?,
            };
            let req = WhatIfRequest {
                scenario: Scenario {
                    base_model: load_model(&model)?,
                    x0: file.x0,
                    overrides: file.overrides,
                },
                grid,
                ground_truth: truth.clone(),
            };
            let resp = client.whatif(&req).await?;
            create(out)?;
            write_file(&out.join("whatif.csv"), &resp.predicted.to_csv_string())?;
            if let (Some(t), Some(err)) = (&truth, resp.err_pct) {
                write_file(&out.join("comparison.csv"), &comparison_csv(t, &resp.predicted)?)?;
                write_json(&out.join("whatif.json"), &serde_json::json!({ "err_pct": err }))?;
                println!("prediction error {err:.4}%");
            }
        }
        Command::Eval { model, dataset, traces } => {
            let traces = match dataset {
                Some(path) => Dataset::load(&path)?.traces,
                None => traces
                    .iter()
                    .map(Trace::load_csv)
                    .collect::<qnlearn_core::Result<_>>()?,
            };
            let resp = client
                .eval(&EvalRequest {
                    model: load_model(&model)?,
                    traces,
                })
                .await?;
            create(out)?;
            let mut csv = String::from("trace,err_pct\n");
            for (k, e) in resp.err_pct.iter().enumerate() {
                csv.push_str(&format!("{k},{e}\n"));
            }
            write_file(&out.join("eval.csv"), &csv)?;
            write_json(&out.join("eval.json"), &resp)?;
            let s = &resp.summary;
            println!(
                "{} traces: median {:.4}%, p25 {:.4}%, p75 {:.4}%, max {:.4}%",
                s.count, s.median, s.p25, s.p75, s.max
            );
        }
        Command::TransformSelfloop { model, pi } => {
            let m = load_model(&model)?;
            let resp = client
                .transform_selfloop(&SelfLoopRequest {
                    p: m.p,
                    mu: m.mu,
                    pi: parse_list(&pi, "pi")?,
                })
                .await?;
            let transformed = QnModel {
                s: m.s,
                mu: resp.mu,
                p: resp.p,
            };
            create(out)?;
            transformed.save(out.join("transformed.json"))?;
        }
        Command::Bottleneck {
            model,
            x0,
            dt,
            server_step,
        } => {
            let req = BottleneckRequest {
                model: load_model(&model)?,
                x0: parse_list(&x0, "x0")?,
                dt,
                server_step,
            };
            let resp = client.bottleneck(&req).await?;
            create(out)?;
            write_json(&out.join("bottleneck.json"), &resp)?;
            println!(
                "bottleneck: station {} (ratio {:.4})",
                resp.station + 1,
                resp.ratios[resp.station]
            );
            if let Some(shift) = &resp.shift {
                println!(
                    "after adding {} servers it moves to station {}",
                    shift.added,
                    shift.shifted_to + 1
                );
            }
        }
        Command::Benchmark { config } => {
            let spec: BenchmarkSpec = read_json(&config)?;
            let report = client.benchmark(&BenchmarkJob { spec, seed: seed_value }).await?;
            create(out)?;
            let models = out.join("models");
            create(&models)?;
            for (k, o) in report.outcomes.iter().enumerate() {
                o.truth.save(models.join(format!("truth_{k}.json")))?;
                o.report.model.save(models.join(format!("learned_{k}.json")))?;
                write_file(&models.join(format!("report_{k}.json")), &o.report.to_json()?)?;
            }
            write_file(
                &out.join("population_scatter.csv"),
                &scatter_csv(&report.population_scatter()),
            )?;
            write_file(
                &out.join("concurrency_scatter.csv"),
                &scatter_csv(&report.concurrency_scatter()),
            )?;
            write_json(
                &out.join("summary.json"),
                &serde_json::json!({
                    "seed": report.seed,
                    "population": report.population_summary,
                    "concurrency": report.concurrency_summary,
                }),
            )?;
            write_json(&out.join("benchmark.json"), &report)?;
            println!(
                "population what-if: median {:.3}%, max {:.3}%; concurrency what-if: median {:.3}%, max {:.3}%",
                report.population_summary.median,
                report.population_summary.max,
                report.concurrency_summary.median,
                report.concurrency_summary.max
            );
        }
        Command::Serve { .. } | Command::Ingest { .. } => unreachable!("handled locally"),
    }
    Ok(())
}

fn grid_of(g: GridArgs) -> Result<GridSpec> {
    Ok(GridSpec::resolve(g.dt, g.points, g.horizon)?)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad {what} entry {v:?}: {e}"))
        })
        .collect()
}

fn load_model(path: &Path) -> Result<QnModel> {
    Ok(QnModel::load(path)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}
