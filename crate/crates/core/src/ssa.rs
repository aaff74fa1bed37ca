//! Exact stochastic simulation of a closed network's Markov chain
//! (Gillespie's direct method) and ensemble averaging onto a time grid.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::QnModel;
use crate::seed;
use crate::trace::{GridSpec, Trace};

/// One client leaving station `from` for station `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JumpEvent {
    pub from: usize,
    pub to: usize,
}

impl JumpEvent {
    /// Applies the jump. The event must be enabled (`x[from] >= 1`).
    pub fn apply(&self, x: &mut [u32]) {
        debug_assert!(x[self.from] >= 1);
        x[self.from] -= 1;
        x[self.to] += 1;
    }
}

/// Every enabled jump out of `x` with its rate
/// `P[i][j] * mu_i * min(x_i, s_i)`; zero-rate jumps are left out.
pub fn transition_rates(model: &QnModel, x: &[u32]) -> Result<Vec<(JumpEvent, f64)>> {
    check_len("state", x.len(), model.stations())?;
    let mut out = Vec::new();
    for (i, row) in model.p.iter().enumerate() {
        let busy = x[i].min(model.s[i]);
        if busy == 0 {
            continue;
        }
        let rate_i = model.mu[i] * busy as f64;
        for (j, &pij) in row.iter().enumerate() {
            let r = pij * rate_i;
            if j != i && r > 0.0 {
                out.push((JumpEvent { from: i, to: j }, r));
            }
        }
    }
    Ok(out)
}

/// A piecewise-constant sample path: `states[k]` holds on
/// `[times[k], times[k + 1])`, the last one until the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<u32>>,
    pub horizon: f64,
}

impl SamplePath {
    /// State in force at time `t` (the last event at or before `t`).
    pub fn state_at(&self, t: f64) -> &[u32] {
        let k = self.times.partition_point(|&e| e <= t);
        &self.states[k.saturating_sub(1)]
    }

    pub fn events(&self) -> usize {
        self.times.len() - 1
    }
}

/// Station-level rates with routing rows pre-accumulated for sampling.
struct Sampler {
    m: usize,
    s: Vec<u32>,
    mu: Vec<f64>,
    /// Per station, destinations with positive probability and their
    /// cumulative probabilities.
    dest: Vec<Vec<(usize, f64)>>,
}

impl Sampler {
    fn new(model: &QnModel) -> Self {
        let dest = model
            .p
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut acc = 0.0;
                row.iter()
                    .enumerate()
                    .filter(|&(j, &p)| j != i && p > 0.0)
                    .map(|(j, &p)| {
                        acc += p;
                        (j, acc)
                    })
                    .collect()
            })
            .collect();
        Sampler {
            m: model.stations(),
            s: model.s.clone(),
            mu: model.mu.clone(),
            dest,
        }
    }

    /// Advances `x` by one event. Returns the holding time before it, or
    /// `None` if no event is enabled.
    ///
    /// Choosing the source station with probability `mu_i min(x_i, s_i) / L`
    /// and then the destination from `P[i]` gives each jump `(i, j)` its
    /// probability `rate_ij / L`.
    fn step<R: Rng>(&self, x: &mut [u32], rates: &mut [f64], rng: &mut R) -> Option<f64> {
        let mut total = 0.0;
        for i in 0..self.m {
            let busy = x[i].min(self.s[i]);
            rates[i] = if busy == 0 || self.dest[i].is_empty() {
                0.0
            } else {
                self.mu[i] * busy as f64
            };
            total += rates[i];
        }
        if !(total > 0.0) {
            return None;
        }
        // inverse transform; 1 - U lies in (0, 1]
        let u: f64 = rng.random();
        let hold = -(1.0 - u).ln() / total;

        let mut target = rng.random::<f64>() * total;
        let mut from = self.m;
        for i in 0..self.m {
            if rates[i] > 0.0 {
                from = i;
                if target < rates[i] {
                    break;
                }
                target -= rates[i];
            }
        }
        let row = &self.dest[from];
        let pick = rng.random::<f64>() * row.last().map_or(1.0, |d| d.1);
        let to = row.iter().find(|d| pick < d.1).unwrap_or(row.last().unwrap()).0;
        JumpEvent { from, to }.apply(x);
        Some(hold)
    }

    fn path<R: Rng>(&self, x0: &[u32], horizon: f64, rng: &mut R) -> SamplePath {
        let mut x = x0.to_vec();
        let mut rates = vec![0.0; self.m];
        let mut path = SamplePath {
            times: vec![0.0],
            states: vec![x.clone()],
            horizon,
        };
        let mut now = 0.0;
        while let Some(hold) = self.step(&mut x, &mut rates, rng) {
            now += hold;
            if now > horizon {
                break;
            }
            path.times.push(now);
            path.states.push(x.clone());
        }
        path
    }

    /// Runs one path over `grid`, adding the state in force at each grid
    /// time into `acc` (row-major `H * M`).
    fn accumulate<R: Rng>(&self, x0: &[u32], grid: GridSpec, rng: &mut R, acc: &mut [u64]) {
        let m = self.m;
        let mut x = x0.to_vec();
        let mut next = x.clone();
        let mut rates = vec![0.0; m];
        let mut now = 0.0;
        let mut h = 0;
        loop {
            // x holds on [now, until)
            let until = self.step(&mut next, &mut rates, rng).map_or(f64::INFINITY, |d| now + d);
            while h < grid.points && grid.time(h) < until {
                for k in 0..m {
                    acc[h * m + k] += u64::from(x[k]);
                }
                h += 1;
            }
            if h == grid.points {
                return;
            }
            now = until;
            x.copy_from_slice(&next);
        }
    }
}

fn check_initial(model: &QnModel, x0: &[u32]) -> Result<()> {
    let v = model.validate();
    if !v.is_empty() {
        return Err(Error::InvalidModel(v));
    }
    check_len("initial state", x0.len(), model.stations())
}

/// Simulates one path of the chain from `x0` up to `horizon`.
pub fn simulate_ssa(model: &QnModel, x0: &[u32], horizon: f64, seed: u64) -> Result<SamplePath> {
    check_initial(model, x0)?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::config(format!("horizon must be non-negative, got {horizon}")));
    }
    Ok(Sampler::new(model).path(x0, horizon, &mut seed::rng(seed)))
}

/// Replications, grid and seed for an ensemble average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub replications: usize,
    pub grid: GridSpec,
    pub seed: u64,
}

/// Mean of `replications` independent paths, each read on the grid.
///
/// Replication `r` draws from its own ChaCha stream keyed by the seed, and
/// counts are summed as integers, so the result does not depend on how the
/// replications are scheduled.
pub fn ensemble_average(model: &QnModel, x0: &[u32], cfg: &EnsembleConfig) -> Result<Trace> {
    check_initial(model, x0)?;
    cfg.grid.check()?;
    if cfg.replications == 0 {
        return Err(Error::config("at least one replication is required"));
    }
    let m = model.stations();
    let cells = cfg.grid.points * m;
    let sampler = Sampler::new(model);
    let totals = (0..cfg.replications as u64)
        .into_par_iter()
        .fold(
            || vec![0u64; cells],
            |mut acc, r| {
                let mut rng = seed::replication_rng(cfg.seed, r);
                sampler.accumulate(x0, cfg.grid, &mut rng, &mut acc);
                acc
            },
        )
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(a, b)| *a += b);
                a
            },
        );
    let r = cfg.replications as f64;
    Ok(Trace {
        dt: cfg.grid.dt,
        samples: totals
            .chunks(m)
            .map(|row| row.iter().map(|&c| c as f64 / r).collect())
            .collect(),
    })
}
