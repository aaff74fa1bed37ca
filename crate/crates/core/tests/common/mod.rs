#![allow(dead_code)]

use qnlearn_core::{QnModel, RawParams, Trace};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Euler trajectory of the fluid ODE with self loops allowed:
/// `dx_k = sum_{i != k} P_ik mu_i u_i + (P_kk - 1) mu_k u_k`.
pub fn generalized_trajectory(
    p: &[Vec<f64>],
    mu: &[f64],
    s: &[u32],
    x0: &[f64],
    dt: f64,
    points: usize,
) -> Vec<Vec<f64>> {
    let m = mu.len();
    let mut out = vec![x0.to_vec()];
    for _ in 1..points {
        let x = out.last().unwrap();
        let u: Vec<f64> = x.iter().zip(s).map(|(&x, &s)| x.min(s as f64)).collect();
        let next = (0..m)
            .map(|k| {
                let inflow: f64 = (0..m).filter(|&i| i != k).map(|i| p[i][k] * mu[i] * u[i]).sum();
                x[k] + dt * (inflow + (p[k][k] - 1.0) * mu[k] * u[k])
            })
            .collect();
        out.push(next);
    }
    out
}

/// Random row-stochastic matrix whose diagonal is strictly positive.
pub fn routing_with_loops(rng: &mut impl Rng, m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| {
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        })
        .collect()
}

pub fn random_raw(rng: &mut impl Rng, m: usize) -> RawParams {
    RawParams {
        w_p: (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if i == j { 0.0 } else { rng.random_range(0.2..1.5) })
                    .collect()
            })
            .collect(),
        w_mu: (0..m).map(|_| rng.random_range(1.0..5.0)).collect(),
    }
}

/// Smallest distance from any non-smooth point of the loss: `x = s` in the
/// fluid path, `x = y` in the residuals, and the runner-up of the max.
pub fn kink_margin(model: &QnModel, trace: &Trace) -> f64 {
    let pred = qnlearn_core::forward_trajectory(model, trace.initial(), trace.grid()).unwrap();
    let mut margin = f64::INFINITY;
    let mut gaps = Vec::new();
    for (h, (xp, y)) in pred.samples.iter().zip(&trace.samples).enumerate() {
        for k in 0..model.stations() {
            margin = margin.min((xp[k] - model.s[k] as f64).abs());
            if h > 0 {
                margin = margin.min((xp[k] - y[k]).abs());
            }
        }
        if h > 0 {
            gaps.push(xp.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>());
        }
    }
    gaps.sort_by(|a, b| b.total_cmp(a));
    if gaps.len() > 1 {
        margin = margin.min(gaps[0] - gaps[1]);
    }
    margin
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, q)| r.iter().zip(q).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}
