//! Prediction error of a model against a trace, and its exact subgradient
//! by reverse-mode differentiation through the Euler recurrence.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fluid::Dynamics;
use crate::model::QnModel;
use crate::trace::Trace;

use super::params::{row_sums, RawParams};

/// Gradient with respect to the materialized parameters. The diagonal of
/// `p` is structurally zero and always carries zero gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGradient {
    pub p: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
}

/// Gradient with respect to the raw weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub w_p: Vec<Vec<f64>>,
    pub w_mu: Vec<f64>,
}

impl Gradients {
    pub fn zeros(stations: usize) -> Self {
        Gradients {
            w_p: vec![vec![0.0; stations]; stations],
            w_mu: vec![0.0; stations],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.w_p.iter_mut().zip(&other.w_p) {
            a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
        }
        self.w_mu.iter_mut().zip(&other.w_mu).for_each(|(a, b)| *a += b);
    }

    pub(crate) fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.w_p.iter().flatten().copied().collect();
        out.extend_from_slice(&self.w_mu);
        out
    }
}

/// Worst-step misplaced-client percentage between two row-major
/// trajectories: `max_{h >= 1} |a_h - b_h|_1 / (2N) * 100`. Returns the
/// error and the first step attaining it.
pub(crate) fn max_misplacement(a: &[f64], b: &[f64], m: usize, population: f64) -> (f64, usize) {
    let mut worst = 0.0;
    let mut at = 1;
    for (h, (ra, rb)) in a.chunks(m).zip(b.chunks(m)).enumerate().skip(1) {
        let gap: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).sum();
        if gap > worst {
            worst = gap;
            at = h;
        }
    }
    (worst / (2.0 * population) * 100.0, at)
}

fn check_pair(model: &QnModel, trace: &Trace) -> Result<f64> {
    trace.grid().check()?;
    check_len("trace stations", trace.stations(), model.stations())?;
    let n = trace.population();
    if !(n > 0.0) {
        return Err(Error::config("trace population must be positive"));
    }
    Ok(n)
}

fn flat(trace: &Trace) -> Vec<f64> {
    trace.samples.iter().flatten().copied().collect()
}

/// Error of `model` on `trace`, in percent: the model is run from the
/// trace's first sample on the trace's grid and scored by its worst step.
pub fn loss(model: &QnModel, trace: &Trace) -> Result<f64> {
    let n = check_pair(model, trace)?;
    let m = model.stations();
    let pred = Dynamics::new(model).unroll(trace.initial(), trace.dt, trace.points());
    Ok(max_misplacement(&flat(trace), &pred, m, n).0)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss and its gradient with respect to `P` and `mu`.
///
/// Subgradient conventions: the worst step is the earliest on ties,
/// `sign(0) = 0`, and `d min(x, s)/dx = 1` for `x <= s`.
pub fn model_gradient(model: &QnModel, trace: &Trace) -> Result<(f64, ModelGradient)> {
    let n = check_pair(model, trace)?;
    let m = model.stations();
    let dt = trace.dt;
    let dy = Dynamics::new(model);
    let target = flat(trace);
    let xs = dy.unroll(trace.initial(), dt, trace.points());
    let (err, worst) = max_misplacement(&target, &xs, m, n);

    let mut grad = ModelGradient {
        p: vec![vec![0.0; m]; m],
        mu: vec![0.0; m],
    };
    let scale = 100.0 / (2.0 * n);
    // adjoint of x at the worst step
    let mut g: Vec<f64> = (0..m)
        .map(|k| -scale * sign(target[worst * m + k] - xs[worst * m + k]))
        .collect();
    if g.iter().all(|&v| v == 0.0) {
        return Ok((err, grad));
    }
    let mut a = vec![0.0; m];
    for h in (1..=worst).rev() {
        let prev = &xs[(h - 1) * m..h * m];
        for i in 0..m {
            let row = &dy.p[i * m..(i + 1) * m];
            let inflow: f64 = row.iter().zip(&g).map(|(p, g)| p * g).sum();
            // sensitivity of x_h to the flow leaving station i
            a[i] = inflow - g[i];
        }
        for i in 0..m {
            let u = prev[i].min(dy.s[i]);
            grad.mu[i] += dt * u * a[i];
            let out = dt * dy.mu[i] * u;
            if out != 0.0 {
                for k in (0..m).filter(|&k| k != i) {
                    grad.p[i][k] += out * g[k];
                }
            }
        }
        for i in 0..m {
            if prev[i] <= dy.s[i] {
                g[i] += dt * dy.mu[i] * a[i];
            }
        }
    }
    Ok((err, grad))
}

/// Pulls a gradient on `P` back through row normalization:
/// `dL/dw_ik = (G_ik - sum_j P_ij G_ij) / S_i` for `k != i`.
pub fn normalization_backward(raw: &RawParams, model: &QnModel, g: &ModelGradient) -> Gradients {
    let m = raw.stations();
    let sums = row_sums(raw);
    let mut out = Gradients::zeros(m);
    for i in 0..m {
        let mean: f64 = (0..m).filter(|&j| j != i).map(|j| model.p[i][j] * g.p[i][j]).sum();
        for k in (0..m).filter(|&k| k != i) {
            out.w_p[i][k] = (g.p[i][k] - mean) / sums[i];
        }
    }
    out.w_mu.copy_from_slice(&g.mu);
    out
}

/// Loss of the model materialized from `raw` on `trace`, with its gradient
/// with respect to the raw weights.
pub fn backward(raw: &RawParams, s: &[u32], trace: &Trace) -> Result<(f64, Gradients)> {
    let model = super::materialize(raw, s)?;
    let (err, g) = model_gradient(&model, trace)?;
    Ok((err, normalization_backward(raw, &model, &g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::forward_trajectory;
    use crate::learner::materialize;
    use crate::model::load_balancer;
    use crate::trace::GridSpec;

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let m = load_balancer();
        let tr = forward_trajectory(&m, &[20.0, 5.0, 3.0], GridSpec::new(0.01, 50).unwrap()).unwrap();
        assert_eq!(loss(&m, &tr).unwrap(), 0.0);
        let raw = RawParams::from_model(&m);
        let (err, g) = backward(&raw, &m.s, &tr).unwrap();
        assert_eq!(err, 0.0);
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_misplaced_client() {
        // N = 10, equilibrium of a symmetric pair, one client misplaced at step 2
        let m = QnModel::new(vec![10, 10], vec![1.0, 1.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let mut tr = forward_trajectory(&m, &[5.0, 5.0], GridSpec::new(0.1, 4).unwrap()).unwrap();
        tr.samples[2] = vec![6.0, 4.0];
        assert!((loss(&m, &tr).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn loss_is_homogeneous() {
        let m = load_balancer();
        let tr = Trace {
            dt: 0.01,
            samples: vec![vec![10.0, 4.0, 2.0], vec![9.0, 5.0, 2.0], vec![8.0, 5.5, 2.5]],
        };
        let mut doubled = tr.clone();
        doubled.samples.iter_mut().flatten().for_each(|v| *v *= 2.0);
        // the min(x, s) stays inactive at both scales
        let (a, b) = (loss(&m, &tr).unwrap(), loss(&m, &doubled).unwrap());
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn two_station_single_step_closed_form() {
        // x0 = (3, 1) below s = (5, 5); mu = (2, 1); dt = 0.1 moves x to
        // (2.5, 1.5) while the trace stays at (3, 1), so e = (0.5, -0.5).
        // dL/dmu0 = c dt x0_0 (sgn e0 - sgn e1), dL/dmu1 = c dt x0_1 (sgn e1 - sgn e0)
        // with c = 100 / (2 N) = 12.5.
        let raw = RawParams {
            w_p: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            w_mu: vec![2.0, 1.0],
        };
        let tr = Trace {
            dt: 0.1,
            samples: vec![vec![3.0, 1.0], vec![3.0, 1.0]],
        };
        let (err, g) = backward(&raw, &[5, 5], &tr).unwrap();
        assert!((err - 12.5).abs() < 1e-12);
        assert!((g.w_mu[0] - 7.5).abs() < 1e-12);
        assert!((g.w_mu[1] + 2.5).abs() < 1e-12);
        // a single outgoing route leaves nothing to learn in P
        assert_eq!(g.w_p, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn row_scaling_direction_is_flat() {
        let raw = RawParams {
            w_p: vec![vec![0.0, 0.7, 1.1], vec![0.4, 0.0, 1.3], vec![0.9, 0.6, 0.0]],
            w_mu: vec![3.0, 6.0, 4.5],
        };
        let s = [4, 3, 2];
        let tr = Trace {
            dt: 0.05,
            samples: vec![
                vec![6.0, 2.0, 1.0],
                vec![5.0, 2.5, 1.5],
                vec![4.2, 3.1, 1.7],
                vec![4.0, 3.0, 2.0],
            ],
        };
        let (_, g) = backward(&raw, &s, &tr).unwrap();
        for i in 0..3 {
            let dir: f64 = (0..3).map(|k| raw.w_p[i][k] * g.w_p[i][k]).sum();
            assert!(dir.abs() < 1e-12, "row {i}: {dir}");
        }
        assert!(materialize(&raw, &s).is_ok());
    }

    #[test]
    fn rejects_mismatched_trace() {
        let m = load_balancer();
        let tr = Trace {
            dt: 0.1,
            samples: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        assert!(loss(&m, &tr).is_err());
        let short = Trace {
            dt: 0.1,
            samples: vec![vec![1.0, 1.0, 0.0]],
        };
        assert!(loss(&m, &short).is_err());
    }
}
