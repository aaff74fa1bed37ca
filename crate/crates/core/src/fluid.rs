//! Fluid (mean-field) dynamics of a closed network and their forward-Euler
//! discretization. One Euler step is exactly one cell of the recurrent
//! network the learner differentiates through.

use crate::error::{check_len, Error, Result};
use crate::model::QnModel;
use crate::trace::{GridSpec, Trace};

/// A fluid state together with its busy-server vector `u = min(x, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl FluidState {
    pub fn new(x: Vec<f64>, s: &[u32]) -> Self {
        let u = busy(&x, s);
        FluidState { x, u }
    }
}

/// `min(x_i, s_i)` per station.
pub fn busy(x: &[f64], s: &[u32]) -> Vec<f64> {
    x.iter().zip(s).map(|(&x, &s)| x.min(s as f64)).collect()
}

/// Flattened parameters for the hot loops.
pub(crate) struct Dynamics {
    pub m: usize,
    pub s: Vec<f64>,
    pub mu: Vec<f64>,
    /// Row-major routing matrix.
    pub p: Vec<f64>,
}

impl Dynamics {
    pub fn new(model: &QnModel) -> Self {
        Dynamics {
            m: model.stations(),
            s: model.s.iter().map(|&s| s as f64).collect(),
            mu: model.mu.clone(),
            p: model.routing_flat(),
        }
    }

    /// Writes `dx/dt` at `x` into `out`; `flow` is scratch of length `M`.
    #[inline]
    pub fn rhs(&self, x: &[f64], flow: &mut [f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            flow[i] = self.mu[i] * x[i].min(self.s[i]);
        }
        for k in 0..m {
            out[k] = -flow[k];
        }
        for i in 0..m {
            let f = flow[i];
            if f == 0.0 {
                continue;
            }
            let row = &self.p[i * m..(i + 1) * m];
            for k in 0..m {
                out[k] += row[k] * f;
            }
        }
    }

    /// Euler recurrence from `x0`; returns `H * M` values row-major.
    pub fn unroll(&self, x0: &[f64], dt: f64, points: usize) -> Vec<f64> {
        let m = self.m;
        let mut xs = vec![0.0; points * m];
        xs[..m].copy_from_slice(x0);
        let mut flow = vec![0.0; m];
        let mut d = vec![0.0; m];
        for h in 1..points {
            let (done, rest) = xs.split_at_mut(h * m);
            let prev = &done[(h - 1) * m..];
            self.rhs(prev, &mut flow, &mut d);
            for k in 0..m {
                rest[k] = prev[k] + dt * d[k];
            }
        }
        xs
    }
}

fn check_state(model: &QnModel, x: &[f64]) -> Result<()> {
    check_len("state", x.len(), model.stations())?;
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::config(format!("queue lengths must be non-negative, got {v}")));
    }
    Ok(())
}

/// Fluid right-hand side: inflow from every other station minus own outflow,
/// `dx_k/dt = sum_{i != k} P[i][k] mu_i min(x_i, s_i) - mu_k min(x_k, s_k)`.
pub fn fluid_rhs(model: &QnModel, x: &[f64]) -> Result<Vec<f64>> {
    check_state(model, x)?;
    let dyn_ = Dynamics::new(model);
    let mut flow = vec![0.0; dyn_.m];
    let mut out = vec![0.0; dyn_.m];
    dyn_.rhs(x, &mut flow, &mut out);
    Ok(out)
}

/// Forward-Euler trajectory `x_h = x_{h-1} + dt f(x_{h-1})` on `grid`.
///
/// Values are not clamped at zero: a step with `dt * mu` too large can
/// undershoot. Pick `dt * max(mu)` well below one.
pub fn forward_trajectory(model: &QnModel, x0: &[f64], grid: GridSpec) -> Result<Trace> {
    grid.check()?;
    check_state(model, x0)?;
    let m = model.stations();
    let xs = Dynamics::new(model).unroll(x0, grid.dt, grid.points);
    Ok(Trace {
        dt: grid.dt,
        samples: xs.chunks(m).map(<[f64]>::to_vec).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_balancer;

    #[test]
    fn rhs_load_balancer() {
        let m = load_balancer();
        let d = fluid_rhs(&m, &[26.0, 86.0, 0.0]).unwrap();
        assert_eq!(d, vec![304.0, -317.0, 13.0]);
        assert_eq!(d.iter().sum::<f64>(), 0.0);
        assert_eq!(fluid_rhs(&m, &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn rhs_rejects_bad_state() {
        let m = load_balancer();
        assert!(fluid_rhs(&m, &[1.0, 2.0]).is_err());
        assert!(fluid_rhs(&m, &[1.0, -2.0, 0.0]).is_err());
    }

    #[test]
    fn one_step() {
        let m = load_balancer();
        let x0 = [26.0, 86.0, 0.0];
        let tr = forward_trajectory(&m, &x0, GridSpec::new(0.01, 2).unwrap()).unwrap();
        // independent evaluation of x0 + dt * f(x0)
        let expected = [26.0 + 0.01 * 304.0, 86.0 - 0.01 * 317.0, 0.01 * 13.0];
        assert_eq!(tr.samples[0], x0.to_vec());
        for k in 0..3 {
            assert!((tr.samples[1][k] - expected[k]).abs() < 1e-12);
        }
        assert!((tr.samples[1][0] - 29.04).abs() < 1e-12);
        assert!((tr.samples[1][1] - 82.83).abs() < 1e-12);
        assert!((tr.samples[1][2] - 0.13).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_is_fixed() {
        // two symmetric stations, balanced load
        let m = QnModel::new(vec![5, 5], vec![2.0, 2.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let x0 = [7.0, 7.0];
        assert_eq!(fluid_rhs(&m, &x0).unwrap(), vec![0.0, 0.0]);
        let tr = forward_trajectory(&m, &x0, GridSpec::new(0.1, 50).unwrap()).unwrap();
        assert!(tr.samples.iter().all(|r| r == &x0.to_vec()));
    }

    #[test]
    fn grid_errors() {
        let m = load_balancer();
        assert!(forward_trajectory(&m, &[1.0, 0.0, 0.0], GridSpec { dt: 0.0, points: 5 }).is_err());
        assert!(forward_trajectory(&m, &[1.0, 0.0, 0.0], GridSpec { dt: 0.1, points: 1 }).is_err());
    }

    #[test]
    fn fluid_state_busy_servers() {
        let st = FluidState::new(vec![26.0, 86.0, 0.0], &[1000, 30, 25]);
        assert_eq!(st.u, vec![26.0, 30.0, 0.0]);
    }
}
