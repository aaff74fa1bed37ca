//! What-if evaluation of learned models, bottleneck identification,
//! prediction-error scoring and box-plot summaries.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fluid::{forward_trajectory, Dynamics};
use crate::learner::max_misplacement;
use crate::model::QnModel;
use crate::trace::{GridSpec, Trace, MEASURED_CONSERVATION_TOL};

/// Changes applied to a base model before predicting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<u32>>,
    #[serde(default, rename = "P", skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    /// Population scale factor applied to the initial state.
    #[serde(default, rename = "k", skip_serializing_if = "Option::is_none")]
    pub population_scale: Option<f64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self.s.is_none() && self.p.is_none() && self.population_scale.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub base_model: QnModel,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub overrides: Overrides,
}

impl Scenario {
    /// The model and initial state the scenario describes.
    pub fn resolve(&self) -> Result<(QnModel, Vec<f64>)> {
        let m = self.base_model.stations();
        check_len("x0", self.x0.len(), m)?;
        let mut model = self.base_model.clone();
        if let Some(s) = &self.overrides.s {
            check_len("s override", s.len(), m)?;
            model.s = s.clone();
        }
        if let Some(p) = &self.overrides.p {
            check_len("P override", p.len(), m)?;
            for row in p {
                check_len("P override row", row.len(), m)?;
            }
            model.p = p.clone();
        }
        let model = model.validated()?;
        let mut x0 = self.x0.clone();
        if let Some(k) = self.overrides.population_scale {
            if !(k >= 1.0) || !k.is_finite() {
                return Err(Error::config(format!("population scale must be at least 1, got {k}")));
            }
            x0.iter_mut().for_each(|v| *v *= k);
        }
        Ok((model, x0))
    }
}

/// Predicted trajectory under the scenario's overrides.
pub fn whatif(scenario: &Scenario, grid: GridSpec) -> Result<Trace> {
    let (model, x0) = scenario.resolve()?;
    forward_trajectory(&model, &x0, grid)
}

/// Queue-length to server ratios at the last grid point.
pub fn bottleneck_ratios(model: &QnModel, x0: &[f64], grid: GridSpec) -> Result<Vec<f64>> {
    let tr = forward_trajectory(model, x0, grid)?;
    let last = tr.samples.last().expect("grid has points");
    Ok(last.iter().zip(&model.s).map(|(x, &s)| x / s as f64).collect())
}

/// Index of the largest entry, earliest on ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Station with the highest final queue-length to server ratio on `grid`
/// (0-based, lowest index on ties).
pub fn find_bottleneck(model: &QnModel, x0: &[f64], grid: GridSpec) -> Result<usize> {
    Ok(argmax(&bottleneck_ratios(model, x0, grid)?))
}

/// Steady-state estimate and the grid that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub x: Vec<f64>,
    pub grid: GridSpec,
}

/// Largest horizon [`steady_state`] will try.
const MAX_STEADY_POINTS: usize = 1 << 24;

/// Runs the fluid model long enough for the last two grid points to differ
/// by less than `1e-6` in L1. The first horizon is
/// `10 (max_i 1/mu_i + max_i N/(mu_i s_i))` over stations with `mu_i > 0`,
/// doubled until converged.
pub fn steady_state(model: &QnModel, x0: &[f64], dt: f64) -> Result<SteadyState> {
    GridSpec::new(dt, 2)?;
    let n: f64 = x0.iter().sum();
    let active = model.mu.iter().zip(&model.s).filter(|(mu, _)| **mu > 0.0);
    let slowest = active.clone().map(|(mu, _)| 1.0 / mu).fold(0.0, f64::max);
    let drain = active.map(|(mu, &s)| n / (mu * s as f64)).fold(0.0, f64::max);
    let mut horizon = (10.0 * (slowest + drain)).max(dt);
    let m = model.stations();
    loop {
        let points = (horizon / dt).ceil() as usize + 1;
        let grid = GridSpec::new(dt, points)?;
        let tr = forward_trajectory(model, x0, grid)?;
        let last = &tr.samples[points - 1];
        let prev = &tr.samples[points - 2];
        let change: f64 = last.iter().zip(prev).map(|(a, b)| (a - b).abs()).sum();
        if change < 1e-6 || m == 0 {
            return Ok(SteadyState { x: last.clone(), grid });
        }
        if points > MAX_STEADY_POINTS {
            return Err(Error::config(format!(
                "no steady state within {} time units (last step moved {change})",
                grid.horizon()
            )));
        }
        horizon *= 2.0;
    }
}

/// Bottleneck of `model` at its steady state from `x0`.
pub fn steady_bottleneck(model: &QnModel, x0: &[f64], dt: f64) -> Result<usize> {
    let st = steady_state(model, x0, dt)?;
    find_bottleneck(model, x0, st.grid)
}

/// Result of adding servers to a bottleneck until it moves elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckShift {
    pub original: usize,
    pub shifted_to: usize,
    pub s: Vec<u32>,
    pub added: u32,
}

/// Adds `step` servers at a time to the steady-state bottleneck until a
/// different station becomes the bottleneck.
pub fn shift_bottleneck(model: &QnModel, x0: &[f64], dt: f64, step: u32) -> Result<BottleneckShift> {
    if step == 0 {
        return Err(Error::config("server increment must be positive"));
    }
    let original = steady_bottleneck(model, x0, dt)?;
    let mut current = model.clone();
    for round in 1..=1000u32 {
        current.s[original] += step;
        let b = steady_bottleneck(&current, x0, dt)?;
        if b != original {
            return Ok(BottleneckShift {
                original,
                shifted_to: b,
                s: current.s,
                added: round * step,
            });
        }
    }
    Err(Error::config(format!(
        "station {} stays the bottleneck after adding {} servers",
        original + 1,
        1000 * step
    )))
}

/// Worst-step percentage of misplaced clients between two traces on the
/// same grid; `N` is read from `reference`.
pub fn prediction_error(predicted: &Trace, reference: &Trace) -> Result<f64> {
    if predicted.points() != reference.points() || (predicted.dt - reference.dt).abs() > 1e-9 * reference.dt {
        return Err(Error::GridMismatch(format!(
            "(dt = {}, H = {}) vs (dt = {}, H = {})",
            predicted.dt,
            predicted.points(),
            reference.dt,
            reference.points()
        )));
    }
    reference.grid().check()?;
    let m = reference.stations();
    check_len("predicted stations", predicted.stations(), m)?;
    let n = reference.population();
    if !(n > 0.0) {
        return Err(Error::config("reference population must be positive"));
    }
    if (predicted.population() - n).abs() > MEASURED_CONSERVATION_TOL * n {
        return Err(Error::config(format!(
            "populations differ: {} vs {n}",
            predicted.population()
        )));
    }
    let a: Vec<f64> = predicted.samples.iter().flatten().copied().collect();
    let b: Vec<f64> = reference.samples.iter().flatten().copied().collect();
    Ok(max_misplacement(&a, &b, m, n).0)
}

/// Box-plot statistics of a set of errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    /// Most extreme values within 1.5 IQR of the box.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize_errors(values: &[f64]) -> Result<ErrorSummary> {
    if values.is_empty() {
        return Err(Error::config("cannot summarize an empty list"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("errors must be finite"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p25 = quantile(&sorted, 0.25);
    let p75 = quantile(&sorted, 0.75);
    let iqr = p75 - p25;
    let (lo_fence, hi_fence) = (p25 - 1.5 * iqr, p75 + 1.5 * iqr);
    let inside = sorted.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v));
    let whisker_low = inside.clone().fold(f64::INFINITY, f64::min);
    let whisker_high = inside.fold(f64::NEG_INFINITY, f64::max);
    Ok(ErrorSummary {
        count: sorted.len(),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        median: quantile(&sorted, 0.5),
        p25,
        p75,
        whisker_low,
        whisker_high,
        outliers: sorted
            .iter()
            .copied()
            .filter(|v| !(lo_fence..=hi_fence).contains(v))
            .collect(),
    })
}

/// One point of an error scatter plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    #[serde(rename = "N")]
    pub population: f64,
    pub err_pct: f64,
    #[serde(rename = "M")]
    pub stations: usize,
}

/// `N,err_pct,M` CSV.
pub fn scatter_csv(points: &[ScatterPoint]) -> String {
    let mut out = String::from("N,err_pct,M\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.population, p.err_pct, p.stations));
    }
    out
}

/// `t,measured_1..M,predicted_1..M` CSV for side-by-side plots.
pub fn comparison_csv(measured: &Trace, predicted: &Trace) -> Result<String> {
    prediction_error(predicted, measured)?;
    let m = measured.stations();
    let mut out = String::from("t");
    for prefix in ["measured", "predicted"] {
        for i in 1..=m {
            out.push_str(&format!(",{prefix}_{i}"));
        }
    }
    out.push('\n');
    let grid = measured.grid();
    for (h, (a, b)) in measured.samples.iter().zip(&predicted.samples).enumerate() {
        out.push_str(&grid.time(h).to_string());
        for v in a.iter().chain(b) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Fluid trajectory sampled at the grid of `like`, from its first sample.
pub fn predict_like(model: &QnModel, like: &Trace) -> Result<Trace> {
    forward_trajectory(model, like.initial(), like.grid())
}

/// Final state of the fluid model without materializing the trajectory.
pub fn fluid_endpoint(model: &QnModel, x0: &[f64], grid: GridSpec) -> Result<Vec<f64>> {
    grid.check()?;
    check_len("x0", x0.len(), model.stations())?;
    let dy = Dynamics::new(model);
    let xs = dy.unroll(x0, grid.dt, grid.points);
    Ok(xs[(grid.points - 1) * dy.m..].to_vec())
}
