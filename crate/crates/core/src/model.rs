//! Closed queuing-network models: parameterization, feasibility checks,
//! random benchmark instances and the self-loop transform.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::seed;

/// Absolute tolerance on routing-row sums.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// A closed queuing network with `M` stations.
///
/// `s[i]` servers work at station `i`, each completing at rate `mu[i]`; a
/// client finishing service at `i` moves to `j` with probability `p[i][j]`.
/// Canonical models have no self loops (`p[i][i] == 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelJson", try_from = "ModelJson")]
pub struct QnModel {
    pub s: Vec<u32>,
    pub mu: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    #[serde(rename = "M")]
    m: usize,
    s: Vec<u32>,
    mu: Vec<f64>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
}

impl From<QnModel> for ModelJson {
    fn from(q: QnModel) -> Self {
        ModelJson {
            m: q.mu.len(),
            s: q.s,
            mu: q.mu,
            p: q.p,
        }
    }
}

impl TryFrom<ModelJson> for QnModel {
    type Error = String;

    fn try_from(j: ModelJson) -> std::result::Result<Self, String> {
        if j.s.len() != j.m || j.mu.len() != j.m || j.p.len() != j.m {
            return Err(format!(
                "M = {} but s, mu, P have lengths {}, {}, {}",
                j.m,
                j.s.len(),
                j.mu.len(),
                j.p.len()
            ));
        }
        if let Some((i, row)) = j.p.iter().enumerate().find(|(_, r)| r.len() != j.m) {
            return Err(format!("P row {} has length {}, expected {}", i + 1, row.len(), j.m));
        }
        Ok(QnModel {
            s: j.s,
            mu: j.mu,
            p: j.p,
        })
    }
}

/// One failed feasibility invariant. Stations and rows are reported 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoStations,
    Length { what: String, got: usize, expected: usize },
    RowSum { row: usize, sum: f64 },
    NegativeProbability { row: usize, col: usize, value: f64 },
    SelfLoop { station: usize, value: f64 },
    NegativeRate { station: usize, value: f64 },
    NoServers { station: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStations => write!(f, "model has no stations"),
            Violation::Length { what, got, expected } => {
                write!(f, "{what} has length {got}, expected {expected}")
            }
            Violation::RowSum { row, sum } => write!(f, "row {} sums to {sum}", row + 1),
            Violation::NegativeProbability { row, col, value } => {
                write!(f, "P[{}][{}] = {value} is not a probability", row + 1, col + 1)
            }
            Violation::SelfLoop { station, value } => {
                write!(f, "station {} has self loop {value}", station + 1)
            }
            Violation::NegativeRate { station, value } => {
                write!(f, "mu[{}] negative ({value})", station + 1)
            }
            Violation::NoServers { station } => write!(f, "s[{}] is zero", station + 1),
        }
    }
}

impl QnModel {
    pub fn new(s: Vec<u32>, mu: Vec<f64>, p: Vec<Vec<f64>>) -> Result<Self> {
        let m = QnModel { s, mu, p };
        m.validated()
    }

    /// Number of stations.
    pub fn stations(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_model(self)
    }

    pub fn validated(self) -> Result<Self> {
        let v = validate_model(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    /// Replaces the concurrency levels.
    pub fn with_servers(&self, s: Vec<u32>) -> Result<Self> {
        check_len("s", s.len(), self.stations())?;
        QnModel {
            s,
            mu: self.mu.clone(),
            p: self.p.clone(),
        }
        .validated()
    }

    /// Row-major copy of `p`, convenient for inner loops.
    pub(crate) fn routing_flat(&self) -> Vec<f64> {
        self.p.iter().flatten().copied().collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_canonical_json()?).map_err(|e| Error::io(path, e))
    }

    /// Canonical model JSON: fixed field order, every real printed with 17
    /// significant digits, so load/save round-trips byte for byte.
    pub fn to_canonical_json(&self) -> Result<String> {
        let mut out = String::new();
        self.write_fields(&mut out, "  ")?;
        Ok(format!("{{\n{out}\n}}\n"))
    }

    /// Writes `"M": .., "s": .., "mu": .., "P": ..` without braces, each field
    /// on its own line prefixed by `indent`.
    pub(crate) fn write_fields(&self, out: &mut String, indent: &str) -> Result<()> {
        let m = self.stations();
        let s = self.s.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
        let mu = self
            .mu
            .iter()
            .map(|&v| fmt_f64(v))
            .collect::<Result<Vec<_>>>()?
            .join(", ");
        let _ = writeln!(out, "{indent}\"M\": {m},");
        let _ = writeln!(out, "{indent}\"s\": [{s}],");
        let _ = writeln!(out, "{indent}\"mu\": [{mu}],");
        let _ = writeln!(out, "{indent}\"P\": [");
        for (i, row) in self.p.iter().enumerate() {
            let row = row.iter().map(|&v| fmt_f64(v)).collect::<Result<Vec<_>>>()?.join(", ");
            let sep = if i + 1 < self.p.len() { "," } else { "" };
            let _ = writeln!(out, "{indent}  [{row}]{sep}");
        }
        let _ = write!(out, "{indent}]");
        Ok(())
    }
}

/// Reference station feeding a load balancer that splits evenly between two
/// servers, which both route back to the reference station.
pub fn load_balancer() -> QnModel {
    QnModel {
        s: vec![1000, 30, 25],
        mu: vec![1.0, 11.0, 11.0],
        p: vec![vec![0.0, 0.5, 0.5], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
    }
}

/// Formats a finite real with 17 significant digits in JSON-compatible
/// scientific notation.
pub fn fmt_f64(v: f64) -> Result<String> {
    if v.is_finite() {
        Ok(format!("{v:.16e}"))
    } else {
        Err(Error::config(format!("cannot serialize non-finite value {v}")))
    }
}

/// Checks every feasibility invariant of `m`; an empty result means feasible.
pub fn validate_model(m: &QnModel) -> Vec<Violation> {
    let n = m.mu.len();
    let mut out = Vec::new();
    if n == 0 {
        out.push(Violation::NoStations);
        return out;
    }
    let mut length = |what: &str, got: usize| {
        if got != n {
            out.push(Violation::Length {
                what: what.to_string(),
                got,
                expected: n,
            });
        }
    };
    length("s", m.s.len());
    length("P", m.p.len());
    for (i, row) in m.p.iter().enumerate() {
        length(&format!("P row {}", i + 1), row.len());
    }
    if !out.is_empty() {
        return out;
    }

    for (i, row) in m.p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                out.push(Violation::NegativeProbability {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        if row[i] != 0.0 {
            out.push(Violation::SelfLoop {
                station: i,
                value: row[i],
            });
        }
        let sum: f64 = row.iter().sum();
        if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
            out.push(Violation::RowSum { row: i, sum });
        }
    }
    for (i, &mu) in m.mu.iter().enumerate() {
        if !(mu >= 0.0) || !mu.is_finite() {
            out.push(Violation::NegativeRate { station: i, value: mu });
        }
    }
    for (i, &s) in m.s.iter().enumerate() {
        if s < 1 {
            out.push(Violation::NoServers { station: i });
        }
    }
    out
}

/// Parameters for sampling a random benchmark network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomQnConfig {
    #[serde(rename = "M")]
    pub stations: usize,
    pub rate_range: [f64; 2],
    pub server_range: [u32; 2],
    pub seed: u64,
}

impl RandomQnConfig {
    /// The synthetic benchmark setting: rates in [4, 30], 15 to 30 servers.
    pub fn benchmark(stations: usize, seed: u64) -> Self {
        RandomQnConfig {
            stations,
            rate_range: [4.0, 30.0],
            server_range: [15, 30],
            seed,
        }
    }
}

/// Samples a random canonical model. Rates and server counts are uniform in
/// their ranges; each routing row gets `M - 1` off-diagonal weights drawn
/// from (0, 1] and is normalized to sum to one.
pub fn random_model(cfg: &RandomQnConfig) -> Result<QnModel> {
    let m = cfg.stations;
    if m < 2 {
        return Err(Error::config(format!(
            "a closed network without self loops needs at least 2 stations, got {m}"
        )));
    }
    let [rlo, rhi] = cfg.rate_range;
    if !(rlo > 0.0 && rlo <= rhi && rhi.is_finite()) {
        return Err(Error::config(format!("bad rate range [{rlo}, {rhi}]")));
    }
    let [slo, shi] = cfg.server_range;
    if slo < 1 || slo > shi {
        return Err(Error::config(format!("bad server range [{slo}, {shi}]")));
    }

    let mut rng = seed::rng(cfg.seed);
    let mu = (0..m).map(|_| rng.random_range(rlo..=rhi)).collect();
    let s = (0..m).map(|_| rng.random_range(slo..=shi)).collect();
    let p = (0..m)
        .map(|i| {
            let mut row: Vec<f64> = (0..m)
                .map(|j| if j == i { 0.0 } else { 1.0 - rng.random::<f64>() })
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= total);
            row
        })
        .collect();
    QnModel { s, mu, p }.validated()
}

/// Target self-loop probabilities, one per station, each in [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfLoopSpec {
    pub pi: Vec<f64>,
}

impl SelfLoopSpec {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = pi.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && **v < 1.0)) {
            return Err(Error::config(format!("pi[{}] = {v} outside [0, 1)", k + 1)));
        }
        Ok(SelfLoopSpec { pi })
    }
}

/// Re-expresses a network whose routing may contain self loops as one with
/// prescribed self-loop probabilities `spec.pi` and the same fluid dynamics.
///
/// Row `k` with `p[k][k] < 1` keeps its off-diagonal proportions, scaled to
/// leave room for `pi[k]`, and its rate becomes `mu[k] (p[k][k]-1)/(pi[k]-1)`
/// so every off-diagonal flow `p[k][i] mu[k]` is preserved. A row that only
/// loops (`p[k][k] == 1`) never moves clients, so it gets uniform
/// off-diagonal mass and rate zero.
pub fn selfloop_transform(p: &[Vec<f64>], mu: &[f64], spec: &SelfLoopSpec) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let m = mu.len();
    check_len("P", p.len(), m)?;
    check_len("pi", spec.pi.len(), m)?;
    for (k, row) in p.iter().enumerate() {
        check_len("P row", row.len(), m)?;
        if row.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::config(format!("row {} of P has a negative entry", k + 1)));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::config(format!("row {} of P sums to {sum}", k + 1)));
        }
    }
    if let Some(k) = mu.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::config(format!("mu[{}] negative", k + 1)));
    }
    let spec = SelfLoopSpec::new(spec.pi.clone())?;

    let mut p_hat = vec![vec![0.0; m]; m];
    let mut mu_hat = vec![0.0; m];
    for k in 0..m {
        let pi = spec.pi[k];
        let pkk = p[k][k];
        if pkk < 1.0 {
            for i in (0..m).filter(|&i| i != k) {
                p_hat[k][i] = p[k][i] / (1.0 - pkk) * (1.0 - pi);
            }
            mu_hat[k] = (pkk - 1.0) / (pi - 1.0) * mu[k];
        } else {
            for i in (0..m).filter(|&i| i != k) {
                p_hat[k][i] = (1.0 - pi) / (m as f64 - 1.0);
            }
            mu_hat[k] = 0.0;
        }
        p_hat[k][k] = pi;
    }
    Ok((p_hat, mu_hat))
}
