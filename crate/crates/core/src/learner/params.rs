use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::QnModel;
use crate::seed;

/// Unconstrained learner weights: unnormalized routing weights with a zero
/// diagonal, and service rates. All entries are kept non-negative by the
/// optimizer's projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub w_p: Vec<Vec<f64>>,
    pub w_mu: Vec<f64>,
}

impl RawParams {
    /// Random starting point: routing weights uniform in [0.5, 1.5], rates
    /// uniform in [1, 10].
    pub fn init(stations: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let w_p = (0..stations)
            .map(|i| {
                (0..stations)
                    .map(|j| if i == j { 0.0 } else { rng.random_range(0.5..1.5) })
                    .collect()
            })
            .collect();
        let w_mu = (0..stations).map(|_| rng.random_range(1.0..10.0)).collect();
        RawParams { w_p, w_mu }
    }

    /// Weights reproducing `model` exactly.
    pub fn from_model(model: &QnModel) -> Self {
        RawParams {
            w_p: model.p.clone(),
            w_mu: model.mu.clone(),
        }
    }

    pub fn stations(&self) -> usize {
        self.w_mu.len()
    }

    pub(crate) fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.w_p.iter().flatten().copied().collect();
        out.extend_from_slice(&self.w_mu);
        out
    }

    pub(crate) fn unflatten(&mut self, flat: &[f64]) {
        let m = self.stations();
        for (i, row) in self.w_p.iter_mut().enumerate() {
            row.copy_from_slice(&flat[i * m..(i + 1) * m]);
        }
        self.w_mu.copy_from_slice(&flat[m * m..]);
    }

    /// Clamps every weight to `[0, inf)`, zeroes the diagonal, and resets any
    /// routing row left without mass to uniform `1 / (M - 1)`.
    pub fn project(&mut self) {
        let m = self.stations();
        for (i, row) in self.w_p.iter_mut().enumerate() {
            for w in row.iter_mut() {
                *w = w.max(0.0);
            }
            row[i] = 0.0;
            if row.iter().all(|&w| w == 0.0) {
                for (j, w) in row.iter_mut().enumerate() {
                    *w = if j == i { 0.0 } else { 1.0 / (m as f64 - 1.0) };
                }
            }
        }
        for w in &mut self.w_mu {
            *w = w.max(0.0);
        }
    }
}

/// Row sums of the routing weights.
pub(crate) fn row_sums(raw: &RawParams) -> Vec<f64> {
    raw.w_p.iter().map(|r| r.iter().sum()).collect()
}

/// Feasible model from raw weights: each routing row divided by its sum,
/// rates taken as is.
pub fn materialize(raw: &RawParams, s: &[u32]) -> Result<QnModel> {
    let m = raw.stations();
    check_len("s", s.len(), m)?;
    check_len("w_P", raw.w_p.len(), m)?;
    let mut p = Vec::with_capacity(m);
    for (i, row) in raw.w_p.iter().enumerate() {
        check_len("w_P row", row.len(), m)?;
        let total: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, w)| w).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateRow(i + 1));
        }
        p.push(
            row.iter()
                .enumerate()
                .map(|(j, &w)| if j == i { 0.0 } else { w / total })
                .collect(),
        );
    }
    QnModel {
        s: s.to_vec(),
        mu: raw.w_mu.clone(),
        p,
    }
    .validated()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(rows: Vec<Vec<f64>>) -> RawParams {
        let m = rows.len();
        RawParams {
            w_p: rows,
            w_mu: vec![1.0; m],
        }
    }

    #[test]
    fn normalizes_rows() {
        let r = raw(vec![vec![0.0, 1.0, 3.0], vec![2.0, 0.0, 2.0], vec![1.0, 0.0, 0.0]]);
        let m = materialize(&r, &[1, 1, 1]).unwrap();
        assert_eq!(m.p[0], vec![0.0, 0.25, 0.75]);
        assert_eq!(m.p[1], vec![0.5, 0.0, 0.5]);
        assert_eq!(m.p[2], vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn row_scale_invariant() {
        let a = raw(vec![vec![0.0, 0.3, 0.9], vec![1.0, 0.0, 2.0], vec![4.0, 1.0, 0.0]]);
        let mut b = a.clone();
        b.w_p[1].iter_mut().for_each(|w| *w *= 7.5);
        let (ma, mb) = (materialize(&a, &[2; 3]).unwrap(), materialize(&b, &[2; 3]).unwrap());
        for j in 0..3 {
            assert!((ma.p[1][j] - mb.p[1][j]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_row_is_degenerate() {
        let r = raw(vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(matches!(materialize(&r, &[1, 1]), Err(Error::DegenerateRow(2))));
    }

    #[test]
    fn projection() {
        let mut r = RawParams {
            w_p: vec![vec![0.3, -1.0, 0.0], vec![2.0, 5.0, -3.0], vec![-1.0, -2.0, 4.0]],
            w_mu: vec![-0.5, 2.0, 0.0],
        };
        r.project();
        assert_eq!(r.w_p[0], vec![0.0, 0.5, 0.5]);
        assert_eq!(r.w_p[1], vec![2.0, 0.0, 0.0]);
        assert_eq!(r.w_p[2], vec![0.5, 0.5, 0.0]);
        assert_eq!(r.w_mu, vec![0.0, 2.0, 0.0]);
        assert!(materialize(&r, &[1, 1, 1]).is_ok());
    }

    #[test]
    fn init_is_feasible_and_seeded() {
        let a = RawParams::init(4, 3);
        assert_eq!(a, RawParams::init(4, 3));
        assert_ne!(a, RawParams::init(4, 4));
        for i in 0..4 {
            assert_eq!(a.w_p[i][i], 0.0);
        }
        assert!(a.w_mu.iter().all(|&v| (1.0..10.0).contains(&v)));
        assert!(materialize(&a, &[1; 4]).unwrap().validate().is_empty());
    }
}
