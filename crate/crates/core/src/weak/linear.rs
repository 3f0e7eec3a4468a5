use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::scale::Standardizer;
use crate::error::{Error, Result};

/// Linear model on standardized inputs: `y = w . z(x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub scaler: Standardizer,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let z = self.scaler.transform_row(x);
        self.intercept + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Weights and intercept expressed on the original input scale.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.scaler.std)
            .map(|(w, s)| w / s)
            .collect();
        let b = self.intercept
            - w.iter()
                .zip(&self.scaler.mean)
                .map(|(w, m)| w * m)
                .sum::<f64>();
        (w, b)
    }
}

fn design(x: &[Vec<f64>]) -> (Standardizer, DMatrix<f64>) {
    let scaler = Standardizer::fit(x);
    let z = scaler.transform(x);
    let d = scaler.mean.len();
    (scaler, DMatrix::from_fn(x.len(), d, |i, j| z[i][j]))
}

/// Ridge regression with an unpenalized intercept.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], alpha: f64) -> Result<LinearModel> {
    let (scaler, z) = design(x);
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ym));
    let d = z.ncols();
    let mut a = z.transpose() * &z;
    for i in 0..d {
        a[(i, i)] += alpha;
    }
    let b = z.transpose() * yc;
    let w = match a.clone().cholesky() {
        Some(ch) if alpha > 0.0 || d <= x.len() => ch.solve(&b),
        _ => a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::Argument(format!("ridge solve failed: {e}")))?,
    };
    Ok(LinearModel {
        scaler,
        weights: w.iter().copied().collect(),
        intercept: ym,
    })
}

/// Linear epsilon-insensitive SVR (L1 loss), solved by dual coordinate
/// descent. The intercept is handled by centering the targets.
pub fn fit_linear_svr(
    x: &[Vec<f64>],
    y: &[f64],
    c: f64,
    epsilon: f64,
    max_iter: usize,
    seed: u64,
) -> Result<LinearModel> {
    let scaler = Standardizer::fit(x);
    let z = scaler.transform(x);
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let (n, d) = (z.len(), scaler.mean.len());
    let mut beta = vec![0.0; n];
    let mut w = vec![0.0; d];
    let qii: Vec<f64> = z.iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = crate::seed::rng_for(seed, "weak/linear-svr");
    for _ in 0..max_iter {
        order.shuffle(&mut rng);
        let mut max_change: f64 = 0.0;
        for &i in &order {
            if qii[i] <= 0.0 {
                continue;
            }
            let g = z[i].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - yc[i];
            let new = svr_coordinate(beta[i], g, qii[i], c, epsilon);
            let delta = new - beta[i];
            if delta != 0.0 {
                for (wj, zj) in w.iter_mut().zip(&z[i]) {
                    *wj += delta * zj;
                }
                beta[i] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < 1e-7 {
            break;
        }
    }
    Ok(LinearModel {
        scaler,
        weights: w,
        intercept: ym,
    })
}

/// Exact minimiser over `b` in `[-c, c]` of
/// `q/2 (b - b0)^2 + g (b - b0) + eps |b|`.
pub(crate) fn svr_coordinate(b0: f64, g: f64, q: f64, c: f64, eps: f64) -> f64 {
    let up = b0 - (g + eps) / q;
    if up > 0.0 {
        return up.min(c);
    }
    let down = b0 - (g - eps) / q;
    if down < 0.0 {
        return down.max(-c);
    }
    0.0
}
