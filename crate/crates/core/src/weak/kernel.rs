use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::linear::svr_coordinate;
use super::scale::{target_stats, Standardizer};
use crate::error::{Error, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// RBF-kernel model `y = mean + scale * sum_i coef_i k(z_i, z(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub scaler: Standardizer,
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub gamma: f64,
    /// Constant added to the kernel (acts as a softly penalized intercept).
    pub bias_kernel: f64,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl KernelModel {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let z = self.scaler.transform_row(x);
        let s: f64 = self
            .support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * ((-self.gamma * sq_dist(sv, &z)).exp() + self.bias_kernel))
            .sum();
        self.y_mean + self.y_scale * s
    }
}

fn gram(z: &[Vec<f64>], gamma: f64, add: f64) -> Vec<Vec<f64>> {
    let n = z.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = (-gamma * sq_dist(&z[i], &z[j])).exp() + add;
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// Default RBF width on standardized inputs: `1 / D`.
pub fn default_gamma(d: usize) -> f64 {
    1.0 / d.max(1) as f64
}

/// Epsilon-SVR with an RBF kernel (dual coordinate descent).
pub fn fit_kernel_svr(
    x: &[Vec<f64>],
    y: &[f64],
    c: f64,
    epsilon: f64,
    gamma: f64,
    max_iter: usize,
    seed: u64,
) -> Result<KernelModel> {
    let scaler = Standardizer::fit(x);
    let z = scaler.transform(x);
    let gamma = if gamma > 0.0 {
        gamma
    } else {
        default_gamma(scaler.mean.len())
    };
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let k = gram(&z, gamma, 1.0);
    let n = z.len();
    let mut beta = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = crate::seed::rng_for(seed, "weak/kernel-svr");
    for _ in 0..max_iter {
        order.shuffle(&mut rng);
        let mut max_change: f64 = 0.0;
        for &i in &order {
            let g = f[i] - yc[i];
            let new = svr_coordinate(beta[i], g, k[i][i], c, epsilon);
            let delta = new - beta[i];
            if delta != 0.0 {
                for (fj, kij) in f.iter_mut().zip(&k[i]) {
                    *fj += delta * kij;
                }
                beta[i] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < 1e-7 {
            break;
        }
    }
    let keep: Vec<usize> = (0..n).filter(|&i| beta[i] != 0.0).collect();
    Ok(KernelModel {
        scaler,
        support: keep.iter().map(|&i| z[i].clone()).collect(),
        coef: keep.iter().map(|&i| beta[i]).collect(),
        gamma,
        bias_kernel: 1.0,
        y_mean,
        y_scale: 1.0,
    })
}

/// Gaussian-process regression posterior mean with an RBF kernel of the
/// given length scale on standardized inputs and standardized targets.
pub fn fit_gp(x: &[Vec<f64>], y: &[f64], length_scale: f64, noise: f64) -> Result<KernelModel> {
    let scaler = Standardizer::fit(x);
    let z = scaler.transform(x);
    let d = scaler.mean.len();
    let ls = if length_scale > 0.0 {
        length_scale
    } else {
        (d.max(1) as f64).sqrt()
    };
    let gamma = 1.0 / (2.0 * ls * ls);
    let (y_mean, y_scale) = target_stats(y);
    let n = z.len();
    let k = gram(&z, gamma, 0.0);
    let jitter = noise.max(1e-10);
    let m = DMatrix::from_fn(n, n, |i, j| k[i][j] + if i == j { jitter } else { 0.0 });
    let t = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));
    let coef = m
        .cholesky()
        .ok_or_else(|| {
            Error::Argument("gaussian-process kernel matrix is not positive definite".into())
        })?
        .solve(&t);
    Ok(KernelModel {
        scaler,
        support: z,
        coef: coef.iter().copied().collect(),
        gamma,
        bias_kernel: 0.0,
        y_mean,
        y_scale,
    })
}
