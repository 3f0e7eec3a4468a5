//! Brute-force reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

/// Average rank by counting: 1 + #smaller + (#equal - 1) / 2.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&a| {
            let lt = x.iter().filter(|&&b| b < a).count() as f64;
            let eq = x.iter().filter(|&&b| b == a).count() as f64;
            1.0 + lt + (eq - 1.0) / 2.0
        })
        .collect()
}

/// Two-pass Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

/// Kendall tau-b by enumerating every pair.
pub fn kendall_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = (x[i] - x[j]).signum() as i64 * (x[i] != x[j]) as i64;
            let dy = (y[i] - y[j]).signum() as i64 * (y[i] != y[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tx += 1,
                (_, 0) => ty += 1,
                _ if dx == dy => c += 1,
                _ => d += 1,
            }
        }
    }
    let denom = (((c + d + tx) * (c + d + ty)) as f64).sqrt();
    if denom == 0.0 {
        None
    } else {
        Some((c - d) as f64 / denom)
    }
}

pub fn mean_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

/// Per-system means, systems sorted by name.
pub fn by_system(pred: &[f64], truth: &[f64], sys: &[&str]) -> (Vec<f64>, Vec<f64>) {
    let mut acc: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
    for ((p, t), s) in pred.iter().zip(truth).zip(sys) {
        let e = acc.entry(s).or_default();
        e.0 += p;
        e.1 += t;
        e.2 += 1.0;
    }
    acc.values().map(|(p, t, n)| (p / n, t / n)).unzip()
}

pub fn system_spearman(pred: &[f64], truth: &[f64], sys: &[&str]) -> Option<f64> {
    let (p, t) = by_system(pred, truth, sys);
    spearman(&p, &t)
}

/// Contrastive loss over all ordered pairs `i != j`.
pub fn contrastive_oracle(s: &[f64], p: &[f64], alpha: f64) -> f64 {
    let mut l = 0.0;
    for i in 0..s.len() {
        for j in 0..s.len() {
            if i != j {
                l += (((s[i] - s[j]) - (p[i] - p[j])).abs() - alpha).max(0.0);
            }
        }
    }
    l
}

/// `beta * mean clipped MSE + gamma * contrastive`, written out directly.
pub fn combined_oracle(s: &[f64], p: &[f64], alpha: f64, tau: f64, beta: f64, gamma: f64) -> f64 {
    let reg = s
        .iter()
        .zip(p)
        .map(|(a, b)| {
            if (a - b).abs() > tau {
                (a - b) * (a - b)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / s.len() as f64;
    beta * reg + gamma * contrastive_oracle(s, p, alpha)
}

/// Dynamic-programming edit distance over symbols.
pub fn edit_distance(a: &[String], b: &[String]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Partition of indices induced by labels, as sorted groups (noise points
/// are singletons).
pub fn partition(labels: &[i64]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l < 0 {
            out.push(vec![i]);
        } else {
            groups.entry(l).or_default().push(i);
        }
    }
    out.extend(groups.into_values());
    out.sort();
    out
}

/// Dominant frequency of a signal: FFT magnitude peak refined by parabolic
/// interpolation over log magnitudes.
pub fn peak_frequency(x: &[f64], rate: f64) -> f64 {
    use rustfft::num_complex::Complex64;
    let n = x.len().next_power_of_two() * 4;
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| {
            if i < x.len() {
                // Hann window
                let w = 0.5
                    - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (x.len() - 1) as f64).cos();
                Complex64::new(x[i] * w, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    rustfft::FftPlanner::new()
        .plan_fft_forward(n)
        .process(&mut buf);
    let mag: Vec<f64> = buf[..n / 2]
        .iter()
        .map(|c| c.norm().max(1e-300).ln())
        .collect();
    let k = (1..mag.len() - 1)
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .unwrap();
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let off = 0.5 * (a - c) / (a - 2.0 * b + c);
    (k as f64 + off) * rate / n as f64
}

pub fn sine(freq: f64, n: usize, rate: f64) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin())
        .collect()
}
