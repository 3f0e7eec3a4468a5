//! Utterance- and system-level evaluation metrics: MSE, LCC (Pearson),
//! SRCC (Spearman, average ranks for ties) and KTAU (Kendall tau-b).

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::{mean_listener_targets, read_predictions, MosDataset};
use crate::error::{Error, Result};

fn check_pair(pred: &[f64], truth: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Argument(format!(
            "length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < min_len {
        return Err(Error::Argument(format!(
            "need at least {min_len} values, got {}",
            pred.len()
        )));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite value".into()));
    }
    Ok(())
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 1)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Linear (Pearson) correlation coefficient.
pub fn lcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 2)?;
    pearson_unchecked(pred, truth)
}

/// 1-based ranks, tied values sharing the average of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean(i+1..=j)
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 2)?;
    pearson_unchecked(&average_ranks(pred), &average_ranks(truth))
}

fn tie_pairs_sorted(v: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in v.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sort `v` by merge sort and return the number of inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps =
        merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall tau-b, computed with Knight's O(n log n) algorithm.
pub fn ktau(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 2)?;
    // +0.0 folds -0.0 so that equal values compare equal under total_cmp
    let mut pairs: Vec<(f64, f64)> = pred
        .iter()
        .zip(truth)
        .map(|(&a, &b)| (a + 0.0, b + 0.0))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pairs.len() as u64;
    let n0 = n * (n - 1) / 2;

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ties_x = tie_pairs_sorted(&xs);
    let mut ties_xy = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            ties_xy += run * (run - 1) / 2;
            run = 1;
        }
    }
    ties_xy += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = merge_count(&mut ys, &mut buf);
    let ties_y = tie_pairs_sorted(&ys);

    if ties_x == n0 || ties_y == n0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    let s = n0 as i128 - ties_x as i128 - ties_y as i128 + ties_xy as i128 - 2 * swaps as i128;
    let denom = ((n0 - ties_x) as f64).sqrt() * ((n0 - ties_y) as f64).sqrt();
    Ok((s as f64 / denom).clamp(-1.0, 1.0))
}

/// Per-system means of predicted and true scores, systems in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemScores {
    pub systems: Vec<String>,
    pub pred: Vec<f64>,
    pub truth: Vec<f64>,
}

pub fn system_aggregate<S: AsRef<str>>(
    pred: &[f64],
    truth: &[f64],
    system_of: &[S],
) -> Result<SystemScores> {
    if pred.len() != truth.len() || pred.len() != system_of.len() {
        return Err(Error::Argument(
            "prediction, truth and system lists differ in length".into(),
        ));
    }
    let mut acc: IndexMap<&str, (f64, f64, usize)> = IndexMap::new();
    for ((p, t), s) in pred.iter().zip(truth).zip(system_of) {
        let s = s.as_ref();
        if s.is_empty() {
            return Err(Error::Argument("utterance without a system id".into()));
        }
        let e = acc.entry(s).or_insert((0.0, 0.0, 0));
        e.0 += p;
        e.1 += t;
        e.2 += 1;
    }
    let mut out = SystemScores {
        systems: Vec::new(),
        pred: Vec::new(),
        truth: Vec::new(),
    };
    for (s, (p, t, n)) in acc {
        out.systems.push(s.to_string());
        out.pred.push(p / n as f64);
        out.truth.push(t / n as f64);
    }
    Ok(out)
}

/// The four metrics at one aggregation level. Correlations are `None` when
/// undefined (constant input or fewer than two points).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub lcc: Option<f64>,
    pub srcc: Option<f64>,
    pub ktau: Option<f64>,
}

impl MetricSet {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        let mse = mse(pred, truth)?;
        let defined = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedCorrelation(_)) => Ok(None),
            Err(Error::Argument(_)) if pred.len() < 2 => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            mse,
            lcc: defined(lcc(pred, truth))?,
            srcc: defined(srcc(pred, truth))?,
            ktau: defined(ktau(pred, truth))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub utterance: MetricSet,
    pub system: MetricSet,
    pub n_utterances: usize,
    pub n_systems: usize,
}

impl MetricReport {
    pub fn compute<S: AsRef<str>>(pred: &[f64], truth: &[f64], system_of: &[S]) -> Result<Self> {
        let utterance = MetricSet::compute(pred, truth)?;
        let sys = system_aggregate(pred, truth, system_of)?;
        let system = MetricSet::compute(&sys.pred, &sys.truth)?;
        Ok(Self {
            utterance,
            system,
            n_utterances: pred.len(),
            n_systems: sys.systems.len(),
        })
    }

    /// `key=value` lines, one per metric.
    pub fn key_values(&self) -> String {
        let mut s = String::new();
        for (level, m) in [("utt", &self.utterance), ("sys", &self.system)] {
            s.push_str(&format!("{level}_mse={}\n", fmt_num(Some(m.mse))));
            s.push_str(&format!("{level}_lcc={}\n", fmt_num(m.lcc)));
            s.push_str(&format!("{level}_srcc={}\n", fmt_num(m.srcc)));
            s.push_str(&format!("{level}_ktau={}\n", fmt_num(m.ktau)));
        }
        s.push_str(&format!(
            "n_utterances={}\nn_systems={}\n",
            self.n_utterances, self.n_systems
        ));
        s
    }
}

fn fmt_num(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6}"),
        None => "undefined".to_string(),
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>10} {:>10} {:>10} {:>10}",
            "level", "MSE", "LCC", "SRCC", "KTAU"
        )?;
        for (level, m) in [("utterance", &self.utterance), ("system", &self.system)] {
            writeln!(
                f,
                "{:<10} {:>10} {:>10} {:>10} {:>10}",
                level,
                fmt_num(Some(m.mse)),
                fmt_num(m.lcc),
                fmt_num(m.srcc),
                fmt_num(m.ktau)
            )?;
        }
        write!(
            f,
            "({} utterances, {} systems)",
            self.n_utterances, self.n_systems
        )
    }
}

/// Score predictions against the mean listener rating of each utterance.
pub fn evaluate_dataset(preds: &IndexMap<String, f64>, ds: &MosDataset) -> Result<MetricReport> {
    let targets = mean_listener_targets(ds)?;
    let missing: Vec<String> = targets
        .keys()
        .filter(|id| !preds.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }
    let pred: Vec<f64> = targets.keys().map(|id| preds[id]).collect();
    let truth: Vec<f64> = targets.values().copied().collect();
    let systems: Vec<&str> = ds.utterances.iter().map(|u| u.system_id.as_str()).collect();
    MetricReport::compute(&pred, &truth, &systems)
}

pub fn evaluate(pred_csv: impl AsRef<Path>, ratings_csv: impl AsRef<Path>) -> Result<MetricReport> {
    let preds = read_predictions(pred_csv)?;
    let ds = MosDataset::load(ratings_csv, ".")?;
    evaluate_dataset(&preds, &ds)
}

/// Compare two metric values where `None` (undefined) ranks lowest.
pub fn cmp_metric(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (None, None) => Ordering::Equal,
    }
}
