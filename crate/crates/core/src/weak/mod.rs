//! Weak learners: classical regressors over mean-pooled utterance
//! embeddings, one per (backend, method, domain) combination.

mod kernel;
mod linear;
mod scale;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::FrameFeatures;
use crate::error::{Error, Result};
use crate::par::Exec;

pub use kernel::{fit_gp, fit_kernel_svr, KernelModel};
pub use linear::{fit_linear_svr, fit_ridge, LinearModel};
pub use scale::Standardizer;
pub use tree::{Boosted, Forest, Node, Tree, TreeParams};

/// Domain tag meaning "train on every domain".
pub const ALL_DOMAINS: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEmbedding {
    pub utterance_id: String,
    pub backend_id: String,
    pub vector: Vec<f64>,
}

/// Average the frames of an utterance.
pub fn mean_pool(f: &FrameFeatures) -> UtteranceEmbedding {
    let d = f.dim();
    let t = f.frames.len() as f64;
    let mut v = vec![0.0; d];
    for row in &f.frames {
        for (a, b) in v.iter_mut().zip(row) {
            *a += b;
        }
    }
    v.iter_mut().for_each(|x| *x /= t);
    UtteranceEmbedding {
        utterance_id: f.utterance_id.clone(),
        backend_id: f.backend_id.clone(),
        vector: v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ridge,
    LinearSvr,
    RandomForest,
    GradientBoostedTrees,
    KernelSvr,
    GaussianProcess,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ridge,
        Method::LinearSvr,
        Method::RandomForest,
        Method::GradientBoostedTrees,
        Method::KernelSvr,
        Method::GaussianProcess,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ridge => "ridge",
            Method::LinearSvr => "linear-svr",
            Method::RandomForest => "random-forest",
            Method::GradientBoostedTrees => "gradient-boosted-trees",
            Method::KernelSvr => "kernel-svr",
            Method::GaussianProcess => "gaussian-process",
        }
    }

    /// Default hyperparameters; every accepted key appears here.
    pub fn defaults(self) -> BTreeMap<String, f64> {
        let kv: &[(&str, f64)] = match self {
            Method::Ridge => &[("alpha", 1.0)],
            Method::LinearSvr => &[("c", 1.0), ("epsilon", 0.1), ("max_iter", 1000.0)],
            Method::RandomForest => &[
                ("n_trees", 100.0),
                ("max_depth", 16.0),
                ("min_samples_leaf", 1.0),
                ("max_features", 1.0 / 3.0),
            ],
            Method::GradientBoostedTrees => &[
                ("n_estimators", 100.0),
                ("learning_rate", 0.1),
                ("max_depth", 3.0),
                ("min_samples_leaf", 3.0),
            ],
            Method::KernelSvr => &[
                ("c", 1.0),
                ("epsilon", 0.1),
                ("gamma", 0.0),
                ("max_iter", 1000.0),
            ],
            Method::GaussianProcess => &[("length_scale", 0.0), ("noise", 0.1)],
        };
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Defaults overridden by `overrides`; unknown keys are rejected.
    pub fn resolve(self, overrides: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
        let mut h = self.defaults();
        for (k, v) in overrides {
            match h.get_mut(k) {
                Some(slot) if v.is_finite() && *v >= 0.0 => *slot = *v,
                Some(_) => {
                    return Err(Error::Config(format!(
                        "{self}: hyperparameter {k} must be finite and >= 0"
                    )))
                }
                None => {
                    return Err(Error::Config(format!(
                        "{self}: unknown hyperparameter {k:?}"
                    )))
                }
            }
        }
        Ok(h)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown regression method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakLearnerSpec {
    pub backend_id: String,
    pub method: Method,
    pub domain_tag: String,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, f64>,
}

impl WeakLearnerSpec {
    pub fn name(&self) -> String {
        format!("{}/{}/{}", self.backend_id, self.method, self.domain_tag)
    }
}

/// Every combination of backend, method and domain, in that nesting order.
pub fn build_learner_bank<B: AsRef<str>, D: AsRef<str>>(
    backends: &[B],
    methods: &[Method],
    domains: &[D],
) -> Vec<WeakLearnerSpec> {
    let mut out = Vec::with_capacity(backends.len() * methods.len() * domains.len());
    for b in backends {
        for &m in methods {
            for d in domains {
                out.push(WeakLearnerSpec {
                    backend_id: b.as_ref().to_string(),
                    method: m,
                    domain_tag: d.as_ref().to_string(),
                    hyperparams: BTreeMap::new(),
                });
            }
        }
    }
    out
}

/// A fitted regressor of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Regressor {
    Linear(LinearModel),
    Forest {
        scaler: Standardizer,
        forest: Forest,
    },
    Boosted {
        scaler: Standardizer,
        model: Boosted,
    },
    Kernel(KernelModel),
}

impl Regressor {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Linear(m) => m.predict_one(x),
            Regressor::Forest { scaler, forest } => forest.predict_one(&scaler.transform_row(x)),
            Regressor::Boosted { scaler, model } => model.predict_one(&scaler.transform_row(x)),
            Regressor::Kernel(m) => m.predict_one(x),
        }
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict_one(r)).collect()
    }
}

fn check_xy(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!(
            "{} rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 training examples, got {}",
            x.len()
        )));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Argument("inconsistent embedding dimensions".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite training data".into()));
    }
    Ok(d)
}

/// Fit one regressor. Features are standardized inside the model; tree
/// methods draw their randomness from `seed`.
pub fn fit_regressor(
    method: Method,
    hyper: &BTreeMap<String, f64>,
    x: &[Vec<f64>],
    y: &[f64],
    seed: u64,
) -> Result<Regressor> {
    let d = check_xy(x, y)?;
    let h = method.resolve(hyper)?;
    let int = |k: &str| h[k].round() as usize;
    let mut rng = crate::seed::rng_for(seed, &format!("weak/{method}"));
    Ok(match method {
        Method::Ridge => Regressor::Linear(fit_ridge(x, y, h["alpha"])?),
        Method::LinearSvr => Regressor::Linear(fit_linear_svr(
            x,
            y,
            h["c"],
            h["epsilon"],
            int("max_iter"),
            seed,
        )?),
        Method::RandomForest => {
            let scaler = Standardizer::fit(x);
            let z = scaler.transform(x);
            let mf = ((h["max_features"] * d as f64).round() as usize).clamp(1, d.max(1));
            let p = TreeParams {
                max_depth: int("max_depth"),
                min_samples_leaf: int("min_samples_leaf"),
                max_features: Some(mf),
            };
            Regressor::Forest {
                forest: Forest::fit(&z, y, int("n_trees").max(1), &p, &mut rng),
                scaler,
            }
        }
        Method::GradientBoostedTrees => {
            let scaler = Standardizer::fit(x);
            let z = scaler.transform(x);
            let p = TreeParams {
                max_depth: int("max_depth"),
                min_samples_leaf: int("min_samples_leaf"),
                max_features: None,
            };
            Regressor::Boosted {
                model: Boosted::fit(&z, y, int("n_estimators"), h["learning_rate"], &p, &mut rng),
                scaler,
            }
        }
        Method::KernelSvr => Regressor::Kernel(fit_kernel_svr(
            x,
            y,
            h["c"],
            h["epsilon"],
            h["gamma"],
            int("max_iter"),
            seed,
        )?),
        Method::GaussianProcess => Regressor::Kernel(fit_gp(x, y, h["length_scale"], h["noise"])?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedWeak {
    pub spec: WeakLearnerSpec,
    pub dim: usize,
    pub model: Regressor,
}

/// Fit a weak learner on embeddings (of the spec's backend) and
/// mean-listener raw scores.
pub fn train_weak(
    spec: &WeakLearnerSpec,
    x: &[Vec<f64>],
    targets: &[f64],
    seed: u64,
) -> Result<FittedWeak> {
    let model = fit_regressor(
        spec.method,
        &spec.hyperparams,
        x,
        targets,
        crate::seed::derive_seed(seed, &spec.name()),
    )?;
    Ok(FittedWeak {
        spec: spec.clone(),
        dim: x[0].len(),
        model,
    })
}

/// Raw-MOS predictions, one per row.
pub fn predict_weak(model: &FittedWeak, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    if let Some(r) = x.iter().find(|r| r.len() != model.dim) {
        return Err(Error::Argument(format!(
            "embedding has {} dims, model expects {}",
            r.len(),
            model.dim
        )));
    }
    Ok(model.model.predict(x))
}

/// Fit many specs; each entry of `data` gives the training matrix and
/// targets for the spec at the same index. Order of results follows input.
pub fn train_bank(
    specs: &[WeakLearnerSpec],
    data: &[(Vec<Vec<f64>>, Vec<f64>)],
    seed: u64,
    exec: Exec,
) -> Result<Vec<FittedWeak>> {
    exec.try_map_range(specs.len(), |i| {
        train_weak(&specs[i], &data[i].0, &data[i].1, seed)
    })
}

pub const EMBEDDINGS_FIXED_COLUMNS: [&str; 2] = ["utterance_id", "backend_id"];

pub fn write_embeddings(path: impl AsRef<Path>, rows: &[UtteranceEmbedding]) -> Result<()> {
    let path = path.as_ref();
    let d = rows.first().map_or(0, |r| r.vector.len());
    if rows.iter().any(|r| r.vector.len() != d) {
        return Err(Error::Argument("embeddings differ in dimension".into()));
    }
    let mut s = String::from("utterance_id,backend_id");
    for k in 0..d {
        s.push_str(&format!(",v{k}"));
    }
    s.push('\n');
    for r in rows {
        s.push_str(&r.utterance_id);
        s.push(',');
        s.push_str(&r.backend_id);
        for v in &r.vector {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<UtteranceEmbedding>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.len() < 3
        || names[..2] != EMBEDDINGS_FIXED_COLUMNS
        || names[2..]
            .iter()
            .enumerate()
            .any(|(k, n)| *n != format!("v{k}"))
    {
        return Err(Error::Schema(format!(
            "{}: expected header utterance_id,backend_id,v0,...",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let vector = rec
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::Parse {
                line,
                msg: "non-numeric or non-finite embedding value".into(),
            })?;
        out.push(UtteranceEmbedding {
            utterance_id: rec[0].trim().to_string(),
            backend_id: rec[1].trim().to_string(),
            vector,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
