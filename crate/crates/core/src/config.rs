//! The run configuration: one TOML file driving every pipeline stage.
//!
//! Relative paths are resolved against the directory of the config file.
//! All randomness derives from the mandatory top-level `seed` through
//! named sub-seeds (see [`RunConfig::sub_seed`]).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::backend::BackendSpec;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::seed::derive_seed;
use crate::stacking::StackingPlan;
use crate::strong::StrongConfig;
use crate::textproc::{DEFAULT_EPS, DEFAULT_MIN_PTS};
use crate::weak::{build_learner_bank, Method, WeakLearnerSpec, ALL_DOMAINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "default_audio_dir")]
    pub audio_dir: PathBuf,
    pub train: PathBuf,
    pub dev: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// `utterance_id<TAB>phonemes` ASR transcripts.
    #[serde(default)]
    pub transcripts: Option<PathBuf>,
    /// Precomputed references; clustered from the transcripts when absent.
    #[serde(default)]
    pub references: Option<PathBuf>,
}

fn default_audio_dir() -> PathBuf {
    PathBuf::from("audio")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextprocConfig {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for TextprocConfig {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            min_pts: DEFAULT_MIN_PTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakConfig {
    /// Backend ids to extract embeddings with; empty means every backend.
    pub backends: Vec<String>,
    pub methods: Vec<Method>,
    pub domains: Vec<String>,
    /// Per-method overrides, keyed by method name.
    pub hyperparams: BTreeMap<String, BTreeMap<String, f64>>,
    /// Where embedding CSVs live; defaults to `<output_dir>/embeddings`.
    pub embeddings_dir: Option<PathBuf>,
}

impl Default for WeakConfig {
    fn default() -> Self {
        Self {
            backends: Vec::new(),
            methods: Method::ALL.to_vec(),
            domains: vec![ALL_DOMAINS.to_string()],
            hyperparams: BTreeMap::new(),
            embeddings_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default = "default_backends")]
    pub backends: Vec<BackendSpec>,
    #[serde(default = "default_strong_backend")]
    pub strong_backend: String,
    #[serde(default)]
    pub strong: StrongConfig,
    /// Overrides `strong.loss` when present.
    #[serde(default)]
    pub loss: Option<LossConfig>,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub textproc: TextprocConfig,
    #[serde(default)]
    pub weak: WeakConfig,
    #[serde(default)]
    pub stacking: StackingPlan,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_backends() -> Vec<BackendSpec> {
    vec![BackendSpec::Toy {
        id: "toy".into(),
        dim: None,
        seed: None,
    }]
}

fn default_strong_backend() -> String {
    "toy".into()
}

impl RunConfig {
    /// Parse TOML text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let value: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let nested_loss = value.get("strong").and_then(|s| s.get("loss")).is_some();
        if nested_loss && value.contains_key("loss") {
            return Err(Error::Config(
                "both [loss] and [strong.loss] are set; use one".into(),
            ));
        }
        let mut cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        let d = &mut self.dataset;
        for p in [&mut d.audio_dir, &mut d.train, &mut d.dev] {
            fix(p);
        }
        for p in [&mut d.test, &mut d.transcripts, &mut d.references]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(p) = &mut self.weak.embeddings_dir {
            fix(p);
        }
        self.stacking.strong_checkpoints.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<()> {
        self.strong_config().validate()?;
        self.augment.validate()?;
        if !(self.textproc.eps >= 0.0 && self.textproc.eps <= 1.0) || self.textproc.min_pts == 0 {
            return Err(Error::Config(
                "textproc.eps must lie in [0, 1] and min_pts >= 1".into(),
            ));
        }
        if self.backends.is_empty() {
            return Err(Error::Config("no backends configured".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for b in &self.backends {
            if !ids.insert(b.id()) {
                return Err(Error::Config(format!(
                    "backend id {:?} is configured twice",
                    b.id()
                )));
            }
        }
        if !ids.contains(self.strong_backend.as_str()) {
            return Err(Error::Config(format!(
                "strong_backend {:?} is not among the configured backends",
                self.strong_backend
            )));
        }
        for b in &self.weak.backends {
            if !ids.contains(b.as_str()) {
                return Err(Error::Config(format!(
                    "weak backend {b:?} is not among the configured backends"
                )));
            }
        }
        for (m, h) in &self.weak.hyperparams {
            m.parse::<Method>()?.resolve(h)?;
        }
        if self.weak.domains.is_empty() {
            return Err(Error::Config("weak.domains is empty".into()));
        }
        if self.stacking.n_folds < 2 {
            return Err(Error::Config(format!(
                "stacking.n_folds must be >= 2, got {}",
                self.stacking.n_folds
            )));
        }
        Ok(())
    }

    /// The strong-learner config with the top-level loss applied.
    pub fn strong_config(&self) -> StrongConfig {
        let mut c = self.strong;
        if let Some(l) = self.loss {
            c.loss = l;
        }
        c
    }

    /// Seed for a named component: `derive_seed(seed, name)`.
    pub fn sub_seed(&self, name: &str) -> u64 {
        derive_seed(self.seed, name)
    }

    pub fn backend_spec(&self, id: &str) -> Result<&BackendSpec> {
        self.backends
            .iter()
            .find(|b| b.id() == id)
            .ok_or_else(|| Error::Config(format!("backend {id:?} is not configured")))
    }

    /// Backends used for embeddings.
    pub fn weak_backends(&self) -> Vec<String> {
        if self.weak.backends.is_empty() {
            self.backends.iter().map(|b| b.id().to_string()).collect()
        } else {
            self.weak.backends.clone()
        }
    }

    /// The weak-learner bank described by `[weak]`, with per-method
    /// hyperparameters filled in.
    pub fn weak_specs(&self) -> Vec<WeakLearnerSpec> {
        let mut specs = build_learner_bank(
            &self.weak_backends(),
            &self.weak.methods,
            &self.weak.domains,
        );
        for s in &mut specs {
            if let Some(h) = self.weak.hyperparams.get(s.method.as_str()) {
                s.hyperparams = h.clone();
            }
        }
        specs
    }

    pub fn embeddings_dir(&self) -> PathBuf {
        self.weak
            .embeddings_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("embeddings"))
    }

    pub fn strong_checkpoint_path(&self) -> PathBuf {
        self.output_dir.join("strong.ckpt.json")
    }
}

/// A runnable config for a corpus written by [`crate::synth::ToyCorpus::write`]
/// in the same directory: small strong model, three toy backends and the
/// full weak bank. `steps` sets the strong-learner update count.
pub fn toy_config_toml(seed: u64, steps: usize) -> String {
    let mut strong = StrongConfig::toy();
    strong.optimizer.total_steps = steps.max(2);
    strong.optimizer.warmup_steps = (steps / 10).clamp(1, steps.max(2) - 1);
    strong.eval_every = (steps / 4).max(1);
    let backends = [("toy-a", 32, 1), ("toy-b", 48, 2), ("toy-c", 64, 3)]
        .map(|(id, dim, s)| BackendSpec::toy(id, dim, s))
        .to_vec();
    let mut t = toml::Table::new();
    t.insert("seed".into(), toml::Value::Integer(seed as i64));
    t.insert("output_dir".into(), "out".into());
    t.insert("strong_backend".into(), "toy-a".into());
    let mut d = toml::Table::new();
    for (k, f) in [
        ("audio_dir", "audio"),
        ("train", "train.csv"),
        ("dev", "dev.csv"),
        ("test", "test.csv"),
        ("transcripts", "transcripts.tsv"),
    ] {
        d.insert(k.into(), f.into());
    }
    t.insert("dataset".into(), d.into());
    t.insert("backends".into(), v(&backends));
    t.insert("strong".into(), v(&strong));
    t.insert("augment".into(), v(&AugmentConfig::disabled()));
    t.insert("textproc".into(), v(&TextprocConfig::default()));
    let mut stacking = toml::Table::new();
    stacking.insert("n_folds".into(), toml::Value::Integer(5));
    stacking.insert("strong_oof".into(), "per_fold".into());
    t.insert("stacking".into(), stacking.into());
    toml::to_string(&t).expect("toml serialization of plain tables")
}

fn v<T: Serialize>(x: &T) -> toml::Value {
    toml::Value::try_from(x).expect("serializable config")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 3\n[dataset]\ntrain = \"tr.csv\"\ndev = \"dv.csv\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.dataset.train, Path::new("/base/tr.csv"));
        assert_eq!(c.dataset.audio_dir, Path::new("/base/audio"));
        assert_eq!(c.output_dir, Path::new("/base/out"));
        assert_eq!(c.strong, StrongConfig::default());
        assert_eq!(c.textproc, TextprocConfig::default());
        assert_eq!(c.stacking.n_folds, 5);
        assert_eq!(c.weak_specs().len(), 6);
        assert_eq!(c.embeddings_dir(), Path::new("/base/out/embeddings"));
    }

    #[test]
    fn seed_is_mandatory() {
        let e = RunConfig::parse("[dataset]\ntrain = \"a\"\ndev = \"b\"\n", Path::new("."))
            .unwrap_err();
        assert!(e.is_usage(), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}[strong.optimizer]\npeak_lr = 1e-3\nwarmup = 5\n");
        assert!(matches!(
            RunConfig::parse(&text, Path::new(".")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn loss_section_overrides_and_conflicts() {
        let text = format!("{MINIMAL}[loss]\ngamma = 0.0\n");
        let c = RunConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(c.strong_config().loss.gamma, 0.0);
        assert_eq!(c.strong_config().loss.alpha, 0.5);
        let both = format!("{MINIMAL}[loss]\ngamma = 0.0\n[strong.loss]\nalpha = 0.1\n");
        assert!(matches!(
            RunConfig::parse(&both, Path::new(".")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn weak_bank_and_hyperparameters() {
        let text = format!(
            "{MINIMAL}[[backends]]\nkind = \"toy\"\nid = \"a\"\n[[backends]]\nkind = \"toy\"\nid = \"b\"\ndim = 8\n\
             strong_backend_unused = 1\n"
        );
        // keys after [[backends]] belong to that table
        assert!(RunConfig::parse(&text, Path::new(".")).is_err());
        let text = format!(
            "strong_backend = \"a\"\n{MINIMAL}[[backends]]\nkind = \"toy\"\nid = \"a\"\n[[backends]]\nkind = \"toy\"\nid = \"b\"\n\
             [weak]\nmethods = [\"ridge\", \"kernel-svr\"]\ndomains = [\"x\", \"y\"]\n[weak.hyperparams.ridge]\nalpha = 0.5\n"
        );
        let c = RunConfig::parse(&text, Path::new(".")).unwrap();
        let specs = c.weak_specs();
        assert_eq!(specs.len(), 8);
        assert_eq!(specs[0].name(), "a/ridge/x");
        assert_eq!(specs[0].hyperparams["alpha"], 0.5);
        assert!(specs[2].hyperparams.is_empty());
        let bad = text.replace("alpha = 0.5", "lambda = 0.5");
        assert!(RunConfig::parse(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn strong_backend_must_exist() {
        let text = format!("strong_backend = \"nope\"\n{MINIMAL}");
        assert!(matches!(
            RunConfig::parse(&text, Path::new(".")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn toy_config_parses() {
        let c = RunConfig::parse(&toy_config_toml(5, 200), Path::new("/d")).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.strong.optimizer.total_steps, 200);
        assert_eq!(c.weak_specs().len(), 18);
        assert_eq!(c.dataset.test.as_deref(), Some(Path::new("/d/test.csv")));
        assert!(!c.augment.enabled);
    }

    #[test]
    fn sub_seeds_differ_by_name() {
        let c = RunConfig::parse(MINIMAL, Path::new(".")).unwrap();
        assert_ne!(c.sub_seed("strong"), c.sub_seed("weak"));
        assert_eq!(c.sub_seed("strong"), derive_seed(3, "strong"));
    }
}
