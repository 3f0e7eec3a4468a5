//! End-to-end orchestration over a [`RunConfig`]: the functions the CLI
//! subcommands wrap.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! strong.ckpt.json          train-strong
//! embeddings/<backend>.csv  extract-embeddings
//! weak/models.json          train-weak
//! weak/test_scores.csv
//! stack/stage1_train.csv    train-stack (out-of-fold)
//! stack/stage1_test.csv
//! stack/stage2_train.csv
//! stack/stage2_test.csv
//! stack/stack_model.json
//! stack/selection.json
//! stack/predictions.csv
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::audio::prepare_audio;
use crate::augment::AugmentConfig;
use crate::backend::{BackendRegistry, BackendSpec, FeatureBackend};
use crate::config::RunConfig;
use crate::dataset::{mean_listener_targets, write_predictions, MosDataset};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_dataset, MetricReport};
use crate::par::Exec;
use crate::stacking::{
    ensemble_system_srcc, greedy_select_strong, run_stacking, MatrixLearner, StackModel,
    StackOutput, Stage1Learner, StageScores, StrongOofMode,
};
use crate::strong::{join_text, train_strong, PhonemeContext, StrongCheckpoint, StrongCorpus};
use crate::textproc::{extract_references, read_references, read_transcripts};
use crate::weak::{
    mean_pool, predict_weak, read_embeddings, train_bank, write_embeddings, FittedWeak,
    UtteranceEmbedding, ALL_DOMAINS,
};

/// A loaded dataset with per-utterance phoneme context.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub dataset: MosDataset,
    pub text: Vec<PhonemeContext>,
}

/// Transcripts and references for `ds`. References are read when given,
/// otherwise clustered from the transcripts; without transcripts every
/// utterance gets empty sequences.
pub fn load_text(
    ds: &MosDataset,
    transcripts: Option<&Path>,
    references: Option<&Path>,
    eps: f64,
    min_pts: usize,
    exec: Exec,
) -> Result<Vec<PhonemeContext>> {
    let tr = match transcripts {
        Some(p) => read_transcripts(p)?,
        None => Vec::new(),
    };
    let refs = match references {
        Some(p) => read_references(p)?,
        None if !tr.is_empty() => extract_references(&tr, eps, min_pts, exec)?,
        None => Vec::new(),
    };
    Ok(join_text(ds, &tr, &refs))
}

/// Load the configured splits.
pub fn load_dataset(cfg: &RunConfig) -> Result<MosDataset> {
    let d = &cfg.dataset;
    let mut files = vec![("train", d.train.clone()), ("dev", d.dev.clone())];
    if let Some(t) = &d.test {
        files.push(("test", t.clone()));
    }
    MosDataset::load_splits(&files, &d.audio_dir)
}

/// Load the configured splits and text.
pub fn load_inputs(cfg: &RunConfig, exec: Exec) -> Result<Inputs> {
    let d = &cfg.dataset;
    let dataset = load_dataset(cfg)?;
    let text = load_text(
        &dataset,
        d.transcripts.as_deref(),
        d.references.as_deref(),
        cfg.textproc.eps,
        cfg.textproc.min_pts,
        exec,
    )?;
    Ok(Inputs { dataset, text })
}

/// Backend a checkpoint was trained with: toy specs are rebuilt from the
/// checkpoint itself, external ones must be in `registry`.
pub fn checkpoint_backend(
    ckpt: &StrongCheckpoint,
    registry: &BackendRegistry,
) -> Result<Arc<dyn FeatureBackend>> {
    match &ckpt.backend {
        Some(spec @ BackendSpec::Toy { .. }) => {
            BackendRegistry::from_specs(std::slice::from_ref(spec))?.get(spec.id())
        }
        Some(BackendSpec::External { id }) => registry.get(id),
        None => Err(Error::Checkpoint(
            "checkpoint does not record its feature backend".into(),
        )),
    }
}

/// Train the strong learner on `train`, selecting on `dev`.
pub fn train_strong_run(
    cfg: &RunConfig,
    inputs: &Inputs,
    registry: &BackendRegistry,
    exec: Exec,
) -> Result<StrongCheckpoint> {
    let backend = registry.get(&cfg.strong_backend)?;
    let corpus = StrongCorpus::load(
        &inputs.dataset,
        inputs.text.clone(),
        backend.as_ref(),
        exec,
        cfg.augment.enabled,
    )?;
    let mut ckpt = train_strong(
        &inputs.dataset,
        &corpus,
        Some(backend.as_ref()),
        &cfg.strong_config(),
        &cfg.augment,
        cfg.sub_seed("strong"),
        exec,
    )?;
    ckpt.backend = Some(cfg.backend_spec(&cfg.strong_backend)?.clone());
    Ok(ckpt)
}

/// Predict every utterance of `inputs` with the mean listener of its domain.
pub fn infer(
    ckpt: &StrongCheckpoint,
    inputs: &Inputs,
    registry: &BackendRegistry,
    exec: Exec,
) -> Result<Vec<(String, f64)>> {
    let backend = checkpoint_backend(ckpt, registry)?;
    let corpus = StrongCorpus::load(
        &inputs.dataset,
        inputs.text.clone(),
        backend.as_ref(),
        exec,
        false,
    )?;
    let all: Vec<usize> = (0..inputs.dataset.utterances.len()).collect();
    let scores = ckpt.predict_batch(&inputs.dataset, &corpus, &all, exec)?;
    Ok(inputs
        .dataset
        .utterances
        .iter()
        .map(|u| u.utterance_id.clone())
        .zip(scores)
        .collect())
}

/// Mean-pooled embeddings of every utterance for each backend.
pub fn extract_embeddings(
    ds: &MosDataset,
    registry: &BackendRegistry,
    backend_ids: &[String],
    exec: Exec,
) -> Result<BTreeMap<String, Vec<UtteranceEmbedding>>> {
    let waves = exec.try_map(&ds.utterances, prepare_audio)?;
    let mut out = BTreeMap::new();
    for id in backend_ids {
        let be = registry.get(id)?;
        let rows = exec.try_map_range(ds.utterances.len(), |i| {
            be.extract_features(&ds.utterances[i].utterance_id, &waves[i])
                .map(|f| mean_pool(&f))
        })?;
        out.insert(id.clone(), rows);
    }
    Ok(out)
}

pub fn embeddings_path(dir: &Path, backend_id: &str) -> PathBuf {
    dir.join(format!("{backend_id}.csv"))
}

pub fn write_embedding_files(
    dir: &Path,
    emb: &BTreeMap<String, Vec<UtteranceEmbedding>>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (id, rows) in emb {
        write_embeddings(embeddings_path(dir, id), rows)?;
    }
    Ok(())
}

/// Embedding matrices aligned with `ds.utterances`, one per backend.
pub type EmbeddingTable = BTreeMap<String, Vec<Vec<f64>>>;

pub fn align_embeddings(
    ds: &MosDataset,
    emb: &BTreeMap<String, Vec<UtteranceEmbedding>>,
) -> Result<EmbeddingTable> {
    let mut out = BTreeMap::new();
    for (backend, rows) in emb {
        let by_id: std::collections::HashMap<&str, &UtteranceEmbedding> =
            rows.iter().map(|r| (r.utterance_id.as_str(), r)).collect();
        let mut missing = Vec::new();
        let mut m = Vec::with_capacity(ds.utterances.len());
        for u in &ds.utterances {
            match by_id.get(u.utterance_id.as_str()) {
                Some(r) if r.backend_id == *backend => m.push(r.vector.clone()),
                Some(r) => {
                    return Err(Error::Schema(format!(
                        "embedding of {} is from backend {:?}, expected {backend:?}",
                        r.utterance_id, r.backend_id
                    )))
                }
                None => missing.push(u.utterance_id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Coverage(missing));
        }
        out.insert(backend.clone(), m);
    }
    Ok(out)
}

/// Read `<dir>/<backend>.csv` for each backend and align with `ds`.
pub fn load_embedding_files(
    ds: &MosDataset,
    dir: &Path,
    backend_ids: &[String],
) -> Result<EmbeddingTable> {
    let mut raw = BTreeMap::new();
    for id in backend_ids {
        raw.insert(id.clone(), read_embeddings(embeddings_path(dir, id))?);
    }
    align_embeddings(ds, &raw)
}

fn targets_of(ds: &MosDataset, rows: &[usize]) -> Result<Vec<f64>> {
    let m = mean_listener_targets(&ds.subset(rows))?;
    Ok(rows
        .iter()
        .map(|&u| m[&ds.utterances[u].utterance_id])
        .collect())
}

fn in_domain(ds: &MosDataset, u: usize, tag: &str) -> bool {
    tag == ALL_DOMAINS || ds.utterances[u].domain_id == tag
}

fn backend_matrix<'a>(emb: &'a EmbeddingTable, id: &str) -> Result<&'a Vec<Vec<f64>>> {
    emb.get(id)
        .ok_or_else(|| Error::Config(format!("no embeddings for backend {id:?}")))
}

/// Fit the configured weak-learner bank on the train split, each spec on
/// its own domain's rows.
pub fn train_weak_run(
    cfg: &RunConfig,
    ds: &MosDataset,
    emb: &EmbeddingTable,
    exec: Exec,
) -> Result<Vec<FittedWeak>> {
    let train = ds.split_indices("train")?;
    let targets = targets_of(ds, &train)?;
    let specs = cfg.weak_specs();
    let mut data = Vec::with_capacity(specs.len());
    for s in &specs {
        let m = backend_matrix(emb, &s.backend_id)?;
        let (x, y): (Vec<Vec<f64>>, Vec<f64>) = train
            .iter()
            .zip(&targets)
            .filter(|(&u, _)| in_domain(ds, u, &s.domain_tag))
            .map(|(&u, &t)| (m[u].clone(), t))
            .unzip();
        data.push((x, y));
    }
    train_bank(&specs, &data, cfg.sub_seed("weak"), exec)
}

/// Scores of every fitted weak learner on the given rows.
pub fn weak_scores(
    models: &[FittedWeak],
    ds: &MosDataset,
    emb: &EmbeddingTable,
    rows: &[usize],
) -> Result<StageScores> {
    let ids = rows
        .iter()
        .map(|&u| ds.utterances[u].utterance_id.clone())
        .collect();
    let names = models.iter().map(|m| m.spec.name()).collect();
    let cols = models
        .iter()
        .map(|m| {
            let x = backend_matrix(emb, &m.spec.backend_id)?;
            let x: Vec<Vec<f64>> = rows.iter().map(|&u| x[u].clone()).collect();
            predict_weak(m, &x)
        })
        .collect::<Result<Vec<_>>>()?;
    StageScores::from_columns(ids, names, &cols)
}

/// A strong learner as a stage-1 learner. Out-of-fold scores either
/// retrain the checkpoint's architecture on each fold or reuse the
/// checkpoint; test scores always come from the checkpoint, which was
/// trained on the whole train split.
struct StrongLearner<'a> {
    name: String,
    ckpt: &'a StrongCheckpoint,
    ds: &'a MosDataset,
    corpus: &'a StrongCorpus,
    backend: &'a dyn FeatureBackend,
    aug: AugmentConfig,
    pool: &'a [usize],
    test: &'a [usize],
    mode: StrongOofMode,
    exec: Exec,
}

impl Stage1Learner for StrongLearner<'_> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn fit_predict(
        &self,
        train_rows: &[usize],
        predict_rows: &[usize],
        seed: u64,
    ) -> Result<Vec<f64>> {
        let predict: Vec<usize> = predict_rows.iter().map(|&r| self.pool[r]).collect();
        match self.mode {
            StrongOofMode::Checkpoint => {
                self.ckpt
                    .predict_batch(self.ds, self.corpus, &predict, self.exec)
            }
            StrongOofMode::PerFold => {
                let mut ds = self.ds.clone();
                let ids = train_rows
                    .iter()
                    .map(|&r| ds.utterances[self.pool[r]].utterance_id.clone())
                    .collect();
                ds.splits.insert("train".into(), ids);
                let cfg = self.ckpt.model.config;
                let ck = train_strong(
                    &ds,
                    self.corpus,
                    Some(self.backend),
                    &cfg,
                    &self.aug,
                    seed,
                    self.exec,
                )?;
                ck.predict_batch(self.ds, self.corpus, &predict, self.exec)
            }
        }
    }

    fn fit_predict_test(&self, _seed: u64) -> Result<Vec<f64>> {
        self.ckpt
            .predict_batch(self.ds, self.corpus, self.test, self.exec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub candidates: Vec<String>,
    /// Dev system-level SRCC of each candidate alone.
    pub dev_system_srcc: Vec<Option<f64>>,
    pub selected: Vec<String>,
    /// Dev system-level SRCC of the selected ensemble's mean.
    pub ensemble_dev_system_srcc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StackRun {
    pub output: StackOutput,
    pub selection: SelectionReport,
}

fn learner_label(path: &Path) -> String {
    let stem = path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("strong");
    let stem = stem.strip_suffix(".json").unwrap_or(stem);
    stem.strip_suffix(".ckpt").unwrap_or(stem).to_string()
}

/// Checkpoints listed in the plan, or the run's own checkpoint when the
/// plan lists none and it exists.
pub fn plan_checkpoints(cfg: &RunConfig) -> Vec<PathBuf> {
    if !cfg.stacking.strong_checkpoints.is_empty() {
        return cfg.stacking.strong_checkpoints.clone();
    }
    let own = cfg.strong_checkpoint_path();
    if own.exists() {
        vec![own]
    } else {
        Vec::new()
    }
}

/// Stages 1 to 3 over the train split (as the fold pool) and the test
/// split, with greedy strong-learner selection on dev.
pub fn train_stack_run(
    cfg: &RunConfig,
    inputs: &Inputs,
    emb: &EmbeddingTable,
    checkpoints: &[(PathBuf, StrongCheckpoint)],
    registry: &BackendRegistry,
    exec: Exec,
) -> Result<StackRun> {
    let plan = &cfg.stacking;
    let ds = &inputs.dataset;
    let pool = ds.split_indices("train")?;
    let dev = ds.split_indices("dev")?;
    let test = ds.split_indices("test")?;
    if test.is_empty() {
        return Err(Error::Config(
            "stacking needs a non-empty test split".into(),
        ));
    }
    let targets = targets_of(ds, &pool)?;
    let weak_specs = if plan.weak_specs.is_empty() {
        cfg.weak_specs()
    } else {
        plan.weak_specs.clone()
    };
    if weak_specs.is_empty() && checkpoints.is_empty() {
        return Err(Error::Config(
            "stacking plan has no stage-1 learners".into(),
        ));
    }

    // strong candidates, their features, and greedy selection on dev
    let mut names: Vec<String> = Vec::new();
    for (p, _) in checkpoints {
        let mut n = format!("strong/{}", learner_label(p));
        if names.contains(&n) {
            n = format!("{n}#{}", names.len());
        }
        names.push(n);
    }
    let mut backends: Vec<Arc<dyn FeatureBackend>> = Vec::new();
    let mut corpora: BTreeMap<String, StrongCorpus> = BTreeMap::new();
    for (_, ck) in checkpoints {
        let be = checkpoint_backend(ck, registry)?;
        if !corpora.contains_key(be.id()) {
            let c = StrongCorpus::load(
                ds,
                inputs.text.clone(),
                be.as_ref(),
                exec,
                cfg.augment.enabled,
            )?;
            corpora.insert(be.id().to_string(), c);
        }
        backends.push(be);
    }
    let dev_truth = targets_of(ds, &dev)?;
    let dev_systems: Vec<&str> = dev
        .iter()
        .map(|&u| ds.utterances[u].system_id.as_str())
        .collect();
    let dev_preds = checkpoints
        .iter()
        .zip(&backends)
        .map(|((_, ck), be)| ck.predict_batch(ds, &corpora[be.id()], &dev, exec))
        .collect::<Result<Vec<_>>>()?;
    let solo = (0..dev_preds.len())
        .map(|c| ensemble_system_srcc(&dev_preds, &[c], &dev_truth, &dev_systems))
        .collect::<Result<Vec<_>>>()?;
    let chosen: Vec<usize> = if plan.selection.greedy && !checkpoints.is_empty() {
        let k = plan.selection.k.unwrap_or(checkpoints.len());
        greedy_select_strong(&dev_preds, &dev_truth, &dev_systems, k)
            .map_err(|e| Error::Config(e.to_string()))?
    } else {
        (0..checkpoints.len()).collect()
    };
    let selection = SelectionReport {
        candidates: names.clone(),
        dev_system_srcc: solo,
        selected: chosen.iter().map(|&c| names[c].clone()).collect(),
        ensemble_dev_system_srcc: if chosen.is_empty() {
            None
        } else {
            ensemble_system_srcc(&dev_preds, &chosen, &dev_truth, &dev_systems)?
        },
    };

    let strong: Vec<StrongLearner> = chosen
        .iter()
        .map(|&c| StrongLearner {
            name: names[c].clone(),
            ckpt: &checkpoints[c].1,
            ds,
            corpus: &corpora[backends[c].id()],
            backend: backends[c].as_ref(),
            aug: cfg.augment,
            pool: &pool,
            test: &test,
            mode: plan.strong_oof,
            exec,
        })
        .collect();
    let weak = weak_specs
        .iter()
        .map(|s| {
            let m = backend_matrix(emb, &s.backend_id)?;
            Ok(MatrixLearner {
                name: s.name(),
                method: s.method,
                hyperparams: s.hyperparams.clone(),
                train_x: pool.iter().map(|&u| m[u].clone()).collect(),
                train_y: targets.clone(),
                test_x: test.iter().map(|&u| m[u].clone()).collect(),
                eligible: (s.domain_tag != ALL_DOMAINS).then(|| {
                    pool.iter()
                        .map(|&u| in_domain(ds, u, &s.domain_tag))
                        .collect()
                }),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut learners: Vec<&dyn Stage1Learner> =
        strong.iter().map(|l| l as &dyn Stage1Learner).collect();
    learners.extend(weak.iter().map(|l| l as &dyn Stage1Learner));
    let id_of = |rows: &[usize]| {
        rows.iter()
            .map(|&u| ds.utterances[u].utterance_id.clone())
            .collect::<Vec<_>>()
    };
    let output = run_stacking(
        &learners,
        &id_of(&pool),
        &targets,
        &id_of(&test),
        plan,
        cfg.sub_seed("stacking"),
        exec,
    )?;
    Ok(StackRun { output, selection })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Argument(e.to_string()))?;
    std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn read_stack_model(path: &Path) -> Result<StackModel> {
    read_json(path)
}

/// Write every stacking artifact under `dir`.
pub fn write_stack_outputs(dir: &Path, run: &StackRun) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let o = &run.output;
    o.stage1_train.write_csv(dir.join("stage1_train.csv"))?;
    o.stage1_test.write_csv(dir.join("stage1_test.csv"))?;
    o.stage2_train.write_csv(dir.join("stage2_train.csv"))?;
    o.stage2_test.write_csv(dir.join("stage2_test.csv"))?;
    write_json(&dir.join("stack_model.json"), &o.model)?;
    write_json(&dir.join("selection.json"), &run.selection)?;
    write_predictions(dir.join("predictions.csv"), &predictions_of(o))
}

pub fn predictions_of(o: &StackOutput) -> Vec<(String, f64)> {
    o.stage1_test
        .utterance_ids
        .iter()
        .cloned()
        .zip(o.predictions.iter().copied())
        .collect()
}

/// Metrics of `preds` against the utterances of `split`.
pub fn evaluate_split(
    preds: &[(String, f64)],
    ds: &MosDataset,
    split: &str,
) -> Result<MetricReport> {
    let rows = ds.split_indices(split)?;
    evaluate_dataset(&preds.iter().cloned().collect(), &ds.subset(&rows))
}

/// Every stage in order: strong training, embeddings, weak bank,
/// stacking, evaluation on test. Artifacts go to `output_dir`.
pub fn run_all(cfg: &RunConfig, exec: Exec) -> Result<MetricReport> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let registry = BackendRegistry::from_specs(&cfg.backends)?;
    let inputs = load_inputs(cfg, exec)?;

    let ckpt = train_strong_run(cfg, &inputs, &registry, exec)?;
    let ckpt_path = cfg.strong_checkpoint_path();
    ckpt.save(&ckpt_path)?;

    let raw = extract_embeddings(&inputs.dataset, &registry, &cfg.weak_backends(), exec)?;
    write_embedding_files(&cfg.embeddings_dir(), &raw)?;
    let emb = align_embeddings(&inputs.dataset, &raw)?;

    let weak = train_weak_run(cfg, &inputs.dataset, &emb, exec)?;
    write_weak_outputs(&out.join("weak"), &weak, &inputs.dataset, &emb)?;

    let mut checkpoints = Vec::new();
    for p in plan_checkpoints(cfg) {
        let ck = StrongCheckpoint::load(&p)?;
        checkpoints.push((p, ck));
    }
    let run = train_stack_run(cfg, &inputs, &emb, &checkpoints, &registry, exec)?;
    write_stack_outputs(&out.join("stack"), &run)?;
    evaluate_split(&predictions_of(&run.output), &inputs.dataset, "test")
}

/// `models.json` plus the bank's scores on the test split (or dev when
/// there is no test split).
pub fn write_weak_outputs(
    dir: &Path,
    models: &[FittedWeak],
    ds: &MosDataset,
    emb: &EmbeddingTable,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("models.json"), &models)?;
    let (name, rows) = match ds.split_indices("test") {
        Ok(r) if !r.is_empty() => ("test", r),
        _ => ("dev", ds.split_indices("dev")?),
    };
    weak_scores(models, ds, emb, &rows)?.write_csv(dir.join(format!("{name}_scores.csv")))
}
