//! Stacking: out-of-fold stage-1 scores from strong and weak learners,
//! stage-2 meta learners over those scores, and a stage-3 combiner.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{cmp_metric, srcc, system_aggregate};
use crate::par::Exec;
use crate::seed::rng_for;
use crate::weak::{fit_regressor, Method, Regressor, WeakLearnerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongOofMode {
    /// Retrain the strong learner on every fold.
    PerFold,
    /// Score every utterance with the supplied checkpoint (cheap, leaky).
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Selection {
    pub greedy: bool,
    /// Strong learners to keep; `None` keeps all candidates.
    pub k: Option<usize>,
    pub criterion: String,
}

impl Default for Selection {
    fn default() -> Self {
        Self {
            greedy: false,
            k: None,
            criterion: "dev_system_srcc".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaLearner {
    pub method: Method,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, f64>,
}

impl From<Method> for MetaLearner {
    fn from(method: Method) -> Self {
        Self {
            method,
            hyperparams: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackingPlan {
    pub strong_checkpoints: Vec<PathBuf>,
    pub weak_specs: Vec<WeakLearnerSpec>,
    pub n_folds: usize,
    pub stage2_methods: Vec<MetaLearner>,
    pub stage3_method: MetaLearner,
    pub selection: Selection,
    pub strong_oof: StrongOofMode,
}

impl Default for StackingPlan {
    fn default() -> Self {
        Self {
            strong_checkpoints: Vec::new(),
            weak_specs: Vec::new(),
            n_folds: 5,
            stage2_methods: Method::ALL.into_iter().map(MetaLearner::from).collect(),
            stage3_method: Method::Ridge.into(),
            selection: Selection::default(),
            strong_oof: StrongOofMode::PerFold,
        }
    }
}

impl StackingPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(Error::Config(format!(
                "stacking.n_folds must be >= 2, got {}",
                self.n_folds
            )));
        }
        if self.strong_checkpoints.is_empty() && self.weak_specs.is_empty() {
            return Err(Error::Config(
                "stacking plan has no stage-1 learners".into(),
            ));
        }
        if self.stage2_methods.is_empty() {
            return Err(Error::Config("stacking.stage2_methods is empty".into()));
        }
        if self.selection.criterion != "dev_system_srcc" {
            return Err(Error::Config(format!(
                "unsupported selection criterion {:?}",
                self.selection.criterion
            )));
        }
        for m in self.stage2_methods.iter().chain([&self.stage3_method]) {
            m.method.resolve(&m.hyperparams)?;
        }
        Ok(())
    }
}

/// A learner that can be fitted on some rows and asked about others.
/// Rows index a fixed pool of training utterances.
pub trait Stage1Learner: Sync {
    fn name(&self) -> String;
    /// Fit on `train_rows` and predict `predict_rows` of the training pool.
    fn fit_predict(
        &self,
        train_rows: &[usize],
        predict_rows: &[usize],
        seed: u64,
    ) -> Result<Vec<f64>>;
    /// Fit on the whole pool and predict the held-out test utterances.
    fn fit_predict_test(&self, seed: u64) -> Result<Vec<f64>>;
}

/// Regressor over a fixed feature matrix, used for weak learners and for
/// meta stages.
pub struct MatrixLearner {
    pub name: String,
    pub method: Method,
    pub hyperparams: BTreeMap<String, f64>,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    pub test_x: Vec<Vec<f64>>,
    /// Pool rows this learner may train on (e.g. its domain); `None` = all.
    pub eligible: Option<Vec<bool>>,
}

impl MatrixLearner {
    fn rows_for(&self, rows: &[usize]) -> Vec<usize> {
        match &self.eligible {
            Some(e) => rows.iter().copied().filter(|&r| e[r]).collect(),
            None => rows.to_vec(),
        }
    }

    fn fit(&self, rows: &[usize], seed: u64) -> Result<Regressor> {
        let rows = self.rows_for(rows);
        if rows.len() < 2 {
            return Err(Error::Config(format!(
                "{}: fold leaves {} training rows",
                self.name,
                rows.len()
            )));
        }
        let x: Vec<Vec<f64>> = rows.iter().map(|&r| self.train_x[r].clone()).collect();
        let y: Vec<f64> = rows.iter().map(|&r| self.train_y[r]).collect();
        fit_regressor(
            self.method,
            &self.hyperparams,
            &x,
            &y,
            crate::seed::derive_seed(seed, &self.name),
        )
    }
}

impl Stage1Learner for MatrixLearner {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn fit_predict(
        &self,
        train_rows: &[usize],
        predict_rows: &[usize],
        seed: u64,
    ) -> Result<Vec<f64>> {
        let m = self.fit(train_rows, seed)?;
        Ok(predict_rows
            .iter()
            .map(|&r| m.predict_one(&self.train_x[r]))
            .collect())
    }

    fn fit_predict_test(&self, seed: u64) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.train_x.len()).collect();
        Ok(self.fit(&all, seed)?.predict(&self.test_x))
    }
}

/// Fold id of each of `n` rows: a seeded shuffle dealt round-robin.
pub fn assign_folds(n: usize, n_folds: usize, seed: u64) -> Result<Vec<usize>> {
    if n_folds < 2 {
        return Err(Error::Config(format!(
            "n_folds must be >= 2, got {n_folds}"
        )));
    }
    if n_folds > n {
        return Err(Error::Config(format!(
            "{n_folds} folds but only {n} utterances"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, "stacking/folds"));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % n_folds;
    }
    Ok(fold)
}

/// Rows (train, held out) of fold `k`.
pub fn fold_rows(folds: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&r| folds[r] != k)
}

/// Out-of-fold predictions: each row is predicted by the model fitted on
/// the other folds. Folds run through `exec`; results are in row order.
pub fn oof_predictions(
    learner: &dyn Stage1Learner,
    folds: &[usize],
    seed: u64,
    exec: Exec,
) -> Result<Vec<f64>> {
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let per_fold = exec.try_map_range(k, |f| {
        let (train, held) = fold_rows(folds, f);
        let fold_seed = crate::seed::derive_seed(seed, &format!("fold/{f}"));
        learner
            .fit_predict(&train, &held, fold_seed)
            .map(|p| (held, p))
    })?;
    let mut out = vec![f64::NAN; folds.len()];
    for (held, p) in per_fold {
        for (r, v) in held.into_iter().zip(p) {
            out[r] = v;
        }
    }
    Ok(out)
}

/// Score matrix with one column per learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageScores {
    pub utterance_ids: Vec<String>,
    pub learners: Vec<String>,
    /// `rows[i][j]`: learner `j` on utterance `i`.
    pub rows: Vec<Vec<f64>>,
}

impl StageScores {
    pub fn from_columns(
        utterance_ids: Vec<String>,
        learners: Vec<String>,
        columns: &[Vec<f64>],
    ) -> Result<Self> {
        if learners.len() != columns.len() || columns.iter().any(|c| c.len() != utterance_ids.len())
        {
            return Err(Error::Argument(
                "score columns do not match utterances and learners".into(),
            ));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Argument(
                "stage scores contain missing or non-finite entries".into(),
            ));
        }
        let rows = (0..utterance_ids.len())
            .map(|i| columns.iter().map(|c| c[i]).collect())
            .collect();
        Ok(Self {
            utterance_ids,
            learners,
            rows,
        })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::from("utterance_id");
        for l in &self.learners {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (id, row) in self.utterance_ids.iter().zip(&self.rows) {
            s.push_str(id);
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
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
        if headers.len() < 2 || headers.get(0).map(str::trim) != Some("utterance_id") {
            return Err(Error::Schema(format!(
                "{}: expected header utterance_id,<learner>,...",
                path.display()
            )));
        }
        let learners: Vec<String> = headers
            .iter()
            .skip(1)
            .map(|h| h.trim().to_string())
            .collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: "missing or non-numeric score".into(),
                })?;
            ids.push(rec[0].trim().to_string());
            rows.push(row);
        }
        Ok(Self {
            utterance_ids: ids,
            learners,
            rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedMeta {
    pub name: String,
    pub model: Regressor,
}

/// Stage-2 and stage-3 models plus the column layout they expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackModel {
    pub stage1_learners: Vec<String>,
    pub stage2: Vec<FittedMeta>,
    pub stage3: FittedMeta,
}

fn meta_name(m: &MetaLearner) -> String {
    m.method.to_string()
}

/// Fit one stage-2 model per method on the stage-1 score matrix.
pub fn train_meta(
    stage1: &StageScores,
    targets: &[f64],
    methods: &[MetaLearner],
    seed: u64,
    exec: Exec,
) -> Result<Vec<FittedMeta>> {
    if stage1.rows.len() != targets.len() {
        return Err(Error::Argument(
            "stage scores and targets differ in length".into(),
        ));
    }
    exec.try_map(methods, |m| {
        let name = meta_name(m);
        let model = fit_regressor(
            m.method,
            &m.hyperparams,
            &stage1.rows,
            targets,
            crate::seed::derive_seed(seed, &format!("stage2/{name}")),
        )?;
        Ok(FittedMeta { name, model })
    })
}

/// Fit the single stage-3 combiner on stage-2 scores.
pub fn train_final(
    stage2: &StageScores,
    targets: &[f64],
    method: &MetaLearner,
    seed: u64,
) -> Result<FittedMeta> {
    if stage2.rows.len() != targets.len() {
        return Err(Error::Argument(
            "stage scores and targets differ in length".into(),
        ));
    }
    let name = meta_name(method);
    let model = fit_regressor(
        method.method,
        &method.hyperparams,
        &stage2.rows,
        targets,
        crate::seed::derive_seed(seed, "stage3"),
    )?;
    Ok(FittedMeta { name, model })
}

/// Final predictions from stage-1 test scores.
pub fn stack_predict(model: &StackModel, stage1: &StageScores) -> Result<Vec<f64>> {
    if stage1.learners != model.stage1_learners {
        return Err(Error::Schema(format!(
            "stage-1 columns {:?} do not match the model's {:?}",
            stage1.learners, model.stage1_learners
        )));
    }
    Ok(stage1
        .rows
        .iter()
        .map(|r| {
            let s2: Vec<f64> = model
                .stage2
                .iter()
                .map(|m| m.model.predict_one(r))
                .collect();
            model.stage3.model.predict_one(&s2)
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct StackOutput {
    pub stage1_train: StageScores,
    pub stage1_test: StageScores,
    pub stage2_train: StageScores,
    pub stage2_test: StageScores,
    pub model: StackModel,
    pub predictions: Vec<f64>,
}

/// Run stages 1 to 3.
///
/// `train_ids`/`targets` describe the training pool, `test_ids` the
/// utterances to predict. Stage-1 train scores are out-of-fold; stage-1
/// test scores come from learners refitted on the whole pool. Stage 2 uses
/// the same folds to produce out-of-fold inputs for stage 3.
#[allow(clippy::too_many_arguments)]
pub fn run_stacking(
    learners: &[&dyn Stage1Learner],
    train_ids: &[String],
    targets: &[f64],
    test_ids: &[String],
    plan: &StackingPlan,
    seed: u64,
    exec: Exec,
) -> Result<StackOutput> {
    if learners.is_empty() {
        return Err(Error::Config("no stage-1 learners".into()));
    }
    if plan.n_folds < 2 || plan.stage2_methods.is_empty() {
        return Err(Error::Config(
            "stacking needs n_folds >= 2 and at least one stage-2 method".into(),
        ));
    }
    if train_ids.len() != targets.len() {
        return Err(Error::Argument(
            "train ids and targets differ in length".into(),
        ));
    }
    let folds = assign_folds(train_ids.len(), plan.n_folds, seed)?;
    let names: Vec<String> = learners.iter().map(|l| l.name()).collect();

    let stage1 = exec.try_map(learners, |l| {
        let s = crate::seed::derive_seed(seed, &format!("stage1/{}", l.name()));
        Ok::<_, Error>((
            oof_predictions(*l, &folds, s, exec)?,
            l.fit_predict_test(s)?,
        ))
    })?;
    let (oof_cols, test_cols): (Vec<Vec<f64>>, Vec<Vec<f64>>) = stage1.into_iter().unzip();
    let stage1_train = StageScores::from_columns(train_ids.to_vec(), names.clone(), &oof_cols)?;
    let stage1_test = StageScores::from_columns(test_ids.to_vec(), names.clone(), &test_cols)?;

    let meta: Vec<MatrixLearner> = plan
        .stage2_methods
        .iter()
        .map(|m| MatrixLearner {
            name: format!("stage2/{}", meta_name(m)),
            method: m.method,
            hyperparams: m.hyperparams.clone(),
            train_x: stage1_train.rows.clone(),
            train_y: targets.to_vec(),
            test_x: stage1_test.rows.clone(),
            eligible: None,
        })
        .collect();
    let s2_seed = crate::seed::derive_seed(seed, "stage2-oof");
    let s2 = exec.try_map(&meta, |m| oof_predictions(m, &folds, s2_seed, exec))?;
    let s2_names: Vec<String> = plan.stage2_methods.iter().map(meta_name).collect();
    let stage2_train = StageScores::from_columns(train_ids.to_vec(), s2_names.clone(), &s2)?;

    let stage2 = train_meta(&stage1_train, targets, &plan.stage2_methods, seed, exec)?;
    let s2_test: Vec<Vec<f64>> = stage2
        .iter()
        .map(|m| m.model.predict(&stage1_test.rows))
        .collect();
    let stage2_test = StageScores::from_columns(test_ids.to_vec(), s2_names, &s2_test)?;
    let stage3 = train_final(&stage2_train, targets, &plan.stage3_method, seed)?;
    let model = StackModel {
        stage1_learners: names,
        stage2,
        stage3,
    };
    let predictions = stack_predict(&model, &stage1_test)?;
    Ok(StackOutput {
        stage1_train,
        stage1_test,
        stage2_train,
        stage2_test,
        model,
        predictions,
    })
}

/// System-level SRCC of the unweighted mean of the chosen candidates.
fn ensemble_score<S: AsRef<str>>(
    candidates: &[Vec<f64>],
    chosen: &[usize],
    truth: &[f64],
    systems: &[S],
) -> Result<Option<f64>> {
    let n = truth.len();
    let mean: Vec<f64> = (0..n)
        .map(|i| chosen.iter().map(|&c| candidates[c][i]).sum::<f64>() / chosen.len() as f64)
        .collect();
    let agg = system_aggregate(&mean, truth, systems)?;
    Ok(srcc(&agg.pred, &agg.truth).ok())
}

/// Greedy forward selection of `k` candidates (given by their dev
/// predictions), each step adding the one that maximizes the dev
/// system-level SRCC of the selected ensemble's mean. Ties go to the
/// earlier candidate. Returns candidate indices in selection order.
pub fn greedy_select_strong<S: AsRef<str>>(
    candidates: &[Vec<f64>],
    truth: &[f64],
    systems: &[S],
    k: usize,
) -> Result<Vec<usize>> {
    if k > candidates.len() {
        return Err(Error::Argument(format!(
            "k = {k} exceeds {} candidates",
            candidates.len()
        )));
    }
    if candidates.iter().any(|c| c.len() != truth.len()) {
        return Err(Error::Argument(
            "candidate predictions do not match dev set".into(),
        ));
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    while chosen.len() < k {
        let mut best: Option<(usize, Option<f64>)> = None;
        for c in (0..candidates.len()).filter(|c| !chosen.contains(c)) {
            let mut trial = chosen.clone();
            trial.push(c);
            let s = ensemble_score(candidates, &trial, truth, systems)?;
            if best.is_none_or(|(_, b)| cmp_metric(s, b).is_gt()) {
                best = Some((c, s));
            }
        }
        chosen.push(best.expect("k <= candidates").0);
    }
    Ok(chosen)
}

/// System-level SRCC of the mean of `chosen` candidates (for reporting).
pub fn ensemble_system_srcc<S: AsRef<str>>(
    candidates: &[Vec<f64>],
    chosen: &[usize],
    truth: &[f64],
    systems: &[S],
) -> Result<Option<f64>> {
    ensemble_score(candidates, chosen, truth, systems)
}
