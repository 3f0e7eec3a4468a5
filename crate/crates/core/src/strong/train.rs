use std::borrow::Cow;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::StrongCheckpoint;
use super::config::{lr_schedule, StrongConfig};
use super::model::{ModelInput, StrongModel, Vocabulary};
use crate::audio::prepare_audio;
use crate::augment::{augment, AugmentConfig, AugmentMode};
use crate::backend::FeatureBackend;
use crate::dataset::{mean_listener_targets, ListenerKey, MosDataset, ScoreScale};
use crate::error::{Error, Result};
use crate::losses::frame_batch_loss;
use crate::metrics::{cmp_metric, MetricReport};
use crate::nn::Adam;
use crate::par::Exec;
use crate::seed::rng_for;
use crate::textproc::{Phonemes, ReferenceAssignment, TranscriptRecord};

/// Transcript and reference sequence of one utterance (either may be empty).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhonemeContext {
    pub phonemes: Phonemes,
    pub reference: Phonemes,
}

/// Pair each dataset utterance with its transcript and reference; missing
/// entries become empty sequences.
pub fn join_text(
    ds: &MosDataset,
    transcripts: &[TranscriptRecord],
    refs: &[ReferenceAssignment],
) -> Vec<PhonemeContext> {
    let tr: std::collections::HashMap<&str, &Phonemes> = transcripts
        .iter()
        .map(|t| (t.utterance_id.as_str(), &t.phonemes))
        .collect();
    let rf: std::collections::HashMap<&str, &Phonemes> = refs
        .iter()
        .map(|r| (r.utterance_id.as_str(), &r.reference))
        .collect();
    ds.utterances
        .iter()
        .map(|u| PhonemeContext {
            phonemes: tr
                .get(u.utterance_id.as_str())
                .map(|p| (*p).clone())
                .unwrap_or_default(),
            reference: rf
                .get(u.utterance_id.as_str())
                .map(|p| (*p).clone())
                .unwrap_or_default(),
        })
        .collect()
}

/// Per-utterance model inputs aligned with `MosDataset::utterances`.
#[derive(Debug, Clone, Default)]
pub struct StrongCorpus {
    pub features: Vec<Vec<Vec<f64>>>,
    /// Prepared waveforms, needed only when training with augmentation.
    pub waves: Option<Vec<Vec<f64>>>,
    pub text: Vec<PhonemeContext>,
}

impl StrongCorpus {
    pub fn from_waves(
        waves: Vec<Vec<f64>>,
        text: Vec<PhonemeContext>,
        backend: &dyn FeatureBackend,
        exec: Exec,
        keep_waves: bool,
    ) -> Result<Self> {
        if text.len() != waves.len() {
            return Err(Error::Argument(
                "text and waveforms differ in length".into(),
            ));
        }
        let features = exec.try_map(&waves, |w| backend.extract(w))?;
        Ok(Self {
            features,
            waves: keep_waves.then_some(waves),
            text,
        })
    }

    /// Read and prepare every utterance's audio, then extract features.
    pub fn load(
        ds: &MosDataset,
        text: Vec<PhonemeContext>,
        backend: &dyn FeatureBackend,
        exec: Exec,
        keep_waves: bool,
    ) -> Result<Self> {
        let waves = exec.try_map(&ds.utterances, prepare_audio)?;
        Self::from_waves(waves, text, backend, exec, keep_waves)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            waves: self
                .waves
                .as_ref()
                .map(|w| indices.iter().map(|&i| w[i].clone()).collect()),
            text: indices.iter().map(|&i| self.text[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub train_loss: f64,
    pub dev_utterance_srcc: Option<f64>,
    pub dev_system_srcc: Option<f64>,
    pub dev_utterance_mse: f64,
}

#[derive(Debug, Clone, Copy)]
struct Example {
    utt: usize,
    listener: usize,
    target: f64,
    augmented: bool,
}

struct Stream {
    examples: Vec<Example>,
    order: Vec<usize>,
    pos: usize,
    epoch: usize,
    seed: u64,
    drawn: usize,
}

impl Stream {
    fn new(examples: Vec<Example>, seed: u64) -> Self {
        let mut s = Self {
            order: (0..examples.len()).collect(),
            examples,
            pos: 0,
            epoch: 0,
            seed,
            drawn: 0,
        };
        s.shuffle();
        s
    }

    fn shuffle(&mut self) {
        self.order.sort_unstable();
        self.order.shuffle(&mut rng_for(
            self.seed,
            &format!("strong/epoch/{}", self.epoch),
        ));
    }

    /// Next example and its global draw number.
    fn next(&mut self) -> (usize, Example) {
        if self.pos == self.order.len() {
            self.epoch += 1;
            self.pos = 0;
            self.shuffle();
        }
        let ex = self.examples[self.order[self.pos]];
        self.pos += 1;
        self.drawn += 1;
        (self.drawn - 1, ex)
    }
}

/// Encoded phoneme ids for every corpus utterance.
fn encode_text(
    vocab: &Vocabulary,
    text: &[PhonemeContext],
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    text.iter()
        .map(|t| Ok((vocab.encode(&t.phonemes)?, vocab.encode(&t.reference)?)))
        .collect()
}

/// Train a strong learner on the `train` split, evaluating on `dev` every
/// `eval_every` optimizer steps and at the end. Returns the checkpoint with
/// the highest dev system-level SRCC (earliest on ties).
///
/// Each rating is one example with the rater's target; every training
/// utterance also contributes `mean_listener_copies` mean-listener examples
/// per epoch. Results depend only on the inputs and `seed`, not on `exec`.
pub fn train_strong(
    ds: &MosDataset,
    corpus: &StrongCorpus,
    backend: Option<&dyn FeatureBackend>,
    cfg: &StrongConfig,
    aug: &AugmentConfig,
    seed: u64,
    exec: Exec,
) -> Result<StrongCheckpoint> {
    cfg.validate()?;
    if corpus.features.len() != ds.utterances.len() || corpus.text.len() != ds.utterances.len() {
        return Err(Error::Argument(
            "corpus is not aligned with the dataset".into(),
        ));
    }
    let train = ds.split_indices("train")?;
    let dev = ds.split_indices("dev")?;
    if train.is_empty() {
        return Err(Error::Config("train split is empty".into()));
    }
    if dev.is_empty() {
        return Err(Error::Config("dev split is empty".into()));
    }
    let backend_for_aug = if aug.enabled {
        aug.validate()?;
        if corpus.waves.is_none() {
            return Err(Error::Config(
                "augmentation needs waveforms in the corpus".into(),
            ));
        }
        Some(backend.ok_or_else(|| Error::Config("augmentation needs a feature backend".into()))?)
    } else {
        None
    };

    let scale = ScoreScale::default();
    let feature_dim = corpus.features[train[0]].first().map_or(0, Vec::len);
    let vocab =
        Vocabulary::from_sequences(corpus.text.iter().flat_map(|t| [&t.phonemes, &t.reference]));
    let ids = encode_text(&vocab, &corpus.text)?;
    let mut model = StrongModel::new(
        *cfg,
        feature_dim,
        ds.listener_index.len(),
        ds.domain_index.len(),
        vocab,
        seed,
    )?;

    let means = mean_listener_targets(&ds.subset(&train))?;
    let grouped = ds.ratings_by_utterance();
    let mut examples = Vec::new();
    let offline = aug.enabled && aug.mode == AugmentMode::Offline;
    for &u in &train {
        let utt = &ds.utterances[u];
        for r in &grouped[u] {
            let listener = ds
                .rater_index(&r.listener_id)
                .expect("rater indexed at load");
            examples.push(Example {
                utt: u,
                listener,
                target: scale.normalize(r.raw_score as f64)?,
                augmented: false,
            });
        }
        let mean_idx = ds
            .mean_listener_index(&utt.domain_id)
            .expect("domain indexed at load");
        let target = scale.normalize(means[&utt.utterance_id])?;
        for _ in 0..cfg.mean_listener_copies {
            examples.push(Example {
                utt: u,
                listener: mean_idx,
                target,
                augmented: false,
            });
        }
    }
    if offline {
        let aug_copies: Vec<Example> = examples
            .iter()
            .map(|e| Example {
                augmented: true,
                ..*e
            })
            .collect();
        examples.extend(aug_copies);
    }
    if examples.len() < 2 {
        return Err(Error::Config("need at least two training examples".into()));
    }

    // one fixed augmented copy per training utterance
    let offline_features: Vec<Option<Vec<Vec<f64>>>> = if offline {
        let waves = corpus.waves.as_ref().expect("checked above");
        let be = backend_for_aug.expect("checked above");
        exec.try_map_range(ds.utterances.len(), |u| {
            if !train.contains(&u) {
                return Ok(None);
            }
            let mut rng = rng_for(
                seed,
                &format!("strong/aug/offline/{}", ds.utterances[u].utterance_id),
            );
            Ok::<_, Error>(Some(be.extract(&augment(&waves[u], aug, &mut rng)?)?))
        })?
    } else {
        Vec::new()
    };

    let features_for = |k: usize, ex: &Example| -> Result<Cow<'_, [Vec<f64>]>> {
        if ex.augmented {
            return Ok(Cow::Borrowed(
                offline_features[ex.utt]
                    .as_deref()
                    .expect("train utterance"),
            ));
        }
        match (aug.enabled && !offline, backend_for_aug) {
            (true, Some(be)) => {
                let waves = corpus.waves.as_ref().expect("checked above");
                let mut rng = rng_for(seed, &format!("strong/aug/step/{k}"));
                Ok(Cow::Owned(be.extract(&augment(
                    &waves[ex.utt],
                    aug,
                    &mut rng,
                )?)?))
            }
            _ => Ok(Cow::Borrowed(&corpus.features[ex.utt])),
        }
    };

    let dev_truth: Vec<f64> = {
        let m = mean_listener_targets(&ds.subset(&dev))?;
        dev.iter()
            .map(|&u| m[&ds.utterances[u].utterance_id])
            .collect()
    };
    let dev_systems: Vec<&str> = dev
        .iter()
        .map(|&u| ds.utterances[u].system_id.as_str())
        .collect();
    let evaluate = |model: &StrongModel| -> Result<MetricReport> {
        let preds = exec.try_map(&dev, |&u| {
            let utt = &ds.utterances[u];
            let input = ModelInput {
                frames: &corpus.features[u],
                listener: ds
                    .mean_listener_index(&utt.domain_id)
                    .expect("domain indexed"),
                domain: ds.domain_index[&utt.domain_id],
                phonemes: &ids[u].0,
                reference: &ids[u].1,
            };
            model.forward(&input).map(|s| utterance_score(&s, &scale))
        })?;
        MetricReport::compute(&preds, &dev_truth, &dev_systems)
    };

    let o = cfg.optimizer;
    let mut adam = Adam::new(model.n_params(), o.adam_beta1, o.adam_beta2);
    let mut stream = Stream::new(examples, seed);
    let mut best: Option<(Vec<f64>, EvalRecord)> = None;
    let mut history = Vec::new();
    let mut loss_acc = 0.0;
    let mut loss_n = 0usize;

    for step in 1..=o.total_steps {
        let mut grad = vec![0.0; model.n_params()];
        for _ in 0..o.grad_accum {
            let batch: Vec<(usize, Example)> = (0..o.batch_size).map(|_| stream.next()).collect();
            let feats = exec.try_map(&batch, |(k, ex)| features_for(*k, ex))?;
            let inputs: Vec<ModelInput> = batch
                .iter()
                .zip(&feats)
                .map(|((_, ex), f)| ModelInput {
                    frames: f,
                    listener: ex.listener,
                    domain: ds.domain_index[&ds.utterances[ex.utt].domain_id],
                    phonemes: &ids[ex.utt].0,
                    reference: &ids[ex.utt].1,
                })
                .collect();
            let p = &model.params;
            let fwd = exec.map(&inputs, |x| model.forward_cached(p, x));
            let targets: Vec<f64> = batch.iter().map(|(_, e)| e.target).collect();
            let groups: Vec<usize> = inputs.iter().map(|x| x.domain).collect();
            let frame_scores: Vec<Vec<f64>> = fwd.iter().map(|(s, _)| s.clone()).collect();
            let (loss, dframes) =
                frame_batch_loss(&targets, &frame_scores, Some(&groups), &cfg.loss)?;
            loss_acc += loss;
            loss_n += 1;
            let grads = exec.map_range(inputs.len(), |i| {
                let mut g = vec![0.0; p.len()];
                model.backward(p, &inputs[i], &fwd[i].1, &dframes[i], &mut g);
                g
            });
            let w = 1.0 / o.grad_accum as f64;
            for g in grads {
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += w * b;
                }
            }
        }
        if o.grad_clip_norm > 0.0 {
            let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > o.grad_clip_norm {
                let s = o.grad_clip_norm / norm;
                grad.iter_mut().for_each(|v| *v *= s);
            }
        }
        if !grad.iter().all(|v| v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite gradient at step {step}"
            )));
        }
        adam.step(&mut model.params, &grad, lr_schedule(step, &o));

        if step % cfg.eval_every == 0 || step == o.total_steps {
            let rep = evaluate(&model)?;
            let rec = EvalRecord {
                step,
                train_loss: loss_acc / loss_n.max(1) as f64,
                dev_utterance_srcc: rep.utterance.srcc,
                dev_system_srcc: rep.system.srcc,
                dev_utterance_mse: rep.utterance.mse,
            };
            loss_acc = 0.0;
            loss_n = 0;
            history.push(rec);
            let better = match &best {
                None => true,
                Some((_, b)) => cmp_metric(rec.dev_system_srcc, b.dev_system_srcc).is_gt(),
            };
            if better {
                best = Some((model.params.clone(), rec));
            }
        }
    }

    let (params, rec) = best.expect("at least one evaluation");
    model.params = params;
    Ok(StrongCheckpoint {
        model,
        listeners: ds.listener_index.keys().cloned().collect(),
        domains: ds.domain_index.keys().cloned().collect(),
        backend: None,
        scale,
        step: rec.step,
        dev_system_srcc: rec.dev_system_srcc,
        history,
    })
}

/// Mean of frame scores mapped back to the raw scale and clamped.
pub fn utterance_score(frame_scores: &[f64], scale: &ScoreScale) -> f64 {
    let mean = frame_scores.iter().sum::<f64>() / frame_scores.len() as f64;
    scale.clamp_raw(scale.denormalize(mean))
}

impl StrongCheckpoint {
    fn mean_listener(&self, domain_id: &str) -> Result<(usize, usize)> {
        let key = ListenerKey::Mean {
            domain_id: domain_id.to_string(),
        };
        let l = self.listeners.iter().position(|k| *k == key);
        let d = self.domains.iter().position(|k| k == domain_id);
        match (l, d) {
            (Some(l), Some(d)) => Ok((l, d)),
            _ => Err(Error::Lookup(format!(
                "domain {domain_id:?} was not seen in training"
            ))),
        }
    }

    /// Raw-scale MOS of one utterance using the mean listener of `domain_id`.
    pub fn predict_utterance(
        &self,
        frames: &[Vec<f64>],
        text: &PhonemeContext,
        domain_id: &str,
    ) -> Result<f64> {
        let (listener, domain) = self.mean_listener(domain_id)?;
        let ph = self.model.vocab.encode(&text.phonemes)?;
        let rf = self.model.vocab.encode(&text.reference)?;
        let input = ModelInput {
            frames,
            listener,
            domain,
            phonemes: &ph,
            reference: &rf,
        };
        Ok(utterance_score(&self.model.forward(&input)?, &self.scale))
    }

    /// Extract features from a prepared waveform and predict.
    pub fn predict_wave(
        &self,
        backend: &dyn FeatureBackend,
        wave: &[f64],
        text: &PhonemeContext,
        domain_id: &str,
    ) -> Result<f64> {
        self.predict_utterance(&backend.extract(wave)?, text, domain_id)
    }

    /// Predictions for the given corpus rows, in order.
    pub fn predict_batch(
        &self,
        ds: &MosDataset,
        corpus: &StrongCorpus,
        indices: &[usize],
        exec: Exec,
    ) -> Result<Vec<f64>> {
        exec.try_map(indices, |&u| {
            self.predict_utterance(
                &corpus.features[u],
                &corpus.text[u],
                &ds.utterances[u].domain_id,
            )
        })
    }
}
