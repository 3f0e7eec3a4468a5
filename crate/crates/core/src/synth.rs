//! Synthetic listening test: harmonic tones in white noise, where the true
//! MOS is an affine function of the signal-to-noise ratio.
//!
//! Systems differ by their typical SNR, listeners by a fixed bias, and
//! each utterance gets a phoneme "ASR transcript" of one of a few base
//! sentences whose error count grows as the SNR drops.

use std::f64::consts::PI;
use std::path::Path;

use indexmap::{IndexMap, IndexSet};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{peak_normalize, write_wav, Wave, TARGET_RATE};
use crate::dataset::{audio_path_for, MosDataset, RatingRecord, UtteranceRef, RATINGS_HEADER};
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::textproc::{format_phonemes, Phonemes, TranscriptRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub n_systems: usize,
    pub n_listeners: usize,
    pub ratings_per_utterance: usize,
    pub min_duration: f64,
    pub max_duration: f64,
    pub snr_min: f64,
    pub snr_max: f64,
    /// Spread of per-utterance SNR around its system's centre (dB).
    pub snr_jitter: f64,
    /// Listener biases are drawn from `[-listener_bias, listener_bias]`.
    pub listener_bias: f64,
    pub rating_noise: f64,
    pub domains: Vec<String>,
    pub n_sentences: usize,
    pub sentence_len: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_dev: 50,
            n_test: 50,
            n_systems: 10,
            n_listeners: 16,
            ratings_per_utterance: 4,
            min_duration: 0.8,
            max_duration: 1.2,
            snr_min: -5.0,
            snr_max: 25.0,
            snr_jitter: 2.0,
            listener_bias: 0.5,
            rating_noise: 0.4,
            domains: vec!["main".into()],
            n_sentences: 3,
            sentence_len: 12,
            seed: 0,
        }
    }
}

const ALPHABET: [&str; 20] = [
    "AA", "AE", "AH", "B", "D", "EH", "F", "G", "IH", "IY", "K", "L", "M", "N", "OW", "P", "R",
    "S", "T", "UW",
];

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub dataset: MosDataset,
    /// Prepared (peak-normalized) waveforms aligned with `dataset.utterances`.
    pub waves: Vec<Vec<f64>>,
    pub true_mos: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub transcripts: Vec<TranscriptRecord>,
    pub base_sentences: Vec<Phonemes>,
    pub listener_bias: IndexMap<String, f64>,
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train < 2
            || self.n_systems == 0
            || self.n_listeners == 0
            || self.ratings_per_utterance == 0
        {
            return Err(Error::Config(
                "toy dataset needs >= 2 train utterances, systems, listeners and ratings".into(),
            ));
        }
        if self.ratings_per_utterance > self.n_listeners {
            return Err(Error::Config(
                "ratings_per_utterance exceeds n_listeners".into(),
            ));
        }
        if !(self.min_duration > 0.0 && self.max_duration >= self.min_duration) {
            return Err(Error::Config("invalid duration range".into()));
        }
        if !(self.snr_max > self.snr_min)
            || self.domains.is_empty()
            || self.n_sentences == 0
            || self.sentence_len == 0
        {
            return Err(Error::Config(
                "invalid snr range, domains or sentences".into(),
            ));
        }
        Ok(())
    }

    /// True MOS of an utterance with the given SNR.
    pub fn mos_of_snr(&self, snr: f64) -> f64 {
        (1.0 + 4.0 * (snr - self.snr_min) / (self.snr_max - self.snr_min)).clamp(1.0, 5.0)
    }
}

fn random_sentence<R: Rng>(len: usize, rng: &mut R) -> Phonemes {
    (0..len)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())].to_string())
        .collect()
}

/// Apply `n` random substitutions, deletions or insertions.
pub fn corrupt<R: Rng>(base: &[String], n: usize, rng: &mut R) -> Phonemes {
    let mut s = base.to_vec();
    for _ in 0..n {
        let sym = ALPHABET[rng.random_range(0..ALPHABET.len())].to_string();
        match rng.random_range(0..3) {
            0 if !s.is_empty() => {
                let i = rng.random_range(0..s.len());
                s[i] = sym;
            }
            1 if s.len() > 1 => {
                let i = rng.random_range(0..s.len());
                s.remove(i);
            }
            _ => {
                let i = rng.random_range(0..=s.len());
                s.insert(i, sym);
            }
        }
    }
    s
}

pub fn generate(cfg: &ToyConfig) -> Result<ToyCorpus> {
    cfg.validate()?;
    let n = cfg.n_train + cfg.n_dev + cfg.n_test;
    let mut rng = rng_for(cfg.seed, "synth/toy");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let span = cfg.snr_max - cfg.snr_min;
    let centres: Vec<f64> = (0..cfg.n_systems)
        .map(|s| cfg.snr_min + span * (s as f64 + 0.5) / cfg.n_systems as f64)
        .collect();
    let listener_bias: IndexMap<String, f64> = (0..cfg.n_listeners)
        .map(|l| {
            (
                format!("L{l:02}"),
                if cfg.listener_bias > 0.0 {
                    rng.random_range(-cfg.listener_bias..=cfg.listener_bias)
                } else {
                    0.0
                },
            )
        })
        .collect();
    let base_sentences: Vec<Phonemes> = (0..cfg.n_sentences)
        .map(|_| random_sentence(cfg.sentence_len, &mut rng))
        .collect();

    let mut utterances = Vec::with_capacity(n);
    let mut ratings = Vec::new();
    let mut waves = Vec::with_capacity(n);
    let mut true_mos = Vec::with_capacity(n);
    let mut snr_db = Vec::with_capacity(n);
    let mut transcripts = Vec::with_capacity(n);
    let mut splits: IndexMap<String, IndexSet<String>> = IndexMap::new();

    for i in 0..n {
        let id = format!("utt{i:04}");
        let sys = i % cfg.n_systems;
        let domain = &cfg.domains[(i / cfg.n_systems) % cfg.domains.len()];
        let snr = (centres[sys] + cfg.snr_jitter * normal.sample(&mut rng))
            .clamp(cfg.snr_min, cfg.snr_max);
        let mos = cfg.mos_of_snr(snr);

        let dur = rng.random_range(cfg.min_duration..=cfg.max_duration);
        let len = (dur * TARGET_RATE as f64).round() as usize;
        let f0 = rng.random_range(120.0..300.0);
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        let mut samples: Vec<f64> = (0..len)
            .map(|k| {
                let t = k as f64 / TARGET_RATE as f64;
                (1..=3)
                    .map(|h| (2.0 * PI * f0 * h as f64 * t + phase).sin() / h as f64)
                    .sum()
            })
            .collect();
        let p_sig = samples.iter().map(|v| v * v).sum::<f64>() / len as f64;
        let sigma = (p_sig / 10f64.powf(snr / 10.0)).sqrt();
        samples
            .iter_mut()
            .for_each(|v| *v += sigma * normal.sample(&mut rng));
        peak_normalize(&mut samples).map_err(|m| Error::Argument(m.into()))?;
        // match what a 32-bit float WAV round trip would give
        samples.iter_mut().for_each(|v| *v = *v as f32 as f64);

        let mut raters: Vec<usize> = (0..cfg.n_listeners).collect();
        for k in 0..cfg.ratings_per_utterance {
            let j = rng.random_range(k..cfg.n_listeners);
            raters.swap(k, j);
            let (lid, bias) = listener_bias.get_index(raters[k]).expect("listener");
            let r = (mos + bias + cfg.rating_noise * normal.sample(&mut rng))
                .round()
                .clamp(1.0, 5.0) as u8;
            ratings.push(RatingRecord {
                utterance_id: id.clone(),
                listener_id: lid.clone(),
                raw_score: r,
            });
        }

        let sentence = &base_sentences[i % cfg.n_sentences];
        let n_edits =
            ((cfg.snr_max - snr) / span * 2.0 + rng.random_range(0.0..1.0)).floor() as usize;
        transcripts.push(TranscriptRecord {
            utterance_id: id.clone(),
            phonemes: corrupt(sentence, n_edits.min(2), &mut rng),
        });

        let split = if i < cfg.n_train {
            "train"
        } else if i < cfg.n_train + cfg.n_dev {
            "dev"
        } else {
            "test"
        };
        splits
            .entry(split.to_string())
            .or_default()
            .insert(id.clone());
        utterances.push(UtteranceRef {
            utterance_id: id.clone(),
            audio_path: Path::new("audio").join(format!("{id}.wav")),
            system_id: format!("sys{sys:02}"),
            domain_id: domain.clone(),
        });
        waves.push(samples);
        true_mos.push(mos);
        snr_db.push(snr);
    }
    let dataset = MosDataset::from_records(utterances, ratings, splits)?;
    Ok(ToyCorpus {
        dataset,
        waves,
        true_mos,
        snr_db,
        transcripts,
        base_sentences,
        listener_bias,
    })
}

impl ToyCorpus {
    /// Write `audio/*.wav`, one ratings CSV per split and `transcripts.tsv`
    /// under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let audio = dir.join("audio");
        std::fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
        for (u, w) in self.dataset.utterances.iter().zip(&self.waves) {
            write_wav(
                audio_path_for(&audio, &u.utterance_id),
                &Wave::new(w.clone(), TARGET_RATE),
            )?;
        }
        let grouped = self.dataset.ratings_by_utterance();
        for (split, ids) in &self.dataset.splits {
            let path = dir.join(format!("{split}.csv"));
            let mut s = RATINGS_HEADER.join(",");
            s.push('\n');
            for (u, rs) in self.dataset.utterances.iter().zip(&grouped) {
                if !ids.contains(&u.utterance_id) {
                    continue;
                }
                for r in rs {
                    s.push_str(&format!(
                        "{},{},{},{},{}\n",
                        u.utterance_id, r.listener_id, u.system_id, u.domain_id, r.raw_score
                    ));
                }
            }
            std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("transcripts.tsv");
        let s: String = self
            .transcripts
            .iter()
            .map(|t| format!("{}\t{}\n", t.utterance_id, format_phonemes(&t.phonemes)))
            .collect();
        std::fs::write(&path, s).map_err(|e| Error::io(&path, e))
    }
}
