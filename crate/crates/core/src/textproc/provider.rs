use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use super::{read_transcripts, Phonemes};
use crate::error::{Error, Result};

/// Source of ASR phoneme hypotheses per utterance.
pub trait PhonemeProvider: Send + Sync {
    fn phonemes(&self, utterance_id: &str) -> Result<Phonemes>;
}

/// Precomputed transcripts read from a transcripts file.
#[derive(Debug, Clone, Default)]
pub struct FileProvider {
    map: HashMap<String, Phonemes>,
}

impl FileProvider {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let map = read_transcripts(path)?
            .into_iter()
            .map(|t| (t.utterance_id, t.phonemes))
            .collect();
        Ok(Self { map })
    }

    pub fn from_map(map: HashMap<String, Phonemes>) -> Self {
        Self { map }
    }
}

impl PhonemeProvider for FileProvider {
    fn phonemes(&self, utterance_id: &str) -> Result<Phonemes> {
        self.map
            .get(utterance_id)
            .cloned()
            .ok_or_else(|| Error::Lookup(format!("no transcript for utterance {utterance_id}")))
    }
}

/// Deterministic pseudo-transcripts derived from the utterance id.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    pub alphabet: Vec<String>,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SyntheticProvider {
    fn default() -> Self {
        let alphabet = ["a", "e", "i", "o", "u", "k", "s", "t", "n", "m"]
            .map(String::from)
            .to_vec();
        Self {
            alphabet,
            min_len: 4,
            max_len: 12,
            seed: 0,
        }
    }
}

impl PhonemeProvider for SyntheticProvider {
    fn phonemes(&self, utterance_id: &str) -> Result<Phonemes> {
        let mut rng =
            crate::seed::rng_for(self.seed, &format!("synthetic-phonemes/{utterance_id}"));
        let len = rng.random_range(self.min_len..=self.max_len);
        Ok((0..len)
            .map(|_| self.alphabet[rng.random_range(0..self.alphabet.len())].clone())
            .collect())
    }
}
