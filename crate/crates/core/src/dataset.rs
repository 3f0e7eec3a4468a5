//! Listening-test data: utterances, ratings, splits and score scaling.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RATINGS_HEADER: [&str; 5] = [
    "utterance_id",
    "listener_id",
    "system_id",
    "domain_id",
    "score",
];
pub const PREDICTIONS_HEADER: [&str; 2] = ["utterance_id", "score"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRef {
    pub utterance_id: String,
    pub audio_path: PathBuf,
    pub system_id: String,
    pub domain_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub utterance_id: String,
    pub listener_id: String,
    pub raw_score: u8,
}

/// Entry of the listener embedding table.
///
/// Each domain owns one reserved mean-listener entry. Those entries come
/// first (indices `0..n_domains`, in domain first-appearance order) and the
/// real raters follow in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ListenerKey {
    Mean { domain_id: String },
    Rater(String),
}

/// Linear map between the raw 1..5 MOS scale and the training scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub raw_min: f64,
    pub raw_max: f64,
    pub norm_min: f64,
    pub norm_max: f64,
}

impl Default for ScoreScale {
    fn default() -> Self {
        Self {
            raw_min: 1.0,
            raw_max: 5.0,
            norm_min: -1.0,
            norm_max: 1.0,
        }
    }
}

impl ScoreScale {
    fn slope(&self) -> f64 {
        (self.norm_max - self.norm_min) / (self.raw_max - self.raw_min)
    }

    pub fn normalize(&self, raw: f64) -> Result<f64> {
        if !(self.raw_min..=self.raw_max).contains(&raw) {
            return Err(Error::Range {
                value: raw,
                min: self.raw_min,
                max: self.raw_max,
            });
        }
        Ok(self.norm_min + (raw - self.raw_min) * self.slope())
    }

    /// Inverse of [`ScoreScale::normalize`]; values outside the normalized
    /// range map outside the raw range (no clamping here).
    pub fn denormalize(&self, norm: f64) -> f64 {
        self.raw_min + (norm - self.norm_min) / self.slope()
    }

    pub fn clamp_raw(&self, raw: f64) -> f64 {
        raw.clamp(self.raw_min, self.raw_max)
    }
}

/// Free-function form of [`ScoreScale::normalize`].
pub fn normalize_score(raw: f64, scale: &ScoreScale) -> Result<f64> {
    scale.normalize(raw)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MosDataset {
    pub utterances: Vec<UtteranceRef>,
    pub ratings: Vec<RatingRecord>,
    pub splits: IndexMap<String, IndexSet<String>>,
    pub listener_index: IndexMap<ListenerKey, usize>,
    pub domain_index: IndexMap<String, usize>,
    #[serde(skip)]
    by_id: HashMap<String, usize>,
}

/// Where the audio for `utterance_id` lives: ids that already carry an
/// extension are used verbatim, others get `.wav` appended.
pub fn audio_path_for(audio_dir: &Path, utterance_id: &str) -> PathBuf {
    if Path::new(utterance_id).extension().is_some() {
        audio_dir.join(utterance_id)
    } else {
        audio_dir.join(format!("{utterance_id}.wav"))
    }
}

struct Builder<'a> {
    audio_dir: &'a Path,
    utterances: Vec<UtteranceRef>,
    ratings: Vec<RatingRecord>,
    by_id: HashMap<String, usize>,
    splits: IndexMap<String, IndexSet<String>>,
}

impl<'a> Builder<'a> {
    fn new(audio_dir: &'a Path) -> Self {
        Self {
            audio_dir,
            utterances: Vec::new(),
            ratings: Vec::new(),
            by_id: HashMap::new(),
            splits: IndexMap::new(),
        }
    }

    fn read_csv(&mut self, path: &Path, split: Option<&str>) -> Result<()> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(file);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        let mut cols = [usize::MAX; 5];
        for (i, h) in headers.iter().enumerate() {
            let h = h.trim();
            match RATINGS_HEADER.iter().position(|&c| c == h) {
                Some(k) if cols[k] == usize::MAX => cols[k] = i,
                Some(_) => {
                    return Err(Error::Schema(format!(
                        "{}: duplicate column {h:?}",
                        path.display()
                    )))
                }
                None => {
                    return Err(Error::Schema(format!(
                        "{}: unknown column {h:?}",
                        path.display()
                    )))
                }
            }
        }
        if let Some(k) = cols.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Schema(format!(
                "{}: missing column {:?}",
                path.display(),
                RATINGS_HEADER[k]
            )));
        }

        let mut split_ids = IndexSet::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |k: usize| rec.get(cols[k]).unwrap_or("").trim();
            let (utt, listener, system, domain, score) =
                (field(0), field(1), field(2), field(3), field(4));
            for (name, v) in [
                ("utterance_id", utt),
                ("listener_id", listener),
                ("system_id", system),
                ("domain_id", domain),
            ] {
                if v.is_empty() {
                    return Err(Error::Validation {
                        line,
                        msg: format!("empty {name}"),
                    });
                }
            }
            let raw: i64 = score.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("score {score:?} is not an integer"),
            })?;
            if !(1..=5).contains(&raw) {
                return Err(Error::Validation {
                    line,
                    msg: format!("score {raw} outside 1..5"),
                });
            }
            match self.by_id.get(utt) {
                Some(&i) => {
                    let u = &self.utterances[i];
                    if u.system_id != system || u.domain_id != domain {
                        return Err(Error::Validation {
                            line,
                            msg: format!(
                                "utterance {utt} redeclared with a different system or domain"
                            ),
                        });
                    }
                    if split.is_some() && !split_ids.contains(utt) {
                        return Err(Error::Validation {
                            line,
                            msg: format!("utterance {utt} appears in more than one split"),
                        });
                    }
                }
                None => {
                    self.by_id.insert(utt.to_string(), self.utterances.len());
                    self.utterances.push(UtteranceRef {
                        utterance_id: utt.to_string(),
                        audio_path: audio_path_for(self.audio_dir, utt),
                        system_id: system.to_string(),
                        domain_id: domain.to_string(),
                    });
                }
            }
            split_ids.insert(utt.to_string());
            self.ratings.push(RatingRecord {
                utterance_id: utt.to_string(),
                listener_id: listener.to_string(),
                raw_score: raw as u8,
            });
        }
        if let Some(name) = split {
            if self.splits.contains_key(name) {
                return Err(Error::Config(format!("split {name:?} given twice")));
            }
            self.splits.insert(name.to_string(), split_ids);
        }
        Ok(())
    }

    fn finish(self) -> MosDataset {
        let mut domain_index = IndexMap::new();
        for u in &self.utterances {
            let n = domain_index.len();
            domain_index.entry(u.domain_id.clone()).or_insert(n);
        }
        let mut listener_index = IndexMap::new();
        for d in domain_index.keys() {
            let n = listener_index.len();
            listener_index.insert(
                ListenerKey::Mean {
                    domain_id: d.clone(),
                },
                n,
            );
        }
        for r in &self.ratings {
            let n = listener_index.len();
            listener_index
                .entry(ListenerKey::Rater(r.listener_id.clone()))
                .or_insert(n);
        }
        MosDataset {
            utterances: self.utterances,
            ratings: self.ratings,
            splits: self.splits,
            listener_index,
            domain_index,
            by_id: self.by_id,
        }
    }
}

impl MosDataset {
    /// Load a single ratings file. No named splits are created.
    pub fn load(ratings_csv: impl AsRef<Path>, audio_dir: impl AsRef<Path>) -> Result<Self> {
        let mut b = Builder::new(audio_dir.as_ref());
        b.read_csv(ratings_csv.as_ref(), None)?;
        Ok(b.finish())
    }

    /// Load one ratings file per split (e.g. train/dev/test) into one dataset.
    /// Index assignment follows file order, then row order.
    pub fn load_splits<S: AsRef<str>, P: AsRef<Path>>(
        files: &[(S, P)],
        audio_dir: impl AsRef<Path>,
    ) -> Result<Self> {
        let mut b = Builder::new(audio_dir.as_ref());
        for (name, path) in files {
            b.read_csv(path.as_ref(), Some(name.as_ref()))?;
        }
        Ok(b.finish())
    }

    /// Build a dataset from in-memory records (used by generators and tests).
    pub fn from_records(
        utterances: Vec<UtteranceRef>,
        ratings: Vec<RatingRecord>,
        splits: IndexMap<String, IndexSet<String>>,
    ) -> Result<Self> {
        let mut by_id = HashMap::new();
        for (i, u) in utterances.iter().enumerate() {
            if u.system_id.is_empty() || u.domain_id.is_empty() {
                return Err(Error::Argument(format!(
                    "utterance {} has empty system or domain",
                    u.utterance_id
                )));
            }
            if by_id.insert(u.utterance_id.clone(), i).is_some() {
                return Err(Error::Argument(format!(
                    "duplicate utterance id {}",
                    u.utterance_id
                )));
            }
        }
        for r in &ratings {
            if !by_id.contains_key(&r.utterance_id) {
                return Err(Error::Argument(format!(
                    "rating references unknown utterance {}",
                    r.utterance_id
                )));
            }
            if !(1..=5).contains(&r.raw_score) {
                return Err(Error::Argument(format!(
                    "score {} outside 1..5",
                    r.raw_score
                )));
            }
        }
        let mut seen = IndexSet::new();
        for ids in splits.values() {
            for id in ids {
                if !by_id.contains_key(id) {
                    return Err(Error::Argument(format!(
                        "split references unknown utterance {id}"
                    )));
                }
                if !seen.insert(id.clone()) {
                    return Err(Error::Argument(format!(
                        "utterance {id} appears in more than one split"
                    )));
                }
            }
        }
        let b = Builder {
            audio_dir: Path::new(""),
            utterances,
            ratings,
            by_id,
            splits,
        };
        Ok(b.finish())
    }

    pub fn utterance(&self, id: &str) -> Option<&UtteranceRef> {
        self.index_of(id).map(|i| &self.utterances[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        if self.by_id.len() == self.utterances.len() {
            self.by_id.get(id).copied()
        } else {
            // deserialized datasets skip the lookup table
            self.utterances.iter().position(|u| u.utterance_id == id)
        }
    }

    pub fn listeners(&self) -> impl Iterator<Item = &str> {
        self.listener_index.keys().filter_map(|k| match k {
            ListenerKey::Rater(id) => Some(id.as_str()),
            ListenerKey::Mean { .. } => None,
        })
    }

    pub fn n_listeners(&self) -> usize {
        self.listeners().count()
    }

    pub fn mean_listener_index(&self, domain_id: &str) -> Option<usize> {
        self.listener_index
            .get(&ListenerKey::Mean {
                domain_id: domain_id.to_string(),
            })
            .copied()
    }

    pub fn rater_index(&self, listener_id: &str) -> Option<usize> {
        self.listener_index
            .get(&ListenerKey::Rater(listener_id.to_string()))
            .copied()
    }

    /// Utterance indices of a named split, in dataset order.
    pub fn split_indices(&self, name: &str) -> Result<Vec<usize>> {
        let ids = self
            .splits
            .get(name)
            .ok_or_else(|| Error::Config(format!("dataset has no split named {name:?}")))?;
        Ok(self
            .utterances
            .iter()
            .enumerate()
            .filter(|(_, u)| ids.contains(&u.utterance_id))
            .map(|(i, _)| i)
            .collect())
    }

    /// Ratings grouped per utterance, indexed like `utterances`.
    pub fn ratings_by_utterance(&self) -> Vec<Vec<&RatingRecord>> {
        let mut out = vec![Vec::new(); self.utterances.len()];
        for r in &self.ratings {
            if let Some(i) = self.index_of(&r.utterance_id) {
                out[i].push(r);
            }
        }
        out
    }

    /// Restrict to a subset of utterances (and their ratings), keeping the
    /// embedding indices of the full dataset.
    pub fn subset(&self, indices: &[usize]) -> MosDataset {
        let keep: IndexSet<&str> = indices
            .iter()
            .map(|&i| self.utterances[i].utterance_id.as_str())
            .collect();
        let utterances: Vec<_> = indices
            .iter()
            .map(|&i| self.utterances[i].clone())
            .collect();
        let ratings = self
            .ratings
            .iter()
            .filter(|r| keep.contains(r.utterance_id.as_str()))
            .cloned()
            .collect();
        let splits = self
            .splits
            .iter()
            .map(|(k, v)| {
                (
                    k.clone(),
                    v.iter()
                        .filter(|id| keep.contains(id.as_str()))
                        .cloned()
                        .collect(),
                )
            })
            .collect();
        let by_id = utterances
            .iter()
            .enumerate()
            .map(|(i, u)| (u.utterance_id.clone(), i))
            .collect();
        MosDataset {
            utterances,
            ratings,
            splits,
            listener_index: self.listener_index.clone(),
            domain_index: self.domain_index.clone(),
            by_id,
        }
    }

    /// Rebuild the id lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.by_id = self
            .utterances
            .iter()
            .enumerate()
            .map(|(i, u)| (u.utterance_id.clone(), i))
            .collect();
    }
}

/// Per-utterance mean of the raw listener scores (the mean-listener target).
///
/// Every utterance belongs to exactly one domain, so the mean over its own
/// ratings is the within-domain average.
pub fn mean_listener_targets(ds: &MosDataset) -> Result<IndexMap<String, f64>> {
    let grouped = ds.ratings_by_utterance();
    let mut out = IndexMap::with_capacity(ds.utterances.len());
    for (u, rs) in ds.utterances.iter().zip(&grouped) {
        if rs.is_empty() {
            return Err(Error::MissingTarget(u.utterance_id.clone()));
        }
        let sum: u32 = rs.iter().map(|r| r.raw_score as u32).sum();
        out.insert(u.utterance_id.clone(), sum as f64 / rs.len() as f64);
    }
    Ok(out)
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[(String, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::from("utterance_id,score\n");
    for (id, score) in preds {
        s.push_str(&format!("{id},{score}\n"));
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<IndexMap<String, f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    if headers.iter().map(str::trim).ne(PREDICTIONS_HEADER) {
        return Err(Error::Schema(format!(
            "{}: expected header utterance_id,score",
            path.display()
        )));
    }
    let mut out = IndexMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let id = rec[0].trim().to_string();
        let score: f64 = rec[1].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad score {:?}", &rec[1]),
        })?;
        if !score.is_finite() {
            return Err(Error::Validation {
                line,
                msg: "non-finite score".into(),
            });
        }
        if out.insert(id.clone(), score).is_some() {
            return Err(Error::Validation {
                line,
                msg: format!("duplicate prediction for {id}"),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_file() {
        let f = csv_file(
            "utterance_id,listener_id,system_id,domain_id,score\n\
             u1,l1,s1,main,4\nu1,l2,s1,main,5\nu2,l1,s2,main,2\nu2,l2,s2,main,3\n",
        );
        let ds = MosDataset::load(f.path(), "/audio").unwrap();
        assert_eq!(ds.utterances.len(), 2);
        assert_eq!(ds.n_listeners(), 2);
        assert_eq!(ds.utterances[0].audio_path, PathBuf::from("/audio/u1.wav"));
        assert_eq!(ds.mean_listener_index("main"), Some(0));
        assert_eq!(ds.rater_index("l1"), Some(1));
        assert_eq!(ds.rater_index("l2"), Some(2));
    }

    #[test]
    fn rejects_out_of_range_score_with_line() {
        let f = csv_file(
            "utterance_id,listener_id,system_id,domain_id,score\nu1,l1,s1,d,4\nu2,l1,s1,d,6\n",
        );
        match MosDataset::load(f.path(), ".") {
            Err(Error::Validation { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains('6'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_rows_and_unknown_columns() {
        let f = csv_file("utterance_id,listener_id,system_id,domain_id,score\nu1,l1,s1,d,four\n");
        assert!(matches!(
            MosDataset::load(f.path(), "."),
            Err(Error::Parse { line: 2, .. })
        ));
        let f = csv_file("utterance_id,listener_id,system_id,domain_id,score,extra\n");
        assert!(matches!(
            MosDataset::load(f.path(), "."),
            Err(Error::Schema(_))
        ));
        let f = csv_file("utterance_id,listener_id,system_id,score\n");
        assert!(matches!(
            MosDataset::load(f.path(), "."),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn rejects_conflicting_duplicate_utterance() {
        let f = csv_file(
            "utterance_id,listener_id,system_id,domain_id,score\nu1,l1,s1,d,4\nu1,l2,s2,d,4\n",
        );
        assert!(matches!(
            MosDataset::load(f.path(), "."),
            Err(Error::Validation { line: 3, .. })
        ));
    }

    #[test]
    fn header_only_is_empty() {
        let f = csv_file("utterance_id,listener_id,system_id,domain_id,score\n");
        let ds = MosDataset::load(f.path(), ".").unwrap();
        assert!(ds.utterances.is_empty() && ds.ratings.is_empty());
    }

    #[test]
    fn splits_must_be_disjoint() {
        let a = csv_file("utterance_id,listener_id,system_id,domain_id,score\nu1,l1,s1,d,4\n");
        let b = csv_file(
            "utterance_id,listener_id,system_id,domain_id,score\nu2,l1,s1,d,4\nu1,l1,s1,d,3\n",
        );
        let r = MosDataset::load_splits(&[("train", a.path()), ("dev", b.path())], ".");
        assert!(matches!(r, Err(Error::Validation { line: 3, .. })));
    }

    #[test]
    fn deterministic_index_assignment() {
        let body = "utterance_id,listener_id,system_id,domain_id,score\n\
                    a,z,s,ood,1\nb,y,s,main,2\nc,z,t,main,3\n";
        let d1 = MosDataset::load(csv_file(body).path(), ".").unwrap();
        let d2 = MosDataset::load(csv_file(body).path(), ".").unwrap();
        assert_eq!(d1, d2);
        assert_eq!(d1.domain_index.get("ood"), Some(&0));
        assert_eq!(d1.mean_listener_index("main"), Some(1));
        assert_eq!(d1.rater_index("z"), Some(2));
        assert_eq!(d1.rater_index("y"), Some(3));
    }

    #[test]
    fn normalize_examples() {
        let s = ScoreScale::default();
        assert_eq!(s.normalize(1.0).unwrap(), -1.0);
        assert_eq!(s.normalize(3.0).unwrap(), 0.0);
        assert_eq!(s.normalize(4.5).unwrap(), 0.75);
        assert!(matches!(s.normalize(0.5), Err(Error::Range { .. })));
        assert!(s.normalize(5.5).is_err());
    }

    fn ds_with_scores(scores: &[u8]) -> MosDataset {
        let utt = UtteranceRef {
            utterance_id: "u".into(),
            audio_path: "u.wav".into(),
            system_id: "s".into(),
            domain_id: "d".into(),
        };
        let ratings = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| RatingRecord {
                utterance_id: "u".into(),
                listener_id: format!("l{i}"),
                raw_score: s,
            })
            .collect();
        MosDataset::from_records(vec![utt], ratings, IndexMap::new()).unwrap()
    }

    #[test]
    fn mean_listener_examples() {
        assert_eq!(
            mean_listener_targets(&ds_with_scores(&[4, 5])).unwrap()["u"],
            4.5
        );
        assert_eq!(
            mean_listener_targets(&ds_with_scores(&[3])).unwrap()["u"],
            3.0
        );
        assert_eq!(
            mean_listener_targets(&ds_with_scores(&[1, 2, 3, 4, 5])).unwrap()["u"],
            3.0
        );
        assert!(matches!(
            mean_listener_targets(&ds_with_scores(&[])),
            Err(Error::MissingTarget(_))
        ));
    }

    #[test]
    fn predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let preds = vec![("a".to_string(), 3.0 + 1.0 / 3.0), ("b".to_string(), 1.25)];
        write_predictions(&p, &preds).unwrap();
        let back = read_predictions(&p).unwrap();
        assert_eq!(back["a"], preds[0].1);
        assert_eq!(back["b"], 1.25);
    }

    proptest! {
        #[test]
        fn normalize_inverts(raw in 1.0f64..=5.0) {
            let s = ScoreScale::default();
            let back = s.denormalize(s.normalize(raw).unwrap());
            prop_assert!((back - raw).abs() <= 1e-12);
        }

        #[test]
        fn mean_targets_ignore_order(mut scores in proptest::collection::vec(1u8..=5, 1..20), seed in any::<u64>()) {
            let a = mean_listener_targets(&ds_with_scores(&scores)).unwrap()["u"];
            use rand::seq::SliceRandom;
            let mut rng = crate::seed::rng_for(seed, "shuffle");
            scores.shuffle(&mut rng);
            let b = mean_listener_targets(&ds_with_scores(&scores)).unwrap()["u"];
            prop_assert_eq!(a, b);
        }
    }
}
