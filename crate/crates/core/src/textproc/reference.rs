use serde::{Deserialize, Serialize};

use super::dbscan::{dbscan_matrix, distance_matrix, NOISE};
use super::distance::normalized_levenshtein;
use super::Phonemes;
use crate::error::{Error, Result};
use crate::par::Exec;

/// ASR phoneme hypothesis for one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub utterance_id: String,
    pub phonemes: Phonemes,
}

/// Estimated reference sequence of one utterance. Noise points
/// (`cluster_id == -1`) reference their own transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceAssignment {
    pub utterance_id: String,
    pub cluster_id: i64,
    pub reference: Phonemes,
}

/// Medoid under normalized Levenshtein distance: the member with the
/// smallest summed distance to the others, ties going to the
/// lexicographically smallest sequence.
pub fn medoid(cluster: &[Phonemes]) -> Result<Phonemes> {
    let refs: Vec<&Phonemes> = cluster.iter().collect();
    let d = distance_matrix(&refs, |a, b| normalized_levenshtein(a, b), Exec::Sequential);
    let all: Vec<usize> = (0..cluster.len()).collect();
    medoid_of(&refs, &d, &all).map(|i| cluster[i].clone())
}

const TIE_TOL: f64 = 1e-12;

fn medoid_of(items: &[&Phonemes], dist: &[Vec<f64>], members: &[usize]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &i in members {
        let sum: f64 = members.iter().map(|&j| dist[i][j]).sum();
        best = match best {
            None => Some((i, sum)),
            Some((b, bs)) => {
                if sum < bs - TIE_TOL || ((sum - bs).abs() <= TIE_TOL && items[i] < items[b]) {
                    Some((i, sum))
                } else {
                    Some((b, bs))
                }
            }
        };
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Argument("medoid of an empty cluster".into()))
}

/// Canonical processing order: sequences sorted lexicographically.
fn canonical_order(seqs: &[Phonemes]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.sort_by(|&a, &b| seqs[a].cmp(&seqs[b]));
    order
}

/// DBSCAN labels for transcripts under normalized Levenshtein distance,
/// returned in input order.
///
/// Points are processed in lexicographic order of their sequences, so both
/// the partition and the cluster numbering are independent of input order.
pub fn cluster_transcripts(
    seqs: &[Phonemes],
    eps: f64,
    min_pts: usize,
    exec: Exec,
) -> Result<Vec<i64>> {
    let order = canonical_order(seqs);
    let sorted: Vec<&Phonemes> = order.iter().map(|&i| &seqs[i]).collect();
    let d = distance_matrix(&sorted, |a, b| normalized_levenshtein(a, b), exec);
    let sorted_labels = dbscan_matrix(&d, eps, min_pts)?;
    let mut labels = vec![NOISE; seqs.len()];
    for (k, &i) in order.iter().enumerate() {
        labels[i] = sorted_labels[k];
    }
    Ok(labels)
}

/// Cluster transcripts and assign each utterance its cluster's medoid.
pub fn extract_references(
    transcripts: &[TranscriptRecord],
    eps: f64,
    min_pts: usize,
    exec: Exec,
) -> Result<Vec<ReferenceAssignment>> {
    let seqs: Vec<Phonemes> = transcripts.iter().map(|t| t.phonemes.clone()).collect();
    let order = canonical_order(&seqs);
    let sorted: Vec<&Phonemes> = order.iter().map(|&i| &seqs[i]).collect();
    let d = distance_matrix(&sorted, |a, b| normalized_levenshtein(a, b), exec);
    let labels = dbscan_matrix(&d, eps, min_pts)?;

    let n_clusters = labels
        .iter()
        .copied()
        .max()
        .map_or(0, |m| (m + 1).max(0) as usize);
    let mut members = vec![Vec::new(); n_clusters];
    for (k, &l) in labels.iter().enumerate() {
        if l != NOISE {
            members[l as usize].push(k);
        }
    }
    let medoids = members
        .iter()
        .map(|m| medoid_of(&sorted, &d, m))
        .collect::<Result<Vec<_>>>()?;

    let mut out: Vec<Option<ReferenceAssignment>> = vec![None; transcripts.len()];
    for (k, &i) in order.iter().enumerate() {
        let reference = if labels[k] == NOISE {
            sorted[k].clone()
        } else {
            sorted[medoids[labels[k] as usize]].clone()
        };
        out[i] = Some(ReferenceAssignment {
            utterance_id: transcripts[i].utterance_id.clone(),
            cluster_id: labels[k],
            reference,
        });
    }
    Ok(out
        .into_iter()
        .map(|r| r.expect("every transcript assigned"))
        .collect())
}
