use std::fs;
use std::path::Path;

use super::{format_phonemes, parse_phonemes, ReferenceAssignment, TranscriptRecord};
use crate::error::{Error, Result};

/// Read `utterance_id<TAB>phonemes` lines. Blank lines are skipped; an
/// empty phoneme field is an empty (flagged) transcript.
pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<TranscriptRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, phones) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: k + 1,
            msg: "expected utterance_id<TAB>phonemes".into(),
        })?;
        let id = id.trim();
        if id.is_empty() {
            return Err(Error::Validation {
                line: k + 1,
                msg: "empty utterance_id".into(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::Validation {
                line: k + 1,
                msg: format!("duplicate transcript for {id}"),
            });
        }
        out.push(TranscriptRecord {
            utterance_id: id.to_string(),
            phonemes: parse_phonemes(phones),
        });
    }
    Ok(out)
}

/// Write `utterance_id<TAB>cluster_id<TAB>reference` lines.
pub fn write_references(path: impl AsRef<Path>, refs: &[ReferenceAssignment]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for r in refs {
        s.push_str(&format!(
            "{}\t{}\t{}\n",
            r.utterance_id,
            r.cluster_id,
            format_phonemes(&r.reference)
        ));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_references(path: impl AsRef<Path>) -> Result<Vec<ReferenceAssignment>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(cluster), Some(reference)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::Parse {
                line: k + 1,
                msg: "expected utterance_id<TAB>cluster_id<TAB>reference".into(),
            });
        };
        let cluster_id = cluster.trim().parse().map_err(|_| Error::Parse {
            line: k + 1,
            msg: format!("bad cluster id {cluster:?}"),
        })?;
        out.push(ReferenceAssignment {
            utterance_id: id.trim().to_string(),
            cluster_id,
            reference: parse_phonemes(reference),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcripts_and_references_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("t.tsv");
        fs::write(&t, "u1\th e l o\nu2\t\n\nu3\tw ɜ l d\n").unwrap();
        let ts = read_transcripts(&t).unwrap();
        assert_eq!(ts.len(), 3);
        assert!(ts[1].phonemes.is_empty());
        assert_eq!(ts[2].phonemes[1], "ɜ");

        let refs = vec![ReferenceAssignment {
            utterance_id: "u1".into(),
            cluster_id: -1,
            reference: ts[0].phonemes.clone(),
        }];
        let r = dir.path().join("r.tsv");
        write_references(&r, &refs).unwrap();
        assert_eq!(read_references(&r).unwrap(), refs);
    }

    #[test]
    fn malformed_lines_report_position() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("t.tsv");
        fs::write(&t, "u1\ta b\nno-tab-here\n").unwrap();
        assert!(matches!(
            read_transcripts(&t),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
