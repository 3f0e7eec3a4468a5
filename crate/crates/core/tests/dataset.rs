use std::collections::BTreeMap;
use std::fs;

use proptest::prelude::*;
use utmos::dataset::*;
use utmos::Error;

const HEADER: &str = "utterance_id,listener_id,system_id,domain_id,score\n";

fn write(dir: &std::path::Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn splits_load_with_listener_layout() {
    let dir = tempfile::tempdir().unwrap();
    let train = write(
        dir.path(),
        "train.csv",
        &format!("{HEADER}a,l1,s1,main,4\na,l2,s1,main,5\nb,l1,s2,main,2\nc,l3,s2,ood,3\n"),
    );
    let dev = write(
        dir.path(),
        "dev.csv",
        &format!("{HEADER}d,l2,s1,main,1\nd,l4,s1,main,2\n"),
    );
    let ds = MosDataset::load_splits(
        &[("train", &train), ("dev", &dev)],
        dir.path().join("audio"),
    )
    .unwrap();
    assert_eq!(ds.utterances.len(), 4);
    assert_eq!(ds.split_indices("dev").unwrap(), vec![3]);
    // mean listeners of both domains first, then raters in order of appearance
    assert_eq!(ds.mean_listener_index("main"), Some(0));
    assert_eq!(ds.mean_listener_index("ood"), Some(1));
    assert_eq!(ds.rater_index("l1"), Some(2));
    assert_eq!(ds.rater_index("l4"), Some(5));
    assert_eq!(ds.n_listeners(), 4);
    assert_eq!(ds.listener_index.len(), 6);
    assert_eq!(
        ds.utterances[0].audio_path,
        dir.path().join("audio").join("a.wav")
    );
    let m = mean_listener_targets(&ds).unwrap();
    assert_eq!(m["a"], 4.5);
    assert_eq!(m["d"], 1.5);
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "utterance_id,listener_id,system_id,score\na,l,s,3\n",
            "schema",
        ),
        (&format!("{HEADER}a,l,s,main,7\n") as &str, "validation"),
        (&format!("{HEADER}a,l,s,main,x\n"), "parse"),
        (&format!("{HEADER}a,,s,main,3\n"), "validation"),
        (
            &format!("{HEADER}a,l,s,main,3\na,l2,s9,main,3\n"),
            "validation",
        ),
    ];
    for (i, (body, kind)) in cases.iter().enumerate() {
        let p = write(dir.path(), &format!("r{i}.csv"), body);
        let err = MosDataset::load(&p, dir.path()).unwrap_err();
        assert_eq!(err.kind(), *kind, "case {i}: {err}");
    }
    assert!(matches!(
        MosDataset::load(dir.path().join("missing.csv"), dir.path()),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn utterance_in_two_splits_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", &format!("{HEADER}u,l,s,main,3\n"));
    let b = write(dir.path(), "b.csv", &format!("{HEADER}u,l2,s,main,4\n"));
    assert!(MosDataset::load_splits(&[("train", &a), ("dev", &b)], dir.path()).is_err());
}

#[test]
fn predictions_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pred.csv");
    let preds = vec![
        ("a".to_string(), 0.1 + 0.2),
        ("b".to_string(), 1.0 / 3.0),
        ("c".to_string(), 4.999999999999999),
    ];
    write_predictions(&p, &preds).unwrap();
    let back = read_predictions(&p).unwrap();
    for (id, v) in &preds {
        assert_eq!(back[id].to_bits(), v.to_bits());
    }
    fs::write(&p, "id,score\na,1\n").unwrap();
    assert!(matches!(read_predictions(&p), Err(Error::Schema(_))));
}

proptest! {
    #[test]
    fn normalization_round_trips(raw in 1.0f64..=5.0) {
        let s = ScoreScale::default();
        let n = s.normalize(raw).unwrap();
        prop_assert!((-1.0..=1.0).contains(&n));
        prop_assert!((s.denormalize(n) - raw).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_scores_error(raw in prop_oneof![-10.0f64..0.999, 5.001f64..10.0]) {
        let is_range = matches!(normalize_score(raw, &ScoreScale::default()), Err(Error::Range { .. }));
        prop_assert!(is_range);
    }

    #[test]
    fn mean_targets_match_oracle(rows in prop::collection::vec((0usize..6, 0usize..5, 1u8..=5), 1..60)) {
        let dir = tempfile::tempdir().unwrap();
        let mut body = HEADER.to_string();
        for (u, l, s) in &rows {
            body.push_str(&format!("u{u},l{l},sys{},main,{s}\n", u % 2));
        }
        let p = write(dir.path(), "r.csv", &body);
        let ds = MosDataset::load(&p, dir.path()).unwrap();
        let got = mean_listener_targets(&ds).unwrap();
        let mut want: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for (u, _, s) in &rows {
            let e = want.entry(format!("u{u}")).or_default();
            e.0 += *s as f64;
            e.1 += 1.0;
        }
        prop_assert_eq!(got.len(), want.len());
        for (id, (sum, n)) in want {
            prop_assert!((got[&id] - sum / n).abs() < 1e-12);
        }
    }
}
