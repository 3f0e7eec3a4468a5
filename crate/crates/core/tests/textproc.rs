mod common;

use common::*;
use proptest::prelude::*;
use utmos::textproc::*;
use utmos::Exec;

fn phones(max_len: usize) -> impl Strategy<Value = Phonemes> {
    prop::collection::vec(
        prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from),
        0..max_len,
    )
}

proptest! {
    #[test]
    fn levenshtein_matches_dp_oracle(a in phones(12), b in phones(12)) {
        prop_assert_eq!(levenshtein(&a, &b), edit_distance(&a, &b));
        let n = normalized_levenshtein(&a, &b);
        prop_assert!((0.0..=1.0).contains(&n));
        prop_assert_eq!(n, normalized_levenshtein(&b, &a));
        prop_assert_eq!(n == 0.0, a == b);
    }

    #[test]
    fn clustering_is_order_invariant(seqs in prop::collection::vec(phones(8), 2..25), rot in 0usize..25, eps in 0.1f64..0.6) {
        let labels = cluster_transcripts(&seqs, eps, 2, Exec::Sequential).unwrap();
        let k = rot % seqs.len();
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.rotate_left(k);
        order.reverse();
        let shuffled: Vec<Phonemes> = order.iter().map(|&i| seqs[i].clone()).collect();
        let l2 = cluster_transcripts(&shuffled, eps, 2, Exec::Sequential).unwrap();
        let mut back = vec![0i64; seqs.len()];
        for (pos, &i) in order.iter().enumerate() {
            back[i] = l2[pos];
        }
        prop_assert_eq!(partition(&labels), partition(&back));
    }

    #[test]
    fn medoid_minimizes_summed_distance(seqs in prop::collection::vec(phones(6), 1..10)) {
        let m = medoid(&seqs).unwrap();
        let cost = |c: &Phonemes| seqs.iter().map(|s| normalized_levenshtein(c, s)).sum::<f64>();
        let best = seqs.iter().map(cost).fold(f64::INFINITY, f64::min);
        prop_assert!(seqs.contains(&m));
        prop_assert!((cost(&m) - best).abs() < 1e-12);
    }
}

#[test]
fn dbscan_examples() {
    let pts = [0.0, 0.1, 0.2, 5.0, 5.1, 9.0];
    let labels = dbscan(&pts, |a: &f64, b: &f64| (a - b).abs(), 0.15, 2).unwrap();
    assert_eq!(partition(&labels), vec![vec![0, 1, 2], vec![3, 4], vec![5]]);
    assert_eq!(labels[5], NOISE);
    assert!(dbscan(&pts, |a: &f64, b: &f64| (a - b).abs(), 0.1, 0).is_err());
}

#[test]
fn noise_points_reference_themselves() {
    let t = |id: &str, s: &str| TranscriptRecord {
        utterance_id: id.into(),
        phonemes: parse_phonemes(s),
    };
    let recs = vec![t("a", "k ae t"), t("b", "k ae t s"), t("c", "d ao g z ih")];
    let refs = extract_references(&recs, 0.3, 2, Exec::default()).unwrap();
    assert_eq!(refs[0].cluster_id, refs[1].cluster_id);
    assert_eq!(refs[2].cluster_id, NOISE);
    assert_eq!(refs[2].reference, recs[2].phonemes);
}

#[test]
fn transcript_and_reference_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.tsv");
    std::fs::write(&p, "u1\tAA B K\n\nu2\t\nu3\tS IY\n").unwrap();
    let recs = read_transcripts(&p).unwrap();
    assert_eq!(recs.len(), 3);
    assert!(recs[1].phonemes.is_empty());
    let refs = extract_references(&recs, 0.3, 2, Exec::default()).unwrap();
    let q = dir.path().join("r.tsv");
    write_references(&q, &refs).unwrap();
    assert_eq!(read_references(&q).unwrap(), refs);

    std::fs::write(&p, "u1\tAA\nu1\tB\n").unwrap();
    assert_eq!(read_transcripts(&p).unwrap_err().kind(), "validation");
    std::fs::write(&p, "no tab here\n").unwrap();
    assert_eq!(read_transcripts(&p).unwrap_err().kind(), "parse");
}
