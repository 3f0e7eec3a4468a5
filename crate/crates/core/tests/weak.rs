use std::collections::BTreeMap;

use proptest::prelude::*;
use utmos::backend::FrameFeatures;
use utmos::seed::rng_for;
use utmos::weak::*;

fn linear_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    use rand::Rng;
    let mut rng = rng_for(seed, "weak-test");
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| 3.0 + 0.8 * r[0] - 0.5 * r[1] + 0.1 * r[2])
        .collect();
    (x, y)
}

proptest! {
    #[test]
    fn mean_pool_ignores_frame_order(frames in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..30), k in 0usize..30) {
        let f = FrameFeatures { utterance_id: "u".into(), backend_id: "b".into(), frames: frames.clone() };
        let mut shuffled = frames.clone();
        let len = shuffled.len();
        shuffled.rotate_left(k % len);
        shuffled.reverse();
        let g = FrameFeatures { frames: shuffled, ..f.clone() };
        let (a, b) = (mean_pool(&f), mean_pool(&g));
        for (x, y) in a.vector.iter().zip(&b.vector) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for (j, v) in a.vector.iter().enumerate() {
            let lo = frames.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = frames.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }
}

#[test]
fn every_method_fits_a_linear_target() {
    let (x, y) = linear_data(120, 1);
    let (xt, yt) = linear_data(40, 2);
    for m in Method::ALL {
        let h = m.resolve(&BTreeMap::new()).unwrap();
        let model = fit_regressor(m, &h, &x, &y, 9).unwrap();
        let p = model.predict(&xt);
        let mse = p
            .iter()
            .zip(&yt)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / p.len() as f64;
        let var = yt.iter().map(|v| (v - 3.0) * (v - 3.0)).sum::<f64>() / yt.len() as f64;
        assert!(mse < 0.5 * var, "{m}: mse {mse} vs variance {var}");
        let again = fit_regressor(m, &h, &x, &y, 9).unwrap().predict(&xt);
        assert_eq!(p, again, "{m} is not deterministic");
    }
}

#[test]
fn ridge_recovers_coefficients() {
    let (x, y) = linear_data(200, 3);
    let h: BTreeMap<String, f64> = [("alpha".to_string(), 1e-10)].into();
    let model = fit_regressor(Method::Ridge, &h, &x, &y, 0).unwrap();
    for (r, t) in x.iter().zip(&y) {
        assert!((model.predict_one(r) - t).abs() < 1e-6);
    }
}

#[test]
fn unknown_hyperparameter_is_rejected() {
    let h: BTreeMap<String, f64> = [("depth".to_string(), 3.0)].into();
    assert!(Method::RandomForest.resolve(&h).is_err());
}

#[test]
fn bank_names_are_unique() {
    let bank = build_learner_bank(&["w2v", "hubert"], &Method::ALL, &["main", "ood"]);
    assert_eq!(bank.len(), 24);
    let mut names: Vec<String> = bank.iter().map(WeakLearnerSpec::name).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 24);
}

#[test]
fn trained_learner_round_trips_through_json() {
    let (x, y) = linear_data(60, 4);
    let spec = WeakLearnerSpec {
        backend_id: "b".into(),
        method: Method::GradientBoostedTrees,
        domain_tag: "*".into(),
        hyperparams: BTreeMap::new(),
    };
    let m = train_weak(&spec, &x, &y, 5).unwrap();
    let back: FittedWeak = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(
        predict_weak(&m, &x).unwrap(),
        predict_weak(&back, &x).unwrap()
    );
}

#[test]
fn embeddings_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.csv");
    let rows = vec![
        UtteranceEmbedding {
            utterance_id: "a".into(),
            backend_id: "b".into(),
            vector: vec![0.1, -2.5, 1.0 / 3.0],
        },
        UtteranceEmbedding {
            utterance_id: "c".into(),
            backend_id: "b".into(),
            vector: vec![1e-300, 0.0, 7.0],
        },
    ];
    write_embeddings(&p, &rows).unwrap();
    assert_eq!(read_embeddings(&p).unwrap(), rows);
}
