use super::*;
use rand::Rng;

fn features(frames: Vec<Vec<f64>>) -> FrameFeatures {
    FrameFeatures {
        utterance_id: "u".into(),
        backend_id: "b".into(),
        frames,
    }
}

fn linear_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut rng = crate::seed::rng_for(seed, "lin");
    let w = vec![0.7, -1.3, 2.0, 0.05];
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.5)
        .collect();
    (x, y, w)
}

#[test]
fn mean_pool_examples() {
    assert_eq!(
        mean_pool(&features(vec![vec![1.0, 2.0], vec![3.0, 4.0]])).vector,
        vec![2.0, 3.0]
    );
    assert_eq!(
        mean_pool(&features(vec![vec![1.5, -2.0]])).vector,
        vec![1.5, -2.0]
    );
}

#[test]
fn bank_counts() {
    let b: Vec<String> = (0..8).map(|i| format!("b{i}")).collect();
    assert_eq!(build_learner_bank(&b, &Method::ALL, &["main"]).len(), 48);
    assert_eq!(
        build_learner_bank(&b, &Method::ALL, &["a", "b", "c"]).len(),
        144
    );
    assert_eq!(
        build_learner_bank(&["x"], &[Method::Ridge], &["*"]).len(),
        1
    );
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
    }
    assert!("lightgbm".parse::<Method>().is_err());
    let mut bad = BTreeMap::new();
    bad.insert("depth".to_string(), 3.0);
    assert!(matches!(
        Method::RandomForest.resolve(&bad),
        Err(Error::Config(_))
    ));
}

#[test]
fn ridge_recovers_exact_linear_weights() {
    let (x, y, w) = linear_data(50, 1);
    let m = fit_ridge(&x, &y, 0.0).unwrap();
    let (rw, b) = m.raw_coefficients();
    for (a, e) in rw.iter().zip(&w) {
        assert!((a - e).abs() <= 1e-6 * e.abs().max(1e-3), "{a} vs {e}");
    }
    assert!((b - 0.5).abs() < 1e-9);
}

#[test]
fn ridge_small_alpha_generalizes() {
    let (x, y, _) = linear_data(60, 2);
    let (xt, yt, _) = linear_data(30, 3);
    let m = fit_regressor(
        Method::Ridge,
        &[("alpha".to_string(), 1e-8)].into(),
        &x,
        &y,
        0,
    )
    .unwrap();
    let p = m.predict(&xt);
    let mse = p
        .iter()
        .zip(&yt)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / yt.len() as f64;
    assert!(mse < 1e-4, "mse {mse}");
}

#[test]
fn random_forest_beats_constant_on_step() {
    let x: Vec<Vec<f64>> = (0..80).map(|i| vec![i as f64 / 80.0]).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| if r[0] < 0.5 { 1.0 } else { 4.0 })
        .collect();
    let xt: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 + 0.5) / 40.0]).collect();
    let yt: Vec<f64> = xt
        .iter()
        .map(|r| if r[0] < 0.5 { 1.0 } else { 4.0 })
        .collect();
    let m = fit_regressor(Method::RandomForest, &BTreeMap::new(), &x, &y, 4).unwrap();
    let p = m.predict(&xt);
    let mse = p
        .iter()
        .zip(&yt)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / 40.0;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let base = yt.iter().map(|b| (mean - b) * (mean - b)).sum::<f64>() / 40.0;
    assert!(mse < base, "{mse} vs {base}");
}

#[test]
fn gaussian_process_interpolates() {
    let x: Vec<Vec<f64>> = [0.0, 0.7, 1.5, 2.2, 3.0].iter().map(|v| vec![*v]).collect();
    let y = vec![1.0, 2.5, 2.0, 4.0, 3.0];
    let near_zero: BTreeMap<String, f64> = [("noise".to_string(), 1e-6)].into();
    let m = fit_regressor(Method::GaussianProcess, &near_zero, &x, &y, 0).unwrap();
    for (xi, yi) in x.iter().zip(&y) {
        assert!((m.predict_one(xi) - yi).abs() < 1e-3);
    }
    let zero: BTreeMap<String, f64> = [("noise".to_string(), 0.0)].into();
    let m = fit_regressor(Method::GaussianProcess, &zero, &x, &y, 0).unwrap();
    for (xi, yi) in x.iter().zip(&y) {
        assert!((m.predict_one(xi) - yi).abs() < 1e-6);
    }
}

#[test]
fn every_method_is_deterministic_and_handles_constant_targets() {
    let (x, y, _) = linear_data(40, 5);
    let c = vec![3.0; 40];
    for m in Method::ALL {
        let a = fit_regressor(m, &BTreeMap::new(), &x, &y, 9).unwrap();
        let b = fit_regressor(m, &BTreeMap::new(), &x, &y, 9).unwrap();
        assert_eq!(a.predict(&x), b.predict(&x), "{m}");
        let k = fit_regressor(m, &BTreeMap::new(), &x, &c, 9).unwrap();
        assert!(k.predict(&x).iter().all(|p| (p - 3.0).abs() < 1e-9), "{m}");
    }
}

#[test]
fn every_method_learns_a_linear_trend() {
    let (x, y, _) = linear_data(120, 6);
    let (xt, yt, _) = linear_data(40, 7);
    let var = {
        let m = yt.iter().sum::<f64>() / 40.0;
        yt.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 40.0
    };
    for m in Method::ALL {
        let f = fit_regressor(m, &BTreeMap::new(), &x, &y, 1).unwrap();
        let mse = f
            .predict(&xt)
            .iter()
            .zip(&yt)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 40.0;
        assert!(mse < 0.5 * var, "{m}: mse {mse} var {var}");
    }
}

#[test]
fn training_input_validation() {
    assert!(matches!(
        fit_regressor(Method::Ridge, &BTreeMap::new(), &[vec![1.0]], &[1.0], 0),
        Err(Error::Config(_))
    ));
    assert!(fit_regressor(
        Method::Ridge,
        &BTreeMap::new(),
        &[vec![1.0], vec![1.0, 2.0]],
        &[1.0, 2.0],
        0
    )
    .is_err());
    let spec = WeakLearnerSpec {
        backend_id: "b".into(),
        method: Method::Ridge,
        domain_tag: "*".into(),
        hyperparams: BTreeMap::new(),
    };
    let f = train_weak(&spec, &[vec![0.0, 1.0], vec![1.0, 0.0]], &[1.0, 2.0], 0).unwrap();
    assert!(predict_weak(&f, &[vec![1.0]]).is_err());
}

#[test]
fn svr_coordinate_matches_grid_search() {
    let mut rng = crate::seed::rng_for(3, "svr");
    for _ in 0..200 {
        let (b0, g, q, c, e) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.1..3.0),
            rng.random_range(0.2..1.5),
            rng.random_range(0.0..0.5),
        );
        let obj = |b: f64| 0.5 * q * (b - b0) * (b - b0) + g * (b - b0) + e * b.abs();
        let best = linear::svr_coordinate(b0, g, q, c, e);
        assert!(best.abs() <= c + 1e-15);
        for k in 0..=400 {
            let b = -c + 2.0 * c * k as f64 / 400.0;
            assert!(obj(best) <= obj(b) + 1e-12);
        }
    }
}

#[test]
fn embeddings_round_trip_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.csv");
    let rows = vec![
        UtteranceEmbedding {
            utterance_id: "a".into(),
            backend_id: "t".into(),
            vector: vec![0.1, -2.5e-7, 3.0],
        },
        UtteranceEmbedding {
            utterance_id: "b".into(),
            backend_id: "t".into(),
            vector: vec![1.0 / 3.0, 0.0, -1.0],
        },
    ];
    write_embeddings(&p, &rows).unwrap();
    assert_eq!(read_embeddings(&p).unwrap(), rows);
    std::fs::write(&p, "utterance_id,backend,v0\na,t,1\n").unwrap();
    assert!(matches!(read_embeddings(&p), Err(Error::Schema(_))));
    std::fs::write(&p, "utterance_id,backend_id,v0\na,t,x\n").unwrap();
    assert!(matches!(
        read_embeddings(&p),
        Err(Error::Parse { line: 2, .. })
    ));
}
