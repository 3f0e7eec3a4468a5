use utmos::config::{toy_config_toml, RunConfig};
use utmos::dataset::read_predictions;
use utmos::metrics::evaluate;
use utmos::pipeline::*;
use utmos::stacking::{stack_predict, StageScores};
use utmos::synth::{generate, ToyConfig};
use utmos::Exec;

#[test]
fn full_run_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let toy = generate(&ToyConfig {
        n_train: 40,
        n_dev: 15,
        n_test: 15,
        seed: 2,
        ..ToyConfig::default()
    })
    .unwrap();
    toy.write(dir.path()).unwrap();
    let cfg = RunConfig::parse(&toy_config_toml(2, 40), dir.path()).unwrap();
    let report = run_all(&cfg, Exec::default()).unwrap();
    assert_eq!(report.n_utterances, 15);

    let out = &cfg.output_dir;
    for f in [
        "strong.ckpt.json",
        "embeddings/toy-a.csv",
        "weak/models.json",
        "weak/test_scores.csv",
        "stack/selection.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let stack = out.join("stack");
    let model = read_stack_model(&stack.join("stack_model.json")).unwrap();
    let s1 = StageScores::read_csv(stack.join("stage1_test.csv")).unwrap();
    let again = stack_predict(&model, &s1).unwrap();
    let written = read_predictions(stack.join("predictions.csv")).unwrap();
    assert_eq!(written.values().copied().collect::<Vec<_>>(), again);
    // strong learner plus 18 weak learners
    assert_eq!(s1.learners.len(), 19);
    assert!(s1.learners[0].starts_with("strong/"));

    let from_file = evaluate(stack.join("predictions.csv"), dir.path().join("test.csv")).unwrap();
    assert_eq!(from_file, report);
}

#[test]
fn stacking_requires_a_test_split() {
    let dir = tempfile::tempdir().unwrap();
    let toy = generate(&ToyConfig {
        n_train: 30,
        n_dev: 10,
        n_test: 10,
        seed: 4,
        ..ToyConfig::default()
    })
    .unwrap();
    toy.write(dir.path()).unwrap();
    let text = toy_config_toml(4, 10).replace("test = \"test.csv\"\n", "");
    let cfg = RunConfig::parse(&text, dir.path()).unwrap();
    assert!(cfg.dataset.test.is_none());
    let err = run_all(&cfg, Exec::default()).unwrap_err();
    assert!(err.to_string().contains("test"), "{err}");
}
