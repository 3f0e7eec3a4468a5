mod common;

use common::*;
use proptest::prelude::*;
use utmos::losses::*;

fn batch() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..24).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-1.5f64..1.5, n),
        )
    })
}

proptest! {
    #[test]
    fn contrastive_matches_double_loop((s, p) in batch(), alpha in 0.0f64..1.0) {
        let got = contrastive_batch(&s, &p, alpha).unwrap();
        prop_assert!((got - contrastive_oracle(&s, &p, alpha)).abs() <= 1e-12 * got.abs().max(1.0));
        prop_assert!(got >= 0.0);
    }

    #[test]
    fn contrastive_ignores_a_common_offset((s, _) in batch(), shift in -2.0f64..2.0, alpha in 0.0f64..1.0) {
        let p: Vec<f64> = s.iter().map(|v| v + shift).collect();
        prop_assert!(contrastive_batch(&s, &p, alpha).unwrap() < 1e-9);
    }

    #[test]
    fn combined_matches_oracle((s, p) in batch(), alpha in 0.0f64..1.0, tau in 0.0f64..0.5, beta in 0.0f64..2.0, gamma in 0.01f64..2.0) {
        let cfg = LossConfig { alpha, tau, beta, gamma, cross_domain_pairs: true };
        let got = combined_loss(&s, &p, &cfg).unwrap();
        let want = combined_oracle(&s, &p, alpha, tau, beta, gamma);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn grouped_pairs_stay_within_groups((s, p) in batch(), alpha in 0.0f64..0.5, seed in 0usize..1000) {
        let groups: Vec<usize> = (0..s.len()).map(|i| (i * 7 + seed) % 3).collect();
        let (got, _) = contrastive_batch_grouped(&s, &p, Some(&groups), alpha).unwrap();
        let mut want = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if i != j && groups[i] == groups[j] {
                    want += contrastive_pair(s[i], s[j], p[i], p[j], alpha);
                }
            }
        }
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_central_differences((s, p) in batch()) {
        let cfg = LossConfig::default();
        let (_, g) = combined_loss_grad(&s, &p, &cfg).unwrap();
        let h = 1e-7;
        for k in 0..p.len() {
            // skip coordinates near a kink
            let near_clip = ((s[k] - p[k]).abs() - cfg.tau).abs() < 1e-4;
            let near_hinge = (0..p.len()).any(|j| j != k && (((s[k] - s[j]) - (p[k] - p[j])).abs() - cfg.alpha).abs() < 1e-4);
            if near_clip || near_hinge {
                continue;
            }
            let mut up = p.clone();
            up[k] += h;
            let mut dn = p.clone();
            dn[k] -= h;
            let num = (combined_loss(&s, &up, &cfg).unwrap() - combined_loss(&s, &dn, &cfg).unwrap()) / (2.0 * h);
            prop_assert!((num - g[k]).abs() <= 1e-5 * num.abs().max(1.0), "coord {}: {} vs {}", k, num, g[k]);
        }
    }

    #[test]
    fn constant_frames_reproduce_utterance_loss(
        (s, p) in batch(),
        t in prop::collection::vec(1usize..50, 24),
        alpha in 0.0f64..1.0,
        tau in 0.0f64..0.5,
    ) {
        let cfg = LossConfig { alpha, tau, ..LossConfig::default() };
        let frames: Vec<Vec<f64>> = p.iter().zip(&t).map(|(&v, &t)| vec![v; t]).collect();
        let (fl, fg) = frame_batch_loss(&s, &frames, None, &cfg).unwrap();
        let (ul, ug) = combined_loss_grad(&s, &p, &cfg).unwrap();
        prop_assert_eq!(fl, ul);
        // frame gradients sum back to the utterance gradient
        for (f, u) in fg.iter().zip(&ug) {
            prop_assert!((f.iter().sum::<f64>() - u).abs() < 1e-12);
        }
    }
}

#[test]
fn clipped_mse_boundary() {
    assert_eq!(clipped_mse(0.5, 0.25, 0.25), 0.0);
    assert_eq!(clipped_mse(0.0, 0.5, 0.25), 0.25);
    assert_eq!(clipped_mse(0.2, 0.2, 0.0), 0.0);
    assert_eq!(clipped_mse_grad(0.0, 0.5, 0.25), 1.0);
    assert_eq!(clipped_mse_grad(0.0, 0.1, 0.25), 0.0);
}

#[test]
fn pair_examples() {
    assert_eq!(contrastive_pair(1.0, 0.0, 0.0, 0.0, 0.5), 0.5);
    assert_eq!(contrastive_pair(1.0, 0.0, 0.8, 0.0, 0.5), 0.0);
    assert_eq!(
        contrastive_batch(&[1.0, 0.0], &[0.0, 0.0], 0.5).unwrap(),
        1.0
    );
}

#[test]
fn invalid_batches_and_configs() {
    assert!(contrastive_batch(&[1.0], &[1.0], 0.1).is_err());
    assert!(combined_loss(&[1.0, 2.0], &[1.0], &LossConfig::default()).is_err());
    assert!(frame_batch_loss(
        &[0.0, 0.1],
        &[vec![0.0], vec![]],
        None,
        &LossConfig::default()
    )
    .is_err());
    assert!(LossConfig {
        beta: 0.0,
        gamma: 0.0,
        ..LossConfig::default()
    }
    .validate()
    .is_err());
    assert!(LossConfig {
        alpha: -0.1,
        ..LossConfig::default()
    }
    .validate()
    .is_err());
}
