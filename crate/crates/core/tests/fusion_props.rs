use aquasift::fusion::{decide, fuse, FusionConfig, PosteriorScores};
use aquasift::Label;
use proptest::prelude::*;

fn sets(scores: &[Vec<f64>]) -> Vec<PosteriorScores> {
    scores
        .iter()
        .enumerate()
        .map(|(m, col)| {
            let entries = col
                .iter()
                .enumerate()
                .map(|(i, &s)| (format!("p{i}"), s))
                .collect();
            PosteriorScores::new(format!("m{m}"), entries).unwrap()
        })
        .collect()
}

fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..5, 1usize..30).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop::collection::vec(0.0f64..=1.0, n), m)
    })
}

proptest! {
    #[test]
    fn fused_score_is_convex_combination(scores in matrix(), w in prop::collection::vec(0.01f64..10.0, 4)) {
        let s = sets(&scores);
        let cfg = FusionConfig::weighted(s.iter().zip(&w).map(|(x, &w)| (x.model_id().to_string(), w)));
        let fused = fuse(&s, &cfg).unwrap();
        for (i, (_, f)) in fused.entries().iter().enumerate() {
            let col: Vec<f64> = scores.iter().map(|c| c[i]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*f >= lo && *f <= hi);
        }
    }

    #[test]
    fn equal_weights_are_the_plain_mean(scores in matrix()) {
        let s = sets(&scores);
        let cfg = FusionConfig::equal(s.iter().map(|x| x.model_id().to_string()));
        let fused = fuse(&s, &cfg).unwrap();
        for (i, (_, f)) in fused.entries().iter().enumerate() {
            let mut sum = 0.0;
            for col in &scores {
                sum += col[i];
            }
            prop_assert_eq!(f.to_bits(), (sum / scores.len() as f64).to_bits());
        }
    }

    #[test]
    fn weight_scale_does_not_matter(scores in matrix(), k in 0.001f64..1000.0) {
        let s = sets(&scores);
        let base: Vec<(String, f64)> = s.iter().enumerate().map(|(i, x)| (x.model_id().to_string(), 1.0 + i as f64)).collect();
        let a = fuse(&s, &FusionConfig::weighted(base.clone())).unwrap();
        let b = fuse(&s, &FusionConfig::weighted(base.into_iter().map(|(m, w)| (m, w * k)))).unwrap();
        for ((_, x), (_, y)) in a.entries().iter().zip(b.entries()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn agreement_is_preserved(col in prop::collection::vec(0.0f64..=1.0, 1..30), m in 2usize..5) {
        let scores = vec![col.clone(); m];
        let s = sets(&scores);
        let fused = fuse(&s, &FusionConfig::equal(s.iter().map(|x| x.model_id().to_string()))).unwrap();
        let got: Vec<f64> = fused.scores().collect();
        prop_assert_eq!(got, col);
    }
}

#[test]
fn one_hot_weights_select_a_model() {
    let scores = vec![vec![0.1, 0.9, 0.5], vec![0.7, 0.2, 0.49], vec![0.3, 0.3, 0.3]];
    let s = sets(&scores);
    let cfg = FusionConfig::weighted([("m0", 0.0), ("m1", 1.0), ("m2", 0.0)]);
    let fused = fuse(&s, &cfg).unwrap();
    assert_eq!(fused.scores().collect::<Vec<_>>(), scores[1]);
    let labels: Vec<Label> = decide(&fused, 0.5).into_iter().map(|(_, l)| l).collect();
    assert_eq!(labels, vec![Label::Relevant, Label::Irrelevant, Label::Irrelevant]);
}

#[test]
fn misaligned_sets_are_rejected() {
    let a = PosteriorScores::new("a", vec![("x".into(), 0.1), ("y".into(), 0.2)]).unwrap();
    let b = PosteriorScores::new("b", vec![("x".into(), 0.1), ("z".into(), 0.2)]).unwrap();
    let err = fuse(&[a, b], &FusionConfig::equal(["a", "b"])).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains('y') && msg.contains('z'), "{msg}");
}
