use proptest::prelude::*;
use ucl::dataset::Label;
use ucl::metrics::{auc, roc_curve};

/// Scores on a coarse grid so ties are common.
fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    prop::collection::vec((0u8..12, any::<bool>()), 2..=200)
        .prop_filter("both classes", |v| {
            v.iter().any(|p| p.1) && v.iter().any(|p| !p.1)
        })
        .prop_map(|v| {
            let scores = v.iter().map(|&(s, _)| s as f64 / 11.0).collect();
            let labels = v
                .iter()
                .map(|&(_, f)| if f { Label::Fake } else { Label::Real })
                .collect();
            (scores, labels)
        })
}

/// Fraction of (fake, real) pairs ordered correctly, ties counting one half.
fn pairwise_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == Label::Fake && lj == Label::Real {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

#[test]
fn hand_worked_example() {
    let labels = [Label::Fake, Label::Real, Label::Fake, Label::Real];
    assert_eq!(auc(&[0.9, 0.8, 0.4, 0.3], &labels).unwrap(), 0.75);
}

#[test]
fn single_class_is_an_error() {
    assert!(auc(&[0.1, 0.2], &[Label::Real, Label::Real]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pairwise_auc_equals_trapezoid((scores, labels) in scored_labels()) {
        let pairwise = pairwise_auc(&scores, &labels);
        prop_assert!((auc(&scores, &labels).unwrap() - pairwise).abs() < 1e-12);
        prop_assert!((roc_curve(&scores, &labels).unwrap().area() - pairwise).abs() < 1e-12);
    }

    #[test]
    fn auc_ignores_increasing_transforms((scores, labels) in scored_labels()) {
        let a = auc(&scores, &labels).unwrap();
        for f in [|x: f64| 3.0 * x - 7.0, |x: f64| x.powi(3) + x, |x: f64| (4.0 * x).exp(), |x: f64| x.atan()] {
            let t: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            prop_assert!((auc(&t, &labels).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn roc_is_monotone((scores, labels) in scored_labels()) {
        let c = roc_curve(&scores, &labels).unwrap();
        let (first, last) = (c.points[0], c.points[c.points.len() - 1]);
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in c.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            prop_assert!(w[1].threshold < w[0].threshold);
        }
    }
}
