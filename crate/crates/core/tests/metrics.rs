use proptest::prelude::*;
use rand::Rng as _;
use tumorscope::harness::count_confusion;
use tumorscope::metrics::{confusion, evaluate, report, ConfusionMatrix, Metric};
use tumorscope::rng::seeded;

#[test]
fn matches_independent_counter_on_random_pairs() {
    for seed in 0..20 {
        let mut rng = seeded(seed);
        let preds: Vec<u8> = (0..1000).map(|_| rng.gen_range(0..2)).collect();
        let labels: Vec<u8> = (0..1000).map(|_| rng.gen_range(0..2)).collect();
        let cm = confusion(&preds, &labels).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), count_confusion(&preds, &labels));
        assert_eq!(cm.total(), 1000);
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

proptest! {
    #[test]
    fn swapping_classes_swaps_metrics(tp in 0u64..500, tn in 0u64..500, fp in 0u64..500, fn_ in 0u64..500) {
        let cm = ConfusionMatrix { tp, tn, fp, fn_ };
        let (a, b) = (report(cm), report(cm.swapped()));
        prop_assert_eq!(b.precision.value(), ratio(tn, tn + fn_));
        prop_assert_eq!(b.recall.value(), a.specificity.value());
        prop_assert_eq!(b.specificity.value(), a.recall.value());
        prop_assert_eq!(a.accuracy.value(), b.accuracy.value());
    }

    #[test]
    fn metrics_bounded_and_f1_between(tp in 0u64..500, tn in 0u64..500, fp in 0u64..500, fn_ in 0u64..500) {
        let r = report(ConfusionMatrix { tp, tn, fp, fn_ });
        for m in [r.accuracy, r.precision, r.recall, r.f1, r.specificity] {
            if let Some(v) = m.value() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        if let (Some(p), Some(rc), Some(f)) = (r.precision.value(), r.recall.value(), r.f1.value()) {
            prop_assert!(p.min(rc) - 1e-12 <= f && f <= p.max(rc) + 1e-12);
        }
    }

    #[test]
    fn accuracy_equals_direct_mean(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..200)) {
        let (preds, labels): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let direct = preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / preds.len() as f64;
        prop_assert_eq!(evaluate(&preds, &labels).unwrap().accuracy.value(), Some(direct));
    }
}

#[test]
fn undefined_never_prints_as_zero() {
    assert_eq!(Metric::UNDEFINED.to_string(), "undef");
    let r = report(ConfusionMatrix { tp: 0, tn: 0, fp: 0, fn_: 0 });
    assert!(!r.accuracy.is_defined());
}
