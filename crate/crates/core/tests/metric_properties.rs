use featseg::metrics::{correct_segmentation_rate, match_labels, pixel_accuracy, SegMask};
use featseg_oracle as oracle;
use proptest::prelude::*;

fn mask_strategy(k: u32) -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    (prop::collection::vec(1..=k, 48), prop::collection::vec(1..=k, 48))
}

proptest! {
    #[test]
    fn matching_attains_brute_force_optimum((p, t) in mask_strategy(3)) {
        let pred = SegMask::new(8, 6, p.clone()).unwrap();
        let truth = SegMask::new(8, 6, t.clone()).unwrap();
        let acc = pixel_accuracy(&pred, &truth).unwrap();
        prop_assert_eq!((acc * 48.0).round() as u64, oracle::best_overlap(&p, &t));
        let map = match_labels(&pred, &truth).unwrap();
        let used: Vec<u32> = map.iter().flatten().copied().collect();
        let mut dedup = used.clone();
        dedup.sort_unstable();
        dedup.dedup();
        prop_assert_eq!(used.len(), dedup.len());
    }

    #[test]
    fn accuracy_ignores_label_names((p, t) in mask_strategy(4), shift in 1u32..4) {
        let pred = SegMask::new(8, 6, p.clone()).unwrap();
        let truth = SegMask::new(8, 6, t).unwrap();
        let renamed = SegMask::new(8, 6, p.iter().map(|l| (l - 1 + shift) % 4 + 1).collect()).unwrap();
        let a = pixel_accuracy(&pred, &truth).unwrap();
        prop_assert_eq!(a, pixel_accuracy(&renamed, &truth).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
        let cs = correct_segmentation_rate(&pred, &truth, 0.75).unwrap();
        prop_assert!((0.0..=1.0).contains(&cs));
    }
}

#[test]
fn complement_is_perfect_after_matching() {
    let truth: Vec<u32> = (0..20).map(|i| 1 + (i % 2)).collect();
    let pred: Vec<u32> = truth.iter().map(|l| 3 - l).collect();
    let acc = pixel_accuracy(&SegMask::new(5, 4, pred).unwrap(), &SegMask::new(5, 4, truth).unwrap()).unwrap();
    assert_eq!(acc, 1.0);
}
