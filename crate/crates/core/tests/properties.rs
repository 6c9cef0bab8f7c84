//! Randomized checks against the oracles in `oracles/`.

mod oracles;

use proptest::prelude::*;

proptest! {
    #[test]
    fn scheduler_fires_in_time_then_insertion_order(times in prop::collection::vec(0u64..50, 0..60)) {
        prop_assert_eq!(oracles::check_scheduler(&times), Ok(()));
    }

    #[test]
    fn f1_lies_between_min_and_mean(
        tp in prop::array::uniform5(1u64..500),
        fp in prop::array::uniform5(0u64..500),
        fn_ in prop::array::uniform5(0u64..500),
    ) {
        prop_assert_eq!(oracles::check_f1_bounds(tp, fp, fn_), Ok(()));
    }

    #[test]
    fn monitor_window_matches_brute_force(
        values in prop::collection::vec(0.0f64..1.0, 1..120),
        duration in 1u64..90,
    ) {
        prop_assert_eq!(oracles::check_monitor_window(&values, duration), Ok(()));
    }

    #[test]
    fn isolation_scores_are_bounded_and_rank_outliers(seed in any::<u64>()) {
        prop_assert_eq!(oracles::check_iforest(seed), Ok(()));
    }

    #[test]
    fn tree_fits_consistent_labels_exactly(seed in any::<u64>(), n in 10usize..200) {
        prop_assert_eq!(oracles::check_tree(seed, n), Ok(()));
    }

    #[test]
    fn wilcoxon_matches_sign_enumeration(diffs in prop::collection::vec(-6i32..=6, 1..=12)) {
        let d: Vec<f64> = diffs.iter().map(|&x| f64::from(x)).collect();
        prop_assert_eq!(oracles::check_wilcoxon(&d), Ok(()));
    }

    #[test]
    fn confusion_matches_rescoring_from_the_ledger(
        faults in prop::collection::vec((0usize..3, 0u64..900, 0usize..8, prop::option::of(1u64..120)), 0..8),
        diags in prop::collection::vec((0usize..3, 0u64..1000, 0usize..6), 0..25),
    ) {
        prop_assert_eq!(oracles::check_confusion(&faults, &diags), Ok(()));
    }
}
