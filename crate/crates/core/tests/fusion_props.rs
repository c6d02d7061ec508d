mod common;

use proptest::prelude::*;

use common::fusion::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn raising_the_threshold_never_adds(a in detections("ssd"), cfg in config(), t2 in confidence()) {
        threshold_monotone(&a, &cfg, t2)?;
    }

    #[test]
    fn filtering_twice_changes_nothing(a in detections("ssd"), cfg in config()) {
        filter_idempotent(&a, &cfg)?;
    }

    #[test]
    fn class_set_ignores_source_order(a in detections("ssd"), b in detections("yolo"), cfg in config()) {
        class_set_symmetric(&a, &b, &cfg)?;
    }

    #[test]
    fn fused_detections_come_from_the_inputs(a in detections("ssd"), b in detections("yolo"), cfg in config()) {
        nothing_invented(&a, &b, &cfg)?;
    }

    #[test]
    fn without_dedup_nothing_is_merged(a in detections("ssd"), b in detections("yolo"), cfg in config()) {
        dedup_off_cardinality(&a, &b, &cfg)?;
    }

    #[test]
    fn dedup_keeps_every_class(a in detections("ssd"), b in detections("yolo"), cfg in config()) {
        dedup_keeps_classes(&a, &b, &cfg)?;
    }
}
