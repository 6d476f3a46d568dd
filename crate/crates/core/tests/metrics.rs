use dualq_seld::metrics::*;
use proptest::prelude::*;

const REFERENCE_ROWS: [(f64, f64, f64); 6] = [
    (0.533, 0.413, 0.473),
    (0.506, 0.404, 0.455),
    (0.550, 0.378, 0.464),
    (0.512, 0.365, 0.439),
    (0.410, 0.303, 0.356),
    (0.369, 0.279, 0.324),
];

fn event() -> impl Strategy<Value = Event> {
    (0usize..4, prop::array::uniform3(-3.0..3.0f64))
        .prop_map(|(class_id, position)| Event { class_id, position })
}

fn frames(n: usize) -> impl Strategy<Value = FrameEvents> {
    prop::collection::vec(prop::collection::vec(event(), 0..4), n).prop_map(|frames| FrameEvents {
        frames,
        times: vec![],
    })
}

/// Class-only frame counting used when the distance gate is disabled.
fn class_counts(pred: &FrameEvents, refs: &FrameEvents) -> (f64, f64) {
    let (mut tp, mut fp, mut fn_, mut errors, mut n_ref) = (0, 0, 0, 0, 0);
    for (p, r) in pred.frames.iter().zip(&refs.frames) {
        let mut hit = 0;
        for c in 0..4 {
            let np = p.iter().filter(|e| e.class_id == c).count();
            let nr = r.iter().filter(|e| e.class_id == c).count();
            hit += np.min(nr);
        }
        let (f_p, f_n) = (p.len() - hit, r.len() - hit);
        tp += hit;
        fp += f_p;
        fn_ += f_n;
        errors += f_p.max(f_n);
        n_ref += r.len();
    }
    let er = errors as f64 / n_ref.max(1) as f64;
    let f = if 2 * tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    (er, f)
}

#[test]
fn reference_rows_recombine() {
    for (lsd, csl, g) in REFERENCE_ROWS {
        // these values are rounded to three places, so a half-unit tie can land exactly on the bound
        assert!(
            (gseld(lsd, csl) - g).abs() <= 5e-4 + 1e-12,
            "{lsd} {csl} {g}"
        );
    }
    assert_eq!(scores(0.0, 1.0, 0.0, 1.0), (0.0, 0.0, 0.0));
    let (lsd, csl, g) = scores(0.4, 0.7, 36.0, 0.8);
    assert!((lsd - 0.35).abs() < 1e-12 && (csl - 0.2).abs() < 1e-12 && (g - 0.275).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn self_evaluation_is_perfect(refs in frames(6)) {
        let mut ev = Evaluator::new(MetricConfig::default());
        ev.add(&refs, &refs).unwrap();
        let s = ev.scores();
        prop_assert_eq!(s.er, 0.0);
        prop_assert_eq!(s.f, 1.0);
        prop_assert!(s.gseld.abs() < 1e-12);
    }

    #[test]
    fn ungated_detection_matches_class_counting(pred in frames(5), refs in frames(5)) {
        let (er, f) = location_sensitive_detection(&pred, &refs, f64::INFINITY).unwrap();
        let (oer, of) = class_counts(&pred, &refs);
        prop_assert!((er - oer).abs() < 1e-12 && (f - of).abs() < 1e-12);
    }

    #[test]
    fn matchers_agree_on_counts_and_bounds(pred in frames(5), refs in frames(5)) {
        for m in [Matching::Greedy, Matching::Hungarian] {
            let det = detection_counts(&pred, &refs, DEFAULT_DIST_THRESHOLD, m).unwrap();
            prop_assert_eq!(det.tp + det.fn_, refs.n_events());
            prop_assert_eq!(det.tp + det.fp, pred.n_events());
            let loc = localization_counts(&pred, &refs, m).unwrap();
            let s = SeldScores::from_counts(&det, &loc);
            prop_assert!((0.0..=1.0).contains(&s.f) && (0.0..=1.0).contains(&s.lr));
            prop_assert!((0.0..=180.0).contains(&s.le_degrees));
            prop_assert!(s.lsd >= 0.0 && (0.0..=1.0).contains(&s.csl));
        }
        // the optimal assignment never finds fewer gated matches
        let g = detection_counts(&pred, &refs, DEFAULT_DIST_THRESHOLD, Matching::Greedy).unwrap();
        let h = detection_counts(&pred, &refs, DEFAULT_DIST_THRESHOLD, Matching::Hungarian).unwrap();
        prop_assert!(h.tp >= g.tp);
    }

    #[test]
    fn order_within_frames_is_irrelevant(pred in frames(4), refs in frames(4)) {
        let mut rev = pred.clone();
        for f in &mut rev.frames {
            f.reverse();
        }
        let a = detection_counts(&pred, &refs, DEFAULT_DIST_THRESHOLD, Matching::Hungarian).unwrap();
        let b = detection_counts(&rev, &refs, DEFAULT_DIST_THRESHOLD, Matching::Hungarian).unwrap();
        prop_assert_eq!(a.tp, b.tp);
    }

    #[test]
    fn angular_distance_is_a_bounded_symmetric_angle(a in prop::array::uniform3(-5.0..5.0f64), b in prop::array::uniform3(-5.0..5.0f64), k in 0.1..10.0f64) {
        let d = angular_distance(a, b);
        prop_assert!((0.0..=180.0).contains(&d));
        prop_assert!((d - angular_distance(b, a)).abs() < 1e-9);
        prop_assert!((d - angular_distance(a.map(|v| v * k), b)).abs() < 1e-7);
    }
}

#[test]
fn distant_predictions_are_not_detections() {
    let at = |x: f64| Event {
        class_id: 1,
        position: [x, 0.0, 0.0],
    };
    let refs = FrameEvents {
        frames: vec![vec![at(1.0)]],
        times: vec![],
    };
    let near = FrameEvents {
        frames: vec![vec![at(2.5)]],
        times: vec![],
    };
    let far = FrameEvents {
        frames: vec![vec![at(3.5)]],
        times: vec![],
    };
    assert_eq!(
        location_sensitive_detection(&near, &refs, 2.0).unwrap(),
        (0.0, 1.0)
    );
    let (er, f) = location_sensitive_detection(&far, &refs, 2.0).unwrap();
    assert_eq!((er, f), (1.0, 0.0));
    // localization ignores the distance gate and the direction is identical
    let (le, lr) = class_sensitive_localization(&far, &refs).unwrap();
    assert_eq!((le, lr), (0.0, 1.0));
}
