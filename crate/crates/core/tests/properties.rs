use diarkit_core::clustering::{ahc, kmeans};
use diarkit_core::metrics::der;
use diarkit_core::reseg::{assign_overlap_labels, OverlapConfig};
use diarkit_core::segmenter::{uniform_segment, SegmenterConfig, TailPolicy};
use diarkit_core::{Annotation, Interval, Millis, ScoreMatrix, SpeakerTurn, Timeline};
use proptest::prelude::*;

fn intervals(max_len: usize) -> impl Strategy<Value = Vec<Interval>> {
    proptest::collection::vec((0i64..20_000, 1i64..3_000), 0..max_len)
        .prop_map(|v| v.into_iter().map(|(s, d)| Interval::ms(s, s + d)).collect())
}

fn annotation(max_turns: usize) -> impl Strategy<Value = Annotation> {
    proptest::collection::vec((0i64..20_000, 1i64..3_000, 0usize..4), 1..max_turns).prop_map(|v| {
        let turns = v
            .into_iter()
            .map(|(s, d, k)| SpeakerTurn::new("r", 1, Millis(s), Millis(d), format!("s{k}")).unwrap())
            .collect();
        Annotation::new("r", Millis(23_000), turns).unwrap()
    })
}

fn relabel(ann: &Annotation, prefix: &str) -> Annotation {
    let turns = ann
        .turns()
        .iter()
        .map(|t| SpeakerTurn { speaker: format!("{prefix}{}", t.speaker), ..t.clone() })
        .collect();
    Annotation::new("r", ann.total_duration(), turns).unwrap()
}

proptest! {
    #[test]
    fn union_and_intersection_add_up(a in intervals(12), b in intervals(12)) {
        let (a, b) = (Timeline::from_intervals(a), Timeline::from_intervals(b));
        prop_assert_eq!(a.union(&b).total() + a.intersection(&b).total(), a.total() + b.total());
        prop_assert_eq!(a.difference(&b).total() + a.intersection(&b).total(), a.total());
    }

    #[test]
    fn der_of_self_is_zero_and_ignores_label_names(r in annotation(10), h in annotation(10)) {
        if let Ok(d) = der(&r, &r, None) {
            prop_assert_eq!(d.der(), 0.0);
        }
        let plain = der(&r, &h, None);
        let renamed = der(&r, &relabel(&h, "x"), None);
        match (plain, renamed) {
            (Ok(p), Ok(q)) => prop_assert_eq!(p.der(), q.der()),
            (p, q) => prop_assert_eq!(p.is_err(), q.is_err()),
        }
    }

    #[test]
    fn segments_stay_inside_speech(regions in intervals(8), window in 200i64..3_000, frac in 0.1f64..1.0) {
        let speech = Timeline::from_intervals(regions);
        let step = ((window as f64 * frac) as i64).max(1);
        for tail in [TailPolicy::Align, TailPolicy::Drop] {
            let cfg = SegmenterConfig { window: Millis(window), step: Millis(step), tail, ..Default::default() };
            let segs = uniform_segment(&speech, &cfg).unwrap();
            let covered = Timeline::from_intervals(segs.iter().map(|s| s.interval()));
            for s in &segs {
                prop_assert!(s.end - s.start <= Millis(window));
                prop_assert_eq!(speech.overlap_with(&s.interval()), s.end - s.start);
            }
            if tail == TailPolicy::Align {
                prop_assert_eq!(covered.total(), speech.total());
            }
        }
    }

    #[test]
    fn ahc_threshold_extremes(vals in proptest::collection::vec(-1.0f64..1.0, 100)) {
        let n = 2 + vals.iter().filter(|v| **v > 0.0).count() % 9;
        let s = ScoreMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { vals[i.min(j) * 10 + i.max(j)] }).unwrap();
        prop_assert_eq!(ahc(&s, 2.0).k, n);
        prop_assert_eq!(ahc(&s, -2.0).k, 1);
    }

    #[test]
    fn more_restarts_never_hurt(pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..40), k in 1usize..4, seed in 0u64..1_000) {
        let points: Vec<Vec<f64>> = pts.into_iter().map(|(x, y)| vec![x, y]).collect();
        let one = kmeans(&points, k, 1, 50, seed);
        let many = kmeans(&points, k, 4, 50, seed);
        prop_assert!(many.inertia <= one.inertia + 1e-9);
        prop_assert_eq!(many.labels.len(), points.len());
    }

    #[test]
    fn overlap_assignment_is_idempotent(diar in annotation(10), regions in intervals(4)) {
        let cfg = OverlapConfig::new(Millis(10));
        let once = assign_overlap_labels(&diar, &regions, &cfg).unwrap().annotation;
        let twice = assign_overlap_labels(&once, &regions, &cfg).unwrap().annotation;
        prop_assert_eq!(once, twice);
    }
}

#[test]
fn empty_hypothesis_misses_everything() {
    let turns = vec![
        SpeakerTurn::new("r", 1, Millis(0), Millis(1_000), "a").unwrap(),
        SpeakerTurn::new("r", 1, Millis(500), Millis(1_000), "b").unwrap(),
    ];
    let r = Annotation::new("r", Millis(2_000), turns).unwrap();
    let h = Annotation::new("r", Millis(2_000), Vec::new()).unwrap();
    let d = der(&r, &h, None).unwrap();
    assert_eq!(d.missed, Millis(2_000));
    assert_eq!(d.der(), 100.0);
}
