//! Uniform sliding-window segmentation and center-majority reference labels.

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Annotation, Error, Interval, Millis, Result, Segment, Timeline};

/// What to do with the remainder of a region when `(len - window)` is not a
/// multiple of `step`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TailPolicy {
    /// Add one more window ending exactly at the region end.
    #[default]
    Align,
    /// Leave the remainder uncovered.
    Drop,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SegmenterConfig {
    pub window: Millis,
    pub step: Millis,
    pub central_fraction: f64,
    pub tail: TailPolicy,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            window: Millis(1_500),
            step: Millis(750),
            central_fraction: 0.5,
            tail: TailPolicy::Align,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step <= Millis::ZERO || self.step > self.window {
            return Err(Error::Config(alloc::format!(
                "need 0 < step <= window, got step {} window {}",
                self.step,
                self.window
            )));
        }
        if !(self.central_fraction > 0.0 && self.central_fraction <= 1.0) {
            return Err(Error::Config(alloc::format!(
                "central fraction {} outside (0, 1]",
                self.central_fraction
            )));
        }
        Ok(())
    }
}

/// Cuts every speech region into windows that never cross region boundaries.
pub fn uniform_segment(speech: &Timeline, cfg: &SegmenterConfig) -> Result<Vec<Segment>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for region in speech.intervals() {
        let (a, b) = (region.start, region.end);
        if region.len() <= cfg.window {
            out.push(Segment { start: a, end: b, label: None });
            continue;
        }
        let mut start = a;
        while start + cfg.window <= b {
            out.push(Segment { start, end: start + cfg.window, label: None });
            start += cfg.step;
        }
        let last_end = out.last().map_or(a, |s| s.end);
        if cfg.tail == TailPolicy::Align && last_end < b {
            out.push(Segment { start: b - cfg.window, end: b, label: None });
        }
    }
    Ok(out)
}

/// The middle `central_fraction` of a segment.
pub fn central_window(seg: &Segment, cfg: &SegmenterConfig) -> Interval {
    let len = seg.end.0 - seg.start.0;
    let center = libm::round(len as f64 * cfg.central_fraction) as i64;
    let center = center.clamp(1, len);
    let start = seg.start.0 + (len - center) / 2;
    Interval { start: Millis(start), end: Millis(start + center) }
}

/// Speaker who talks most inside the segment's central window; ties go to the
/// lexicographically smallest id.
pub fn assign_reference_label(seg: &Segment, reference: &Annotation, cfg: &SegmenterConfig) -> Option<String> {
    let center = central_window(seg, cfg);
    let mut best: Option<(&str, Millis)> = None;
    // speaker_timelines iterates in id order, so strict > keeps the smallest id on ties
    for (spk, tl) in reference.speaker_timelines() {
        let covered = tl.overlap_with(&center);
        if covered > Millis::ZERO && best.is_none_or(|(_, b)| covered > b) {
            best = Some((spk, covered));
        }
    }
    best.map(|(s, _)| String::from(s))
}

/// Labels every segment in place.
pub fn label_segments(segments: &mut [Segment], reference: &Annotation, cfg: &SegmenterConfig) {
    for seg in segments.iter_mut() {
        seg.label = assign_reference_label(seg, reference, cfg);
    }
}

/// Turns labeled, possibly overlapping segments into a single-label
/// annotation. Where consecutive segments overlap, each keeps the part closer
/// to its own center. Unlabeled segments are skipped.
pub fn segments_to_annotation(
    recording_id: &str,
    total_duration: Millis,
    segments: &[Segment],
) -> Result<Annotation> {
    let center2 = |s: &Segment| s.start.0 + s.end.0;
    let mut labeled: Vec<(String, Interval)> = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        let Some(label) = &seg.label else { continue };
        let mut start = seg.start;
        let mut end = seg.end;
        if let Some(prev) = i.checked_sub(1).map(|p| &segments[p]) {
            if prev.end > seg.start {
                start = start.max(Millis((center2(prev) + center2(seg)) / 4));
            }
        }
        if let Some(next) = segments.get(i + 1) {
            if next.start < seg.end {
                end = end.min(Millis((center2(seg) + center2(next)) / 4));
            }
        }
        if start < end {
            labeled.push((label.clone(), Interval { start, end }));
        }
    }
    Annotation::from_labeled(recording_id, total_duration, labeled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn region(a: i64, b: i64) -> Timeline {
        Timeline::from_intervals([Interval::ms(a, b)])
    }

    #[test]
    fn ten_second_region() {
        let drop = SegmenterConfig { tail: TailPolicy::Drop, ..Default::default() };
        let segs = uniform_segment(&region(0, 10_000), &drop).unwrap();
        assert_eq!(segs.len(), 12);
        assert_eq!(segs[0].start, Millis(0));
        assert_eq!(segs[11].start, Millis(8_250));

        let segs = uniform_segment(&region(0, 10_000), &SegmenterConfig::default()).unwrap();
        assert_eq!(segs.len(), 13);
        assert_eq!(segs[11].start, Millis(8_250));
        assert_eq!((segs[12].start, segs[12].end), (Millis(8_500), Millis(10_000)));
    }

    #[test]
    fn short_and_exact_regions() {
        let cfg = SegmenterConfig::default();
        let segs = uniform_segment(&region(0, 1_000), &cfg).unwrap();
        assert_eq!(segs, vec![Segment::new(Millis(0), Millis(1_000)).unwrap()]);
        let segs = uniform_segment(&region(0, 1_500), &cfg).unwrap();
        assert_eq!(segs, vec![Segment::new(Millis(0), Millis(1_500)).unwrap()]);
    }

    #[test]
    fn bad_config() {
        let cfg = SegmenterConfig { step: Millis(2_000), ..Default::default() };
        assert!(uniform_segment(&region(0, 10), &cfg).is_err());
        let cfg = SegmenterConfig { central_fraction: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    fn reference(turns: &[(&str, i64, i64)]) -> Annotation {
        Annotation::from_labeled(
            "r",
            Millis(10_000),
            turns.iter().map(|&(s, a, b)| (s.to_string(), Interval::ms(a, b))),
        )
        .unwrap()
    }

    #[test]
    fn center_majority() {
        let cfg = SegmenterConfig::default();
        let seg = Segment::new(Millis(0), Millis(1_500)).unwrap();
        assert_eq!(central_window(&seg, &cfg), Interval::ms(375, 1_125));
        let r = reference(&[("A", 0, 1_000), ("B", 1_000, 1_500)]);
        assert_eq!(assign_reference_label(&seg, &r, &cfg).as_deref(), Some("A"));
        let r = reference(&[("B", 0, 1_500)]);
        assert_eq!(assign_reference_label(&seg, &r, &cfg).as_deref(), Some("B"));
        let r = reference(&[("B", 0, 750), ("A", 750, 1_500)]);
        assert_eq!(assign_reference_label(&seg, &r, &cfg).as_deref(), Some("A"));
        let r = reference(&[("A", 0, 300), ("B", 1_200, 1_500)]);
        assert_eq!(assign_reference_label(&seg, &r, &cfg), None);
    }

    #[test]
    fn labeled_segments_to_annotation() {
        let mut segs = uniform_segment(&region(0, 3_000), &SegmenterConfig::default()).unwrap();
        let labels = ["A", "A", "B"];
        for (s, l) in segs.iter_mut().zip(labels) {
            s.label = Some(l.to_string());
        }
        let ann = segments_to_annotation("r", Millis(3_000), &segs).unwrap();
        let tl = ann.speaker_timelines();
        assert_eq!(tl["A"].intervals(), &[Interval::ms(0, 1_875)]);
        assert_eq!(tl["B"].intervals(), &[Interval::ms(1_875, 3_000)]);
    }

    proptest! {
        #[test]
        fn segmentation_properties(
            raw in proptest::collection::vec((0i64..100_000, 100i64..20_000), 1..6),
            window in 500i64..3_000,
            step_frac in 0.1f64..1.0,
        ) {
            let step = ((window as f64 * step_frac) as i64).max(1);
            let speech = Timeline::from_intervals(raw.iter().map(|&(s, l)| Interval::ms(s, s + l)));
            let cfg = SegmenterConfig { window: Millis(window), step: Millis(step), ..Default::default() };
            let segs = uniform_segment(&speech, &cfg).unwrap();
            let covered = Timeline::from_intervals(segs.iter().map(Segment::interval));
            prop_assert_eq!(covered, speech.clone());
            for r in speech.intervals() {
                let inside: Vec<&Segment> = segs.iter().filter(|s| s.start >= r.start && s.end <= r.end).collect();
                let len = r.len().0;
                if len > window {
                    let regular = (len - window) / step + 1;
                    let tail = i64::from((len - window) % step != 0);
                    prop_assert_eq!(inside.len() as i64, regular + tail);
                    for w in inside.windows(2).take(regular as usize - 1) {
                        prop_assert_eq!(w[0].end.0 - w[1].start.0, window - step);
                    }
                } else {
                    prop_assert_eq!(inside.len(), 1);
                }
            }
            let dropped = SegmenterConfig { tail: TailPolicy::Drop, ..cfg };
            let n_drop = uniform_segment(&speech, &dropped).unwrap().len() as i64;
            let expected: i64 = speech.intervals().iter().map(|r| {
                let len = r.len().0;
                if len > window { (len - window) / step + 1 } else { 1 }
            }).sum();
            prop_assert_eq!(n_drop, expected);
        }
    }
}
