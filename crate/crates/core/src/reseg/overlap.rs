use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Annotation, Error, Interval, Millis, Result, Timeline};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OverlapConfig {
    pub frame_step: Millis,
    pub extend_frames: i64,
}

impl OverlapConfig {
    pub fn new(frame_step: Millis) -> OverlapConfig {
        OverlapConfig { frame_step, extend_frames: 20 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_step.0 <= 0 || self.extend_frames < 0 {
            return Err(Error::Config("frame_step must be positive and extend_frames non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapAssignment {
    pub annotation: Annotation,
    pub warnings: Vec<String>,
}

/// Labels each overlap region with every speaker the diarization puts
/// anywhere in the region widened by `extend_frames` frames on both sides.
/// Regions are revisited until nothing changes, so a second call is a no-op.
pub fn assign_overlap_labels(diar: &Annotation, regions: &[Interval], cfg: &OverlapConfig) -> Result<OverlapAssignment> {
    cfg.validate()?;
    if regions.is_empty() {
        return Ok(OverlapAssignment { annotation: diar.clone(), warnings: Vec::new() });
    }
    let total = diar.total_duration();
    let pad = Millis(cfg.extend_frames * cfg.frame_step.0);
    let mut timelines: BTreeMap<String, Timeline> =
        diar.speaker_timelines().into_iter().map(|(s, tl)| (String::from(s), tl)).collect();
    let mut warnings = Vec::new();
    let mut first_pass = true;
    loop {
        let mut changed = false;
        for region in regions {
            let start = region.start.max(Millis::ZERO);
            let end = region.end.min(total);
            if start >= end {
                if first_pass {
                    warnings.push(alloc::format!("overlap region {}-{} lies outside the recording", region.start, region.end));
                }
                continue;
            }
            let wide = Interval { start: (start - pad).max(Millis::ZERO), end: (end + pad).min(total) };
            let region_tl = Timeline::from_intervals([Interval { start, end }]);
            let present: Vec<String> =
                timelines.iter().filter(|(_, tl)| tl.overlap_with(&wide) > Millis::ZERO).map(|(s, _)| s.clone()).collect();
            if present.is_empty() && first_pass {
                warnings.push(alloc::format!("no speaker near overlap region {start}-{end}"));
            }
            for s in present {
                let tl = timelines.get_mut(&s).unwrap();
                if tl.overlap_with(&Interval { start, end }) < end - start {
                    *tl = tl.union(&region_tl);
                    changed = true;
                }
            }
        }
        first_pass = false;
        if !changed {
            break;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let labeled = timelines.into_iter().flat_map(|(s, tl)| tl.into_intervals().into_iter().map(move |iv| (s.clone(), iv)));
    let annotation = Annotation::from_labeled(diar.recording_id(), total, labeled)?;
    Ok(OverlapAssignment { annotation, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn diar(turns: &[(&str, i64, i64)], total: i64) -> Annotation {
        Annotation::from_labeled("r", Millis(total), turns.iter().map(|&(s, a, b)| (s.to_string(), Interval::ms(a, b)))).unwrap()
    }

    #[test]
    fn widened_region_picks_up_both_speakers() {
        let d = diar(&[("A", 4_000, 5_200), ("B", 5_200, 6_000)], 10_000);
        let out = assign_overlap_labels(&d, &[Interval::ms(5_000, 5_500)], &OverlapConfig::new(Millis(10))).unwrap();
        let tl = out.annotation.speaker_timelines();
        assert_eq!(tl["A"].intervals(), &[Interval::ms(4_000, 5_500)]);
        assert_eq!(tl["B"].intervals(), &[Interval::ms(5_000, 6_000)]);
        assert!(out.warnings.is_empty());

        // the widening is what reaches C: it ends 150 ms before the region
        let d = diar(&[("A", 4_000, 5_200), ("C", 0, 4_850)], 10_000);
        let out = assign_overlap_labels(&d, &[Interval::ms(5_000, 5_500)], &OverlapConfig::new(Millis(10))).unwrap();
        assert_eq!(out.annotation.speaker_timelines()["C"].intervals(), &[Interval::ms(0, 4_850), Interval::ms(5_000, 5_500)]);
        let out = assign_overlap_labels(&d, &[Interval::ms(5_000, 5_500)], &OverlapConfig { frame_step: Millis(10), extend_frames: 10 }).unwrap();
        assert_eq!(out.annotation.speaker_timelines()["C"].intervals(), &[Interval::ms(0, 4_850)]);
    }

    #[test]
    fn empty_region_list_and_silent_region() {
        let d = diar(&[("A", 0, 1_000)], 10_000);
        let cfg = OverlapConfig::new(Millis(10));
        assert_eq!(assign_overlap_labels(&d, &[], &cfg).unwrap().annotation, d);
        let out = assign_overlap_labels(&d, &[Interval::ms(5_000, 5_500)], &cfg).unwrap();
        assert_eq!(out.annotation, d);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn idempotent_with_chained_regions() {
        // the second region only sees B after the first one has been labeled
        let d = diar(&[("A", 0, 1_000), ("B", 1_000, 1_300), ("C", 1_700, 3_000)], 3_000);
        let regions = vec![Interval::ms(1_500, 1_700), Interval::ms(1_100, 1_300)];
        let cfg = OverlapConfig::new(Millis(10));
        let once = assign_overlap_labels(&d, &regions, &cfg).unwrap().annotation;
        let twice = assign_overlap_labels(&once, &regions, &cfg).unwrap().annotation;
        assert_eq!(once, twice);
    }
}
