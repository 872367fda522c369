//! Strict diarization error rate and frame-level VAD accuracy.
//!
//! Scoring uses no collar and counts overlapped speech: every reference
//! speaker active at an instant contributes speaker time. Hypothesis speakers
//! are mapped one-to-one onto reference speakers so that the total correctly
//! attributed time is maximal.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Annotation, Error, Interval, Millis, Result, Timeline, VadLabels};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DerBreakdown {
    pub missed: Millis,
    pub false_alarm: Millis,
    pub confusion: Millis,
    pub correct: Millis,
    /// Reference speaker time inside the scored region.
    pub scored_speech: Millis,
    /// Reference speaker -> hypothesis speaker.
    pub mapping: Vec<(String, String)>,
}

impl DerBreakdown {
    /// Percentage; zero when nothing was scored.
    pub fn der(&self) -> f64 {
        if self.scored_speech.0 == 0 {
            return 0.0;
        }
        100.0 * (self.missed + self.false_alarm + self.confusion).0 as f64 / self.scored_speech.0 as f64
    }

    /// Sums components for a pooled corpus figure; the mapping is dropped.
    pub fn accumulate(&mut self, other: &DerBreakdown) {
        self.missed += other.missed;
        self.false_alarm += other.false_alarm;
        self.confusion += other.confusion;
        self.correct += other.correct;
        self.scored_speech += other.scored_speech;
        self.mapping.clear();
    }
}

struct Sweep {
    missed: i64,
    false_alarm: i64,
    matched: i64,
    scored: i64,
    /// co-occurrence durations, `[ref][hyp]`
    cooc: Vec<Vec<i64>>,
}

fn sweep(reference: &[Timeline], hypothesis: &[Timeline]) -> Sweep {
    // +1 = start, -1 = end; ends sort first at equal times (half-open intervals)
    let mut events: Vec<(Millis, i8, bool, usize)> = Vec::new();
    for (is_hyp, side) in [(false, reference), (true, hypothesis)] {
        for (k, tl) in side.iter().enumerate() {
            for iv in tl.intervals() {
                events.push((iv.start, 1, is_hyp, k));
                events.push((iv.end, -1, is_hyp, k));
            }
        }
    }
    events.sort_unstable();
    let mut ref_on = vec![false; reference.len()];
    let mut hyp_on = vec![false; hypothesis.len()];
    let mut out = Sweep {
        missed: 0,
        false_alarm: 0,
        matched: 0,
        scored: 0,
        cooc: vec![vec![0; hypothesis.len()]; reference.len()],
    };
    let mut prev = match events.first() {
        Some(e) => e.0,
        None => return out,
    };
    for (t, kind, is_hyp, k) in events {
        let dur = (t - prev).0;
        if dur > 0 {
            let n_ref = ref_on.iter().filter(|&&b| b).count() as i64;
            let n_hyp = hyp_on.iter().filter(|&&b| b).count() as i64;
            out.scored += dur * n_ref;
            out.missed += dur * (n_ref - n_hyp).max(0);
            out.false_alarm += dur * (n_hyp - n_ref).max(0);
            out.matched += dur * n_ref.min(n_hyp);
            for (r, _) in ref_on.iter().enumerate().filter(|(_, &b)| b) {
                for (h, _) in hyp_on.iter().enumerate().filter(|(_, &b)| b) {
                    out.cooc[r][h] += dur;
                }
            }
        }
        prev = t;
        let flag = if is_hyp { &mut hyp_on[k] } else { &mut ref_on[k] };
        *flag = kind > 0;
    }
    out
}

/// Maximum-weight one-to-one assignment of rows to columns. Returns, for each
/// row, the chosen column if it was matched to a real column.
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let big = weights.iter().flatten().copied().max().unwrap_or(0).max(0);
    // minimize (big - w) on the padded square; padding costs `big`
    let cost = |i: usize, j: usize| -> i64 {
        if i < rows && j < cols {
            big - weights[i][j]
        } else {
            big
        }
    };
    // potentials formulation, 1-based with a virtual column 0
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            assign[i - 1] = Some(j - 1);
        }
    }
    assign
}

/// Strict DER of `hypothesis` against `reference`, scored inside `uem` or,
/// when absent, over the whole recording.
pub fn der(reference: &Annotation, hypothesis: &Annotation, uem: Option<&Timeline>) -> Result<DerBreakdown> {
    if reference.recording_id() != hypothesis.recording_id() {
        return Err(Error::RecordingMismatch {
            expected: reference.recording_id().to_string(),
            found: hypothesis.recording_id().to_string(),
        });
    }
    let scored_region = match uem {
        Some(u) => u.clone(),
        None => {
            let end = reference.total_duration().max(hypothesis.total_duration());
            if end > Millis::ZERO {
                Timeline::from_intervals([Interval { start: Millis::ZERO, end }])
            } else {
                Timeline::empty()
            }
        }
    };
    let clip = |ann: &Annotation| -> (Vec<String>, Vec<Timeline>) {
        ann.speaker_timelines()
            .into_iter()
            .map(|(spk, tl)| (spk.to_string(), tl.intersection(&scored_region)))
            .filter(|(_, tl)| !tl.is_empty())
            .unzip()
    };
    let (ref_names, ref_tl) = clip(reference);
    let (hyp_names, hyp_tl) = clip(hypothesis);
    let s = sweep(&ref_tl, &hyp_tl);
    if s.scored == 0 {
        return Err(Error::NoSpeech);
    }
    let assign = max_weight_assignment(&s.cooc);
    let mut correct = 0;
    let mut mapping = Vec::new();
    for (r, h) in assign.iter().enumerate() {
        if let Some(h) = *h {
            correct += s.cooc[r][h];
            if s.cooc[r][h] > 0 {
                mapping.push((ref_names[r].clone(), hyp_names[h].clone()));
            }
        }
    }
    Ok(DerBreakdown {
        missed: Millis(s.missed),
        false_alarm: Millis(s.false_alarm),
        confusion: Millis(s.matched - correct),
        correct: Millis(correct),
        scored_speech: Millis(s.scored),
        mapping,
    })
}

/// Scores every reference recording that has a hypothesis (a missing
/// hypothesis counts as empty) and returns per-recording and pooled results.
pub fn der_corpus(
    references: &BTreeMap<String, Annotation>,
    hypotheses: &BTreeMap<String, Annotation>,
    uems: Option<&BTreeMap<String, Timeline>>,
) -> Result<(Vec<(String, DerBreakdown)>, DerBreakdown)> {
    let mut per = Vec::new();
    let mut pooled = DerBreakdown::default();
    for (id, reference) in references {
        let empty;
        let hyp = match hypotheses.get(id) {
            Some(h) => h,
            None => {
                empty = Annotation::new(id.clone(), reference.total_duration(), Vec::new())?;
                &empty
            }
        };
        let uem = uems.and_then(|m| m.get(id));
        let b = der(reference, hyp, uem)?;
        pooled.accumulate(&b);
        per.push((id.clone(), b));
    }
    Ok((per, pooled))
}

/// Percentage of frames whose speech decision agrees.
pub fn vad_accuracy(reference: &VadLabels, hypothesis: &VadLabels) -> Result<f64> {
    if reference.labels.len() != hypothesis.labels.len() {
        return Err(Error::Shape(alloc::format!(
            "{} reference frames vs {} hypothesis frames",
            reference.labels.len(),
            hypothesis.labels.len()
        )));
    }
    if reference.frame_step != hypothesis.frame_step {
        return Err(Error::Shape("frame steps differ".into()));
    }
    if reference.labels.is_empty() {
        return Err(Error::NotEnoughData("no frames".into()));
    }
    let same = reference.labels.iter().zip(&hypothesis.labels).filter(|(a, b)| a == b).count();
    Ok(100.0 * same as f64 / reference.labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(turns: &[(&str, i64, i64)]) -> Annotation {
        Annotation::from_labeled(
            "rec",
            Millis(20_000),
            turns.iter().map(|&(s, a, b)| (s.to_string(), Interval::ms(a, b))),
        )
        .unwrap()
    }

    #[test]
    fn perfect_hypothesis() {
        let r = ann(&[("A", 0, 5_000), ("B", 3_000, 9_000)]);
        let b = der(&r, &r, None).unwrap();
        assert_eq!(b.der(), 0.0);
        assert_eq!(b.correct, b.scored_speech);
    }

    #[test]
    fn truncated_hypothesis() {
        let b = der(&ann(&[("A", 0, 10_000)]), &ann(&[("A", 0, 8_000)]), None).unwrap();
        assert_eq!(b.missed, Millis(2_000));
        assert_eq!(b.der(), 20.0);
    }

    #[test]
    fn overlap_is_scored() {
        let r = ann(&[("A", 0, 10_000), ("B", 5_000, 10_000)]);
        let h = ann(&[("C", 0, 10_000)]);
        let b = der(&r, &h, None).unwrap();
        assert_eq!(b.scored_speech, Millis(15_000));
        assert_eq!(b.missed, Millis(5_000));
        assert_eq!(b.confusion, Millis::ZERO);
        assert_eq!(b.mapping, [("A".to_string(), "C".to_string())]);
        assert!((b.der() - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn uem_limits_scoring() {
        let r = ann(&[("A", 0, 10_000)]);
        let h = ann(&[("A", 0, 5_000), ("B", 12_000, 15_000)]);
        let uem = Timeline::from_intervals([Interval::ms(0, 5_000)]);
        assert_eq!(der(&r, &h, Some(&uem)).unwrap().der(), 0.0);
        let full = der(&r, &h, None).unwrap();
        assert_eq!((full.missed, full.false_alarm), (Millis(5_000), Millis(3_000)));
    }

    #[test]
    fn confusion_and_renaming() {
        let r = ann(&[("A", 0, 4_000), ("B", 4_000, 10_000)]);
        let h = ann(&[("x", 0, 6_000), ("y", 6_000, 10_000)]);
        let b = der(&r, &h, None).unwrap();
        // A->x and B->y, 4 s each
        assert_eq!(b.correct, Millis(8_000));
        assert_eq!(b.confusion, Millis(2_000));
        let h2 = ann(&[("q", 0, 6_000), ("p", 6_000, 10_000)]);
        assert_eq!(der(&r, &h2, None).unwrap().confusion, b.confusion);
    }

    #[test]
    fn errors() {
        let empty = Annotation::new("rec", Millis(10), Vec::new()).unwrap();
        assert_eq!(der(&empty, &empty, None), Err(Error::NoSpeech));
        let other = Annotation::new("other", Millis(10), Vec::new()).unwrap();
        assert!(matches!(der(&empty, &other, None), Err(Error::RecordingMismatch { .. })));
    }

    #[test]
    fn assignment_small() {
        let w = vec![vec![1, 5, 0], vec![4, 6, 0]];
        assert_eq!(max_weight_assignment(&w), vec![Some(1), Some(0)]);
        let w = vec![vec![3], vec![7], vec![1]];
        let a = max_weight_assignment(&w);
        assert_eq!(a.iter().filter(|x| x.is_some()).count(), 1);
        assert_eq!(a[1], Some(0));
    }

    fn labels(bits: &[u8]) -> VadLabels {
        VadLabels { recording_id: "r".into(), frame_step: Millis(10), labels: bits.iter().map(|&b| b == 1).collect() }
    }

    #[test]
    fn vad_accuracy_cases() {
        let a = labels(&[1, 1, 0, 0, 1, 0, 1, 1, 1, 0]);
        let b = labels(&[1, 0, 0, 1, 1, 0, 0, 1, 1, 1]);
        assert_eq!(vad_accuracy(&a, &a).unwrap(), 100.0);
        let flipped = labels(&[0, 0, 1, 1, 0, 1, 0, 0, 0, 1]);
        assert_eq!(vad_accuracy(&a, &flipped).unwrap(), 0.0);
        // agreement at frames 0, 2, 4, 5, 7, 8
        assert_eq!(vad_accuracy(&a, &b).unwrap(), 60.0);
        assert!(vad_accuracy(&a, &labels(&[1])).is_err());
    }
}
