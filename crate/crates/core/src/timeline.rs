//! Domain types and exact interval algebra.
//!
//! Time is integer milliseconds. Intervals are half-open `[start, end)`, so
//! touching intervals share zero measure and unions never double count.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, AddAssign, Sub};

use nalgebra::DMatrix;

use crate::{Error, Result};

/// A point or length on the recording timeline, in milliseconds.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Millis(pub i64);

impl Millis {
    pub const ZERO: Millis = Millis(0);

    /// Rounds seconds to the nearest millisecond.
    pub fn from_secs(secs: f64) -> Millis {
        Millis(libm::round(secs * 1000.0) as i64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn max(self, other: Millis) -> Millis {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Millis) -> Millis {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl Add for Millis {
    type Output = Millis;
    fn add(self, rhs: Millis) -> Millis {
        Millis(self.0 + rhs.0)
    }
}

impl AddAssign for Millis {
    fn add_assign(&mut self, rhs: Millis) {
        self.0 += rhs.0;
    }
}

impl Sub for Millis {
    type Output = Millis;
    fn sub(self, rhs: Millis) -> Millis {
        Millis(self.0 - rhs.0)
    }
}

impl core::iter::Sum for Millis {
    fn sum<I: Iterator<Item = Millis>>(iter: I) -> Millis {
        Millis(iter.map(|m| m.0).sum())
    }
}

/// Seconds with exactly three decimals.
impl fmt::Display for Millis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{}{}.{:03}", sign, abs / 1000, abs % 1000)
    }
}

/// Half-open interval `[start, end)` with `start < end`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interval {
    pub start: Millis,
    pub end: Millis,
}

impl Interval {
    pub fn new(start: Millis, end: Millis) -> Result<Interval> {
        if start < end {
            Ok(Interval { start, end })
        } else {
            Err(Error::InvalidInterval { start: start.0, end: end.0 })
        }
    }

    /// Shorthand for tests and literals; panics on an empty interval.
    pub fn ms(start: i64, end: i64) -> Interval {
        Interval::new(Millis(start), Millis(end)).expect("empty interval")
    }

    pub fn len(&self) -> Millis {
        self.end - self.start
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(Interval { start, end })
    }

    pub fn overlap_len(&self, other: &Interval) -> Millis {
        self.intersect(other).map_or(Millis::ZERO, |i| i.len())
    }
}

/// A sorted list of pairwise disjoint, non-touching intervals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Timeline(Vec<Interval>);

impl Timeline {
    pub fn empty() -> Timeline {
        Timeline(Vec::new())
    }

    /// Union of arbitrary intervals.
    pub fn from_intervals<I: IntoIterator<Item = Interval>>(intervals: I) -> Timeline {
        let mut all: Vec<Interval> = intervals.into_iter().collect();
        all.sort_unstable();
        let mut out: Vec<Interval> = Vec::with_capacity(all.len());
        for iv in all {
            match out.last_mut() {
                Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
                _ => out.push(iv),
            }
        }
        Timeline(out)
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.0
    }

    pub fn into_intervals(self) -> Vec<Interval> {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> Millis {
        self.0.iter().map(Interval::len).sum()
    }

    pub fn union(&self, other: &Timeline) -> Timeline {
        Timeline::from_intervals(self.0.iter().chain(other.0.iter()).copied())
    }

    pub fn intersection(&self, other: &Timeline) -> Timeline {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            if let Some(iv) = a[i].intersect(&b[j]) {
                out.push(iv);
            }
            if a[i].end <= b[j].end {
                i += 1;
            } else {
                j += 1;
            }
        }
        Timeline(out)
    }

    /// Points in `self` not covered by `other`.
    pub fn difference(&self, other: &Timeline) -> Timeline {
        let mut out = Vec::new();
        let mut j = 0;
        for iv in &self.0 {
            let mut cursor = iv.start;
            while j < other.0.len() && other.0[j].end <= cursor {
                j += 1;
            }
            let mut k = j;
            while k < other.0.len() && other.0[k].start < iv.end {
                let cut = other.0[k];
                if cut.start > cursor {
                    out.push(Interval { start: cursor, end: cut.start });
                }
                cursor = cursor.max(cut.end);
                if cursor >= iv.end {
                    break;
                }
                k += 1;
            }
            if cursor < iv.end {
                out.push(Interval { start: cursor, end: iv.end });
            }
        }
        Timeline(out)
    }

    pub fn clip(&self, window: Interval) -> Timeline {
        Timeline(self.0.iter().filter_map(|iv| iv.intersect(&window)).collect())
    }

    pub fn overlap_with(&self, window: &Interval) -> Millis {
        self.0.iter().map(|iv| iv.overlap_len(window)).sum()
    }

    pub fn contains(&self, t: Millis) -> bool {
        let idx = self.0.partition_point(|iv| iv.end <= t);
        idx < self.0.len() && self.0[idx].start <= t
    }
}

/// Disjoint sorted union of the given turns.
pub fn timeline_union(turns: &[SpeakerTurn]) -> Timeline {
    Timeline::from_intervals(turns.iter().map(SpeakerTurn::interval))
}

/// Exact measure of the pointwise intersection of two disjoint sorted lists.
pub fn interval_intersection_length(a: &[Interval], b: &[Interval]) -> Millis {
    let (mut i, mut j) = (0, 0);
    let mut total = Millis::ZERO;
    while i < a.len() && j < b.len() {
        total += a[i].overlap_len(&b[j]);
        if a[i].end <= b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpeakerTurn {
    pub recording_id: String,
    pub channel: u8,
    pub onset: Millis,
    pub duration: Millis,
    pub speaker: String,
}

impl SpeakerTurn {
    pub fn new(
        recording_id: impl Into<String>,
        channel: u8,
        onset: Millis,
        duration: Millis,
        speaker: impl Into<String>,
    ) -> Result<SpeakerTurn> {
        if onset < Millis::ZERO {
            return Err(Error::InvalidTurn(alloc::format!("negative onset {onset}")));
        }
        if duration <= Millis::ZERO {
            return Err(Error::InvalidTurn(alloc::format!("non-positive duration {duration}")));
        }
        Ok(SpeakerTurn {
            recording_id: recording_id.into(),
            channel,
            onset,
            duration,
            speaker: speaker.into(),
        })
    }

    pub fn end(&self) -> Millis {
        self.onset + self.duration
    }

    pub fn interval(&self) -> Interval {
        Interval { start: self.onset, end: self.end() }
    }
}

/// Speaker activity of one recording.
///
/// Turns are kept sorted by `(onset, speaker)`; overlapping or touching turns
/// of the same speaker are merged on construction. Turns of different
/// speakers may overlap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Annotation {
    recording_id: String,
    total_duration: Millis,
    turns: Vec<SpeakerTurn>,
}

impl Annotation {
    pub fn new(
        recording_id: impl Into<String>,
        total_duration: Millis,
        turns: Vec<SpeakerTurn>,
    ) -> Result<Annotation> {
        let recording_id = recording_id.into();
        let mut by_speaker: BTreeMap<(String, u8), Vec<Interval>> = BTreeMap::new();
        for turn in turns {
            if turn.recording_id != recording_id {
                return Err(Error::RecordingMismatch {
                    expected: recording_id,
                    found: turn.recording_id,
                });
            }
            let end = turn.end();
            if end > total_duration {
                return Err(Error::TurnPastEnd {
                    speaker: turn.speaker,
                    end: end.0,
                    total: total_duration.0,
                });
            }
            let iv = turn.interval();
            by_speaker.entry((turn.speaker, turn.channel)).or_default().push(iv);
        }
        let mut merged = Vec::new();
        for ((speaker, channel), ivs) in by_speaker {
            for iv in Timeline::from_intervals(ivs).into_intervals() {
                merged.push(SpeakerTurn {
                    recording_id: recording_id.clone(),
                    channel,
                    onset: iv.start,
                    duration: iv.len(),
                    speaker: speaker.clone(),
                });
            }
        }
        merged.sort_by(|a, b| {
            (a.onset, &a.speaker, a.channel).cmp(&(b.onset, &b.speaker, b.channel))
        });
        Ok(Annotation { recording_id, total_duration, turns: merged })
    }

    /// Builds an annotation whose duration is the end of the last turn.
    pub fn from_turns(recording_id: impl Into<String>, turns: Vec<SpeakerTurn>) -> Result<Annotation> {
        let end = turns.iter().map(SpeakerTurn::end).max().unwrap_or(Millis::ZERO);
        Annotation::new(recording_id, end, turns)
    }

    /// Builds an annotation from `(speaker, interval)` pairs on channel 1.
    pub fn from_labeled(
        recording_id: impl Into<String>,
        total_duration: Millis,
        labeled: impl IntoIterator<Item = (String, Interval)>,
    ) -> Result<Annotation> {
        let recording_id = recording_id.into();
        let turns = labeled
            .into_iter()
            .map(|(spk, iv)| SpeakerTurn::new(recording_id.clone(), 1, iv.start, iv.len(), spk))
            .collect::<Result<Vec<_>>>()?;
        Annotation::new(recording_id, total_duration, turns)
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn total_duration(&self) -> Millis {
        self.total_duration
    }

    pub fn turns(&self) -> &[SpeakerTurn] {
        &self.turns
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Same turns, different recording length.
    pub fn with_total_duration(&self, total: Millis) -> Result<Annotation> {
        Annotation::new(self.recording_id.clone(), total, self.turns.clone())
    }

    /// Sorted distinct speaker ids.
    pub fn speakers(&self) -> Vec<&str> {
        let mut spk: Vec<&str> = self.turns.iter().map(|t| t.speaker.as_str()).collect();
        spk.sort_unstable();
        spk.dedup();
        spk
    }

    /// Region set R_i of every speaker, ignoring channels.
    pub fn speaker_timelines(&self) -> BTreeMap<&str, Timeline> {
        let mut raw: BTreeMap<&str, Vec<Interval>> = BTreeMap::new();
        for t in &self.turns {
            raw.entry(t.speaker.as_str()).or_default().push(t.interval());
        }
        raw.into_iter().map(|(k, v)| (k, Timeline::from_intervals(v))).collect()
    }

    pub fn speech(&self) -> Timeline {
        timeline_union(&self.turns)
    }
}

/// A labeled stretch of time; the unit of uniform segmentation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Segment {
    pub start: Millis,
    pub end: Millis,
    pub label: Option<String>,
}

impl Segment {
    pub fn new(start: Millis, end: Millis) -> Result<Segment> {
        Interval::new(start, end)?;
        Ok(Segment { start, end, label: None })
    }

    pub fn interval(&self) -> Interval {
        Interval { start: self.start, end: self.end }
    }
}

/// One fixed-dimension embedding per segment.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    recording_id: String,
    dim: usize,
    entries: Vec<(Segment, Vec<f64>)>,
}

impl EmbeddingSet {
    /// Validates dimensions and finiteness, then sorts by segment start.
    pub fn new(
        recording_id: impl Into<String>,
        dim: usize,
        mut entries: Vec<(Segment, Vec<f64>)>,
    ) -> Result<EmbeddingSet> {
        if entries.is_empty() || dim == 0 {
            return Err(Error::EmptyEmbeddings);
        }
        for (_, v) in &entries {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("embedding"));
            }
        }
        entries.sort_by_key(|(s, _)| (s.start, s.end));
        Ok(EmbeddingSet { recording_id: recording_id.into(), dim, entries })
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Segment, Vec<f64>)] {
        &self.entries
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.entries.iter().map(|(s, _)| s)
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(|(_, v)| v.as_slice())
    }
}

/// Square matrix of pairwise similarity scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix(DMatrix<f64>);

impl ScoreMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<ScoreMatrix> {
        if values.nrows() != values.ncols() {
            return Err(Error::Shape(alloc::format!(
                "score matrix is {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::Shape("empty score matrix".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("score matrix"));
        }
        Ok(ScoreMatrix(values))
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<ScoreMatrix> {
        ScoreMatrix::new(DMatrix::from_fn(n, n, f))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<ScoreMatrix> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Shape(alloc::format!("row of length {} in {n}x{n} matrix", bad.len())));
        }
        ScoreMatrix::from_fn(n, |i, j| rows[i][j])
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| self.0[(i, j)] == self.0[(j, i)]))
    }

    /// `(S + Sᵀ) / 2`, exactly symmetric.
    pub fn symmetrize(&self) -> ScoreMatrix {
        let n = self.n();
        let mut out = self.0.clone();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self.0[(i, j)] + self.0[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        ScoreMatrix(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn turn(spk: &str, a: i64, b: i64) -> SpeakerTurn {
        SpeakerTurn::new("rec", 1, Millis(a), Millis(b - a), spk).unwrap()
    }

    #[test]
    fn union_cases() {
        assert!(timeline_union(&[]).is_empty());
        let u = timeline_union(&[turn("A", 0, 60_000), turn("B", 0, 60_000)]);
        assert_eq!(u.intervals(), &[Interval::ms(0, 60_000)]);
        assert_eq!(u.total(), Millis(60_000));
        let u = timeline_union(&[turn("A", 0, 10_000), turn("B", 5_000, 12_000), turn("A", 20_000, 25_000)]);
        assert_eq!(u.intervals(), &[Interval::ms(0, 12_000), Interval::ms(20_000, 25_000)]);
        assert_eq!(u.total(), Millis(17_000));
    }

    #[test]
    fn intersection_cases() {
        let a = [Interval::ms(0, 10_000)];
        assert_eq!(interval_intersection_length(&a, &a), Millis(10_000));
        assert_eq!(interval_intersection_length(&a, &[Interval::ms(10_000, 20_000)]), Millis::ZERO);
        let a = [Interval::ms(0, 5_000), Interval::ms(8_000, 12_000)];
        let b = [Interval::ms(3_000, 9_000)];
        assert_eq!(interval_intersection_length(&a, &b), Millis(3_000));
        assert_eq!(interval_intersection_length(&b, &a), Millis(3_000));
    }

    #[test]
    fn difference_and_clip() {
        let a = Timeline::from_intervals([Interval::ms(0, 10), Interval::ms(20, 30)]);
        let b = Timeline::from_intervals([Interval::ms(5, 22), Interval::ms(25, 26)]);
        assert_eq!(
            a.difference(&b).intervals(),
            &[Interval::ms(0, 5), Interval::ms(22, 25), Interval::ms(26, 30)]
        );
        assert_eq!(a.clip(Interval::ms(8, 21)).total(), Millis(3));
        assert!(a.contains(Millis(0)) && !a.contains(Millis(10)) && a.contains(Millis(29)));
    }

    #[test]
    fn annotation_merges_same_speaker() {
        let ann = Annotation::from_turns("rec", vec![turn("A", 0, 5_000), turn("A", 3_000, 8_000), turn("B", 1_000, 2_000)]).unwrap();
        assert_eq!(ann.turns().len(), 2);
        assert_eq!(ann.turns()[0].interval(), Interval::ms(0, 8_000));
        assert_eq!(ann.turns()[1].speaker, "B");
        assert_eq!(ann.total_duration(), Millis(8_000));
    }

    #[test]
    fn annotation_rejects_turn_past_end() {
        let err = Annotation::new("rec", Millis(1_000), vec![turn("A", 0, 2_000)]).unwrap_err();
        assert!(matches!(err, Error::TurnPastEnd { .. }));
    }

    #[test]
    fn invalid_turns() {
        assert!(SpeakerTurn::new("r", 1, Millis(-1), Millis(5), "A").is_err());
        assert!(SpeakerTurn::new("r", 1, Millis(0), Millis(0), "A").is_err());
    }

    #[test]
    fn millis_display() {
        assert_eq!(alloc::format!("{}", Millis(1_500)), "1.500");
        assert_eq!(alloc::format!("{}", Millis(5)), "0.005");
        assert_eq!(Millis::from_secs(8.25), Millis(8_250));
    }

    #[test]
    fn symmetrize_small() {
        let s = ScoreMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap().symmetrize();
        assert_eq!(s.get(0, 1), 0.5);
        assert_eq!(s.get(1, 0), 0.5);
        assert!(ScoreMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0]]).is_err());
    }
}
