//! Frame-level refinement of a segment-level diarization.

mod gmm;
mod overlap;
mod vb;

pub use gmm::{fit_gmm, gmm_resegment, Gmm, GmmFit, GmmResegConfig, GmmResegResult};
pub use overlap::{assign_overlap_labels, OverlapAssignment, OverlapConfig};
pub use vb::{
    forward_backward, train_vb_model, transition_matrix, vb_resegment, LabelPosterior, VbConfig, VbModel,
    VbResult, VbStats,
};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::frames::{frame_interval, frames_covering};
use crate::{Annotation, Error, Interval, Millis, Result, Timeline};

/// Per-frame speaker decisions. `None` marks non-speech frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameAssignment {
    pub labels: Vec<Option<usize>>,
    pub n_speakers: usize,
    /// Optional `T x n_speakers` soft assignment, row-major; silence rows are
    /// all zero.
    pub posteriors: Option<Vec<f64>>,
}

impl FrameAssignment {
    pub fn new(labels: Vec<Option<usize>>, n_speakers: usize) -> Result<FrameAssignment> {
        if let Some(bad) = labels.iter().flatten().find(|&&l| l >= n_speakers) {
            return Err(Error::Config(alloc::format!("label {bad} with {n_speakers} speakers")));
        }
        Ok(FrameAssignment { labels, n_speakers, posteriors: None })
    }

    pub fn n_frames(&self) -> usize {
        self.labels.len()
    }

    pub fn speech_mask(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_some).collect()
    }

    /// Rasterizes an annotation: frames inside `speech` take the speaker whose
    /// turn covers the frame midpoint (smallest id when several do); speech
    /// frames no turn covers borrow the label of the nearest labeled frame.
    /// Returns the assignment and the speaker names indexed by label.
    pub fn from_annotation(
        ann: &Annotation,
        speech: &Timeline,
        step: Millis,
        n_frames: usize,
    ) -> Result<(FrameAssignment, Vec<String>)> {
        let timelines = ann.speaker_timelines();
        let names: Vec<String> = timelines.keys().map(|s| String::from(*s)).collect();
        let mut labels: Vec<Option<usize>> = vec![None; n_frames];
        let mut is_speech = vec![false; n_frames];
        for t in 0..n_frames {
            let mid = Millis(t as i64 * step.0 + step.0 / 2);
            is_speech[t] = speech.contains(mid);
            if is_speech[t] {
                labels[t] = timelines.values().position(|tl| tl.contains(mid));
            }
        }
        let labeled: Vec<usize> = (0..n_frames).filter(|&t| labels[t].is_some()).collect();
        if labeled.is_empty() {
            if is_speech.iter().any(|&s| s) {
                return Err(Error::NoSpeech);
            }
        } else {
            for t in 0..n_frames {
                if is_speech[t] && labels[t].is_none() {
                    let idx = labeled.partition_point(|&u| u < t);
                    let nearest = match (idx.checked_sub(1).map(|i| labeled[i]), labeled.get(idx)) {
                        (Some(a), Some(&b)) => if t - a <= b - t { a } else { b },
                        (Some(a), None) => a,
                        (None, Some(&b)) => b,
                        (None, None) => unreachable!(),
                    };
                    labels[t] = labels[nearest];
                }
            }
        }
        Ok((FrameAssignment { labels, n_speakers: names.len(), posteriors: None }, names))
    }

    /// Converts frame labels back into speaker turns.
    pub fn to_annotation(
        &self,
        recording_id: &str,
        names: &[String],
        step: Millis,
        total_duration: Millis,
    ) -> Result<Annotation> {
        let mut labeled = Vec::new();
        let mut t = 0;
        while t < self.n_frames() {
            let Some(l) = self.labels[t] else {
                t += 1;
                continue;
            };
            let start = t;
            while t < self.n_frames() && self.labels[t] == Some(l) {
                t += 1;
            }
            let iv = Interval {
                start: frame_interval(start, step).start,
                end: frame_interval(t - 1, step).end.min(total_duration),
            };
            if iv.start < iv.end {
                labeled.push((names[l].clone(), iv));
            }
        }
        Annotation::from_labeled(recording_id, total_duration, labeled)
    }

    /// Fraction of frames, among those `truth` marks as speech, whose label
    /// agrees with `truth`.
    pub fn accuracy_against(&self, truth: &[Option<usize>]) -> f64 {
        let speech: Vec<usize> = (0..truth.len()).filter(|&t| truth[t].is_some()).collect();
        if speech.is_empty() {
            return 1.0;
        }
        let hit = speech.iter().filter(|&&t| self.labels.get(t).copied().flatten() == truth[t]).count();
        hit as f64 / speech.len() as f64
    }
}

/// Frame count covering an annotation's recording.
pub fn frames_for(ann: &Annotation, step: Millis) -> usize {
    frames_covering(ann.total_duration(), step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn annotation_round_trip_through_frames() {
        let ann = Annotation::from_labeled(
            "r",
            Millis(1_000),
            [("A".to_string(), Interval::ms(0, 300)), ("B".to_string(), Interval::ms(500, 800))],
        )
        .unwrap();
        let speech = Timeline::from_intervals([Interval::ms(0, 300), Interval::ms(400, 800)]);
        let (fa, names) = FrameAssignment::from_annotation(&ann, &speech, Millis(10), 100).unwrap();
        assert_eq!(names, ["A", "B"]);
        // frame 40 is unlabeled speech; its nearest labeled frame is B's at 500 ms
        assert_eq!(fa.labels[40], Some(1));
        assert_eq!(fa.labels[35], None);
        let back = fa.to_annotation("r", &names, Millis(10), Millis(1_000)).unwrap();
        let tl = back.speaker_timelines();
        assert_eq!(tl["A"].intervals(), &[Interval::ms(0, 300)]);
        assert_eq!(tl["B"].intervals(), &[Interval::ms(400, 800)]);
    }
}
