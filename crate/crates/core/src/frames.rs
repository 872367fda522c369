//! Frame-rate data: acoustic feature matrices and binary speech labels.
//!
//! Frame `t` covers `[t * step, (t + 1) * step)`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Interval, Millis, Result, Timeline};

#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatures {
    pub recording_id: String,
    pub frame_step: Millis,
    pub frame_length: Millis,
    dim: usize,
    /// Row-major, `n_frames * dim` values.
    data: Vec<f64>,
}

impl FrameFeatures {
    pub fn new(
        recording_id: impl Into<String>,
        frame_step: Millis,
        frame_length: Millis,
        dim: usize,
        data: Vec<f64>,
    ) -> Result<FrameFeatures> {
        if dim == 0 || data.is_empty() {
            return Err(Error::Shape("feature matrix needs at least one frame and one dimension".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Shape(alloc::format!(
                "{} values do not split into rows of {dim}",
                data.len()
            )));
        }
        if frame_step <= Millis::ZERO || frame_length <= Millis::ZERO {
            return Err(Error::Config("frame step and length must be positive".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("frame features"));
        }
        Ok(FrameFeatures { recording_id: recording_id.into(), frame_step, frame_length, dim, data })
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Per-frame speech (true) / non-speech (false) decisions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VadLabels {
    pub recording_id: String,
    pub frame_step: Millis,
    pub labels: Vec<bool>,
}

impl VadLabels {
    /// Frame `t` is speech when its midpoint lies inside `speech`.
    pub fn from_timeline(recording_id: impl Into<String>, speech: &Timeline, frame_step: Millis, n_frames: usize) -> VadLabels {
        VadLabels {
            recording_id: recording_id.into(),
            frame_step,
            labels: timeline_to_mask(speech, frame_step, n_frames),
        }
    }

    pub fn to_timeline(&self) -> Timeline {
        mask_to_timeline(&self.labels, self.frame_step)
    }
}

pub fn frame_interval(t: usize, step: Millis) -> Interval {
    Interval { start: Millis(t as i64 * step.0), end: Millis((t as i64 + 1) * step.0) }
}

/// Midpoint rule: frame `t` is set when `t * step + step / 2` is covered.
pub fn timeline_to_mask(tl: &Timeline, step: Millis, n_frames: usize) -> Vec<bool> {
    (0..n_frames)
        .map(|t| tl.contains(Millis(t as i64 * step.0 + step.0 / 2)))
        .collect()
}

pub fn mask_to_timeline(mask: &[bool], step: Millis) -> Timeline {
    Timeline::from_intervals(
        mask.iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(t, _)| frame_interval(t, step)),
    )
}

/// Number of frames needed to cover `duration`.
pub fn frames_covering(duration: Millis, step: Millis) -> usize {
    ((duration.0 + step.0 - 1) / step.0).max(0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip() {
        let tl = Timeline::from_intervals([Interval::ms(0, 30), Interval::ms(50, 70)]);
        let mask = timeline_to_mask(&tl, Millis(10), 8);
        assert_eq!(mask, [true, true, true, false, false, true, true, false]);
        assert_eq!(mask_to_timeline(&mask, Millis(10)), tl);
        assert_eq!(frames_covering(Millis(71), Millis(10)), 8);
    }

    #[test]
    fn features_reject_nan() {
        let nan = alloc::vec![f64::NAN; 4];
        assert!(FrameFeatures::new("r", Millis(10), Millis(25), 2, nan).is_err());
        assert!(FrameFeatures::new("r", Millis(10), Millis(25), 3, Vec::new()).is_err());
        assert!(FrameFeatures::new("r", Millis(10), Millis(25), 3, alloc::vec![0.0; 4]).is_err());
        let ok = FrameFeatures::new("r", Millis(10), Millis(25), 2, alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(ok.row(1), &[3.0, 4.0]);
    }
}
