//! Corpus metadata: speech percentage, overlapped error, speaker counts and
//! durations, per recording and pooled per domain.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Annotation, Error, Millis, Result};

/// Durations a recording contributes to the ratios.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SpeechTotals {
    /// D
    pub duration: Millis,
    /// dur(R_1 ∪ … ∪ R_N)
    pub union: Millis,
    /// Σ dur(R_i)
    pub speaker_time: Millis,
}

impl SpeechTotals {
    pub fn of(ann: &Annotation) -> SpeechTotals {
        let union = ann.speech().total();
        let speaker_time = ann.speaker_timelines().values().map(|t| t.total()).sum();
        SpeechTotals { duration: ann.total_duration(), union, speaker_time }
    }

    pub fn speech_pct(&self) -> Result<f64> {
        if self.duration <= Millis::ZERO {
            return Err(Error::ZeroDuration);
        }
        Ok(100.0 * self.union.0 as f64 / self.duration.0 as f64)
    }

    pub fn overlap_err(&self) -> Result<f64> {
        if self.speaker_time <= Millis::ZERO {
            return Err(Error::NoSpeech);
        }
        Ok(100.0 * (self.speaker_time - self.union).0 as f64 / self.speaker_time.0 as f64)
    }
}

impl core::ops::Add for SpeechTotals {
    type Output = SpeechTotals;
    fn add(self, o: SpeechTotals) -> SpeechTotals {
        SpeechTotals {
            duration: self.duration + o.duration,
            union: self.union + o.union,
            speaker_time: self.speaker_time + o.speaker_time,
        }
    }
}

/// Percentage of the recording covered by any speaker.
pub fn speech_percentage(ann: &Annotation) -> Result<f64> {
    SpeechTotals::of(ann).speech_pct()
}

/// Share of speaker time lost if only one speaker could be output per instant.
pub fn overlapped_error(ann: &Annotation) -> Result<f64> {
    SpeechTotals::of(ann).overlap_err()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordingStats {
    pub recording_id: String,
    pub domain: String,
    pub n_speakers: usize,
    pub totals: SpeechTotals,
    pub speech_pct: f64,
    /// `None` when the recording has no speech.
    pub overlap_err: Option<f64>,
}

impl RecordingStats {
    pub fn compute(ann: &Annotation, domain: &str) -> Result<RecordingStats> {
        let totals = SpeechTotals::of(ann);
        Ok(RecordingStats {
            recording_id: ann.recording_id().to_string(),
            domain: domain.to_string(),
            n_speakers: ann.speakers().len(),
            totals,
            speech_pct: totals.speech_pct()?,
            overlap_err: totals.overlap_err().ok(),
        })
    }
}

/// How per-recording ratios are combined into a domain row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Aggregation {
    /// Ratio of summed durations.
    #[default]
    Pooled,
    /// Unweighted mean of the per-recording percentages.
    MeanOfRatios,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainRow {
    pub domain: String,
    pub n_audios: usize,
    pub min_speakers: usize,
    pub max_speakers: usize,
    pub mean_duration: f64,
    pub speech_pct: f64,
    pub overlap_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainReport {
    pub recordings: Vec<RecordingStats>,
    /// One row per domain, sorted by domain name.
    pub domains: Vec<DomainRow>,
    pub all: DomainRow,
}

fn aggregate(domain: &str, stats: &[&RecordingStats], how: Aggregation) -> DomainRow {
    let n = stats.len();
    let pooled = stats.iter().fold(SpeechTotals::default(), |acc, s| acc + s.totals);
    let (speech_pct, overlap_err) = match how {
        Aggregation::Pooled => (
            pooled.speech_pct().unwrap_or(0.0),
            pooled.overlap_err().unwrap_or(0.0),
        ),
        Aggregation::MeanOfRatios => {
            let speech = stats.iter().map(|s| s.speech_pct).sum::<f64>() / n as f64;
            let defined: Vec<f64> = stats.iter().filter_map(|s| s.overlap_err).collect();
            let overlap = if defined.is_empty() {
                0.0
            } else {
                defined.iter().sum::<f64>() / defined.len() as f64
            };
            (speech, overlap)
        }
    };
    DomainRow {
        domain: domain.to_string(),
        n_audios: n,
        min_speakers: stats.iter().map(|s| s.n_speakers).min().unwrap_or(0),
        max_speakers: stats.iter().map(|s| s.n_speakers).max().unwrap_or(0),
        mean_duration: pooled.duration.as_secs() / n.max(1) as f64,
        speech_pct,
        overlap_err,
    }
}

/// Per-domain table with an `ALL` row over the whole corpus.
pub fn domain_report(
    annotations: &[Annotation],
    domain_map: &BTreeMap<String, String>,
    how: Aggregation,
) -> Result<DomainReport> {
    let recordings = annotations
        .iter()
        .map(|ann| {
            let domain = domain_map
                .get(ann.recording_id())
                .ok_or_else(|| Error::UnmappedRecording(ann.recording_id().to_string()))?;
            RecordingStats::compute(ann, domain)
        })
        .collect::<Result<Vec<_>>>()?;
    if recordings.is_empty() {
        return Err(Error::NotEnoughData("no recordings".into()));
    }
    let mut grouped: BTreeMap<&str, Vec<&RecordingStats>> = BTreeMap::new();
    for r in &recordings {
        grouped.entry(r.domain.as_str()).or_default().push(r);
    }
    let domains = grouped.iter().map(|(d, rs)| aggregate(d, rs, how)).collect();
    let everything: Vec<&RecordingStats> = recordings.iter().collect();
    let all = aggregate("ALL", &everything, how);
    Ok(DomainReport { recordings, domains, all })
}
