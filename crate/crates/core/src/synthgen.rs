//! Seeded synthetic corpora with known ground truth.
//!
//! Recordings are built turn by turn: log-normal turn lengths, alternating
//! speakers, silence gaps between turns, and overlap created by pulling a
//! turn's onset back into the previous one. Because every pull-back is at
//! most 45% of both turns, no instant has more than two speakers and the
//! generator knows its own union and speaker time exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::reseg::{Gmm, VbModel};
use crate::segmenter::{label_segments, uniform_segment, SegmenterConfig};
use crate::{Annotation, EmbeddingSet, Error, FrameFeatures, Interval, Millis, Result, SpeakerTurn};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CorpusProfile {
    pub n_recordings: usize,
    /// Inclusive range of recording lengths.
    pub duration_secs: [f64; 2],
    /// Inclusive range of speakers per recording.
    pub speakers: [usize; 2],
    pub speech_pct: f64,
    /// Target overlapped error over the whole corpus.
    pub overlap_pct: f64,
    pub turn_median_secs: f64,
    pub turn_sigma: f64,
    pub n_domains: usize,
    pub embedding_dim: usize,
    pub between_spread: f64,
    pub within_spread: f64,
    pub feature_dim: usize,
    pub ubm_components: usize,
    pub z_dim: usize,
    /// Scale of the total-variability matrix behind the frame features.
    pub feature_spread: f64,
    pub frame_step_ms: i64,
    pub frame_length_ms: i64,
    pub rng_seed: u64,
}

impl Default for CorpusProfile {
    fn default() -> Self {
        CorpusProfile {
            n_recordings: 8,
            duration_secs: [60.0, 180.0],
            speakers: [1, 10],
            speech_pct: 76.07,
            overlap_pct: 10.76,
            turn_median_secs: 2.5,
            turn_sigma: 0.6,
            n_domains: 1,
            embedding_dim: 16,
            between_spread: 1.0,
            within_spread: 0.2,
            feature_dim: 8,
            ubm_components: 8,
            z_dim: 4,
            feature_spread: 1.0,
            frame_step_ms: 10,
            frame_length_ms: 25,
            rng_seed: 0,
        }
    }
}

impl CorpusProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(String::from(m)));
        if self.n_recordings == 0 {
            return bad("n_recordings must be positive");
        }
        let [d0, d1] = self.duration_secs;
        if !(d0 > 0.0 && d0 <= d1 && d1.is_finite()) {
            return bad("duration range is empty");
        }
        let [s0, s1] = self.speakers;
        if s0 == 0 || s0 > s1 {
            return bad("speaker range is empty");
        }
        if !(self.speech_pct > 0.0 && self.speech_pct <= 100.0) {
            return bad("speech_pct must be in (0, 100]");
        }
        if !(self.overlap_pct >= 0.0 && self.overlap_pct < 100.0) {
            return bad("overlap_pct must be in [0, 100)");
        }
        if self.overlap_pct > self.speech_pct {
            return Err(Error::Infeasible(format!(
                "overlap {}% exceeds speech {}%",
                self.overlap_pct, self.speech_pct
            )));
        }
        if !(self.turn_median_secs > 0.0 && self.turn_sigma >= 0.0) {
            return bad("turn length distribution is degenerate");
        }
        if !(self.between_spread > 0.0 && self.within_spread > 0.0 && self.feature_spread > 0.0) {
            return bad("spreads must be positive");
        }
        if self.embedding_dim == 0 || self.feature_dim == 0 || self.ubm_components == 0 || self.z_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.n_domains == 0 || self.frame_step_ms <= 0 || self.frame_length_ms <= 0 {
            return bad("n_domains and frame sizes must be positive");
        }
        Ok(())
    }

    /// Per-recording seed, independent of generation order.
    pub fn recording_seed(&self, index: usize) -> u64 {
        self.rng_seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// What the generator knows about a recording without measuring it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bookkeeping {
    pub duration: Millis,
    pub speech: Millis,
    pub speaker_time: Millis,
}

#[derive(Clone, Debug)]
pub struct SyntheticRecording {
    pub annotation: Annotation,
    pub domain: String,
    /// Embeddings of the uniform segments of the speech, labeled with their
    /// reference speaker.
    pub embeddings: EmbeddingSet,
    pub features: FrameFeatures,
    /// Frame speaker index into `speakers`, `None` on silence.
    pub frame_truth: Vec<Option<usize>>,
    pub speakers: Vec<String>,
    pub bookkeeping: Bookkeeping,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub recordings: Vec<SyntheticRecording>,
    /// Model the frame features were drawn from.
    pub vb_model: VbModel,
}

struct Plan {
    duration: Millis,
    n_speakers: usize,
    speech: Millis,
}

/// Generates the corpus described by `profile`.
pub fn generate_corpus(profile: &CorpusProfile) -> Result<SyntheticCorpus> {
    profile.validate()?;
    let vb_model = random_vb_model(
        profile.ubm_components,
        profile.feature_dim,
        profile.z_dim,
        profile.feature_spread,
        profile.rng_seed,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(profile.rng_seed);
    let plans: Vec<Plan> = (0..profile.n_recordings)
        .map(|_| {
            let secs = rng.random_range(profile.duration_secs[0]..=profile.duration_secs[1]);
            let duration = Millis::from_secs(secs).max(Millis(1));
            let n_speakers = rng.random_range(profile.speakers[0]..=profile.speakers[1]);
            let speech = Millis(libm::round(duration.0 as f64 * profile.speech_pct / 100.0) as i64).max(Millis(1));
            Plan { duration, n_speakers, speech }
        })
        .collect();
    // single-speaker recordings cannot overlap, so the others carry the
    // corpus overlap target between them
    let o = profile.overlap_pct / 100.0;
    let all: f64 = plans.iter().map(|p| p.speech.0 as f64).sum();
    let multi: f64 = plans.iter().filter(|p| p.n_speakers > 1).map(|p| p.speech.0 as f64).sum();
    let excess_ratio = if multi > 0.0 { o * all / ((1.0 - o) * multi) } else { 0.0 };

    let mut recordings = Vec::with_capacity(plans.len());
    for (i, plan) in plans.iter().enumerate() {
        let excess = if plan.n_speakers > 1 { Millis(libm::round(plan.speech.0 as f64 * excess_ratio) as i64) } else { Millis::ZERO };
        recordings.push(build_recording(profile, &vb_model, i, plan, excess)?);
    }
    Ok(SyntheticCorpus { recordings, vb_model })
}

fn build_recording(profile: &CorpusProfile, model: &VbModel, index: usize, plan: &Plan, excess: Millis) -> Result<SyntheticRecording> {
    let mut rng = ChaCha8Rng::seed_from_u64(profile.recording_seed(index));
    let id = format!("synth{index:04}");
    let speakers: Vec<String> = (0..plan.n_speakers).map(|s| format!("{id}_spk{s:02}")).collect();
    let (turns, book) = timeline_turns(profile, plan, excess, &mut rng)?;
    let turns: Vec<SpeakerTurn> = turns
        .into_iter()
        .map(|(s, iv)| SpeakerTurn::new(id.clone(), 1, iv.start, iv.len(), speakers[s].clone()))
        .collect::<Result<_>>()?;
    let annotation = Annotation::new(id.clone(), plan.duration, turns)?;
    let domain = format!("domain{}", index % profile.n_domains);

    // embeddings
    let normal = Normal::new(0.0, 1.0).unwrap();
    let centers: Vec<Vec<f64>> = (0..plan.n_speakers)
        .map(|_| (0..profile.embedding_dim).map(|_| profile.between_spread * normal.sample(&mut rng)).collect())
        .collect();
    let seg_cfg = SegmenterConfig::default();
    let mut segments = uniform_segment(&annotation.speech(), &seg_cfg)?;
    label_segments(&mut segments, &annotation, &seg_cfg);
    let entries = segments
        .into_iter()
        .map(|seg| {
            let s = seg.label.as_ref().and_then(|l| speakers.iter().position(|x| x == l)).unwrap_or(0);
            let v = centers[s].iter().map(|c| c + profile.within_spread * normal.sample(&mut rng)).collect();
            (seg, v)
        })
        .collect();
    let embeddings = EmbeddingSet::new(id.clone(), profile.embedding_dim, entries)?;

    // frame features
    let step = Millis(profile.frame_step_ms);
    let n_frames = crate::frames::frames_covering(plan.duration, step);
    let timelines = annotation.speaker_timelines();
    let frame_truth: Vec<Option<usize>> = (0..n_frames)
        .map(|t| {
            let mid = Millis(t as i64 * step.0 + step.0 / 2);
            speakers.iter().position(|s| timelines.get(s.as_str()).is_some_and(|tl| tl.contains(mid)))
        })
        .collect();
    let zs: Vec<Vec<f64>> = (0..plan.n_speakers).map(|_| (0..model.z_dim()).map(|_| normal.sample(&mut rng)).collect()).collect();
    let data = sample_frames(model, &zs, &frame_truth, &mut rng);
    let features = FrameFeatures::new(id.clone(), step, Millis(profile.frame_length_ms), model.ubm().dim(), data)?;
    Ok(SyntheticRecording { annotation, domain, embeddings, features, frame_truth, speakers, bookkeeping: book })
}

const MIN_TURN: i64 = 200;
const MAX_SHIFT_FRACTION: f64 = 0.45;

/// Speaker turns with exactly `plan.speech` of union speech and, as far as
/// turn lengths allow, `excess` of doubly covered speech.
fn timeline_turns(profile: &CorpusProfile, plan: &Plan, excess: Millis, rng: &mut ChaCha8Rng) -> Result<(Vec<(usize, Interval)>, Bookkeeping)> {
    let target_time = plan.speech.0 + excess.0;
    let lognormal = LogNormal::new(libm::log(profile.turn_median_secs * 1_000.0), profile.turn_sigma)
        .map_err(|_| Error::Config(String::from("bad turn length distribution")))?;
    let mut lens: Vec<i64> = Vec::new();
    let mut who: Vec<usize> = Vec::new();
    let mut sum = 0;
    while sum < target_time {
        let len = (libm::round(lognormal.sample(rng)) as i64).max(MIN_TURN).min(target_time - sum);
        let s = match who.last() {
            Some(&prev) if plan.n_speakers > 1 => (prev + rng.random_range(1..plan.n_speakers)) % plan.n_speakers,
            _ => rng.random_range(0..plan.n_speakers),
        };
        lens.push(len);
        who.push(s);
        sum += len;
    }
    let n = lens.len();

    let caps: Vec<i64> = (0..n)
        .map(|i| {
            if i == 0 || who[i] == who[i - 1] {
                0
            } else {
                (MAX_SHIFT_FRACTION * lens[i].min(lens[i - 1]) as f64) as i64
            }
        })
        .collect();
    let cap_total: i64 = caps.iter().sum();
    let want = excess.0.min(cap_total);
    let mut shifts = vec![0i64; n];
    if want > 0 {
        let mut given = 0;
        for i in 0..n {
            shifts[i] = (caps[i] as i128 * want as i128 / cap_total as i128) as i64;
            given += shifts[i];
        }
        let mut i = 0;
        while given < want {
            if shifts[i] < caps[i] {
                shifts[i] += 1;
                given += 1;
            }
            i = (i + 1) % n;
        }
    }
    let overlap: i64 = shifts.iter().sum();
    // the union comes up short by whatever excess could not be placed
    let union = sum - overlap;
    let silence = (plan.duration.0 - union).max(0);
    let slots: Vec<usize> = core::iter::once(0)
        .chain((1..n).filter(|&i| shifts[i] == 0))
        .chain(core::iter::once(n))
        .collect();
    let weights: Vec<f64> = slots.iter().map(|_| rng.random::<f64>() + 0.05).collect();
    let wsum: f64 = weights.iter().sum();
    let mut gaps = vec![0i64; n + 1];
    let mut placed = 0;
    for (slot, w) in slots.iter().zip(&weights) {
        let g = libm::floor(silence as f64 * w / wsum) as i64;
        gaps[*slot] = g;
        placed += g;
    }
    gaps[n] += silence - placed;

    let mut out = Vec::with_capacity(n);
    let mut cursor = 0;
    for i in 0..n {
        let start = cursor + gaps[i] - shifts[i];
        out.push((who[i], Interval { start: Millis(start), end: Millis(start + lens[i]) }));
        cursor = start + lens[i];
    }
    let duration = Millis(cursor + gaps[n]).max(plan.duration);
    Ok((out, Bookkeeping { duration, speech: Millis(union), speaker_time: Millis(sum) }))
}

fn sample_frames(model: &VbModel, zs: &[Vec<f64>], truth: &[Option<usize>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let ubm = model.ubm();
    let d = ubm.dim();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let means: Vec<Vec<Vec<f64>>> =
        zs.iter().map(|z| (0..ubm.n_components()).map(|c| model.speaker_mean(c, z)).collect()).collect();
    let mut data = Vec::with_capacity(truth.len() * d);
    for label in truth {
        let c = pick(&ubm.weights, rng);
        let mu = match label {
            Some(s) => &means[*s][c],
            None => &ubm.means[c],
        };
        for j in 0..d {
            data.push(mu[j] + libm::sqrt(ubm.variances[c][j]) * normal.sample(rng));
        }
    }
    data
}

fn pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut u: f64 = rng.random();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// A random UBM with unit variances and well-spread means, and a `T` whose
/// entries are `N(0, spread²)`.
pub fn random_vb_model(n_components: usize, dim: usize, z_dim: usize, spread: f64, seed: u64) -> VbModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_7EA7);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let weights = vec![1.0 / n_components as f64; n_components];
    let means = (0..n_components).map(|_| (0..dim).map(|_| 8.0 * normal.sample(&mut rng)).collect()).collect();
    let variances = vec![vec![1.0; dim]; n_components];
    let ubm = Gmm::new(weights, means, variances).expect("valid UBM");
    let t = DMatrix::from_fn(n_components * dim, z_dim, |_, _| spread * normal.sample(&mut rng));
    VbModel::new(ubm, t).expect("valid T")
}

/// Shape of a recording drawn straight from a VB model.
#[derive(Clone, Debug, PartialEq)]
pub struct VbRecordingSpec {
    pub n_speakers: usize,
    pub n_frames: usize,
    pub frame_step: Millis,
    /// Turn lengths in frames, inclusive.
    pub turn_frames: [usize; 2],
    /// Chance that a turn is followed by a silence of the same length range.
    pub silence_prob: f64,
}

impl Default for VbRecordingSpec {
    fn default() -> Self {
        VbRecordingSpec { n_speakers: 2, n_frames: 3_000, frame_step: Millis(10), turn_frames: [150, 400], silence_prob: 0.3 }
    }
}

/// Frames drawn from `model` for `n_speakers` speakers with latent `z ~ N(0, I)`
/// and alternating turns. Returns features and the per-frame truth.
pub fn sample_vb_recording(model: &VbModel, spec: &VbRecordingSpec, seed: u64) -> Result<(FrameFeatures, Vec<Option<usize>>)> {
    let [lo, hi] = spec.turn_frames;
    if spec.n_speakers == 0 || lo == 0 || lo > hi || !(0.0..1.0).contains(&spec.silence_prob) {
        return Err(Error::Config(String::from("bad recording spec")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let zs: Vec<Vec<f64>> = (0..spec.n_speakers).map(|_| (0..model.z_dim()).map(|_| normal.sample(&mut rng)).collect()).collect();
    let mut truth = Vec::with_capacity(spec.n_frames);
    let mut speaker = rng.random_range(0..spec.n_speakers);
    let mut turn = 0;
    while truth.len() < spec.n_frames {
        let len = rng.random_range(lo..=hi).min(spec.n_frames - truth.len());
        truth.extend(core::iter::repeat_n(Some(speaker), len));
        if turn > 0 && rng.random::<f64>() < spec.silence_prob {
            let len = rng.random_range(lo / 2..=hi / 2).min(spec.n_frames - truth.len());
            truth.extend(core::iter::repeat_n(None, len));
        }
        if spec.n_speakers > 1 {
            speaker = (speaker + rng.random_range(1..spec.n_speakers)) % spec.n_speakers;
        }
        turn += 1;
    }
    let data = sample_frames(model, &zs, &truth, &mut rng);
    let features = FrameFeatures::new("vbsynth", spec.frame_step, Millis(spec.frame_step.0 * 5 / 2), model.ubm().dim(), data)?;
    Ok((features, truth))
}

/// Mislabels `fraction` of the speech frames by letting each speaker run on
/// past its turn end into the next speaker's turn.
pub fn corrupt_boundaries(truth: &[Option<usize>], fraction: f64) -> Vec<Option<usize>> {
    let speech = truth.iter().filter(|l| l.is_some()).count();
    let changes: Vec<usize> =
        (1..truth.len()).filter(|&t| matches!((truth[t - 1], truth[t]), (Some(a), Some(b)) if a != b)).collect();
    let mut out = truth.to_vec();
    if changes.is_empty() {
        return out;
    }
    let budget = libm::round(fraction * speech as f64) as usize;
    let mut left = budget;
    let per = budget.div_ceil(changes.len());
    for &t in &changes {
        let prev = truth[t - 1];
        let mut u = t;
        while u < truth.len() && u < t + per && left > 0 && truth[u] == truth[t] && u + 1 < truth.len() && truth[u + 1] == truth[t] {
            out[u] = prev;
            u += 1;
            left -= 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metadata::SpeechTotals;

    fn measured(corpus: &SyntheticCorpus) -> (f64, f64) {
        let totals = corpus.recordings.iter().map(|r| SpeechTotals::of(&r.annotation)).reduce(|a, b| a + b).unwrap();
        (totals.speech_pct().unwrap(), totals.overlap_err().unwrap())
    }

    #[test]
    fn hits_corpus_targets_and_bookkeeping() {
        let profile = CorpusProfile { n_recordings: 12, ..Default::default() };
        let corpus = generate_corpus(&profile).unwrap();
        for r in &corpus.recordings {
            let t = SpeechTotals::of(&r.annotation);
            assert_eq!((t.duration, t.union, t.speaker_time), (r.bookkeeping.duration, r.bookkeeping.speech, r.bookkeeping.speaker_time));
        }
        let (speech, overlap) = measured(&corpus);
        assert!((speech - 76.07).abs() < 5.0, "{speech}");
        assert!((overlap - 10.76).abs() < 5.0, "{overlap}");
    }

    #[test]
    fn one_speaker_never_overlaps() {
        let profile = CorpusProfile { speakers: [1, 1], n_recordings: 3, ..Default::default() };
        let corpus = generate_corpus(&profile).unwrap();
        assert_eq!(measured(&corpus).1, 0.0);
    }

    #[test]
    fn deterministic_and_validated() {
        let profile = CorpusProfile { n_recordings: 2, duration_secs: [20.0, 30.0], ..Default::default() };
        let a = generate_corpus(&profile).unwrap();
        let b = generate_corpus(&profile).unwrap();
        for (x, y) in a.recordings.iter().zip(&b.recordings) {
            assert_eq!(x.annotation, y.annotation);
            assert_eq!(x.embeddings, y.embeddings);
            assert_eq!(x.features, y.features);
        }
        let bad = CorpusProfile { speech_pct: 10.0, overlap_pct: 20.0, ..Default::default() };
        assert!(matches!(generate_corpus(&bad), Err(Error::Infeasible(_))));
        assert!(generate_corpus(&CorpusProfile { speakers: [3, 2], ..Default::default() }).is_err());
    }

    #[test]
    fn boundary_corruption_budget() {
        let model = random_vb_model(4, 3, 2, 1.0, 0);
        let (_, truth) = sample_vb_recording(&model, &VbRecordingSpec::default(), 1).unwrap();
        let bad = corrupt_boundaries(&truth, 0.05);
        let speech = truth.iter().filter(|l| l.is_some()).count() as f64;
        let wrong = truth.iter().zip(&bad).filter(|(a, b)| a != b).count() as f64;
        assert!((wrong / speech - 0.05).abs() < 0.01, "{}", wrong / speech);
        assert!(truth.iter().zip(&bad).all(|(a, b)| a.is_some() == b.is_some()));
    }
}
