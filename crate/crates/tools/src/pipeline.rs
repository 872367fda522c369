//! Batch pipeline: segment, score, cluster, resegment, assign overlaps and
//! score every recording of a manifest, writing one artifact per stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use diarkit_core::clustering::{ahc, spectral_cluster, SpectralConfig};
use diarkit_core::frames::frames_covering;
use diarkit_core::metadata::{domain_report, Aggregation, DomainReport, DomainRow};
use diarkit_core::metrics::{der, DerBreakdown};
use diarkit_core::reseg::{
    assign_overlap_labels, gmm_resegment, vb_resegment, FrameAssignment, GmmResegConfig, OverlapConfig, VbConfig, VbModel,
};
use diarkit_core::scoring::{build_score_matrix, fuse_score_matrices, symmetrize, Backend};
use diarkit_core::segmenter::{segments_to_annotation, uniform_segment, SegmenterConfig};
use diarkit_core::synthgen::SyntheticCorpus;
use diarkit_core::{Annotation, EmbeddingSet, FrameFeatures, Millis, ScoreMatrix, Segment, Timeline};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::{self, IngestError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    /// Bad configuration, manifest or input file.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { ref source, .. } if source.kind() != std::io::ErrorKind::NotFound => {
                PipelineError::Runtime(e.to_string())
            }
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<diarkit_core::Error> for PipelineError {
    fn from(e: diarkit_core::Error) -> Self {
        use diarkit_core::Error as E;
        match e {
            E::Config(_) | E::Infeasible(_) | E::UnmappedRecording(_) | E::RecordingMismatch { .. } => {
                PipelineError::Validation(e.to_string())
            }
            _ => PipelineError::Runtime(e.to_string()),
        }
    }
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn at(rec: &str, stage: &str) -> impl FnOnce(PipelineError) -> PipelineError {
    let (rec, stage) = (rec.to_string(), stage.to_string());
    move |e| match e {
        PipelineError::Validation(m) => PipelineError::Validation(format!("{rec} [{stage}]: {m}")),
        PipelineError::Runtime(m) => PipelineError::Runtime(format!("{rec} [{stage}]: {m}")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub segment: bool,
    pub score: bool,
    pub cluster: bool,
    pub resegment: bool,
    pub overlap: bool,
    pub der: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages { segment: true, score: true, cluster: true, resegment: true, overlap: false, der: true }
    }
}

/// Where speech regions come from: the reference turns (oracle VAD) or a
/// VAD triple file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeechSource {
    #[default]
    Reference,
    Vad,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreBackend {
    #[default]
    Cosine,
    Plda,
    /// Only the matrices listed under `scores=` in the manifest.
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub backend: ScoreBackend,
    pub plda_model: Option<PathBuf>,
    pub whitener: Option<PathBuf>,
    pub length_norm: bool,
    /// Weights for fusing the computed matrix (first) with external ones.
    pub fusion_weights: Option<Vec<f64>>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig { backend: ScoreBackend::Cosine, plda_model: None, whitener: None, length_norm: true, fusion_weights: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterBackend {
    Ahc,
    #[default]
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub backend: ClusterBackend,
    /// AHC stopping threshold.
    pub threshold: f64,
    pub spectral: SpectralConfig,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig { backend: ClusterBackend::Spectral, threshold: 0.5, spectral: SpectralConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResegMethod {
    None,
    #[default]
    Gmm,
    Vb,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResegStageConfig {
    pub method: ResegMethod,
    pub gmm: GmmResegConfig,
    pub vb: VbConfig,
    pub vb_model: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapStageConfig {
    pub frame_step_ms: i64,
    pub extend_frames: i64,
}

impl Default for OverlapStageConfig {
    fn default() -> Self {
        OverlapStageConfig { frame_step_ms: 10, extend_frames: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stages: Stages,
    pub speech_source: SpeechSource,
    pub segmenter: SegmenterConfig,
    pub scoring: ScoringConfig,
    pub clustering: ClusteringConfig,
    pub reseg: ResegStageConfig,
    pub overlap: OverlapStageConfig,
    pub output_dir: PathBuf,
    pub rng_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stages: Stages::default(),
            speech_source: SpeechSource::default(),
            segmenter: SegmenterConfig::default(),
            scoring: ScoringConfig::default(),
            clustering: ClusteringConfig::default(),
            reseg: ResegStageConfig::default(),
            overlap: OverlapStageConfig::default(),
            output_dir: PathBuf::from("diarkit-out"),
            rng_seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<PipelineConfig> {
        serde_json::from_str(text).map_err(|e| PipelineError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = ingest::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
    }

    /// Copies the global seed into every stochastic stage.
    pub fn with_seed(mut self, seed: u64) -> PipelineConfig {
        self.rng_seed = seed;
        self.propagate_seed();
        self
    }

    fn propagate_seed(&mut self) {
        self.clustering.spectral.rng_seed = self.rng_seed;
        self.reseg.gmm.rng_seed = self.rng_seed;
    }

    /// SHA-256 of the canonical JSON form, leaving out where outputs go.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().unwrap().remove("output_dir");
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Validation(m));
        self.segmenter.validate()?;
        self.clustering.spectral.validate()?;
        self.reseg.vb.validate()?;
        if !self.clustering.threshold.is_finite() {
            return bad("clustering.threshold must be finite".into());
        }
        if self.overlap.frame_step_ms <= 0 || self.overlap.extend_frames < 0 {
            return bad("overlap.frame_step_ms must be positive and extend_frames non-negative".into());
        }
        if self.stages.score && self.scoring.backend == ScoreBackend::Plda && self.scoring.plda_model.is_none() {
            return bad("scoring.backend is plda but scoring.plda_model is not set".into());
        }
        if self.stages.resegment && self.reseg.method == ResegMethod::Vb && self.reseg.vb_model.is_none() {
            return bad("reseg.method is vb but reseg.vb_model is not set".into());
        }
        if self.stages.cluster && !self.stages.score {
            return bad("the cluster stage needs the score stage".into());
        }
        for p in [&self.scoring.plda_model, &self.scoring.whitener, &self.reseg.vb_model].into_iter().flatten() {
            if !p.exists() {
                return bad(format!("model file {} does not exist", p.display()));
            }
        }
        Ok(())
    }
}

/// One manifest line: `<recording> key=path ...`. Keys are `reference`,
/// `hypothesis`, `uem`, `vad`, `embeddings`, `features`, `overlap`,
/// `scores` (comma separated) and `domain` (a name, not a path).
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub recording_id: String,
    pub files: BTreeMap<String, PathBuf>,
    pub scores: Vec<PathBuf>,
    pub domain: Option<String>,
}

const MANIFEST_KEYS: [&str; 7] = ["reference", "hypothesis", "uem", "vad", "embeddings", "features", "overlap"];

/// Relative paths are resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out: Vec<ManifestEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() || toks[0].starts_with('#') {
            continue;
        }
        let bad = |m: String| PipelineError::Validation(format!("manifest line {}: {m}", i + 1));
        if out.iter().any(|e| e.recording_id == toks[0]) {
            return Err(bad(format!("recording {} listed twice", toks[0])));
        }
        let mut entry =
            ManifestEntry { recording_id: toks[0].to_string(), files: BTreeMap::new(), scores: Vec::new(), domain: None };
        for tok in &toks[1..] {
            let (key, value) = tok.split_once('=').ok_or_else(|| bad(format!("expected key=value, found {tok:?}")))?;
            if value.is_empty() {
                return Err(bad(format!("empty value for {key}")));
            }
            match key {
                "domain" => entry.domain = Some(value.to_string()),
                "scores" => entry.scores.extend(value.split(',').map(|p| base.join(p))),
                k if MANIFEST_KEYS.contains(&k) => {
                    if entry.files.insert(k.to_string(), base.join(value)).is_some() {
                        return Err(bad(format!("key {k} given twice")));
                    }
                }
                _ => return Err(bad(format!("unknown key {key:?}"))),
            }
        }
        out.push(entry);
    }
    if out.is_empty() {
        return Err(PipelineError::Validation("manifest lists no recordings".into()));
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = ingest::read_to_string(path)?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Checks that every enabled stage has its inputs, naming the recording and
/// stage of the first gap.
pub fn preflight(cfg: &PipelineConfig, manifest: &[ManifestEntry]) -> Result<()> {
    cfg.validate()?;
    let st = &cfg.stages;
    for e in manifest {
        let need = |key: &str, stage: &str| -> Result<()> {
            match e.files.get(key) {
                None => Err(PipelineError::Validation(format!("{} [{stage}]: manifest gives no {key} file", e.recording_id))),
                Some(p) if !p.exists() => Err(PipelineError::Validation(format!(
                    "{} [{stage}]: {key} file {} does not exist",
                    e.recording_id,
                    p.display()
                ))),
                Some(_) => Ok(()),
            }
        };
        let speech_key = match cfg.speech_source {
            SpeechSource::Reference => "reference",
            SpeechSource::Vad => "vad",
        };
        if st.segment {
            need(speech_key, "segment")?;
        }
        if st.score {
            match cfg.scoring.backend {
                ScoreBackend::External => {
                    if e.scores.is_empty() {
                        return Err(PipelineError::Validation(format!("{} [score]: manifest gives no scores files", e.recording_id)));
                    }
                    if !e.files.contains_key("embeddings") && !st.segment {
                        return Err(PipelineError::Validation(format!(
                            "{} [score]: external scores need embeddings or the segment stage for segment times",
                            e.recording_id
                        )));
                    }
                }
                _ => need("embeddings", "score")?,
            }
            if let Some(p) = e.scores.iter().find(|p| !p.exists()) {
                return Err(PipelineError::Validation(format!("{} [score]: scores file {} does not exist", e.recording_id, p.display())));
            }
        }
        if !st.cluster && (st.resegment || st.overlap || st.der) {
            need("hypothesis", "cluster")?;
        }
        if st.resegment && cfg.reseg.method != ResegMethod::None {
            need("features", "resegment")?;
            need(speech_key, "resegment")?;
        }
        if st.overlap {
            need("overlap", "overlap")?;
        }
        if st.der {
            need("reference", "der")?;
        }
        if let Some(p) = e.files.get("uem") {
            if !p.exists() {
                need("uem", "uem")?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct DerSummary {
    pub missed: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub scored_speech: f64,
    /// Percent.
    pub der_pct: f64,
}

impl From<&DerBreakdown> for DerSummary {
    fn from(b: &DerBreakdown) -> Self {
        DerSummary {
            missed: b.missed.as_secs(),
            false_alarm: b.false_alarm.as_secs(),
            confusion: b.confusion.as_secs(),
            scored_speech: b.scored_speech.as_secs(),
            der_pct: b.der(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RecordingReport {
    pub recording_id: String,
    /// Wall time per stage in seconds.
    pub stage_seconds: BTreeMap<String, f64>,
    pub der: Option<DerSummary>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetadataRow {
    pub domain: String,
    pub n_audios: usize,
    pub min_speakers: usize,
    pub max_speakers: usize,
    pub mean_duration_secs: f64,
    pub speech_pct: f64,
    pub overlap_err: f64,
}

impl From<&DomainRow> for MetadataRow {
    fn from(r: &DomainRow) -> Self {
        MetadataRow {
            domain: r.domain.clone(),
            n_audios: r.n_audios,
            min_speakers: r.min_speakers,
            max_speakers: r.max_speakers,
            mean_duration_secs: r.mean_duration,
            speech_pct: r.speech_pct,
            overlap_err: r.overlap_err,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config_hash: String,
    pub rng_seed: u64,
    pub recordings: Vec<RecordingReport>,
    pub pooled_der: Option<DerSummary>,
    /// Domain rows, then the ALL row, over the reference annotations.
    pub metadata: Vec<MetadataRow>,
}

pub struct RunOutput {
    pub report: RunReport,
    pub hypotheses: BTreeMap<String, Annotation>,
    pub pooled: Option<DerBreakdown>,
}

struct Loaded {
    reference: Option<Annotation>,
    uem: Option<Timeline>,
}

fn pick<T>(mut map: BTreeMap<String, T>, rec: &str, what: &str, path: &Path) -> Result<T> {
    map.remove(rec)
        .ok_or_else(|| PipelineError::Validation(format!("{} has no {what} rows for {rec}", path.display())))
}

fn load_common(e: &ManifestEntry) -> Result<Loaded> {
    let rec = e.recording_id.as_str();
    let uem = match e.files.get("uem") {
        Some(p) => Some(pick(ingest::read_with(p, ingest::parse_uem)?, rec, "UEM", p)?),
        None => None,
    };
    let reference = match e.files.get("reference") {
        Some(p) => {
            let mut all = ingest::read_with(p, ingest::parse_rttm)?;
            let ann = all.remove(rec).unwrap_or(Annotation::new(rec, Millis::ZERO, Vec::new())?);
            Some(ann)
        }
        None => None,
    };
    Ok(Loaded { reference, uem })
}

fn timed<T>(times: &mut BTreeMap<String, f64>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t0 = Instant::now();
    let out = f();
    times.insert(stage.to_string(), t0.elapsed().as_secs_f64());
    out
}

fn read_features(p: &Path, rec: &str) -> Result<FrameFeatures> {
    Ok(ingest::read_with(p, |t| ingest::parse_features(t, rec))?)
}

struct RecordingOutcome {
    report: RecordingReport,
    hypothesis: Annotation,
    der: Option<DerBreakdown>,
}

fn run_recording(cfg: &PipelineConfig, models: &Models, e: &ManifestEntry) -> Result<RecordingOutcome> {
    let rec = e.recording_id.as_str();
    let out_dir = &cfg.output_dir;
    let st = &cfg.stages;
    let mut times = BTreeMap::new();
    let mut warnings = Vec::new();
    let common = load_common(e)?;

    let speech = match cfg.speech_source {
        SpeechSource::Reference => common.reference.as_ref().map(|r| r.speech()),
        SpeechSource::Vad => match e.files.get("vad") {
            Some(p) => Some(ingest::read_with(p, ingest::parse_triples)?.remove(rec).unwrap_or_else(Timeline::empty)),
            None => None,
        },
    };
    let speech = match (speech, &common.uem) {
        (Some(s), Some(u)) => Some(s.intersection(u)),
        (s, _) => s,
    };
    let mut total = Millis::ZERO;
    if let Some(r) = &common.reference {
        total = total.max(r.total_duration());
    }
    if let Some(u) = &common.uem {
        total = total.max(u.intervals().last().map_or(Millis::ZERO, |iv| iv.end));
    }
    if let Some(s) = &speech {
        total = total.max(s.intervals().last().map_or(Millis::ZERO, |iv| iv.end));
    }

    let segments = if st.segment {
        let speech = speech.as_ref().expect("checked in preflight");
        let segs = timed(&mut times, "segment", || Ok(uniform_segment(speech, &cfg.segmenter)?)).map_err(at(rec, "segment"))?;
        ingest::write_file(&out_dir.join(format!("{rec}.segments")), ingest::emit_segments(rec, &segs))?;
        Some(segs)
    } else {
        None
    };

    let mut hypothesis = match e.files.get("hypothesis") {
        Some(p) if !st.cluster => {
            let mut all = ingest::read_with(p, ingest::parse_rttm)?;
            all.remove(rec).unwrap_or(Annotation::new(rec, total, Vec::new())?)
        }
        _ => Annotation::new(rec, total, Vec::new())?,
    };

    if st.score {
        let embeddings = match e.files.get("embeddings") {
            Some(p) => Some(ingest::read_embeddings(p, rec)?),
            None => None,
        };
        let scores = timed(&mut times, "score", || score_recording(cfg, models, e, embeddings.as_ref())).map_err(at(rec, "score"))?;
        ingest::write_file(&out_dir.join(format!("{rec}.scores")), ingest::emit_score_matrix(&scores))?;
        if st.cluster {
            let seg_times: Vec<Segment> = match (&embeddings, &segments) {
                (Some(emb), _) => emb.segments().cloned().collect(),
                (None, Some(s)) => s.clone(),
                (None, None) => unreachable!("checked in preflight"),
            };
            if seg_times.len() != scores.n() {
                return Err(PipelineError::Validation(format!(
                    "{rec} [cluster]: {} segments but a {}x{} score matrix",
                    seg_times.len(),
                    scores.n(),
                    scores.n()
                )));
            }
            hypothesis = timed(&mut times, "cluster", || cluster_recording(cfg, rec, total, &scores, seg_times))
                .map_err(at(rec, "cluster"))?;
            ingest::write_file(&out_dir.join(format!("{rec}.cluster.rttm")), ingest::emit_rttm([&hypothesis]))?;
        }
    }

    if st.resegment && cfg.reseg.method != ResegMethod::None && !hypothesis.is_empty() {
        let feats = read_features(&e.files["features"], rec)?;
        let speech = speech.clone().expect("checked in preflight");
        let (hyp, w) = timed(&mut times, "resegment", || resegment_recording(cfg, models, &hypothesis, &feats, &speech, total))
            .map_err(at(rec, "resegment"))?;
        hypothesis = hyp;
        warnings.extend(w);
        ingest::write_file(&out_dir.join(format!("{rec}.reseg.rttm")), ingest::emit_rttm([&hypothesis]))?;
    }

    if st.overlap {
        let p = &e.files["overlap"];
        let regions = ingest::read_with(p, ingest::parse_triples)?.remove(rec).unwrap_or_else(Timeline::empty);
        let ocfg = OverlapConfig { frame_step: Millis(cfg.overlap.frame_step_ms), extend_frames: cfg.overlap.extend_frames };
        let out = timed(&mut times, "overlap", || Ok(assign_overlap_labels(&hypothesis, regions.intervals(), &ocfg)?))
            .map_err(at(rec, "overlap"))?;
        hypothesis = out.annotation;
        warnings.extend(out.warnings);
        ingest::write_file(&out_dir.join(format!("{rec}.overlap.rttm")), ingest::emit_rttm([&hypothesis]))?;
    }

    ingest::write_file(&out_dir.join(format!("{rec}.rttm")), ingest::emit_rttm([&hypothesis]))?;

    let breakdown = if st.der {
        let reference = common.reference.as_ref().expect("checked in preflight");
        let hyp = if hypothesis.total_duration() < reference.total_duration() {
            hypothesis.with_total_duration(reference.total_duration())?
        } else {
            hypothesis.clone()
        };
        Some(timed(&mut times, "der", || Ok(der(reference, &hyp, common.uem.as_ref())?)).map_err(at(rec, "der"))?)
    } else {
        None
    };
    for w in &warnings {
        log::warn!("{rec}: {w}");
    }
    let report = RecordingReport {
        recording_id: rec.to_string(),
        stage_seconds: times,
        der: breakdown.as_ref().map(DerSummary::from),
        warnings,
    };
    Ok(RecordingOutcome { report, hypothesis, der: breakdown })
}

/// Models shared by every recording, loaded once.
#[derive(Default)]
pub struct Models {
    pub backend: Option<Backend>,
    pub vb: Option<VbModel>,
}

impl Models {
    pub fn load(cfg: &PipelineConfig) -> Result<Models> {
        let mut models = Models::default();
        if cfg.stages.score {
            models.backend = match cfg.scoring.backend {
                ScoreBackend::Cosine => Some(Backend::Cosine),
                ScoreBackend::Plda => {
                    let model = ingest::read_with(cfg.scoring.plda_model.as_ref().unwrap(), ingest::parse_plda)?;
                    let whitener = match &cfg.scoring.whitener {
                        Some(p) => Some(ingest::read_with(p, ingest::parse_whitener)?),
                        None => None,
                    };
                    Some(Backend::Plda { model, whitener, length_norm: cfg.scoring.length_norm })
                }
                ScoreBackend::External => None,
            };
        }
        if cfg.stages.resegment && cfg.reseg.method == ResegMethod::Vb {
            models.vb = Some(ingest::read_with(cfg.reseg.vb_model.as_ref().unwrap(), ingest::parse_vb_model)?);
        }
        Ok(models)
    }
}

fn score_recording(cfg: &PipelineConfig, models: &Models, e: &ManifestEntry, emb: Option<&EmbeddingSet>) -> Result<ScoreMatrix> {
    let mut matrices = Vec::new();
    if let Some(backend) = &models.backend {
        matrices.push(build_score_matrix(emb.expect("checked in preflight"), backend)?);
    }
    for p in &e.scores {
        matrices.push(ingest::read_with(p, ingest::parse_score_matrix)?);
    }
    let fused = if matrices.len() == 1 {
        matrices.pop().unwrap()
    } else {
        fuse_score_matrices(&matrices, cfg.scoring.fusion_weights.as_deref())?
    };
    Ok(symmetrize(&fused))
}

fn cluster_recording(cfg: &PipelineConfig, rec: &str, total: Millis, scores: &ScoreMatrix, mut segs: Vec<Segment>) -> Result<Annotation> {
    let assignment = match cfg.clustering.backend {
        ClusterBackend::Ahc => ahc(scores, cfg.clustering.threshold),
        ClusterBackend::Spectral => spectral_cluster(scores, &cfg.clustering.spectral)?,
    };
    for (seg, label) in segs.iter_mut().zip(&assignment.labels) {
        seg.label = Some(format!("spk{label}"));
    }
    Ok(segments_to_annotation(rec, total, &segs)?)
}

fn resegment_recording(
    cfg: &PipelineConfig,
    models: &Models,
    hypothesis: &Annotation,
    feats: &FrameFeatures,
    speech: &Timeline,
    total: Millis,
) -> Result<(Annotation, Vec<String>)> {
    let step = feats.frame_step;
    let rec = hypothesis.recording_id();
    if frames_covering(total, step) > feats.n_frames() {
        log::info!("{rec}: features end before the recording does; trailing speech is left unlabeled");
    }
    let (init, names) = FrameAssignment::from_annotation(hypothesis, speech, step, feats.n_frames())?;
    let (assignment, warnings) = match cfg.reseg.method {
        ResegMethod::Gmm => {
            let out = gmm_resegment(feats, &init, &cfg.reseg.gmm)?;
            (out.assignment, out.warnings)
        }
        ResegMethod::Vb => {
            let out = vb_resegment(feats, &init, models.vb.as_ref().unwrap(), &cfg.reseg.vb)?;
            log::debug!("{rec}: VB bound trace {:?}", out.elbo_trace);
            (out.assignment, Vec::new())
        }
        ResegMethod::None => unreachable!(),
    };
    Ok((assignment.to_annotation(rec, &names, step, total)?, warnings))
}

/// Runs every recording on a pool of `jobs` workers and writes the per-stage
/// artifacts, `all.rttm` and `report.json` into the output directory.
pub fn run_pipeline(cfg: &PipelineConfig, manifest: &[ManifestEntry], jobs: usize) -> Result<RunOutput> {
    preflight(cfg, manifest)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| PipelineError::Runtime(format!("{}: {e}", cfg.output_dir.display())))?;
    let models = Models::load(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Runtime(e.to_string()))?;
    let outcomes: Vec<Result<RecordingOutcome>> = pool.install(|| {
        use rayon::prelude::*;
        manifest.par_iter().map(|e| run_recording(cfg, &models, e)).collect()
    });
    let mut reports = Vec::new();
    let mut hypotheses = BTreeMap::new();
    let mut pooled: Option<DerBreakdown> = None;
    for o in outcomes {
        let o = o?;
        if let Some(b) = &o.der {
            pooled.get_or_insert_with(DerBreakdown::default).accumulate(b);
        }
        hypotheses.insert(o.report.recording_id.clone(), o.hypothesis);
        reports.push(o.report);
    }
    ingest::write_file(&cfg.output_dir.join("all.rttm"), ingest::emit_rttm(hypotheses.values()))?;

    let metadata = match reference_metadata(manifest) {
        Ok(Some(r)) => r.domains.iter().chain(std::iter::once(&r.all)).map(MetadataRow::from).collect(),
        Ok(None) => Vec::new(),
        Err(e) => {
            log::warn!("metadata table skipped: {e}");
            Vec::new()
        }
    };
    let report = RunReport {
        config_hash: cfg.hash(),
        rng_seed: cfg.rng_seed,
        recordings: reports,
        pooled_der: pooled.as_ref().map(DerSummary::from),
        metadata,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    ingest::write_file(&cfg.output_dir.join("report.json"), json + "\n")?;
    Ok(RunOutput { report, hypotheses, pooled })
}

fn reference_metadata(manifest: &[ManifestEntry]) -> Result<Option<DomainReport>> {
    let mut anns = Vec::new();
    let mut domains = BTreeMap::new();
    for e in manifest {
        let common = load_common(e)?;
        if let Some(mut r) = common.reference {
            if r.is_empty() {
                continue;
            }
            if let Some(u) = &common.uem {
                let end = u.intervals().last().map_or(Millis::ZERO, |iv| iv.end);
                if end > r.total_duration() {
                    r = r.with_total_duration(end)?;
                }
            }
            domains.insert(e.recording_id.clone(), e.domain.clone().unwrap_or_else(|| "default".into()));
            anns.push(r);
        }
    }
    if anns.is_empty() {
        return Ok(None);
    }
    Ok(Some(domain_report(&anns, &domains, Aggregation::Pooled)?))
}

/// Writes a generated corpus in the standard formats plus a manifest, and
/// returns the manifest path.
pub fn export_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Runtime(format!("{}: {e}", dir.display())))?;
    let recs = &corpus.recordings;
    ingest::write_file(&dir.join("ref.rttm"), ingest::emit_rttm(recs.iter().map(|r| &r.annotation)))?;
    let uem: BTreeMap<String, Timeline> = recs
        .iter()
        .map(|r| {
            let whole = diarkit_core::Interval { start: Millis::ZERO, end: r.annotation.total_duration() };
            (r.annotation.recording_id().to_string(), Timeline::from_intervals([whole]))
        })
        .collect();
    ingest::write_file(&dir.join("all.uem"), ingest::emit_uem(&uem))?;
    let speech: BTreeMap<String, Timeline> =
        recs.iter().map(|r| (r.annotation.recording_id().to_string(), r.annotation.speech())).collect();
    ingest::write_file(&dir.join("speech.txt"), ingest::emit_triples(&speech))?;
    ingest::write_file(&dir.join("vb_model.txt"), ingest::emit_vb_model(&corpus.vb_model))?;
    let mut manifest = String::new();
    for r in recs {
        let id = r.annotation.recording_id();
        ingest::write_file(&dir.join(format!("{id}.emb")), ingest::emit_embeddings(&r.embeddings))?;
        ingest::write_file(&dir.join(format!("{id}.feat")), ingest::emit_features(&r.features))?;
        manifest.push_str(&format!(
            "{id} reference=ref.rttm uem=all.uem vad=speech.txt embeddings={id}.emb features={id}.feat domain={}\n",
            r.domain
        ));
    }
    let domains: BTreeMap<String, String> =
        recs.iter().map(|r| (r.annotation.recording_id().to_string(), r.domain.clone())).collect();
    ingest::write_file(&dir.join("domains.tsv"), ingest::emit_domain_map(&domains))?;
    let path = dir.join("manifest.txt");
    ingest::write_file(&path, manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_ignores_output_dir_only() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { output_dir: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        let c = a.clone().with_seed(7);
        assert_ne!(a.hash(), c.hash());
        let mut d = a.clone();
        d.segmenter.step = Millis(500);
        assert_ne!(a.hash(), d.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn config_json_round_trip_and_unknown_fields() {
        let cfg = PipelineConfig::default().with_seed(3);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json(&text).unwrap(), cfg);
        let partial = PipelineConfig::from_json(r#"{"clustering": {"backend": "ahc", "threshold": 0.3}}"#).unwrap();
        assert_eq!(partial.clustering.backend, ClusterBackend::Ahc);
        assert_eq!(partial.segmenter, SegmenterConfig::default());
        assert!(PipelineConfig::from_json(r#"{"clustring": {}}"#).is_err());
    }

    #[test]
    fn manifest_parsing() {
        let m = parse_manifest("# corpus\nr1 reference=a.rttm scores=x.txt,y.txt domain=radio\n\nr2 embeddings=r2.emb\n", Path::new("/d")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].files["reference"], PathBuf::from("/d/a.rttm"));
        assert_eq!(m[0].scores.len(), 2);
        assert_eq!(m[0].domain.as_deref(), Some("radio"));
        for bad in ["r1 reference", "r1 colour=red", "r1 uem=a uem=b", "r1\nr1", ""] {
            assert!(parse_manifest(bad, Path::new(".")).is_err(), "{bad}");
        }
    }
}
