//! Command line front end. Every subcommand reads and writes the formats in
//! [`crate::ingest`]; hyperparameters default to the sections of the
//! `--config` file and can be overridden per flag.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use diarkit_core::clustering::ahc;
use diarkit_core::clustering::spectral_cluster;
use diarkit_core::frames::frames_covering;
use diarkit_core::metadata::{domain_report, Aggregation, DomainRow};
use diarkit_core::metrics::{der_corpus, vad_accuracy, DerBreakdown};
use diarkit_core::reseg::{
    assign_overlap_labels, gmm_resegment, train_vb_model, vb_resegment, FrameAssignment, OverlapConfig,
};
use diarkit_core::scoring::{build_score_matrix, fit_plda, fuse_score_matrices, symmetrize, Backend, Whitener};
use diarkit_core::segmenter::{assign_reference_label, segments_to_annotation, uniform_segment};
use diarkit_core::synthgen::{generate_corpus, CorpusProfile};
use diarkit_core::{Annotation, Millis, Timeline, VadLabels};

use crate::ingest;
use crate::pipeline::{self, ClusterBackend, PipelineConfig, PipelineError};

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Parser, Debug)]
#[command(name = "diarkit", version, about = "Speaker diarization backend")]
pub struct Cli {
    /// JSON pipeline configuration; its sections supply defaults for every
    /// subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for recording-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Seed for every stochastic stage; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-domain corpus statistics from reference RTTM.
    Metadata(MetadataArgs),
    /// Uniform sliding-window segmentation of speech regions.
    Segment(SegmentArgs),
    /// Pairwise score matrix for one recording's embeddings.
    Score(ScoreArgs),
    /// Weighted fusion of score matrices.
    Fuse(FuseArgs),
    /// Cluster segments from a score matrix and write RTTM.
    Cluster(ClusterArgs),
    /// Frame-level refinement of a diarization.
    Resegment(ResegmentArgs),
    /// Add speakers to detected overlap regions.
    OverlapAssign(OverlapArgs),
    /// Diarization error rate per recording and pooled.
    Der(DerArgs),
    /// Frame-level speech/non-speech accuracy.
    VadAcc(VadAccArgs),
    /// Run the whole chain over a manifest.
    Run(RunArgs),
    /// Write a synthetic corpus with known truth.
    Synth(SynthArgs),
    /// Fit a PLDA model (and optionally a whitener) on labeled embeddings.
    TrainPlda(TrainPldaArgs),
    /// Fit a UBM and total-variability matrix for VB resegmentation.
    TrainVb(TrainVbArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TableFormat {
    Tsv,
    Text,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AggregationArg {
    Pooled,
    MeanOfRatios,
}

#[derive(Args, Debug)]
pub struct MetadataArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Two-column `recording domain` map; every recording is in one domain
    /// when absent.
    #[arg(long)]
    pub domains: Option<PathBuf>,
    /// Recording durations are extended to the UEM end when given.
    #[arg(long)]
    pub uem: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AggregationArg::Pooled)]
    pub aggregation: AggregationArg,
    #[arg(long, value_enum, default_value_t = TableFormat::Tsv)]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RegionFormat {
    /// `recording onset duration` rows.
    Triples,
    Uem,
    Rttm,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    #[arg(long)]
    pub regions: PathBuf,
    #[arg(long, value_enum, default_value_t = RegionFormat::Triples)]
    pub format: RegionFormat,
    #[arg(long)]
    pub window_ms: Option<i64>,
    #[arg(long)]
    pub step_ms: Option<i64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BackendArg {
    Cosine,
    Plda,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Text or binary embedding file.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Defaults to the file stem.
    #[arg(long)]
    pub recording: Option<String>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long)]
    pub plda: Option<PathBuf>,
    #[arg(long)]
    pub whitener: Option<PathBuf>,
    #[arg(long)]
    pub no_length_norm: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub scores: Vec<PathBuf>,
    /// Comma separated, one per matrix; equal weights when absent.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ClusterArg {
    Ahc,
    Spectral,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Either a segment list or an embedding file; only segment times are used.
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long, value_enum)]
    pub backend: Option<ClusterArg>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ResegArg {
    Gmm,
    Vb,
}

#[derive(Args, Debug)]
pub struct ResegmentArgs {
    #[arg(long, value_enum)]
    pub method: ResegArg,
    #[arg(long)]
    pub features: PathBuf,
    /// Initial diarization for one recording.
    #[arg(long)]
    pub rttm: PathBuf,
    /// Speech regions as triples; the initial RTTM's speech when absent.
    #[arg(long)]
    pub speech: Option<PathBuf>,
    #[arg(long)]
    pub vb_model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OverlapArgs {
    #[arg(long)]
    pub rttm: PathBuf,
    /// Overlap regions as triples.
    #[arg(long)]
    pub overlap: PathBuf,
    #[arg(long)]
    pub frame_step_ms: Option<i64>,
    #[arg(long)]
    pub extend_frames: Option<i64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DerArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long)]
    pub uem: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VadAccArgs {
    /// Reference speech regions as triples.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub hyp: PathBuf,
    /// Recording extents; the last speech end of either side otherwise.
    #[arg(long)]
    pub uem: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub frame_step_ms: i64,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON corpus profile; defaults apply to missing fields.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainPldaArgs {
    /// Manifest whose entries give `embeddings` and `reference`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also fit a whitener and train the PLDA in the whitened space.
    #[arg(long)]
    pub whitener_out: Option<PathBuf>,
    #[arg(long)]
    pub no_length_norm: bool,
}

#[derive(Args, Debug)]
pub struct TrainVbArgs {
    /// Manifest whose entries give `features` and `reference`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub components: usize,
    #[arg(long, default_value_t = 4)]
    pub rank: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn validation(msg: impl Into<String>) -> PipelineError {
    PipelineError::Validation(msg.into())
}

fn emit(out: &Option<PathBuf>, text: String) -> Result<()> {
    match out {
        Some(p) => Ok(ingest::write_file(p, text)?),
        None => stdout(&text),
    }
}

/// A closed pipe (as with `| head`) ends output quietly.
fn stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(PipelineError::Runtime(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.rng_seed);
    Ok(cfg.with_seed(seed))
}

/// Exactly one recording in a file holding many.
fn single<T>(mut map: BTreeMap<String, T>, path: &Path) -> Result<(String, T)> {
    if map.len() != 1 {
        return Err(validation(format!("{} holds {} recordings, expected one", path.display(), map.len())));
    }
    Ok(map.pop_first().unwrap())
}

fn last_end(tl: &Timeline) -> Millis {
    tl.intervals().last().map_or(Millis::ZERO, |iv| iv.end)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Metadata(a) => metadata(a),
        Command::Segment(a) => segment(&cfg, a),
        Command::Score(a) => score(&cfg, a),
        Command::Fuse(a) => {
            let ms = a.scores.iter().map(|p| ingest::read_with(p, ingest::parse_score_matrix)).collect::<std::result::Result<Vec<_>, _>>()?;
            let fused = fuse_score_matrices(&ms, a.weights.as_deref())?;
            emit(&a.out, ingest::emit_score_matrix(&fused))
        }
        Command::Cluster(a) => cluster(&cfg, a),
        Command::Resegment(a) => resegment(&cfg, a),
        Command::OverlapAssign(a) => overlap(&cfg, a),
        Command::Der(a) => der_cmd(a),
        Command::VadAcc(a) => vad_acc(a),
        Command::Run(a) => {
            let mut cfg = cfg;
            if let Some(o) = &a.out {
                cfg.output_dir = o.clone();
            }
            let manifest = pipeline::load_manifest(&a.manifest)?;
            let out = pipeline::run_pipeline(&cfg, &manifest, cli.jobs)?;
            if let Some(p) = &out.pooled {
                println!("pooled DER {:.2}%", p.der());
            }
            println!("wrote {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Synth(a) => {
            let mut profile = match &a.profile {
                Some(p) => serde_json::from_str::<CorpusProfile>(&ingest::read_to_string(p)?)
                    .map_err(|e| validation(format!("{}: {e}", p.display())))?,
                None => CorpusProfile::default(),
            };
            if let Some(s) = cli.seed {
                profile.rng_seed = s;
            }
            let corpus = generate_corpus(&profile)?;
            let manifest = pipeline::export_corpus(&corpus, &a.out)?;
            println!("wrote {}", manifest.display());
            Ok(())
        }
        Command::TrainPlda(a) => train_plda(&cfg, a),
        Command::TrainVb(a) => train_vb(&cfg, a),
    }
}

fn metadata(a: &MetadataArgs) -> Result<()> {
    let refs = ingest::read_with(&a.reference, ingest::parse_rttm)?;
    let domains = match &a.domains {
        Some(p) => ingest::read_with(p, ingest::parse_domain_map)?,
        None => refs.keys().map(|id| (id.clone(), "default".to_string())).collect(),
    };
    let uems = match &a.uem {
        Some(p) => ingest::read_with(p, ingest::parse_uem)?,
        None => BTreeMap::new(),
    };
    let mut anns = Vec::new();
    for (id, ann) in refs {
        let end = uems.get(&id).map_or(Millis::ZERO, last_end);
        anns.push(if end > ann.total_duration() { ann.with_total_duration(end)? } else { ann });
    }
    let how = match a.aggregation {
        AggregationArg::Pooled => Aggregation::Pooled,
        AggregationArg::MeanOfRatios => Aggregation::MeanOfRatios,
    };
    let report = domain_report(&anns, &domains, how)?;
    let rows: Vec<&DomainRow> = report.domains.iter().chain(std::iter::once(&report.all)).collect();
    emit(&a.out, metadata_table(&rows, a.format))
}

fn fmt_duration(secs: f64) -> String {
    let total = secs.round() as i64;
    format!("{}m{:02}s", total / 60, total % 60)
}

pub fn metadata_table(rows: &[&DomainRow], format: TableFormat) -> String {
    let header = ["domain", "n_audios", "n_speakers", "avg_duration", "speech_pct", "overlapped_error"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            let speakers = if r.min_speakers == r.max_speakers {
                r.min_speakers.to_string()
            } else {
                format!("{}-{}", r.min_speakers, r.max_speakers)
            };
            [
                r.domain.clone(),
                r.n_audios.to_string(),
                speakers,
                fmt_duration(r.mean_duration),
                format!("{:.2}", r.speech_pct),
                format!("{:.2}", r.overlap_err),
            ]
        })
        .collect();
    let mut out = String::new();
    match format {
        TableFormat::Tsv => {
            out.push_str(&header.join("\t"));
            out.push('\n');
            for c in &cells {
                out.push_str(&c.join("\t"));
                out.push('\n');
            }
        }
        TableFormat::Text => {
            let widths: Vec<usize> =
                (0..6).map(|i| cells.iter().map(|c| c[i].len()).chain([header[i].len()]).max().unwrap()).collect();
            let line = |out: &mut String, c: &[&str]| {
                for (i, v) in c.iter().enumerate() {
                    if i == 0 {
                        write!(out, "{v:<w$}", w = widths[i]).unwrap();
                    } else {
                        write!(out, "  {v:>w$}", w = widths[i]).unwrap();
                    }
                }
                out.push('\n');
            };
            line(&mut out, &header);
            for c in &cells {
                line(&mut out, &c.iter().map(String::as_str).collect::<Vec<_>>());
            }
        }
    }
    out
}

fn segment(cfg: &PipelineConfig, a: &SegmentArgs) -> Result<()> {
    let mut scfg = cfg.segmenter.clone();
    if let Some(w) = a.window_ms {
        scfg.window = Millis(w);
    }
    if let Some(s) = a.step_ms {
        scfg.step = Millis(s);
    }
    scfg.validate()?;
    let regions = match a.format {
        RegionFormat::Triples => ingest::read_with(&a.regions, ingest::parse_triples)?,
        RegionFormat::Uem => ingest::read_with(&a.regions, ingest::parse_uem)?,
        RegionFormat::Rttm => ingest::read_with(&a.regions, ingest::parse_rttm)?
            .into_iter()
            .map(|(id, ann)| (id, ann.speech()))
            .collect(),
    };
    let mut text = String::new();
    for (id, tl) in &regions {
        text.push_str(&ingest::emit_segments(id, &uniform_segment(tl, &scfg)?));
    }
    emit(&a.out, text)
}

fn score(cfg: &PipelineConfig, a: &ScoreArgs) -> Result<()> {
    let id = match &a.recording {
        Some(r) => r.clone(),
        None => a.embeddings.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    let set = ingest::read_embeddings(&a.embeddings, &id)?;
    let plda_path = a.plda.as_ref().or(cfg.scoring.plda_model.as_ref());
    let use_plda = match a.backend {
        Some(BackendArg::Plda) => true,
        Some(BackendArg::Cosine) => false,
        None => cfg.scoring.backend == pipeline::ScoreBackend::Plda,
    };
    let backend = if use_plda {
        let p = plda_path.ok_or_else(|| validation("the plda backend needs --plda"))?;
        let whitener = match a.whitener.as_ref().or(cfg.scoring.whitener.as_ref()) {
            Some(w) => Some(ingest::read_with(w, ingest::parse_whitener)?),
            None => None,
        };
        Backend::Plda {
            model: ingest::read_with(p, ingest::parse_plda)?,
            whitener,
            length_norm: cfg.scoring.length_norm && !a.no_length_norm,
        }
    } else {
        Backend::Cosine
    };
    let s = build_score_matrix(&set, &backend)?;
    emit(&a.out, ingest::emit_score_matrix(&symmetrize(&s)))
}

fn cluster(cfg: &PipelineConfig, a: &ClusterArgs) -> Result<()> {
    let scores = symmetrize(&ingest::read_with(&a.scores, ingest::parse_score_matrix)?);
    let text = ingest::read_to_string(&a.segments)?;
    // An embedding file starts with a two-field header; a segment list has
    // three fields per row.
    let (id, segs) = match ingest::parse_segments(&text) {
        Ok(m) => single(m, &a.segments)?,
        Err(_) => {
            let id = a.segments.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let set = ingest::parse_embeddings(&text, &id).map_err(|e| ingest::IngestError::InFile {
                path: a.segments.display().to_string(),
                source: Box::new(e),
            })?;
            (id, set.segments().cloned().collect())
        }
    };
    if segs.len() != scores.n() {
        return Err(validation(format!("{} segments but a {}x{} score matrix", segs.len(), scores.n(), scores.n())));
    }
    let backend = match a.backend {
        Some(ClusterArg::Ahc) => ClusterBackend::Ahc,
        Some(ClusterArg::Spectral) => ClusterBackend::Spectral,
        None => cfg.clustering.backend,
    };
    let assignment = match backend {
        ClusterBackend::Ahc => ahc(&scores, a.threshold.unwrap_or(cfg.clustering.threshold)),
        ClusterBackend::Spectral => spectral_cluster(&scores, &cfg.clustering.spectral)?,
    };
    let mut segs = segs;
    for (seg, l) in segs.iter_mut().zip(&assignment.labels) {
        seg.label = Some(format!("spk{l}"));
    }
    let total = segs.iter().map(|s| s.end).max().unwrap_or(Millis::ZERO);
    let ann = segments_to_annotation(&id, total, &segs)?;
    emit(&a.out, ingest::emit_rttm([&ann]))
}

fn resegment(cfg: &PipelineConfig, a: &ResegmentArgs) -> Result<()> {
    let (id, init) = single(ingest::read_with(&a.rttm, ingest::parse_rttm)?, &a.rttm)?;
    let feats = ingest::read_with(&a.features, |t| ingest::parse_features(t, &id))?;
    let speech = match &a.speech {
        Some(p) => ingest::read_with(p, ingest::parse_triples)?.remove(&id).unwrap_or_else(Timeline::empty),
        None => init.speech(),
    };
    let step = feats.frame_step;
    let total = init.total_duration().max(last_end(&speech));
    let (start, names) = FrameAssignment::from_annotation(&init, &speech, step, feats.n_frames())?;
    let assignment = match a.method {
        ResegArg::Gmm => {
            let out = gmm_resegment(&feats, &start, &cfg.reseg.gmm)?;
            for w in &out.warnings {
                log::warn!("{id}: {w}");
            }
            out.assignment
        }
        ResegArg::Vb => {
            let p = a.vb_model.as_ref().or(cfg.reseg.vb_model.as_ref()).ok_or_else(|| validation("--method vb needs --vb-model"))?;
            let model = ingest::read_with(p, ingest::parse_vb_model)?;
            vb_resegment(&feats, &start, &model, &cfg.reseg.vb)?.assignment
        }
    };
    let ann = assignment.to_annotation(&id, &names, step, total)?;
    emit(&a.out, ingest::emit_rttm([&ann]))
}

fn overlap(cfg: &PipelineConfig, a: &OverlapArgs) -> Result<()> {
    let diar = ingest::read_with(&a.rttm, ingest::parse_rttm)?;
    let regions = ingest::read_with(&a.overlap, ingest::parse_triples)?;
    let ocfg = OverlapConfig {
        frame_step: Millis(a.frame_step_ms.unwrap_or(cfg.overlap.frame_step_ms)),
        extend_frames: a.extend_frames.unwrap_or(cfg.overlap.extend_frames),
    };
    ocfg.validate()?;
    let mut out = Vec::new();
    for (id, ann) in &diar {
        let empty = Timeline::empty();
        let r = regions.get(id).unwrap_or(&empty);
        let res = assign_overlap_labels(ann, r.intervals(), &ocfg)?;
        for w in &res.warnings {
            log::warn!("{id}: {w}");
        }
        out.push(res.annotation);
    }
    emit(&a.out, ingest::emit_rttm(&out))
}

pub fn der_table(per: &[(String, DerBreakdown)], pooled: &DerBreakdown) -> String {
    let mut out = String::from("recording\tscored_speech\tmissed\tfalse_alarm\tconfusion\tder_pct\n");
    let row = |out: &mut String, id: &str, b: &DerBreakdown| {
        writeln!(
            out,
            "{id}\t{}\t{}\t{}\t{}\t{:.2}",
            b.scored_speech,
            b.missed,
            b.false_alarm,
            b.confusion,
            b.der()
        )
        .unwrap();
    };
    for (id, b) in per {
        row(&mut out, id, b);
    }
    row(&mut out, "POOLED", pooled);
    out
}

fn der_cmd(a: &DerArgs) -> Result<()> {
    let refs = ingest::read_with(&a.reference, ingest::parse_rttm)?;
    let hyps = ingest::read_with(&a.hyp, ingest::parse_rttm)?;
    let uems = match &a.uem {
        Some(p) => Some(ingest::read_with(p, ingest::parse_uem)?),
        None => None,
    };
    // Both sides need a common recording length for scoring.
    let mut aligned_refs = BTreeMap::new();
    let mut aligned_hyps = BTreeMap::new();
    for (id, r) in &refs {
        let mut total = r.total_duration();
        if let Some(h) = hyps.get(id) {
            total = total.max(h.total_duration());
        }
        if let Some(u) = uems.as_ref().and_then(|m| m.get(id)) {
            total = total.max(last_end(u));
        }
        aligned_refs.insert(id.clone(), r.with_total_duration(total)?);
        if let Some(h) = hyps.get(id) {
            aligned_hyps.insert(id.clone(), h.with_total_duration(total)?);
        }
    }
    for id in hyps.keys().filter(|id| !refs.contains_key(*id)) {
        log::warn!("{id}: hypothesis has no reference and is not scored");
    }
    let (per, pooled) = der_corpus(&aligned_refs, &aligned_hyps, uems.as_ref())?;
    stdout(&der_table(&per, &pooled))
}

fn vad_acc(a: &VadAccArgs) -> Result<()> {
    if a.frame_step_ms <= 0 {
        return Err(validation("--frame-step-ms must be positive"));
    }
    let step = Millis(a.frame_step_ms);
    let refs = ingest::read_with(&a.reference, ingest::parse_triples)?;
    let hyps = ingest::read_with(&a.hyp, ingest::parse_triples)?;
    let uems = match &a.uem {
        Some(p) => ingest::read_with(p, ingest::parse_uem)?,
        None => BTreeMap::new(),
    };
    let empty = Timeline::empty();
    let mut out = String::from("recording\taccuracy_pct\n");
    let (mut agree, mut frames) = (0.0, 0usize);
    for (id, r) in &refs {
        let h = hyps.get(id).unwrap_or(&empty);
        let end = match uems.get(id) {
            Some(u) => last_end(u),
            None => last_end(r).max(last_end(h)),
        };
        let n = frames_covering(end, step);
        if n == 0 {
            continue;
        }
        let acc = vad_accuracy(&VadLabels::from_timeline(id, r, step, n), &VadLabels::from_timeline(id, h, step, n))?;
        agree += acc * n as f64;
        frames += n;
        writeln!(out, "{id}\t{:.2}", acc).unwrap();
    }
    if frames == 0 {
        return Err(validation("no frames to score"));
    }
    writeln!(out, "POOLED\t{:.2}", agree / frames as f64).unwrap();
    stdout(&out)
}

fn train_plda(cfg: &PipelineConfig, a: &TrainPldaArgs) -> Result<()> {
    let manifest = pipeline::load_manifest(&a.manifest)?;
    let mut labeled: Vec<(String, Vec<f64>)> = Vec::new();
    for e in &manifest {
        let (Some(ep), Some(rp)) = (e.files.get("embeddings"), e.files.get("reference")) else {
            return Err(validation(format!("{} [train-plda]: needs embeddings and reference", e.recording_id)));
        };
        let set = ingest::read_embeddings(ep, &e.recording_id)?;
        let reference = ingest::read_with(rp, ingest::parse_rttm)?
            .remove(&e.recording_id)
            .ok_or_else(|| validation(format!("{} [train-plda]: no reference turns", e.recording_id)))?;
        for (seg, v) in set.entries() {
            if let Some(spk) = assign_reference_label(seg, &reference, &cfg.segmenter) {
                labeled.push((spk, v.clone()));
            }
        }
    }
    let length_norm = cfg.scoring.length_norm && !a.no_length_norm;
    if let Some(wp) = &a.whitener_out {
        let refs: Vec<&[f64]> = labeled.iter().map(|(_, v)| v.as_slice()).collect();
        let w = Whitener::fit(&refs, true)?;
        for (_, v) in labeled.iter_mut() {
            *v = w.apply(v)?;
            if length_norm {
                diarkit_core::scoring::length_normalize(v);
            }
        }
        ingest::write_file(wp, ingest::emit_whitener(&w))?;
    }
    let model = fit_plda(&labeled)?;
    ingest::write_file(&a.out, ingest::emit_plda(&model))?;
    println!("trained on {} labeled embeddings", labeled.len());
    Ok(())
}

fn train_vb(cfg: &PipelineConfig, a: &TrainVbArgs) -> Result<()> {
    let manifest = pipeline::load_manifest(&a.manifest)?;
    let mut data = Vec::new();
    for e in &manifest {
        let (Some(fp), Some(rp)) = (e.files.get("features"), e.files.get("reference")) else {
            return Err(validation(format!("{} [train-vb]: needs features and reference", e.recording_id)));
        };
        let feats = ingest::read_with(fp, |t| ingest::parse_features(t, &e.recording_id))?;
        let reference: Annotation = ingest::read_with(rp, ingest::parse_rttm)?
            .remove(&e.recording_id)
            .ok_or_else(|| validation(format!("{} [train-vb]: no reference turns", e.recording_id)))?;
        let (assign, _) =
            FrameAssignment::from_annotation(&reference, &reference.speech(), feats.frame_step, feats.n_frames())?;
        data.push((feats, assign));
    }
    let refs: Vec<_> = data.iter().map(|(f, a)| (f, a)).collect();
    let model = train_vb_model(&refs, a.components, a.rank, cfg.rng_seed)?;
    ingest::write_file(&a.out, ingest::emit_vb_model(&model))?;
    Ok(())
}
