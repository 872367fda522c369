//! On-disk formats: RTTM, UEM, interval triples, segment lists, embeddings,
//! frame features, score matrices and model files.
//!
//! Text formats are whitespace separated UTF-8. Times are decimal seconds and
//! are converted to milliseconds exactly, without going through `f64`. Every
//! parse error names the offending line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use diarkit_core::reseg::{Gmm, VbModel};
use diarkit_core::scoring::{PldaModel, Whitener};
use diarkit_core::{Annotation, EmbeddingSet, FrameFeatures, Interval, Millis, ScoreMatrix, Segment, SpeakerTurn, Timeline};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: diarkit_core::Error,
    },
    #[error("byte {offset}: {msg}")]
    Binary { offset: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<IngestError>,
    },
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(IngestError::Parse { line, msg: msg.into() })
}

fn invalid(line: usize) -> impl FnOnce(diarkit_core::Error) -> IngestError {
    move |source| IngestError::Invalid { line, source }
}

/// Parses a decimal number of seconds into milliseconds, rounding half away
/// from zero. Plain decimals are converted digit by digit; exponent forms go
/// through `f64`.
pub fn parse_secs(tok: &str) -> Option<Millis> {
    let (neg, body) = match tok.as_bytes().first()? {
        b'-' => (true, &tok[1..]),
        b'+' => (false, &tok[1..]),
        _ => (false, tok),
    };
    if body.contains(['e', 'E']) {
        let v: f64 = tok.parse().ok()?;
        return (v.is_finite() && v.abs() < 9e12).then(|| Millis::from_secs(v));
    }
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) || int.len() > 12 {
        return None;
    }
    let mut ms: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    ms *= 1000;
    let digits = frac.as_bytes();
    for i in 0..3 {
        let d = digits.get(i).map_or(0, |b| (b - b'0') as i64);
        ms += d * 10i64.pow(2 - i as u32);
    }
    if digits.get(3).is_some_and(|&b| b >= b'5') {
        ms += 1;
    }
    Some(Millis(if neg { -ms } else { ms }))
}

fn secs(line: usize, tok: &str) -> Result<Millis> {
    parse_secs(tok).map_or_else(|| err(line, format!("bad time {tok:?}")), Ok)
}

fn real(line: usize, tok: &str) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => err(line, format!("bad number {tok:?}")),
    }
}

fn count(line: usize, tok: &str) -> Result<usize> {
    tok.parse().or_else(|_| err(line, format!("bad count {tok:?}")))
}

/// Non-blank lines with their 1-based numbers; `#` starts a comment line.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, toks)| !toks.is_empty() && !toks[0].starts_with('#'))
}

fn expect_fields(line: usize, toks: &[&str], n: usize) -> Result<()> {
    if toks.len() != n {
        return err(line, format!("expected {n} fields, found {}", toks.len()));
    }
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

/// Reads a file and parses it, attaching the path to any error.
pub fn read_with<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    let text = read_to_string(path)?;
    parse(&text).map_err(|e| IngestError::InFile { path: path.display().to_string(), source: Box::new(e) })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

// RTTM

/// `SPEAKER <file> <chan> <onset> <dur> <NA> <NA> <speaker> <NA> <NA>`; other
/// row types are skipped. Each recording lasts until its last turn ends.
pub fn parse_rttm(text: &str) -> Result<BTreeMap<String, Annotation>> {
    let mut turns: BTreeMap<String, Vec<SpeakerTurn>> = BTreeMap::new();
    for (line, toks) in data_lines(text) {
        if toks[0] != "SPEAKER" {
            continue;
        }
        expect_fields(line, &toks, 10)?;
        let chan: u8 = toks[2].parse().or_else(|_| err(line, format!("bad channel {:?}", toks[2])))?;
        let onset = secs(line, toks[3])?;
        let dur = secs(line, toks[4])?;
        if dur.0 < 0 {
            return err(line, format!("negative duration {}", toks[4]));
        }
        if dur.0 == 0 {
            log::warn!("line {line}: zero-length turn skipped");
            continue;
        }
        let turn = SpeakerTurn::new(toks[1], chan, onset, dur, toks[7]).map_err(invalid(line))?;
        turns.entry(toks[1].to_string()).or_default().push(turn);
    }
    turns
        .into_iter()
        .map(|(rec, t)| Annotation::from_turns(rec.clone(), t).map(|a| (rec, a)).map_err(invalid(0)))
        .collect()
}

pub fn emit_rttm<'a>(annotations: impl IntoIterator<Item = &'a Annotation>) -> String {
    let mut out = String::new();
    for ann in annotations {
        for t in ann.turns() {
            writeln!(
                out,
                "SPEAKER {} {} {} {} <NA> <NA> {} <NA> <NA>",
                t.recording_id, t.channel, t.onset, t.duration, t.speaker
            )
            .unwrap();
        }
    }
    out
}

// UEM, interval triples, segment lists

/// `<file> <chan> <onset> <offset>`.
pub fn parse_uem(text: &str) -> Result<BTreeMap<String, Timeline>> {
    let mut out: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
    for (line, toks) in data_lines(text) {
        expect_fields(line, &toks, 4)?;
        toks[1].parse::<u8>().or_else(|_| err(line, format!("bad channel {:?}", toks[1])))?;
        let iv = Interval::new(secs(line, toks[2])?, secs(line, toks[3])?).map_err(invalid(line))?;
        out.entry(toks[0].to_string()).or_default().push(iv);
    }
    Ok(out.into_iter().map(|(k, v)| (k, Timeline::from_intervals(v))).collect())
}

pub fn emit_uem(uem: &BTreeMap<String, Timeline>) -> String {
    let mut out = String::new();
    for (rec, tl) in uem {
        for iv in tl.intervals() {
            writeln!(out, "{rec} 1 {} {}", iv.start, iv.end).unwrap();
        }
    }
    out
}

/// `<file> <onset> <dur>` rows, as used for VAD output and overlap regions.
pub fn parse_triples(text: &str) -> Result<BTreeMap<String, Timeline>> {
    let mut out: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
    for (line, toks) in data_lines(text) {
        expect_fields(line, &toks, 3)?;
        let onset = secs(line, toks[1])?;
        let dur = secs(line, toks[2])?;
        if dur.0 <= 0 {
            return err(line, format!("non-positive duration {}", toks[2]));
        }
        out.entry(toks[0].to_string()).or_default().push(Interval::new(onset, onset + dur).map_err(invalid(line))?);
    }
    Ok(out.into_iter().map(|(k, v)| (k, Timeline::from_intervals(v))).collect())
}

pub fn emit_triples(regions: &BTreeMap<String, Timeline>) -> String {
    let mut out = String::new();
    for (rec, tl) in regions {
        for iv in tl.intervals() {
            writeln!(out, "{rec} {} {}", iv.start, iv.len()).unwrap();
        }
    }
    out
}

/// `<file> <start> <end>` rows, kept in file order per recording.
pub fn parse_segments(text: &str) -> Result<BTreeMap<String, Vec<Segment>>> {
    let mut out: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for (line, toks) in data_lines(text) {
        expect_fields(line, &toks, 3)?;
        let seg = Segment::new(secs(line, toks[1])?, secs(line, toks[2])?).map_err(invalid(line))?;
        out.entry(toks[0].to_string()).or_default().push(seg);
    }
    Ok(out)
}

pub fn emit_segments(recording_id: &str, segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        writeln!(out, "{recording_id} {} {}", s.start, s.end).unwrap();
    }
    out
}

/// `<file> <domain>` rows.
pub fn parse_domain_map(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (line, toks) in data_lines(text) {
        expect_fields(line, &toks, 2)?;
        if out.insert(toks[0].to_string(), toks[1].to_string()).is_some() {
            return err(line, format!("recording {} listed twice", toks[0]));
        }
    }
    Ok(out)
}

pub fn emit_domain_map(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (rec, domain) in map {
        writeln!(out, "{rec} {domain}").unwrap();
    }
    out
}

// headed numeric tables

struct Rows<'a> {
    lines: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Rows<'a> {
    fn new(text: &'a str) -> Rows<'a> {
        Rows { lines: data_lines(text).collect(), pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(1, |(l, _)| *l)
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.lines.get(self.pos) {
            Some(row) => {
                self.pos += 1;
                Ok(row.clone())
            }
            None => err(self.last_line(), format!("unexpected end of file, expected {what}")),
        }
    }

    fn header(&mut self, n: usize) -> Result<(usize, Vec<usize>)> {
        let (line, toks) = self.next("a header")?;
        expect_fields(line, &toks, n)?;
        Ok((line, toks.iter().map(|t| count(line, t)).collect::<Result<_>>()?))
    }

    fn reals(&mut self, n: usize, what: &str) -> Result<(usize, Vec<f64>)> {
        let (line, toks) = self.next(what)?;
        expect_fields(line, &toks, n)?;
        Ok((line, toks.iter().map(|t| real(line, t)).collect::<Result<_>>()?))
    }

    fn finish(&self) -> Result<()> {
        match self.lines.get(self.pos) {
            Some((line, _)) => err(*line, "trailing data after the declared rows"),
            None => Ok(()),
        }
    }
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v}").unwrap();
    }
    out.push('\n');
}

// embeddings

/// Header `n d`, then `n` rows `start end v1 .. vd`.
pub fn parse_embeddings(text: &str, recording_id: &str) -> Result<EmbeddingSet> {
    let mut rows = Rows::new(text);
    let (hline, h) = rows.header(2)?;
    let (n, d) = (h[0], h[1]);
    if n == 0 {
        return Err(IngestError::Invalid { line: hline, source: diarkit_core::Error::EmptyEmbeddings });
    }
    if d == 0 {
        return err(hline, "embedding dimension must be positive");
    }
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, toks) = rows.next("an embedding row")?;
        expect_fields(line, &toks, d + 2)?;
        let seg = Segment::new(secs(line, toks[0])?, secs(line, toks[1])?).map_err(invalid(line))?;
        let v = toks[2..].iter().map(|t| real(line, t)).collect::<Result<_>>()?;
        entries.push((seg, v));
    }
    rows.finish()?;
    EmbeddingSet::new(recording_id, d, entries).map_err(invalid(hline))
}

pub fn emit_embeddings(set: &EmbeddingSet) -> String {
    let mut out = format!("{} {}\n", set.len(), set.dim());
    for (seg, v) in set.entries() {
        write!(out, "{} {} ", seg.start, seg.end).unwrap();
        push_row(&mut out, v.iter().copied());
    }
    out
}

const EMBEDDING_MAGIC: &[u8; 4] = b"DKEB";

/// Little-endian binary variant: magic `DKEB`, `u32 n`, `u32 d`, then `n`
/// records of `f64` start seconds, end seconds and `d` values.
pub fn parse_embeddings_binary(bytes: &[u8], recording_id: &str) -> Result<EmbeddingSet> {
    let bin = |offset: usize, msg: &str| IngestError::Binary { offset, msg: msg.to_string() };
    if bytes.len() < 12 || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(bin(0, "missing DKEB header"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if n == 0 {
        return Err(IngestError::Invalid { line: 0, source: diarkit_core::Error::EmptyEmbeddings });
    }
    let expected = (d + 2).checked_mul(n).and_then(|k| k.checked_mul(8)).and_then(|k| k.checked_add(12));
    if expected != Some(bytes.len()) {
        return Err(bin(12, &format!("payload is {} bytes, header declares {n} x {d}", bytes.len() - 12)));
    }
    let f = |i: usize| f64::from_le_bytes(bytes[12 + 8 * i..20 + 8 * i].try_into().unwrap());
    let mut entries = Vec::with_capacity(n);
    for r in 0..n {
        let base = r * (d + 2);
        let offset = 12 + 8 * base;
        let (s, e) = (f(base), f(base + 1));
        if !(s.is_finite() && e.is_finite()) {
            return Err(bin(offset, "non-finite segment time"));
        }
        let seg = Segment::new(Millis::from_secs(s), Millis::from_secs(e))
            .map_err(|source| IngestError::InFile { path: format!("record {r}"), source: Box::new(IngestError::Invalid { line: 0, source }) })?;
        entries.push((seg, (0..d).map(|j| f(base + 2 + j)).collect()));
    }
    EmbeddingSet::new(recording_id, d, entries).map_err(|source| IngestError::Invalid { line: 0, source })
}

pub fn emit_embeddings_binary(set: &EmbeddingSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + set.len() * (set.dim() + 2) * 8);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    for (seg, v) in set.entries() {
        for x in [seg.start.as_secs(), seg.end.as_secs()].into_iter().chain(v.iter().copied()) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Reads either embedding encoding, chosen by the leading magic bytes.
pub fn read_embeddings(path: &Path, recording_id: &str) -> Result<EmbeddingSet> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    let wrap = |e| IngestError::InFile { path: path.display().to_string(), source: Box::new(e) };
    if bytes.starts_with(EMBEDDING_MAGIC) {
        return parse_embeddings_binary(&bytes, recording_id).map_err(wrap);
    }
    let text = String::from_utf8(bytes).map_err(|_| wrap(IngestError::Binary { offset: 0, msg: "not UTF-8 text".into() }))?;
    parse_embeddings(&text, recording_id).map_err(wrap)
}

// frame features

/// Header `T d frame_step frame_length` (seconds), then `T` rows of `d` values.
pub fn parse_features(text: &str, recording_id: &str) -> Result<FrameFeatures> {
    let mut rows = Rows::new(text);
    let (hline, toks) = rows.next("a header")?;
    expect_fields(hline, &toks, 4)?;
    let t = count(hline, toks[0])?;
    let d = count(hline, toks[1])?;
    let step = secs(hline, toks[2])?;
    let len = secs(hline, toks[3])?;
    let mut data = Vec::with_capacity(t * d);
    for _ in 0..t {
        data.extend(rows.reals(d, "a feature row")?.1);
    }
    rows.finish()?;
    FrameFeatures::new(recording_id, step, len, d, data).map_err(invalid(hline))
}

pub fn emit_features(f: &FrameFeatures) -> String {
    let mut out = format!("{} {} {} {}\n", f.n_frames(), f.dim(), f.frame_step, f.frame_length);
    for row in f.rows() {
        push_row(&mut out, row.iter().copied());
    }
    out
}

// score matrices

/// Header `n`, then `n` rows of `n` values.
pub fn parse_score_matrix(text: &str) -> Result<ScoreMatrix> {
    let mut rows = Rows::new(text);
    let (hline, h) = rows.header(1)?;
    let n = h[0];
    if n == 0 {
        return err(hline, "score matrix must have n >= 1");
    }
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(rows.reals(n, "a score row")?.1);
    }
    rows.finish()?;
    ScoreMatrix::from_rows(&values).map_err(invalid(hline))
}

pub fn emit_score_matrix(s: &ScoreMatrix) -> String {
    let n = s.n();
    let mut out = format!("{n}\n");
    for i in 0..n {
        push_row(&mut out, (0..n).map(|j| s.get(i, j)));
    }
    out
}

// model files

/// Header `2d+1 d`, then the mean row, `d` rows of the between-speaker
/// covariance and `d` rows of the within-speaker covariance.
pub fn parse_plda(text: &str) -> Result<PldaModel> {
    let mut rows = Rows::new(text);
    let (hline, h) = rows.header(2)?;
    let d = h[1];
    if d == 0 || h[0] != 2 * d + 1 {
        return err(hline, format!("PLDA header must be `2d+1 d`, found `{} {}`", h[0], h[1]));
    }
    let mean = DVector::from_vec(rows.reals(d, "the mean row")?.1);
    let mut square = |what| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            let (_, r) = rows.reals(d, what)?;
            m.row_mut(i).copy_from_slice(&r);
        }
        Ok(m)
    };
    let b = square("a between-covariance row")?;
    let w = square("a within-covariance row")?;
    rows.finish()?;
    PldaModel::new(mean, b, w).map_err(invalid(hline))
}

pub fn emit_plda(m: &PldaModel) -> String {
    let d = m.dim();
    let mut out = format!("{} {d}\n", 2 * d + 1);
    push_row(&mut out, m.mean().iter().copied());
    for mat in [m.between(), m.within()] {
        for r in mat.row_iter() {
            push_row(&mut out, r.iter().copied());
        }
    }
    out
}

/// Header `d+1 d`, then the mean row and `d` rows of the transform.
pub fn parse_whitener(text: &str) -> Result<Whitener> {
    let mut rows = Rows::new(text);
    let (hline, h) = rows.header(2)?;
    let d = h[1];
    if d == 0 || h[0] != d + 1 {
        return err(hline, format!("whitener header must be `d+1 d`, found `{} {}`", h[0], h[1]));
    }
    let mean = DVector::from_vec(rows.reals(d, "the mean row")?.1);
    let mut transform = DMatrix::zeros(d, d);
    for i in 0..d {
        let (_, r) = rows.reals(d, "a transform row")?;
        transform.row_mut(i).copy_from_slice(&r);
    }
    rows.finish()?;
    Ok(Whitener { mean, transform })
}

pub fn emit_whitener(w: &Whitener) -> String {
    let d = w.dim();
    let mut out = format!("{} {d}\n", d + 1);
    push_row(&mut out, w.mean.iter().copied());
    for r in w.transform.row_iter() {
        push_row(&mut out, r.iter().copied());
    }
    out
}

/// Header `C d R`; `C` rows `weight m1..md v1..vd`; then `C·d` rows of `R`
/// values holding the total-variability matrix.
pub fn parse_vb_model(text: &str) -> Result<VbModel> {
    let mut rows = Rows::new(text);
    let (hline, h) = rows.header(3)?;
    let (c, d, r) = (h[0], h[1], h[2]);
    if c == 0 || d == 0 || r == 0 {
        return err(hline, "VB model sizes must be positive");
    }
    let (mut weights, mut means, mut vars) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..c {
        let (_, row) = rows.reals(1 + 2 * d, "a UBM component row")?;
        weights.push(row[0]);
        means.push(row[1..=d].to_vec());
        vars.push(row[d + 1..].to_vec());
    }
    let mut t = DMatrix::zeros(c * d, r);
    for i in 0..c * d {
        let (_, row) = rows.reals(r, "a T row")?;
        t.row_mut(i).copy_from_slice(&row);
    }
    rows.finish()?;
    let ubm = Gmm::new(weights, means, vars).map_err(invalid(hline))?;
    VbModel::new(ubm, t).map_err(invalid(hline))
}

pub fn emit_vb_model(m: &VbModel) -> String {
    let ubm = m.ubm();
    let mut out = format!("{} {} {}\n", ubm.n_components(), ubm.dim(), m.z_dim());
    for c in 0..ubm.n_components() {
        push_row(&mut out, std::iter::once(ubm.weights[c]).chain(ubm.means[c].iter().copied()).chain(ubm.variances[c].iter().copied()));
    }
    for r in m.t().row_iter() {
        push_row(&mut out, r.iter().copied());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seconds_are_exact() {
        assert_eq!(parse_secs("0.1"), Some(Millis(100)));
        assert_eq!(parse_secs("12.3456"), Some(Millis(12_346)));
        assert_eq!(parse_secs("12.3454"), Some(Millis(12_345)));
        assert_eq!(parse_secs("7"), Some(Millis(7_000)));
        assert_eq!(parse_secs(".5"), Some(Millis(500)));
        assert_eq!(parse_secs("-1.25"), Some(Millis(-1_250)));
        assert_eq!(parse_secs("1e1"), Some(Millis(10_000)));
        for bad in ["", ".", "1.2.3", "abc", "1,5", "nan", "--1"] {
            assert_eq!(parse_secs(bad), None, "{bad}");
        }
        // 0.1 + 0.2 style drift cannot happen
        assert_eq!(parse_secs("1001.007"), Some(Millis(1_001_007)));
    }

    #[test]
    fn rttm_examples() {
        let one = parse_rttm("SPEAKER rec1 1 0.00 10.00 <NA> <NA> A <NA> <NA>\n").unwrap();
        let ann = &one["rec1"];
        assert_eq!(ann.turns().len(), 1);
        assert_eq!(ann.turns()[0].interval(), Interval::ms(0, 10_000));

        let merged = parse_rttm(
            "SPKR-INFO rec1 1 <NA> <NA> <NA> unknown A <NA> <NA>\n\
             SPEAKER rec1 1 0.00 5.00 <NA> <NA> A <NA> <NA>\n\
             SPEAKER rec1 1 3.00 5.00 <NA> <NA> A <NA> <NA>\n",
        )
        .unwrap();
        assert_eq!(merged["rec1"].turns()[0].interval(), Interval::ms(0, 8_000));
        assert_eq!(emit_rttm(merged.values()).lines().count(), 1);
        assert_eq!(emit_rttm([]), "");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_rttm("\nSPEAKER rec1 1 0.00 <NA> <NA> A <NA> <NA>\n").unwrap_err();
        assert!(e.to_string().starts_with("line 2:"), "{e}");
        let e = parse_rttm("SPEAKER rec1 1 0.00 -1.00 <NA> <NA> A <NA> <NA>\n").unwrap_err();
        assert!(e.to_string().contains("negative duration"));
        let e = parse_embeddings("0 4\n", "r").unwrap_err();
        assert_eq!(e.to_string(), "line 1: empty embedding set");
        let e = parse_score_matrix("2\n1 2\n3 4 5\n").unwrap_err();
        assert!(e.to_string().starts_with("line 3:"), "{e}");
        let e = parse_score_matrix("2\n1 2\n").unwrap_err();
        assert!(e.to_string().contains("unexpected end"), "{e}");
        let e = parse_score_matrix("1\n1\n2\n").unwrap_err();
        assert!(e.to_string().contains("trailing"), "{e}");
        let e = parse_triples("r 1.0 0.5 extra\n").unwrap_err();
        assert!(e.to_string().starts_with("line 1:"));
    }

    #[test]
    fn embeddings_header_example() {
        let set = parse_embeddings("3 2\n0 1.5 1 2\n0.75 2.25 3 4\n1.5 3 5 6\n", "r").unwrap();
        assert_eq!((set.len(), set.dim()), (3, 2));
        assert_eq!(parse_embeddings(&emit_embeddings(&set), "r").unwrap(), set);
        assert_eq!(parse_embeddings_binary(&emit_embeddings_binary(&set), "r").unwrap(), set);
        assert!(parse_embeddings_binary(&emit_embeddings_binary(&set)[..30], "r").is_err());
    }
}
