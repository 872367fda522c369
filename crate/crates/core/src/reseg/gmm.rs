use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::clustering::kmeans;
use crate::linalg::{exp, ln, logsumexp, LN_2PI};
use crate::reseg::FrameAssignment;
use crate::{Error, FrameFeatures, Result};

/// Absolute lower bound on every variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Diagonal-covariance Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    // log w_c − ½(d·ln 2π + Σ ln σ²)
    norm: Vec<f64>,
    inv_var: Vec<Vec<f64>>,
}

impl Gmm {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Gmm> {
        let c = weights.len();
        if c == 0 || means.len() != c || variances.len() != c {
            return Err(Error::Shape(alloc::format!(
                "{} weights, {} means, {} variances",
                c,
                means.len(),
                variances.len()
            )));
        }
        let d = means[0].len();
        if d == 0 || means.iter().chain(&variances).any(|v| v.len() != d) {
            return Err(Error::Shape("GMM components differ in dimension".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::Config(alloc::format!("GMM weights sum to {total}")));
        }
        if variances.iter().flatten().any(|v| !(v.is_finite() && *v >= VARIANCE_FLOOR)) {
            return Err(Error::Config("GMM variances must be finite and >= 1e-6".into()));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("GMM means"));
        }
        let norm = weights
            .iter()
            .zip(&variances)
            .map(|(w, var)| ln(*w) - 0.5 * (d as f64 * LN_2PI + var.iter().map(|v| ln(*v)).sum::<f64>()))
            .collect();
        let inv_var = variances.iter().map(|v| v.iter().map(|x| 1.0 / x).collect()).collect();
        Ok(Gmm { weights, means, variances, norm, inv_var })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// `log w_c + log N(x; μ_c, Σ_c)` for every component.
    pub fn component_log_probs(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let mut q = 0.0;
            for ((xi, mi), iv) in x.iter().zip(&self.means[c]).zip(&self.inv_var[c]) {
                let d = xi - mi;
                q += d * d * iv;
            }
            *o = self.norm[c] - 0.5 * q;
        }
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.n_components()];
        self.component_log_probs(x, &mut buf);
        logsumexp(&buf)
    }

    /// Component posteriors of one frame; returns the frame log-likelihood.
    pub fn posteriors(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.component_log_probs(x, out);
        let total = logsumexp(out);
        for o in out.iter_mut() {
            *o = exp(*o - total);
        }
        total
    }
}

/// Result of an EM fit.
#[derive(Clone, Debug)]
pub struct GmmFit {
    pub gmm: Gmm,
    /// Total data log-likelihood before each M-step and after the last one.
    pub log_likelihoods: Vec<f64>,
    pub warnings: Vec<String>,
}

fn sq_(x: f64) -> f64 {
    x * x
}

const EM_MAX_ITERS: usize = 100;
const EM_TOL: f64 = 1e-4;
const KMEANS_RESTARTS: usize = 5;

/// Diagonal-covariance EM, initialised from k-means. Stops when the mean
/// per-frame log-likelihood improves by less than `1e-4` or after 100
/// iterations. Asking for more components than there are distinct frames
/// falls back to one component per distinct frame.
pub fn fit_gmm(frames: &[&[f64]], n_components: usize, rng_seed: u64) -> Result<GmmFit> {
    let n = frames.len();
    if n == 0 || n_components == 0 {
        return Err(Error::NotEnoughData("GMM needs frames and at least one component".into()));
    }
    let d = frames[0].len();
    if let Some(bad) = frames.iter().find(|f| f.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
    }
    let mut warnings = Vec::new();
    let mut sorted = frames.to_vec();
    sorted.sort_by(|a, b| a.iter().zip(*b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal));
    sorted.dedup();
    let distinct = sorted.len();
    let mut c = n_components;
    if distinct < c {
        warnings.push(alloc::format!("{distinct} distinct frames for {c} components; fitting {distinct} components"));
        log::warn!("{}", warnings.last().unwrap());
        c = distinct;
    }

    let global_mean: Vec<f64> = (0..d).map(|j| frames.iter().map(|f| f[j]).sum::<f64>() / n as f64).collect();
    let global_var: Vec<f64> = (0..d)
        .map(|j| frames.iter().map(|f| sq_(f[j] - global_mean[j])).sum::<f64>() / n as f64)
        .collect();
    let floor: Vec<f64> = global_var.iter().map(|v| (1e-3 * v).max(VARIANCE_FLOOR)).collect();

    let points: Vec<Vec<f64>> = frames.iter().map(|f| f.to_vec()).collect();
    let km = kmeans(&points, c, KMEANS_RESTARTS, 20, rng_seed);
    let mut weights = vec![0.0; c];
    let mut means = km.centroids;
    let mut variances = vec![vec![0.0; d]; c];
    for (f, &l) in frames.iter().zip(&km.labels) {
        weights[l] += 1.0;
        for j in 0..d {
            variances[l][j] += sq_(f[j] - means[l][j]);
        }
    }
    for k in 0..c {
        for j in 0..d {
            variances[k][j] = if weights[k] > 1.0 { variances[k][j] / weights[k] } else { global_var[j] };
            variances[k][j] = f64::max(variances[k][j], floor[j]);
        }
        weights[k] /= n as f64;
    }
    // drop empty k-means clusters
    let keep: Vec<usize> = (0..c).filter(|&k| weights[k] > 0.0).collect();
    weights = keep.iter().map(|&k| weights[k]).collect();
    means = keep.iter().map(|&k| means[k].clone()).collect();
    variances = keep.iter().map(|&k| variances[k].clone()).collect();
    let mut gmm = Gmm::new(weights, means, variances)?;

    let mut log_likelihoods = Vec::new();
    let mut resp = vec![0.0; n * gmm.n_components()];
    for iter in 0..=EM_MAX_ITERS {
        let k = gmm.n_components();
        resp.resize(n * k, 0.0);
        let mut total = 0.0;
        for (i, f) in frames.iter().enumerate() {
            total += gmm.posteriors(f, &mut resp[i * k..(i + 1) * k]);
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("GMM log-likelihood"));
        }
        log_likelihoods.push(total);
        if let [.., prev, last] = log_likelihoods[..] {
            if (last - prev) / (n as f64) < EM_TOL {
                break;
            }
        }
        if iter == EM_MAX_ITERS {
            break;
        }
        // M-step
        let mut nk = vec![0.0; k];
        let mut sum = vec![vec![0.0; d]; k];
        let mut sq = vec![vec![0.0; d]; k];
        for (i, f) in frames.iter().enumerate() {
            for c in 0..k {
                let r = resp[i * k + c];
                if r == 0.0 {
                    continue;
                }
                nk[c] += r;
                for j in 0..d {
                    sum[c][j] += r * f[j];
                }
            }
        }
        let mut means = vec![vec![0.0; d]; k];
        for c in 0..k {
            if nk[c] > 0.0 {
                for j in 0..d {
                    means[c][j] = sum[c][j] / nk[c];
                }
            }
        }
        for (i, f) in frames.iter().enumerate() {
            for c in 0..k {
                let r = resp[i * k + c];
                if r == 0.0 {
                    continue;
                }
                for j in 0..d {
                    sq[c][j] += r * sq_(f[j] - means[c][j]);
                }
            }
        }
        let alive: Vec<usize> = (0..k).filter(|&c| nk[c] > 1e-12 * n as f64).collect();
        let mass: f64 = alive.iter().map(|&c| nk[c]).sum();
        let weights = alive.iter().map(|&c| nk[c] / mass).collect();
        let variances = alive
            .iter()
            .map(|&c| (0..d).map(|j| (sq[c][j] / nk[c]).max(floor[j])).collect())
            .collect();
        let means = alive.iter().map(|&c| means[c].clone()).collect();
        gmm = Gmm::new(weights, means, variances)?;
    }
    Ok(GmmFit { gmm, log_likelihoods, warnings })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GmmResegConfig {
    pub n_components: usize,
    pub max_iters: usize,
    pub rng_seed: u64,
}

impl Default for GmmResegConfig {
    fn default() -> Self {
        GmmResegConfig { n_components: 8, max_iters: 5, rng_seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GmmResegResult {
    pub assignment: FrameAssignment,
    /// Number of fit-and-reassign passes run.
    pub iterations: usize,
    pub warnings: Vec<String>,
    /// Every EM trace from every speaker fit, in order.
    pub em_traces: Vec<Vec<f64>>,
}

/// Fits one GMM per speaker on its frames and moves every speech frame to the
/// speaker whose GMM scores it highest, repeating until nothing moves or
/// `max_iters` passes are done. Non-speech frames are left alone; a speaker
/// that loses all its frames is dropped from later passes.
pub fn gmm_resegment(
    features: &FrameFeatures,
    init: &FrameAssignment,
    cfg: &GmmResegConfig,
) -> Result<GmmResegResult> {
    if features.n_frames() != init.n_frames() {
        return Err(Error::Shape(alloc::format!(
            "{} feature frames vs {} labels",
            features.n_frames(),
            init.n_frames()
        )));
    }
    let mut labels = init.labels.clone();
    let mut warnings = Vec::new();
    let mut em_traces = Vec::new();
    let present = |labels: &[Option<usize>]| {
        let mut seen = vec![false; init.n_speakers];
        labels.iter().flatten().for_each(|&l| seen[l] = true);
        (0..init.n_speakers).filter(|&s| seen[s]).collect::<Vec<_>>()
    };
    if present(&labels).len() < 2 {
        warnings.push("fewer than two speakers; resegmentation skipped".into());
        log::warn!("{}", warnings.last().unwrap());
        return Ok(GmmResegResult { assignment: init.clone(), iterations: 0, warnings, em_traces });
    }
    let mut iterations = 0;
    for pass in 0..cfg.max_iters {
        let speakers = present(&labels);
        let mut models = Vec::with_capacity(speakers.len());
        for &s in &speakers {
            let own: Vec<&[f64]> = (0..labels.len())
                .filter(|&t| labels[t] == Some(s))
                .map(|t| features.row(t))
                .collect();
            let seed = cfg.rng_seed.wrapping_add((pass * 1_000 + s) as u64);
            let fit = fit_gmm(&own, cfg.n_components, seed)?;
            warnings.extend(fit.warnings);
            em_traces.push(fit.log_likelihoods);
            models.push((s, fit.gmm));
        }
        iterations += 1;
        let mut changed = false;
        for t in 0..labels.len() {
            if labels[t].is_none() {
                continue;
            }
            let x = features.row(t);
            let mut best = (f64::NEG_INFINITY, labels[t].unwrap());
            for (s, g) in &models {
                let ll = g.log_likelihood(x);
                if ll > best.0 {
                    best = (ll, *s);
                }
            }
            if labels[t] != Some(best.1) {
                labels[t] = Some(best.1);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let assignment = FrameAssignment { labels, n_speakers: init.n_speakers, posteriors: None };
    Ok(GmmResegResult { assignment, iterations, warnings, em_traces })
}
