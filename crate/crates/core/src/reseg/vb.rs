//! Variational Bayes HMM resegmentation with eigenvoice speaker priors.
//!
//! Speaker `s` has latent `z_s ~ N(0, I)` and supervector `m + T z_s`. Frame
//! log-likelihoods are approximated through fixed UBM component posteriors
//! and tempered by `stat_scale`, so with `k = stat_scale` the bound is
//!
//! `F = Σ_n Σ_s r_ns k e_ns + E[log p(path)] + H[q(path)] − Σ_s KL(q(z_s) ‖ N(0, I))`
//!
//! where `e_ns = log p_ubm(x_n) + ρ_nᵀ a_s − ½ Σ_c γ_nc tr(VᵀΣ⁻¹V_c (L_s⁻¹ + a_s a_sᵀ))`.
//! Both updates are exact coordinate steps on `F`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{exp, ln, logsumexp, sqrt, spd_logdet_inverse, sym_eigen};
use crate::reseg::{fit_gmm, FrameAssignment, Gmm};
use crate::{Error, FrameFeatures, Result};

/// UBM plus total-variability matrix `T` of shape `(C·d) × R`.
#[derive(Clone, Debug)]
pub struct VbModel {
    ubm: Gmm,
    t: DMatrix<f64>,
    // per component: V_cᵀ Σ_c⁻¹ (R × d) and V_cᵀ Σ_c⁻¹ V_c (R × R)
    vtsi: Vec<DMatrix<f64>>,
    vtiev: Vec<DMatrix<f64>>,
}

impl VbModel {
    pub fn new(ubm: Gmm, t: DMatrix<f64>) -> Result<VbModel> {
        let (c, d) = (ubm.n_components(), ubm.dim());
        if t.nrows() != c * d || t.ncols() == 0 {
            return Err(Error::Shape(alloc::format!(
                "T is {}x{}, UBM needs {} rows",
                t.nrows(),
                t.ncols(),
                c * d
            )));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("total-variability matrix"));
        }
        if let Some(j) = (0..t.ncols()).find(|&j| t.column(j).amax() == 0.0) {
            return Err(Error::DegenerateCovariance(alloc::format!("column {j} of T is zero")));
        }
        let mut vtsi = Vec::with_capacity(c);
        let mut vtiev = Vec::with_capacity(c);
        for k in 0..c {
            let v = t.rows(k * d, d);
            let mut siv = v.clone_owned();
            for (i, mut row) in siv.row_iter_mut().enumerate() {
                row /= ubm.variances[k][i];
            }
            vtiev.push(v.transpose() * &siv);
            vtsi.push(siv.transpose());
        }
        Ok(VbModel { ubm, t, vtsi, vtiev })
    }

    pub fn ubm(&self) -> &Gmm {
        &self.ubm
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn z_dim(&self) -> usize {
        self.t.ncols()
    }

    /// Supervector mean of component `c` for latent `z`.
    pub fn speaker_mean(&self, c: usize, z: &[f64]) -> Vec<f64> {
        let d = self.ubm.dim();
        let shift = self.t.rows(c * d, d) * DVector::from_column_slice(z);
        self.ubm.means[c].iter().zip(shift.iter()).map(|(m, s)| m + s).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct VbConfig {
    pub max_iters: usize,
    pub downsample: usize,
    pub loop_prob: f64,
    pub stat_scale: f64,
}

impl Default for VbConfig {
    fn default() -> Self {
        VbConfig { max_iters: 1, downsample: 3, loop_prob: 0.99, stat_scale: 0.3 }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.loop_prob > 0.0 && self.loop_prob < 1.0) {
            return Err(Error::Config(alloc::format!("loop_prob {} not in (0, 1)", self.loop_prob)));
        }
        if self.downsample == 0 {
            return Err(Error::Config("downsample must be at least 1".into()));
        }
        if !(self.stat_scale > 0.0 && self.stat_scale.is_finite()) {
            return Err(Error::Config(alloc::format!("stat_scale {} must be positive", self.stat_scale)));
        }
        Ok(())
    }
}

/// `S × S` HMM transitions: `loop_prob` on the diagonal, the rest spread evenly.
pub fn transition_matrix(n_states: usize, loop_prob: f64) -> DMatrix<f64> {
    if n_states == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    let off = (1.0 - loop_prob) / (n_states - 1) as f64;
    DMatrix::from_fn(n_states, n_states, |i, j| if i == j { loop_prob } else { off })
}

/// Per-frame sufficient statistics against the UBM.
#[derive(Clone, Debug)]
pub struct VbStats {
    /// `n × C` component posteriors.
    pub gamma: DMatrix<f64>,
    /// `R × n`; column `n` is `Σ_c γ_nc V_cᵀ Σ_c⁻¹ (x_n − m_c)`.
    pub rho: DMatrix<f64>,
    /// UBM log-likelihood of each frame.
    pub log_ubm: Vec<f64>,
}

impl VbStats {
    pub fn compute(model: &VbModel, frames: &[&[f64]]) -> Result<VbStats> {
        let (c, d, r) = (model.ubm.n_components(), model.ubm.dim(), model.z_dim());
        let n = frames.len();
        let mut gamma = DMatrix::zeros(n, c);
        let mut rho = DMatrix::zeros(r, n);
        let mut log_ubm = Vec::with_capacity(n);
        let mut post = vec![0.0; c];
        let mut centered = DVector::zeros(d);
        for (i, x) in frames.iter().enumerate() {
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: x.len() });
            }
            log_ubm.push(model.ubm.posteriors(x, &mut post));
            for k in 0..c {
                gamma[(i, k)] = post[k];
                if post[k] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    centered[j] = x[j] - model.ubm.means[k][j];
                }
                let proj = &model.vtsi[k] * &centered;
                rho.column_mut(i).axpy(post[k], &proj, 1.0);
            }
        }
        if log_ubm.iter().chain(rho.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("VB statistics"));
        }
        Ok(VbStats { gamma, rho, log_ubm })
    }

    pub fn len(&self) -> usize {
        self.log_ubm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_ubm.is_empty()
    }
}

/// `q(z_s) = N(a_s, L_s⁻¹)` for every speaker.
#[derive(Clone, Debug)]
pub(crate) struct SpeakerPosteriors {
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    logdet_precision: Vec<f64>,
}

impl SpeakerPosteriors {
    fn prior(n_speakers: usize, r: usize) -> SpeakerPosteriors {
        SpeakerPosteriors {
            means: vec![DVector::zeros(r); n_speakers],
            covs: vec![DMatrix::identity(r, r); n_speakers],
            logdet_precision: vec![0.0; n_speakers],
        }
    }

    fn kl(&self) -> f64 {
        let mut total = 0.0;
        for s in 0..self.means.len() {
            let r = self.means[s].len() as f64;
            total += 0.5 * (self.covs[s].trace() + self.means[s].norm_squared() - r + self.logdet_precision[s]);
        }
        total
    }
}

/// Label posterior over HMM paths, summarised by what the bound needs.
#[derive(Clone, Debug)]
pub struct LabelPosterior {
    pub n_states: usize,
    /// `n × S` row-major marginals.
    pub resp: Vec<f64>,
    /// Expected transition counts `Σ_n q(s_{n−1} = i, s_n = j)`.
    pub pair_counts: DMatrix<f64>,
    /// Entropy of the path distribution.
    pub entropy: f64,
    /// Log partition function, when produced by forward–backward.
    pub log_z: Option<f64>,
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * ln(x)
    } else {
        0.0
    }
}

impl LabelPosterior {
    /// A path distribution with independent frames.
    pub fn factorized(resp: Vec<f64>, n_states: usize) -> LabelPosterior {
        let n = resp.len() / n_states;
        let mut pair_counts = DMatrix::zeros(n_states, n_states);
        for t in 1..n {
            for i in 0..n_states {
                for j in 0..n_states {
                    pair_counts[(i, j)] += resp[(t - 1) * n_states + i] * resp[t * n_states + j];
                }
            }
        }
        let entropy = -resp.iter().map(|&r| xlogx(r)).sum::<f64>();
        LabelPosterior { n_states, resp, pair_counts, entropy, log_z: None }
    }

    pub fn hard(labels: &[usize], n_states: usize) -> LabelPosterior {
        let mut resp = vec![0.0; labels.len() * n_states];
        for (t, &l) in labels.iter().enumerate() {
            resp[t * n_states + l] = 1.0;
        }
        LabelPosterior::factorized(resp, n_states)
    }

    pub fn len(&self) -> usize {
        self.resp.len() / self.n_states
    }

    pub fn is_empty(&self) -> bool {
        self.resp.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.resp[t * self.n_states..(t + 1) * self.n_states]
    }

    /// Mean per-frame entropy of the marginals.
    pub fn marginal_entropy(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        -self.resp.iter().map(|&r| xlogx(r)).sum::<f64>() / self.len() as f64
    }
}

/// Forward–backward over `n × S` row-major log emissions with a uniform
/// initial state.
pub fn forward_backward(loglik: &[f64], n_states: usize, trans: &DMatrix<f64>) -> Result<LabelPosterior> {
    let s = n_states;
    if s == 0 || loglik.len() % s != 0 || trans.nrows() != s || trans.ncols() != s {
        return Err(Error::Shape("forward-backward shapes disagree".into()));
    }
    if loglik.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("emission log-likelihoods"));
    }
    let n = loglik.len() / s;
    if n == 0 {
        return Ok(LabelPosterior::factorized(Vec::new(), s));
    }
    let log_a = trans.map(ln);
    let log_init = -ln(s as f64);
    let mut alpha = vec![0.0; n * s];
    let mut beta = vec![0.0; n * s];
    let mut buf = vec![0.0; s];
    for j in 0..s {
        alpha[j] = log_init + loglik[j];
    }
    for t in 1..n {
        for j in 0..s {
            for i in 0..s {
                buf[i] = alpha[(t - 1) * s + i] + log_a[(i, j)];
            }
            alpha[t * s + j] = loglik[t * s + j] + logsumexp(&buf);
        }
    }
    for t in (0..n - 1).rev() {
        for i in 0..s {
            for j in 0..s {
                buf[j] = log_a[(i, j)] + loglik[(t + 1) * s + j] + beta[(t + 1) * s + j];
            }
            beta[t * s + i] = logsumexp(&buf);
        }
    }
    let log_z = logsumexp(&alpha[(n - 1) * s..]);

    let mut resp = vec![0.0; n * s];
    for t in 0..n {
        let row = &mut resp[t * s..(t + 1) * s];
        for j in 0..s {
            row[j] = exp(alpha[t * s + j] + beta[t * s + j] - log_z);
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|r| *r /= sum);
    }
    let mut pair_counts = DMatrix::zeros(s, s);
    let mut pair_xlogx = 0.0;
    for t in 1..n {
        for i in 0..s {
            for j in 0..s {
                let xi = exp(alpha[(t - 1) * s + i] + log_a[(i, j)] + loglik[t * s + j] + beta[t * s + j] - log_z);
                pair_counts[(i, j)] += xi;
                pair_xlogx += xlogx(xi);
            }
        }
    }
    // chain entropy: pairwise terms minus the double-counted interior nodes
    let entropy = if n == 1 {
        -resp.iter().map(|&r| xlogx(r)).sum::<f64>()
    } else {
        let interior: f64 = resp[s..(n - 1) * s].iter().map(|&r| xlogx(r)).sum();
        -pair_xlogx + interior
    };
    Ok(LabelPosterior { n_states: s, resp, pair_counts, entropy, log_z: Some(log_z) })
}

/// `n × S` row-major tempered emissions `k e_ns`.
fn expected_loglik(stats: &VbStats, model: &VbModel, qz: &SpeakerPosteriors, scale: f64) -> Vec<f64> {
    let n_spk = qz.means.len();
    let c = model.ubm.n_components();
    let mut tau = DMatrix::zeros(c, n_spk);
    let mut a = DMatrix::zeros(model.z_dim(), n_spk);
    for s in 0..n_spk {
        let m = &qz.covs[s] + &qz.means[s] * qz.means[s].transpose();
        for k in 0..c {
            tau[(k, s)] = model.vtiev[k].component_mul(&m).sum();
        }
        a.set_column(s, &qz.means[s]);
    }
    let lin = stats.rho.tr_mul(&a);
    let quad = &stats.gamma * &tau;
    let mut out = vec![0.0; stats.len() * n_spk];
    for t in 0..stats.len() {
        for s in 0..n_spk {
            out[t * n_spk + s] = scale * (stats.log_ubm[t] + lin[(t, s)] - 0.5 * quad[(t, s)]);
        }
    }
    out
}

fn update_speakers(stats: &VbStats, model: &VbModel, q: &LabelPosterior, scale: f64) -> Result<SpeakerPosteriors> {
    let (n_spk, r) = (q.n_states, model.z_dim());
    let resp = DMatrix::from_row_slice(q.len(), n_spk, &q.resp);
    let zeroth = stats.gamma.tr_mul(&resp);
    let first = &stats.rho * &resp;
    let mut out = SpeakerPosteriors::prior(n_spk, r);
    for s in 0..n_spk {
        let mut precision = DMatrix::identity(r, r);
        for (k, vtiev) in model.vtiev.iter().enumerate() {
            precision += vtiev * (scale * zeroth[(k, s)]);
        }
        let (logdet, cov) = spd_logdet_inverse(&precision)?;
        out.means[s] = &cov * first.column(s) * scale;
        out.covs[s] = cov;
        out.logdet_precision[s] = logdet;
    }
    Ok(out)
}

/// The variational lower bound, evaluated term by term.
pub(crate) fn elbo(
    stats: &VbStats,
    model: &VbModel,
    qz: &SpeakerPosteriors,
    q: &LabelPosterior,
    trans: &DMatrix<f64>,
    scale: f64,
) -> f64 {
    let s = q.n_states;
    let ll = expected_loglik(stats, model, qz, scale);
    let data: f64 = ll.iter().zip(&q.resp).map(|(l, r)| l * r).sum();
    let init = if q.is_empty() { 0.0 } else { -ln(s as f64) };
    let mut path = init;
    for i in 0..s {
        for j in 0..s {
            if q.pair_counts[(i, j)] != 0.0 {
                path += q.pair_counts[(i, j)] * ln(trans[(i, j)]);
            }
        }
    }
    data + path + q.entropy - qz.kl()
}

#[derive(Clone, Debug)]
pub struct VbResult {
    pub assignment: FrameAssignment,
    /// Bound after initialisation, then after each speaker and label update.
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    /// Differential entropy of each speaker's latent posterior `q(z_s)`.
    pub latent_entropy: Vec<f64>,
}

/// Entropy of `N(·, L⁻¹)` in `r` dimensions.
pub fn gaussian_entropy(r: usize, logdet_precision: f64) -> f64 {
    0.5 * r as f64 * (1.0 + crate::linalg::LN_2PI) - 0.5 * logdet_precision
}

/// Refines `init` on its speech frames. A soft `init.posteriors` is used as the
/// starting label posterior when present; otherwise the hard labels are.
pub fn vb_resegment(features: &FrameFeatures, init: &FrameAssignment, model: &VbModel, cfg: &VbConfig) -> Result<VbResult> {
    cfg.validate()?;
    if features.dim() != model.ubm.dim() {
        return Err(Error::DimensionMismatch { expected: model.ubm.dim(), found: features.dim() });
    }
    if features.n_frames() != init.n_frames() {
        return Err(Error::Shape(alloc::format!(
            "{} feature frames vs {} labels",
            features.n_frames(),
            init.n_frames()
        )));
    }
    let n_spk = init.n_speakers;
    let speech: Vec<usize> = (0..init.n_frames()).filter(|&t| init.labels[t].is_some()).collect();
    if n_spk < 2 || speech.is_empty() {
        let prior = gaussian_entropy(model.z_dim(), 0.0);
        return Ok(VbResult {
            assignment: init.clone(),
            elbo_trace: Vec::new(),
            iterations: 0,
            latent_entropy: vec![prior; n_spk],
        });
    }
    let ds = cfg.downsample;
    let kept: Vec<usize> = speech.iter().copied().step_by(ds).collect();
    let frames: Vec<&[f64]> = kept.iter().map(|&t| features.row(t)).collect();
    let stats = VbStats::compute(model, &frames)?;

    let mut q = match &init.posteriors {
        Some(post) if post.len() == init.n_frames() * n_spk => {
            let mut resp = Vec::with_capacity(kept.len() * n_spk);
            for &t in &kept {
                let row = &post[t * n_spk..(t + 1) * n_spk];
                let sum: f64 = row.iter().sum();
                if !(sum > 0.0 && sum.is_finite()) || row.iter().any(|&p| p < 0.0) {
                    return Err(Error::Config(alloc::format!("initial posterior row {t} is not a distribution")));
                }
                resp.extend(row.iter().map(|p| p / sum));
            }
            LabelPosterior::factorized(resp, n_spk)
        }
        Some(_) => return Err(Error::Shape("initial posteriors are not T x S".into())),
        None => {
            let labels: Vec<usize> = kept.iter().map(|&t| init.labels[t].unwrap()).collect();
            LabelPosterior::hard(&labels, n_spk)
        }
    };
    let trans = transition_matrix(n_spk, cfg.loop_prob);
    let mut qz = SpeakerPosteriors::prior(n_spk, model.z_dim());
    let mut elbo_trace = vec![elbo(&stats, model, &qz, &q, &trans, cfg.stat_scale)];
    for it in 0..cfg.max_iters {
        qz = update_speakers(&stats, model, &q, cfg.stat_scale)?;
        elbo_trace.push(elbo(&stats, model, &qz, &q, &trans, cfg.stat_scale));
        let ll = expected_loglik(&stats, model, &qz, cfg.stat_scale);
        q = forward_backward(&ll, n_spk, &trans)?;
        elbo_trace.push(elbo(&stats, model, &qz, &q, &trans, cfg.stat_scale));
        log::debug!("VB iteration {}: ELBO {}", it + 1, elbo_trace.last().unwrap());
    }

    let mut labels = vec![None; init.n_frames()];
    let mut posteriors = vec![0.0; init.n_frames() * n_spk];
    for (p, &t) in speech.iter().enumerate() {
        let j = ((p + ds / 2) / ds).min(kept.len() - 1);
        let row = q.row(j);
        let mut best = 0;
        for s in 1..n_spk {
            if row[s] > row[best] {
                best = s;
            }
        }
        labels[t] = Some(best);
        posteriors[t * n_spk..(t + 1) * n_spk].copy_from_slice(row);
    }
    let assignment = FrameAssignment { labels, n_speakers: n_spk, posteriors: Some(posteriors) };
    let latent_entropy = qz.logdet_precision.iter().map(|&l| gaussian_entropy(model.z_dim(), l)).collect();
    Ok(VbResult { assignment, elbo_trace, iterations: cfg.max_iters, latent_entropy })
}

/// Relevance factor shrinking per-speaker offsets toward the UBM.
const RELEVANCE: f64 = 16.0;

/// Trains a UBM on every speech frame and a PPCA-style `T` from per-speaker
/// mean offsets. Each speaker of each recording counts as a distinct speaker.
pub fn train_vb_model(
    data: &[(&FrameFeatures, &FrameAssignment)],
    n_components: usize,
    rank: usize,
    rng_seed: u64,
) -> Result<VbModel> {
    if rank == 0 {
        return Err(Error::Config("rank must be at least 1".into()));
    }
    let mut all = Vec::new();
    for (feats, fa) in data {
        if feats.n_frames() != fa.n_frames() {
            return Err(Error::Shape(alloc::format!(
                "{} feature frames vs {} labels",
                feats.n_frames(),
                fa.n_frames()
            )));
        }
        all.extend((0..fa.n_frames()).filter(|&t| fa.labels[t].is_some()).map(|t| feats.row(t)));
    }
    let ubm = fit_gmm(&all, n_components, rng_seed)?.gmm;
    let (c, d) = (ubm.n_components(), ubm.dim());

    let mut offsets: Vec<Vec<f64>> = Vec::new();
    let mut post = vec![0.0; c];
    for (feats, fa) in data {
        for s in 0..fa.n_speakers {
            let mut zeroth = vec![0.0; c];
            let mut first = vec![0.0; c * d];
            let mut any = false;
            for t in (0..fa.n_frames()).filter(|&t| fa.labels[t] == Some(s)) {
                any = true;
                let x = feats.row(t);
                ubm.posteriors(x, &mut post);
                for k in 0..c {
                    zeroth[k] += post[k];
                    for j in 0..d {
                        first[k * d + j] += post[k] * (x[j] - ubm.means[k][j]);
                    }
                }
            }
            if !any {
                continue;
            }
            let row = (0..c * d)
                .map(|i| first[i] / (zeroth[i / d] + RELEVANCE) / sqrt(ubm.variances[i / d][i % d]))
                .collect();
            offsets.push(row);
        }
    }
    let n_spk = offsets.len();
    if n_spk == 0 {
        return Err(Error::NotEnoughData("no labeled speakers to train T".into()));
    }
    let dmat = DMatrix::from_fn(n_spk, c * d, |i, j| offsets[i][j]);
    let gram = &dmat * dmat.transpose() / n_spk as f64;
    let (vals, vecs) = sym_eigen(&gram)?;
    let top = vals.last().copied().unwrap_or(0.0);
    let cols: Vec<usize> = (0..n_spk).rev().take(rank.min(n_spk)).filter(|&k| vals[k] > 1e-10 * top && top > 0.0).collect();
    if cols.is_empty() {
        return Err(Error::NotEnoughData("speaker offsets have no spread".into()));
    }
    let mut t = DMatrix::zeros(c * d, cols.len());
    for (out, &k) in cols.iter().enumerate() {
        let col = dmat.tr_mul(&vecs.column(k)) / sqrt(n_spk as f64);
        for i in 0..c * d {
            t[(i, out)] = col[i] * sqrt(ubm.variances[i / d][i % d]);
        }
    }
    VbModel::new(ubm, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{random_vb_model, sample_vb_recording, VbRecordingSpec};

    #[test]
    fn transition_rows_sum_to_one() {
        for s in 1..9 {
            let a = transition_matrix(s, 0.99);
            for row in a.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
        assert!(VbConfig { loop_prob: 1.0, ..Default::default() }.validate().is_err());
        assert!(VbConfig { downsample: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn forward_backward_matches_path_enumeration() {
        let (n, s) = (4, 3);
        let ll: Vec<f64> = (0..n * s).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.8).collect();
        let trans = DMatrix::from_row_slice(3, 3, &[0.7, 0.2, 0.1, 0.25, 0.5, 0.25, 0.1, 0.3, 0.6]);
        let mut z = 0.0;
        let mut marg = vec![0.0; n * s];
        let mut ent = 0.0;
        let mut weights = Vec::new();
        for code in 0..s.pow(n as u32) {
            let path: Vec<usize> = (0..n).map(|t| code / s.pow(t as u32) % s).collect();
            let mut w = ll[path[0]] - ln(s as f64);
            for t in 1..n {
                w += ln(trans[(path[t - 1], path[t])]) + ll[t * s + path[t]];
            }
            weights.push((path, exp(w)));
        }
        for (_, w) in &weights {
            z += w;
        }
        for (path, w) in &weights {
            let p = w / z;
            ent -= p * ln(p);
            for t in 0..n {
                marg[t * s + path[t]] += p;
            }
        }
        let q = forward_backward(&ll, s, &trans).unwrap();
        assert!((q.log_z.unwrap() - ln(z)).abs() < 1e-12);
        assert!((q.entropy - ent).abs() < 1e-12);
        for (a, b) in q.resp.iter().zip(&marg) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((q.pair_counts.sum() - (n - 1) as f64).abs() < 1e-12);
    }

    fn two_speaker_case(seed: u64) -> (VbModel, FrameFeatures, Vec<Option<usize>>) {
        let model = random_vb_model(8, 6, 4, 1.0, seed);
        let spec = VbRecordingSpec { n_speakers: 2, n_frames: 2_400, ..Default::default() };
        let (feats, truth) = sample_vb_recording(&model, &spec, seed + 100).unwrap();
        (model, feats, truth)
    }

    fn shifted_init(truth: &[Option<usize>], shift: usize) -> Vec<Option<usize>> {
        // every speaker change arrives `shift` frames late
        let mut init = truth.to_vec();
        for t in 1..truth.len() {
            if let (Some(a), Some(b)) = (truth[t - 1], truth[t]) {
                if a != b {
                    for u in t..(t + shift).min(truth.len()) {
                        if init[u].is_some() {
                            init[u] = Some(a);
                        }
                    }
                }
            }
        }
        init
    }

    #[test]
    fn recovers_generating_labels() {
        for seed in 0..3 {
            let (model, feats, truth) = two_speaker_case(seed);
            let init = FrameAssignment::new(shifted_init(&truth, 40), 2).unwrap();
            let out = vb_resegment(&feats, &init, &model, &VbConfig::default()).unwrap();
            let acc = out.assignment.accuracy_against(&truth);
            assert!(acc >= 0.98, "seed {seed}: {acc}");
            assert!(out.elbo_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()), "{:?}", out.elbo_trace);
            let post = out.assignment.posteriors.as_ref().unwrap();
            for t in 0..truth.len() {
                let sum: f64 = post[t * 2..t * 2 + 2].iter().sum();
                if out.assignment.labels[t].is_some() {
                    assert!((sum - 1.0).abs() < 1e-8);
                } else {
                    assert_eq!(sum, 0.0);
                }
            }
        }
    }

    #[test]
    fn bound_after_label_update_equals_log_partition_minus_kl() {
        let (model, feats, truth) = two_speaker_case(11);
        let kept: Vec<&[f64]> = (0..truth.len()).filter(|&t| truth[t].is_some()).step_by(3).map(|t| feats.row(t)).collect();
        let labels: Vec<usize> = (0..truth.len()).filter_map(|t| truth[t]).step_by(3).collect();
        let stats = VbStats::compute(&model, &kept).unwrap();
        let trans = transition_matrix(2, 0.99);
        let q0 = LabelPosterior::hard(&labels, 2);
        let qz = update_speakers(&stats, &model, &q0, 0.3).unwrap();
        let ll = expected_loglik(&stats, &model, &qz, 0.3);
        let q = forward_backward(&ll, 2, &trans).unwrap();
        let f = elbo(&stats, &model, &qz, &q, &trans, 0.3);
        let expected = q.log_z.unwrap() - qz.kl();
        assert!((f - expected).abs() < 1e-7 * expected.abs(), "{f} vs {expected}");
        // the z update is the exact maximiser: nudging it lowers the bound
        let mut worse = qz.clone();
        worse.means[0][0] += 0.05;
        assert!(elbo(&stats, &model, &worse, &q0, &trans, 0.3) < elbo(&stats, &model, &qz, &q0, &trans, 0.3));
    }

    #[test]
    fn single_speaker_start_improves_bound() {
        let (model, feats, truth) = two_speaker_case(5);
        let labels: Vec<Option<usize>> = truth.iter().map(|l| l.map(|_| 0)).collect();
        let init = FrameAssignment::new(labels, 2).unwrap();
        let out = vb_resegment(&feats, &init, &model, &VbConfig::default()).unwrap();
        let tr = &out.elbo_trace;
        assert_eq!(tr.len(), 3);
        assert!(tr[2] > tr[0] && tr[1] >= tr[0] && tr[2] >= tr[1], "{tr:?}");
        let prior = gaussian_entropy(model.z_dim(), 0.0);
        assert!(out.latent_entropy[0] < prior);
        assert!(out.latent_entropy.iter().sum::<f64>() < 2.0 * prior);
    }

    #[test]
    fn soft_start_is_accepted() {
        let (model, feats, truth) = two_speaker_case(6);
        let init_labels = shifted_init(&truth, 30);
        let mut init = FrameAssignment::new(init_labels.clone(), 2).unwrap();
        let soft = init_labels.iter().flat_map(|l| match l {
            Some(0) => [0.8, 0.2],
            Some(_) => [0.2, 0.8],
            None => [0.0, 0.0],
        });
        init.posteriors = Some(soft.collect());
        let out = vb_resegment(&feats, &init, &model, &VbConfig::default()).unwrap();
        assert!(out.elbo_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(out.assignment.accuracy_against(&truth) >= 0.98);
    }

    #[test]
    fn single_speaker_is_returned_as_is() {
        let (model, feats, truth) = two_speaker_case(2);
        let labels: Vec<Option<usize>> = truth.iter().map(|l| l.map(|_| 0)).collect();
        let init = FrameAssignment::new(labels, 1).unwrap();
        let out = vb_resegment(&feats, &init, &model, &VbConfig::default()).unwrap();
        assert_eq!(out.assignment, init);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn trained_model_separates_speakers() {
        let truth_model = random_vb_model(8, 6, 4, 1.0, 21);
        let mut recs = Vec::new();
        for r in 0..12 {
            let spec = VbRecordingSpec { n_speakers: 2, n_frames: 1_500, ..Default::default() };
            let (f, t) = sample_vb_recording(&truth_model, &spec, 500 + r).unwrap();
            recs.push((f, FrameAssignment::new(t, 2).unwrap()));
        }
        let data: Vec<(&FrameFeatures, &FrameAssignment)> = recs.iter().map(|(f, a)| (f, a)).collect();
        let model = train_vb_model(&data, 8, 4, 0).unwrap();
        assert_eq!(model.z_dim(), 4);
        let spec = VbRecordingSpec { n_speakers: 2, n_frames: 2_400, ..Default::default() };
        let (feats, truth) = sample_vb_recording(&truth_model, &spec, 999).unwrap();
        let init = FrameAssignment::new(shifted_init(&truth, 40), 2).unwrap();
        let out = vb_resegment(&feats, &init, &model, &VbConfig::default()).unwrap();
        assert!(out.assignment.accuracy_against(&truth) > 0.95);
    }
}
