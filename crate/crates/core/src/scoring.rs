//! Pairwise similarity scoring of segment embeddings.
//!
//! The PLDA backend is the two-covariance model: a speaker variable
//! `y ~ N(μ, B)` and observations `x = y + ε`, `ε ~ N(0, W)`. Same-speaker
//! pairs share `y`, so under the same-speaker hypothesis `(x_i, x_j)` is jointly
//! Gaussian with marginal covariance `B + W` and cross-covariance `B`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{mean_cov, spd_logdet_inverse, spectral_map, sqrt, sym_eigen};
use crate::{EmbeddingSet, Error, Result, ScoreMatrix};

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / sqrt(na * nb)).clamp(-1.0, 1.0))
}

/// Scales a vector to unit Euclidean norm; zero vectors are left alone.
pub fn length_normalize(x: &mut [f64]) {
    let n = sqrt(x.iter().map(|v| v * v).sum());
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Affine map `x ↦ transform · (x − mean)` whose output has identity
/// covariance on the fit data.
#[derive(Clone, Debug, PartialEq)]
pub struct Whitener {
    pub mean: DVector<f64>,
    pub transform: DMatrix<f64>,
}

impl Whitener {
    /// Fits the inverse principal square root of the sample covariance. With
    /// `regularize`, a ridge of `1e-6 · trace / d` is added first; without it a
    /// singular covariance is an error.
    pub fn fit(vectors: &[&[f64]], regularize: bool) -> Result<Whitener> {
        if vectors.len() < 2 {
            return Err(Error::NotEnoughData("whitening needs at least two vectors".into()));
        }
        let d = vectors[0].len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
        }
        let (mean, mut cov) = mean_cov(vectors);
        let scale = cov.trace() / d as f64;
        if regularize {
            let ridge = 1e-6 * if scale > 0.0 { scale } else { 1.0 };
            for i in 0..d {
                cov[(i, i)] += ridge;
            }
        }
        let (vals, vecs) = sym_eigen(&cov)?;
        let floor = 1e-12 * scale.max(f64::MIN_POSITIVE);
        if vals[0] <= floor {
            return Err(Error::DegenerateCovariance(alloc::format!(
                "smallest eigenvalue {:e} with {} vectors in {d} dimensions",
                vals[0],
                vectors.len()
            )));
        }
        let transform = spectral_map(&vals, &vecs, |v| 1.0 / sqrt(v));
        Ok(Whitener { mean, transform })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let centered = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, m)| a - m));
        Ok((&self.transform * centered).iter().copied().collect())
    }
}

pub fn fit_whitener(vectors: &[&[f64]], regularize: bool) -> Result<Whitener> {
    Whitener::fit(vectors, regularize)
}

pub fn apply_whitener(w: &Whitener, vectors: &[&[f64]], length_norm: bool) -> Result<Vec<Vec<f64>>> {
    vectors
        .iter()
        .map(|v| {
            let mut out = w.apply(v)?;
            if length_norm {
                length_normalize(&mut out);
            }
            Ok(out)
        })
        .collect()
}

/// Two-covariance PLDA with the quadratic form of its log-likelihood ratio
/// precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct PldaModel {
    mean: DVector<f64>,
    between: DMatrix<f64>,
    within: DMatrix<f64>,
    // score(x, y) = ½x̃ᵀQx̃ + ½ỹᵀQỹ + x̃ᵀPỹ + offset with x̃ = x − μ
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    offset: f64,
}

impl PldaModel {
    pub fn new(mean: DVector<f64>, between: DMatrix<f64>, within: DMatrix<f64>) -> Result<PldaModel> {
        let d = mean.len();
        for m in [&between, &within] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: m.nrows() });
            }
        }
        if mean.iter().chain(between.iter()).chain(within.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("PLDA parameters"));
        }
        let between = (&between + between.transpose()) * 0.5;
        let within = (&within + within.transpose()) * 0.5;
        let (bvals, _) = sym_eigen(&between)?;
        if bvals[0] < -1e-10 * bvals[d - 1].abs().max(1.0) {
            return Err(Error::DegenerateCovariance("between-speaker covariance is not PSD".into()));
        }
        let total = &between + &within;
        let (logdet_total, total_inv) = spd_logdet_inverse(&total)?;
        spd_logdet_inverse(&within)?;
        let mut joint = DMatrix::zeros(2 * d, 2 * d);
        joint.view_mut((0, 0), (d, d)).copy_from(&total);
        joint.view_mut((d, d), (d, d)).copy_from(&total);
        joint.view_mut((0, d), (d, d)).copy_from(&between);
        joint.view_mut((d, 0), (d, d)).copy_from(&between);
        let (logdet_joint, joint_inv) = spd_logdet_inverse(&joint)?;
        let a = joint_inv.view((0, 0), (d, d)).into_owned();
        let c = joint_inv.view((0, d), (d, d)).into_owned();
        let q = &total_inv - &a;
        let q = (&q + q.transpose()) * 0.5;
        let p = -((&c + c.transpose()) * 0.5);
        let offset = -0.5 * logdet_joint + logdet_total;
        Ok(PldaModel { mean, between, within, q, p, offset })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn between(&self) -> &DMatrix<f64> {
        &self.between
    }

    pub fn within(&self) -> &DMatrix<f64> {
        &self.within
    }

    /// Log-likelihood ratio of same-speaker vs different-speaker.
    pub fn score(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.dim();
        for v in [x, y] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
        }
        let xc = DVector::from_iterator(d, x.iter().zip(self.mean.iter()).map(|(a, m)| a - m));
        let yc = DVector::from_iterator(d, y.iter().zip(self.mean.iter()).map(|(a, m)| a - m));
        let own = 0.5 * xc.dot(&(&self.q * &xc)) + 0.5 * yc.dot(&(&self.q * &yc));
        // both orders summed so swapping the arguments is bit-exact
        let cross = 0.5 * (xc.dot(&(&self.p * &yc)) + yc.dot(&(&self.p * &xc)));
        Ok(own + cross + self.offset)
    }
}

pub fn plda_score(model: &PldaModel, x: &[f64], y: &[f64]) -> Result<f64> {
    model.score(x, y)
}

/// Moment estimate of the two-covariance model from labeled vectors.
///
/// `W` is the pooled within-speaker covariance, `B` the covariance of speaker
/// means (divisor = number of speakers) minus `W / mean class size`, with
/// negative eigenvalues clipped to zero. Eigenvalues of `W` are floored so the
/// model stays proper when speakers have no spread.
pub fn fit_plda<S: AsRef<str>>(labeled: &[(S, Vec<f64>)]) -> Result<PldaModel> {
    let mut classes: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for (spk, v) in labeled {
        classes.entry(spk.as_ref()).or_default().push(v.as_slice());
    }
    if classes.len() < 2 {
        return Err(Error::NotEnoughData(alloc::format!(
            "PLDA needs at least two speakers, got {}",
            classes.len()
        )));
    }
    if let Some((spk, _)) = classes.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::NotEnoughData(alloc::format!("speaker {spk} has a single vector")));
    }
    let d = labeled[0].1.len();
    if let Some((_, bad)) = labeled.iter().find(|(_, v)| v.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
    }
    let all: Vec<&[f64]> = labeled.iter().map(|(_, v)| v.as_slice()).collect();
    let (mean, total_cov) = mean_cov(&all);
    let n = all.len() as f64;

    let mut within = DMatrix::zeros(d, d);
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(classes.len());
    for members in classes.values() {
        let (m, c) = mean_cov(members);
        within += c * members.len() as f64;
        means.push(m.iter().copied().collect());
    }
    within /= n;
    let mean_refs: Vec<&[f64]> = means.iter().map(Vec::as_slice).collect();
    let (_, means_cov) = mean_cov(&mean_refs);
    let avg_size = n / classes.len() as f64;
    let between_raw = means_cov - &within / avg_size;

    let scale = total_cov.trace() / d as f64;
    let eps = 1e-6 * if scale > 0.0 { scale } else { 1.0 };
    let (bv, bvec) = sym_eigen(&between_raw)?;
    let between = spectral_map(&bv, &bvec, |v| v.max(0.0));
    let (wv, wvec) = sym_eigen(&within)?;
    let within = spectral_map(&wv, &wvec, |v| v.max(eps));
    PldaModel::new(mean, between, within)
}

/// How embeddings are compared when filling a score matrix.
#[derive(Clone, Debug)]
pub enum Backend {
    Cosine,
    Plda {
        model: PldaModel,
        whitener: Option<Whitener>,
        /// Unit-norm the (whitened) vectors before scoring.
        length_norm: bool,
    },
}

impl Backend {
    fn prepare(&self, vectors: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        match self {
            Backend::Cosine => Ok(vectors.iter().map(|v| v.to_vec()).collect()),
            Backend::Plda { whitener, length_norm, .. } => match whitener {
                Some(w) => apply_whitener(w, vectors, *length_norm),
                None => Ok(vectors
                    .iter()
                    .map(|v| {
                        let mut v = v.to_vec();
                        if *length_norm {
                            length_normalize(&mut v);
                        }
                        v
                    })
                    .collect()),
            },
        }
    }

    fn pair(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Backend::Cosine => cosine_score(a, b),
            Backend::Plda { model, .. } => model.score(a, b),
        }
    }
}

/// `S[i][j] = backend(x_i, x_j)`; symmetric for both built-in backends.
pub fn build_score_matrix(embeddings: &EmbeddingSet, backend: &Backend) -> Result<ScoreMatrix> {
    let raw: Vec<&[f64]> = embeddings.vectors().collect();
    let xs = backend.prepare(&raw)?;
    let n = xs.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s = backend.pair(&xs[i], &xs[j])?;
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    ScoreMatrix::new(m)
}

/// Maps entries to `[0, 1]` by `(s - min) / (max - min)`. A constant matrix
/// has no range to stretch and is only clamped into `[0, 1]`.
pub fn min_max_normalize(s: &ScoreMatrix) -> ScoreMatrix {
    let lo = s.values().min();
    let hi = s.values().max();
    let out = if hi > lo {
        s.values().map(|v| (v - lo) / (hi - lo))
    } else {
        s.values().map(|v| v.clamp(0.0, 1.0))
    };
    ScoreMatrix::new(out).expect("normalization keeps entries finite")
}

/// Weighted average of min-max normalized matrices; uniform weights when none
/// are given.
pub fn fuse_score_matrices(matrices: &[ScoreMatrix], weights: Option<&[f64]>) -> Result<ScoreMatrix> {
    let first = matrices.first().ok_or_else(|| Error::NotEnoughData("nothing to fuse".into()))?;
    let n = first.n();
    if let Some(bad) = matrices.iter().find(|m| m.n() != n) {
        return Err(Error::Shape(alloc::format!("cannot fuse {n}x{n} with {0}x{0}", bad.n())));
    }
    let uniform = alloc::vec![1.0; matrices.len()];
    let w = weights.unwrap_or(&uniform);
    if w.len() != matrices.len() {
        return Err(Error::Config(alloc::format!(
            "{} weights for {} matrices",
            w.len(),
            matrices.len()
        )));
    }
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("fusion weights must be non-negative with a positive sum".into()));
    }
    let total: f64 = w.iter().sum();
    let mut acc = DMatrix::zeros(n, n);
    for (m, &wi) in matrices.iter().zip(w) {
        acc += min_max_normalize(m).into_inner() * (wi / total);
    }
    ScoreMatrix::new(acc)
}

pub fn symmetrize(s: &ScoreMatrix) -> ScoreMatrix {
    s.symmetrize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ln, LN_2PI};
    use crate::{Millis, Segment};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Gaussian log-density by explicit Cholesky solve, independent of the
    /// model's precomputed quadratic form.
    fn log_normal(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let chol = cov.clone().cholesky().unwrap();
        let diff = x - mean;
        let z = chol.l().solve_lower_triangular(&diff).unwrap();
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| ln(*v)).sum::<f64>();
        -0.5 * (x.len() as f64 * LN_2PI + logdet + z.dot(&z))
    }

    fn oracle_llr(mu: &DVector<f64>, b: &DMatrix<f64>, w: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
        let d = mu.len();
        let t = b + w;
        let mut joint = DMatrix::zeros(2 * d, 2 * d);
        joint.view_mut((0, 0), (d, d)).copy_from(&t);
        joint.view_mut((d, d), (d, d)).copy_from(&t);
        joint.view_mut((0, d), (d, d)).copy_from(b);
        joint.view_mut((d, 0), (d, d)).copy_from(b);
        let xy = DVector::from_iterator(2 * d, x.iter().chain(y).copied());
        let mm = DVector::from_iterator(2 * d, mu.iter().chain(mu.iter()).copied());
        let xv = DVector::from_column_slice(x);
        let yv = DVector::from_column_slice(y);
        log_normal(&xy, &mm, &joint) - log_normal(&xv, mu, &t) - log_normal(&yv, mu, &t)
    }

    #[test]
    fn one_dimensional_analytic_value() {
        let m = PldaModel::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let s = m.score(&[0.0], &[0.0]).unwrap();
        assert!((s - (-0.5 * ln(0.75))).abs() < 1e-10);
        assert!((s - 0.143_841_036_225_890_2).abs() < 1e-10);
    }

    #[test]
    fn matches_density_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 1.0).unwrap();
        let d = 4;
        let a = DMatrix::from_fn(d, d, |_, _| n.sample(&mut rng));
        let c = DMatrix::from_fn(d, d, |_, _| n.sample(&mut rng));
        let b = &a * a.transpose();
        let w = &c * c.transpose() + DMatrix::identity(d, d) * 0.5;
        let mu = DVector::from_fn(d, |_, _| n.sample(&mut rng));
        let model = PldaModel::new(mu.clone(), b.clone(), w.clone()).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| n.sample(&mut rng) * 2.0).collect();
            let y: Vec<f64> = (0..d).map(|_| n.sample(&mut rng) * 2.0).collect();
            let s = model.score(&x, &y).unwrap();
            assert!((s - oracle_llr(&mu, &b, &w, &x, &y)).abs() < 1e-9);
            assert_eq!(s, model.score(&y, &x).unwrap());
        }
    }

    #[test]
    fn zero_between_gives_zero_scores() {
        let d = 3;
        let m = PldaModel::new(DVector::zeros(d), DMatrix::zeros(d, d), DMatrix::identity(d, d)).unwrap();
        assert!(m.score(&[1.0, 2.0, 3.0], &[-4.0, 0.5, 9.0]).unwrap().abs() < 1e-12);
        assert!(matches!(m.score(&[1.0], &[1.0, 2.0, 3.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine_score(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(cosine_score(&[1.0, 2.0], &[-1.0, -2.0]).unwrap(), -1.0);
        assert_eq!(cosine_score(&[0.0, 0.0], &[1.0, 2.0]), Err(Error::ZeroVector));
    }

    fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, sd: &[f64]) -> Vec<Vec<f64>> {
        let z = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| sd.iter().map(|s| s * z.sample(rng)).collect()).collect()
    }

    #[test]
    fn whitener_diag_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows = gaussian_rows(&mut rng, 4_000, &[2.0, 1.0]);
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let w = Whitener::fit(&refs, false).unwrap();
        // eigen oracle on the sample covariance: transform = V Λ^{-1/2} Vᵀ
        let (_, cov) = mean_cov(&refs);
        let (vals, vecs) = sym_eigen(&cov).unwrap();
        let expected = spectral_map(&vals, &vecs, |v| 1.0 / sqrt(v));
        assert!((&w.transform - expected).norm() < 1e-10);
        // close to diag(1/2, 1) for this sample
        assert!((w.transform[(0, 0)] - 0.5).abs() < 0.05 && (w.transform[(1, 1)] - 1.0).abs() < 0.05);
        let white = apply_whitener(&w, &refs, false).unwrap();
        let wr: Vec<&[f64]> = white.iter().map(Vec::as_slice).collect();
        let (_, wc) = mean_cov(&wr);
        assert!((wc - DMatrix::identity(2, 2)).abs().max() < 1e-8);
    }

    #[test]
    fn whitener_identity_and_errors() {
        let rows = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let w = Whitener::fit(&refs, false).unwrap();
        assert!((w.transform.clone() - DMatrix::identity(2, 2) * sqrt(2.0)).norm() < 1e-12);
        assert!(Whitener::fit(&refs[..1], true).is_err());
        let flat = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        let flat: Vec<&[f64]> = flat.iter().map(Vec::as_slice).collect();
        assert!(matches!(Whitener::fit(&flat, false), Err(Error::DegenerateCovariance(_))));
        assert!(Whitener::fit(&flat, true).is_ok());
    }

    #[test]
    fn plda_fit_two_speakers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 3;
        let noise = gaussian_rows(&mut rng, 1_000, &[0.1; 3]);
        let labeled: Vec<(&str, Vec<f64>)> = noise
            .into_iter()
            .enumerate()
            .map(|(i, mut v)| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                v[0] += sign;
                (if sign > 0.0 { "a" } else { "b" }, v)
            })
            .collect();
        let m = fit_plda(&labeled).unwrap();
        let (bv, _) = sym_eigen(m.between()).unwrap();
        assert!((bv[d - 1] - 1.0).abs() < 0.1, "top eigenvalue {}", bv[d - 1]);
        assert!(bv[d - 2] < 0.01);
        let (wv, _) = sym_eigen(m.within()).unwrap();
        assert!(wv.iter().all(|v| (v - 0.01).abs() < 0.003));
    }

    #[test]
    fn plda_fit_degenerate_and_errors() {
        let labeled = vec![("a", vec![1.0, 0.0]), ("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0]), ("b", vec![0.0, 1.0])];
        let m = fit_plda(&labeled).unwrap();
        let (wv, _) = sym_eigen(m.within()).unwrap();
        assert!(wv.iter().all(|&v| v > 0.0 && v < 1e-5));
        assert!(fit_plda(&labeled[..2]).is_err());
        assert!(fit_plda(&labeled[..3]).is_err());
    }

    fn set(vectors: &[Vec<f64>]) -> EmbeddingSet {
        let entries = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (Segment::new(Millis(i as i64 * 750), Millis(i as i64 * 750 + 1_500)).unwrap(), v.clone()))
            .collect();
        EmbeddingSet::new("r", vectors[0].len(), entries).unwrap()
    }

    #[test]
    fn score_matrices() {
        let one = build_score_matrix(&set(&[vec![1.0, 2.0]]), &Backend::Cosine).unwrap();
        assert_eq!(one.n(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows = gaussian_rows(&mut rng, 7, &[1.0; 4]);
        let cos = build_score_matrix(&set(&rows), &Backend::Cosine).unwrap();
        assert!(cos.is_symmetric());
        assert!((0..7).all(|i| (cos.get(i, i) - 1.0).abs() < 1e-12));

        let model = PldaModel::new(DVector::zeros(4), DMatrix::identity(4, 4) * 2.0, DMatrix::identity(4, 4)).unwrap();
        let backend = Backend::Plda { model: model.clone(), whitener: None, length_norm: false };
        let plda = build_score_matrix(&set(&rows), &backend).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(plda.get(i, j), model.score(&rows[i], &rows[j]).unwrap());
            }
        }
    }

    #[test]
    fn fusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Normal::new(0.0, 1.0).unwrap();
        let mats: Vec<ScoreMatrix> = (0..3)
            .map(|_| ScoreMatrix::from_fn(5, |_, _| z.sample(&mut rng)).unwrap())
            .collect();
        let same = fuse_score_matrices(&[mats[0].clone(), mats[0].clone()], None).unwrap();
        assert!((same.values() - min_max_normalize(&mats[0]).values()).abs().max() < 1e-15);
        let zeros = ScoreMatrix::from_fn(3, |_, _| 0.0).unwrap();
        let ones = ScoreMatrix::from_fn(3, |_, _| 1.0).unwrap();
        let half = fuse_score_matrices(&[zeros, ones], None).unwrap();
        assert!(half.values().iter().all(|&v| v == 0.5));
        let fused = fuse_score_matrices(&mats, None).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expect: f64 = mats
                    .iter()
                    .map(|m| {
                        let lo = m.values().min();
                        let hi = m.values().max();
                        (m.get(i, j) - lo) / (hi - lo)
                    })
                    .sum::<f64>()
                    / 3.0;
                assert!((fused.get(i, j) - expect).abs() < 1e-12);
            }
        }
        let small = ScoreMatrix::from_fn(2, |_, _| 0.0).unwrap();
        assert!(fuse_score_matrices(&[mats[0].clone(), small], None).is_err());
        assert!(fuse_score_matrices(&mats, Some(&[1.0])).is_err());
    }

    #[test]
    fn symmetrize_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = Normal::new(0.0, 1.0).unwrap();
        let m = ScoreMatrix::from_fn(6, |_, _| z.sample(&mut rng)).unwrap();
        let s = symmetrize(&m);
        assert!(s.is_symmetric());
        assert_eq!(s.values(), &s.values().transpose());
        assert_eq!(symmetrize(&s), s);
    }
}
