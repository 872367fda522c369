//! Agglomerative hierarchical clustering and spectral clustering of a score
//! matrix.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{sqrt, sym_eigen};
use crate::{Error, Result, ScoreMatrix};

/// Cluster label per item. Labels are numbered by first appearance, so two
/// assignments describing the same partition compare equal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn from_labels(raw: &[usize]) -> ClusterAssignment {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let labels = raw
            .iter()
            .map(|&l| match map.iter().find(|(from, _)| *from == l) {
                Some(&(_, to)) => to,
                None => {
                    let to = map.len();
                    map.push((l, to));
                    to
                }
            })
            .collect();
        ClusterAssignment { labels, k: map.len() }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == cluster).collect()
    }
}

/// Average-linkage AHC: repeatedly merge the two clusters with the highest
/// mean pairwise score until that score drops below `threshold`. Ties go to
/// the pair whose smallest members come first.
pub fn ahc(scores: &ScoreMatrix, threshold: f64) -> ClusterAssignment {
    let n = scores.n();
    let mut sim: Vec<f64> = (0..n * n).map(|k| scores.get(k / n, k % n)).collect();
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    while active.len() > 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let s = sim[a * n + b];
                if best.is_none_or(|(_, _, bs)| s > bs) {
                    best = Some((a, b, s));
                }
            }
        }
        let (a, b, s) = best.expect("at least two active clusters");
        if s < threshold {
            break;
        }
        // slot `a` keeps the smaller member index; Lance-Williams average update
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &c in &active {
            if c != a && c != b {
                let v = (na * sim[a * n + c] + nb * sim[b * n + c]) / (na + nb);
                let w = (na * sim[c * n + a] + nb * sim[c * n + b]) / (na + nb);
                sim[a * n + c] = v;
                sim[c * n + a] = w;
            }
        }
        size[a] += size[b];
        active.retain(|&c| c != b);
        for p in parent.iter_mut() {
            if *p == b {
                *p = a;
            }
        }
    }
    ClusterAssignment::from_labels(&parent)
}

/// How raw scores become non-negative edge weights before the Laplacian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Affinity {
    /// Off-diagonal entries mapped linearly onto `[0, 1]`.
    #[default]
    MinMax,
    /// Negative entries set to zero.
    ClipNegative,
    /// Scores used as they are; negative entries are an error.
    Raw,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SpectralConfig {
    /// The cluster count is the number of Laplacian eigenvalues below this.
    pub eig_threshold: f64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub rng_seed: u64,
    pub affinity: Affinity,
    /// Scale eigenvector rows to unit length before k-means.
    pub row_normalize: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            eig_threshold: 0.5,
            kmeans_restarts: 10,
            kmeans_max_iters: 300,
            rng_seed: 0,
            affinity: Affinity::MinMax,
            row_normalize: false,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eig_threshold > 0.0 && self.eig_threshold <= 2.0) {
            return Err(Error::Config(alloc::format!(
                "eigenvalue threshold {} outside (0, 2]",
                self.eig_threshold
            )));
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iters == 0 {
            return Err(Error::Config("k-means needs at least one restart and one iteration".into()));
        }
        Ok(())
    }
}

/// Edge weights with a zero diagonal.
pub fn affinity_matrix(scores: &ScoreMatrix, how: Affinity) -> Result<DMatrix<f64>> {
    let n = scores.n();
    let off = || (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
    let mut a = DMatrix::zeros(n, n);
    match how {
        Affinity::MinMax => {
            let lo = off().map(|(i, j)| scores.get(i, j)).fold(f64::INFINITY, f64::min);
            let hi = off().map(|(i, j)| scores.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
            for (i, j) in off() {
                a[(i, j)] = if hi > lo { (scores.get(i, j) - lo) / (hi - lo) } else { 1.0 };
            }
        }
        Affinity::ClipNegative => {
            for (i, j) in off() {
                a[(i, j)] = scores.get(i, j).max(0.0);
            }
        }
        Affinity::Raw => {
            for (i, j) in off() {
                a[(i, j)] = scores.get(i, j);
            }
        }
    }
    Ok(a)
}

/// `D^{-1/2} (D - S) D^{-1/2}` with `D_ii = Σ_j S_ij`; the diagonal of `S`
/// is treated as zero, and isolated nodes get a zero row.
pub fn normalized_laplacian(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::Shape(alloc::format!("{}x{} affinity", n, s.ncols())));
    }
    for i in 0..n {
        for j in 0..n {
            let v = s[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFinite("affinity"));
            }
            if i != j && v < 0.0 {
                return Err(Error::NegativeAffinity { row: i, col: j, value: v });
            }
        }
    }
    let degree: Vec<f64> = (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| s[(i, j)]).sum()).collect();
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| if d > 0.0 { 1.0 / sqrt(d) } else { 0.0 }).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let l = if i == j { degree[i] } else { -s[(i, j)] };
        inv_sqrt[i] * l * inv_sqrt[j]
    }))
}

/// Intermediate results of spectral clustering, kept for inspection.
#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub assignment: ClusterAssignment,
    /// Laplacian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub inertia: f64,
}

pub fn spectral_cluster(scores: &ScoreMatrix, cfg: &SpectralConfig) -> Result<ClusterAssignment> {
    spectral_cluster_detailed(scores, cfg).map(|r| r.assignment)
}

pub fn spectral_cluster_detailed(scores: &ScoreMatrix, cfg: &SpectralConfig) -> Result<SpectralResult> {
    cfg.validate()?;
    if !scores.is_symmetric() {
        return Err(Error::Shape("spectral clustering needs a symmetric score matrix".into()));
    }
    let n = scores.n();
    let affinity = affinity_matrix(scores, cfg.affinity)?;
    let lap = normalized_laplacian(&affinity)?;
    let (eigenvalues, vectors) = sym_eigen(&lap)?;
    let k = eigenvalues.iter().filter(|&&v| v < cfg.eig_threshold).count().clamp(1, n);
    if k == 1 {
        return Ok(SpectralResult {
            assignment: ClusterAssignment { labels: vec![0; n], k: 1 },
            eigenvalues,
            inertia: 0.0,
        });
    }
    let mut rows: Vec<Vec<f64>> = (0..n).map(|i| (0..k).map(|c| vectors[(i, c)]).collect()).collect();
    if cfg.row_normalize {
        for r in rows.iter_mut() {
            crate::scoring::length_normalize(r);
        }
    }
    let km = kmeans(&rows, k, cfg.kmeans_restarts, cfg.kmeans_max_iters, cfg.rng_seed);
    Ok(SpectralResult { assignment: ClusterAssignment::from_labels(&km.labels), eigenvalues, inertia: km.inertia })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy k-means++ seeding: first center uniform; each later one is the best
/// of `2 + ln k` candidates drawn with probability proportional to squared
/// distance from the nearest chosen center, judged by the remaining potential.
fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let trials = 2 + libm::log(k as f64) as usize;
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            centers.push(points[rng.random_range(0..n)].clone());
            continue;
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            let updated: Vec<f64> =
                points.iter().zip(&nearest).map(|(p, &d)| d.min(dist2(p, &points[pick]))).collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(b, _, _)| potential < *b) {
                best = Some((potential, pick, updated));
            }
        }
        let (_, pick, updated) = best.expect("at least one candidate");
        centers.push(points[pick].clone());
        nearest = updated;
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iters: usize) -> KMeansResult {
    let (n, k) = (points.len(), centers.len());
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // steal the point farthest from its own centroid
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centers[labels[a]])
                            .total_cmp(&dist2(&points[b], &centers[labels[b]]))
                            .then(b.cmp(&a))
                    });
                if let Some(i) = far {
                    let old = labels[i];
                    counts[old] -= 1;
                    for (s, x) in sums[old].iter_mut().zip(&points[i]) {
                        *s -= x;
                    }
                    labels[i] = c;
                    counts[c] = 1;
                    sums[c] = points[i].clone();
                    changed = true;
                }
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| dist2(p, &centers[l])).sum();
    KMeansResult { labels, centroids: centers, inertia }
}

/// Lloyd's k-means with k-means++ seeding; restart `r` uses seed `seed + r`
/// and the lowest inertia wins.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, max_iters: usize, seed: u64) -> KMeansResult {
    assert!(k >= 1 && k <= points.len(), "k-means needs 1 <= k <= n");
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let centers = seed_centers(points, k, &mut rng);
        let run = lloyd(points, centers, max_iters);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> ScoreMatrix {
        let v: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        ScoreMatrix::from_rows(&v).unwrap()
    }

    #[test]
    fn ahc_three_items() {
        let s = matrix(&[&[1.0, 0.9, 0.1], &[0.9, 1.0, 0.1], &[0.1, 0.1, 1.0]]);
        assert_eq!(ahc(&s, 0.5).labels, [0, 0, 1]);
        assert_eq!(ahc(&s, 0.95).k, 3);
        assert_eq!(ahc(&s, 0.1).k, 1);
        assert_eq!(ahc(&matrix(&[&[0.0]]), 0.0).labels, [0]);
    }

    #[test]
    fn ahc_average_linkage_order() {
        // {0,1} merge first (0.9); then avg({0,1},2) = (0.6+0.2)/2 = 0.4 < s(2,3) = 0.5
        let s = matrix(&[
            &[0.0, 0.9, 0.6, 0.1],
            &[0.9, 0.0, 0.2, 0.1],
            &[0.6, 0.2, 0.0, 0.5],
            &[0.1, 0.1, 0.5, 0.0],
        ]);
        assert_eq!(ahc(&s, 0.45).labels, [0, 0, 1, 1]);
    }

    #[test]
    fn laplacian_two_nodes() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let l = normalized_laplacian(&s).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let (vals, _) = sym_eigen(&l).unwrap();
        assert!(vals[0].abs() < 1e-12 && (vals[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_components_and_zero() {
        let mut s = DMatrix::zeros(7, 7);
        for block in [0..3, 3..5, 5..7] {
            for i in block.clone() {
                for j in block.clone() {
                    if i != j {
                        s[(i, j)] = 0.7;
                    }
                }
            }
        }
        let (vals, _) = sym_eigen(&normalized_laplacian(&s).unwrap()).unwrap();
        assert_eq!(vals.iter().filter(|v| v.abs() < 1e-10).count(), 3);
        assert_eq!(normalized_laplacian(&DMatrix::zeros(3, 3)).unwrap(), DMatrix::zeros(3, 3));
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(matches!(normalized_laplacian(&neg), Err(Error::NegativeAffinity { .. })));
    }

    fn cliques(sizes: &[usize]) -> ScoreMatrix {
        let n: usize = sizes.iter().sum();
        let mut block = Vec::new();
        for (b, &sz) in sizes.iter().enumerate() {
            block.extend(core::iter::repeat_n(b, sz));
        }
        ScoreMatrix::from_fn(n, |i, j| if i != j && block[i] == block[j] { 1.0 } else { 0.0 }).unwrap()
    }

    /// Best 2-partition by exhaustive enumeration: minimal normalized cut.
    fn best_bipartition(s: &ScoreMatrix) -> Vec<usize> {
        let n = s.n();
        let mut best = (f64::INFINITY, Vec::new());
        for mask in 1u32..(1 << (n - 1)) {
            let side: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let (mut cut, mut vol) = (0.0, [0.0, 0.0]);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        vol[side[i]] += s.get(i, j);
                        if side[i] != side[j] {
                            cut += s.get(i, j);
                        }
                    }
                }
            }
            let ncut = cut / vol[0] + cut / vol[1];
            if ncut < best.0 {
                best = (ncut, side);
            }
        }
        ClusterAssignment::from_labels(&best.1).labels
    }

    #[test]
    fn spectral_two_cliques() {
        let s = cliques(&[3, 3]);
        let r = spectral_cluster_detailed(&s, &SpectralConfig::default()).unwrap();
        assert_eq!(r.assignment.k, 2);
        assert_eq!(r.assignment.labels, [0, 0, 0, 1, 1, 1]);
        assert_eq!(r.assignment.labels, best_bipartition(&s));
    }

    #[test]
    fn spectral_trivial_cases() {
        let uniform = ScoreMatrix::from_fn(6, |i, j| if i == j { 0.0 } else { 0.8 }).unwrap();
        assert_eq!(spectral_cluster(&uniform, &SpectralConfig::default()).unwrap().k, 1);
        let one = ScoreMatrix::from_fn(1, |_, _| 1.0).unwrap();
        assert_eq!(spectral_cluster(&one, &SpectralConfig::default()).unwrap().labels, [0]);
        let asym = matrix(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(spectral_cluster(&asym, &SpectralConfig::default()).is_err());
        let bad = SpectralConfig { eig_threshold: 3.0, ..Default::default() };
        assert!(spectral_cluster(&uniform, &bad).is_err());
    }

    #[test]
    fn kmeans_reproducible() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 4) as f64 * 10.0 + (i as f64) * 0.01, (i / 4) as f64 * 0.1]).collect();
        let a = kmeans(&pts, 4, 5, 100, 7);
        let b = kmeans(&pts, 4, 5, 100, 7);
        assert_eq!(a, b);
        assert_eq!(ClusterAssignment::from_labels(&a.labels).k, 4);
    }
}
