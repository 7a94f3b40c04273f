//! Embedding quality metrics.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LoeError, Result};
use crate::loe::exact_rankings;
use crate::matrix::{center_columns, DistanceSource, EmbeddingMatrix};
use crate::oracle::sample_uniform_triplets;
use crate::ranking::RankingMatrix;
use crate::rng::substream;

#[derive(Debug, Clone)]
pub struct ProcrustesFit {
    pub distance: f64,
    /// Orthogonal `Q` minimizing `‖X − QY‖_F`.
    pub rotation: DMatrix<f64>,
    /// Whether either input had to be centered first.
    pub centered_inputs: bool,
}

fn check_same_shape(x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> Result<()> {
    if x.as_matrix().shape() != y.as_matrix().shape() {
        return Err(LoeError::DimensionMismatch(format!(
            "{:?} vs {:?} embeddings",
            x.as_matrix().shape(),
            y.as_matrix().shape()
        )));
    }
    Ok(())
}

/// Orthogonal Procrustes alignment of `y` onto `x`.
///
/// The optimal `Q = UVᵀ` comes from the SVD of `XYᵀ`; the residual is then
/// evaluated directly rather than through `‖X‖² + ‖Y‖² − 2Σσ`, which loses
/// all precision once the two configurations nearly coincide.
pub fn procrustes(x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> Result<ProcrustesFit> {
    check_same_shape(x, y)?;
    let centered_inputs = !(x.is_centered() && y.is_centered());
    let (x, y) = if centered_inputs {
        (center_columns(x), center_columns(y))
    } else {
        (x.clone(), y.clone())
    };
    let (xm, ym) = (x.as_matrix(), y.as_matrix());
    let svd = (xm * ym.transpose()).svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(LoeError::InvalidParameter("SVD did not converge".into()));
    };
    let rotation = u * v_t;
    let distance = (xm - &rotation * ym).norm();
    Ok(ProcrustesFit {
        distance,
        rotation,
        centered_inputs,
    })
}

/// `min_Q ‖X − QY‖_F` over orthogonal `Q`.
pub fn procrustes_distance(x: &EmbeddingMatrix, y: &EmbeddingMatrix) -> Result<f64> {
    procrustes(x, y).map(|fit| fit.distance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PredictionMode {
    /// Every triplet `⟨i, j, k⟩` with `j < k`.
    Exhaustive,
    Sampled { samples: usize, seed: u64 },
}

#[inline]
fn triplet_sign(x: &EmbeddingMatrix, i: usize, j: usize, k: usize) -> Ordering {
    x.squared_distance(i, j)
        .partial_cmp(&x.squared_distance(i, k))
        .unwrap_or(Ordering::Equal)
}

const SHARD: usize = 1 << 16;

/// Fraction of triplets whose sign under `x_hat` differs from `x_true`. A tie
/// on one side and a strict answer on the other is a disagreement; two ties
/// agree.
pub fn triplet_prediction_error(
    x_true: &EmbeddingMatrix,
    x_hat: &EmbeddingMatrix,
    mode: PredictionMode,
) -> Result<f64> {
    let n = x_true.n_items();
    if x_hat.n_items() != n {
        return Err(LoeError::DimensionMismatch(format!(
            "{n} true items vs {} estimated",
            x_hat.n_items()
        )));
    }
    if n < 3 {
        return Ok(0.0);
    }
    let disagree = |i: usize, j: usize, k: usize| {
        usize::from(triplet_sign(x_true, i, j, k) != triplet_sign(x_hat, i, j, k))
    };
    match mode {
        PredictionMode::Exhaustive => {
            let wrong: usize = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut wrong = 0;
                    for j in (0..n).filter(|&j| j != i) {
                        for k in (j + 1..n).filter(|&k| k != i) {
                            wrong += disagree(i, j, k);
                        }
                    }
                    wrong
                })
                .sum();
            Ok(wrong as f64 / (n * (n - 1) * (n - 2) / 2) as f64)
        }
        PredictionMode::Sampled { samples, seed } => {
            if samples == 0 {
                return Err(LoeError::InvalidParameter("need at least one sample".into()));
            }
            let shards = samples.div_ceil(SHARD);
            let wrong: usize = (0..shards)
                .into_par_iter()
                .map(|s| {
                    let count = SHARD.min(samples - s * SHARD);
                    let mut rng = substream(seed, s as u64);
                    sample_uniform_triplets(n, count, &mut rng)
                        .iter()
                        .map(|t| disagree(t.i, t.j, t.k))
                        .sum::<usize>()
                })
                .sum();
            Ok(wrong as f64 / samples as f64)
        }
    }
}

/// `max_c ‖D_{−c} − R_c − s_c·1‖_∞` with `s_c` the mean of the true column.
pub fn ranking_error_diagnostic(
    r: &RankingMatrix,
    latent: &dyn DistanceSource,
    relabel: &[usize],
) -> Result<f64> {
    let exact = exact_rankings(latent, relabel, r.n_landmarks())?;
    if exact.as_matrix().shape() != r.as_matrix().shape() {
        return Err(LoeError::DimensionMismatch(
            "rankings do not match the ground truth size".into(),
        ));
    }
    Ok((exact.as_matrix() - r.as_matrix()).amax())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub replicates: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            replicates: 5,
            max_iters: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centers: DMatrix<f64>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &DMatrix<f64>) -> (usize, f64) {
    let d = centers.nrows();
    centers
        .as_slice()
        .chunks(d)
        .map(|c| sq_dist(point, c))
        .enumerate()
        .fold((0, f64::INFINITY), |best, (c, v)| if v < best.1 { (c, v) } else { best })
}

fn plus_plus_seeds<R: Rng>(x: &EmbeddingMatrix, k: usize, rng: &mut R) -> DMatrix<f64> {
    let n = x.n_items();
    let mut centers = DMatrix::zeros(x.dim(), k);
    centers.column_mut(0).copy_from_slice(x.point(rng.random_range(0..n)));
    let mut weight: Vec<f64> = (0..n).map(|i| sq_dist(x.point(i), centers.column(0).as_slice())).collect();
    for c in 1..k {
        let total: f64 = weight.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            weight
                .iter()
                .position(|&w| {
                    target -= w;
                    target < 0.0
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.column_mut(c).copy_from_slice(x.point(pick));
        for (i, w) in weight.iter_mut().enumerate() {
            *w = w.min(sq_dist(x.point(i), centers.column(c).as_slice()));
        }
    }
    centers
}

fn lloyd(x: &EmbeddingMatrix, mut centers: DMatrix<f64>, max_iters: usize) -> KMeansFit {
    let (n, k) = (x.n_items(), centers.ncols());
    let mut assignments = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, a) in assignments.iter_mut().enumerate() {
            let (c, _) = nearest(x.point(i), &centers);
            changed |= *a != c;
            *a = c;
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::zeros(x.dim(), k);
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums.column_mut(a).iter_mut().zip(x.point(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            // an emptied cluster keeps its previous center
            if counts[c] > 0 {
                centers.set_column(c, &(sums.column(c) / counts[c] as f64));
            }
        }
    }
    let inertia = (0..n).map(|i| nearest(x.point(i), &centers).1).sum();
    let assignments = (0..n).map(|i| nearest(x.point(i), &centers).0).collect();
    KMeansFit {
        assignments,
        centers,
        inertia,
    }
}

/// Lloyd's algorithm from k-means++ seeds, keeping the replicate with the
/// smallest within-cluster sum of squares.
pub fn kmeans(x: &EmbeddingMatrix, k: usize, opts: &KMeansOptions) -> Result<KMeansFit> {
    let n = x.n_items();
    if k == 0 || k > n {
        return Err(LoeError::InvalidParameter(format!(
            "k-means needs 1 ≤ k ≤ n, got k = {k}, n = {n}"
        )));
    }
    let mut best: Option<KMeansFit> = None;
    for rep in 0..opts.replicates.max(1) {
        let mut rng = substream(opts.seed, rep as u64);
        let fit = lloyd(x, plus_plus_seeds(x, k, &mut rng), opts.max_iters);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one replicate"))
}

/// `(1/n) Σ_clusters max_class |cluster ∩ class|`.
pub fn purity(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    if assignments.len() != labels.len() {
        return Err(LoeError::DimensionMismatch(format!(
            "{} assignments for {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Ok(1.0);
    }
    let mut table = std::collections::HashMap::<(usize, usize), usize>::new();
    for (&a, &l) in assignments.iter().zip(labels) {
        *table.entry((a, l)).or_default() += 1;
    }
    let mut best = std::collections::HashMap::<usize, usize>::new();
    for (&(a, _), &count) in &table {
        let slot = best.entry(a).or_default();
        *slot = (*slot).max(count);
    }
    Ok(best.values().sum::<usize>() as f64 / labels.len() as f64)
}

pub fn kmeans_purity(
    x: &EmbeddingMatrix,
    labels: &[usize],
    k: usize,
    opts: &KMeansOptions,
) -> Result<f64> {
    if labels.len() != x.n_items() {
        return Err(LoeError::DimensionMismatch(format!(
            "{} labels for {} points",
            labels.len(),
            x.n_items()
        )));
    }
    purity(&kmeans(x, k, opts)?.assignments, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub procrustes: f64,
    /// `procrustes / √(n·d)`.
    pub normalized_procrustes: f64,
    pub prediction_error: f64,
    pub purity: Option<f64>,
}

impl MetricReport {
    pub fn compute(
        truth: &EmbeddingMatrix,
        estimate: &EmbeddingMatrix,
        mode: PredictionMode,
    ) -> Result<Self> {
        let procrustes = procrustes_distance(truth, estimate)?;
        Ok(Self {
            procrustes,
            normalized_procrustes: procrustes / ((truth.n_items() * truth.dim()) as f64).sqrt(),
            prediction_error: triplet_prediction_error(truth, estimate, mode)?,
            purity: None,
        })
    }
}
