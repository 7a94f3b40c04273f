//! The landmark ordinal embedding driver: choose landmarks, rank their
//! columns, recover the shifts, then run landmark MDS.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{LoeError, Result};
use crate::landmark::{recover_landmark_columns, EdmProjection};
use crate::lmds::{classical_mds, lmds_triangulate};
use crate::matrix::{center_columns, DistanceSource, EmbeddingMatrix, ShiftVector};
use crate::oracle::TripletOracle;
use crate::ranking::{
    rank_landmark_columns, ColumnDiagnostics, LambdaRule, MleOptions, RankingMatrix,
    RankingOptions,
};
use crate::rng::{mix, substream};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoeConfig {
    /// Landmark count; `d + 3` when unset.
    pub landmarks: Option<usize>,
    pub lambda_rule: LambdaRule,
    pub mle: MleOptions,
    pub seed: u64,
    /// Offset for the oracle ordinals this run uses.
    pub ordinal_base: u64,
    pub require_convergence: bool,
    pub projection: EdmProjection,
}

impl LoeConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn n_landmarks(&self, d: usize) -> usize {
        self.landmarks.unwrap_or(d + 3)
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub ranking: f64,
    pub shifts: f64,
    pub mds: f64,
    pub triangulation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoeReport {
    pub n_items: usize,
    pub dim: usize,
    pub n_landmarks: usize,
    pub budget: usize,
    pub queries: u64,
    pub timings: StageTimings,
    pub sigma_e: f64,
    pub shift_residual: f64,
    pub negative_eigen_mass: f64,
    pub under_budget: bool,
    pub columns: Vec<ColumnDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct LoeOutput {
    /// Centered `d × n` embedding in original item order.
    pub embedding: EmbeddingMatrix,
    /// Relabeled position → original item; landmarks first.
    pub relabel: Vec<usize>,
    pub rankings: RankingMatrix,
    pub shifts: ShiftVector,
    pub report: LoeReport,
}

/// Output of the deterministic half of the pipeline.
#[derive(Debug, Clone)]
pub struct RankedEmbedding {
    pub embedding: EmbeddingMatrix,
    pub shifts: ShiftVector,
    pub sigma_e: f64,
    pub shift_residual: f64,
    pub negative_eigen_mass: f64,
    pub timings: StageTimings,
}

/// Random landmark choice: the `ℓ` sampled items first, then the rest in
/// increasing order.
pub fn choose_landmarks(n_items: usize, n_landmarks: usize, seed: u64) -> Result<Vec<usize>> {
    if n_landmarks > n_items {
        return Err(LoeError::InvalidParameter(format!(
            "{n_landmarks} landmarks requested from {n_items} items"
        )));
    }
    let mut rng = substream(seed, 0);
    let chosen = sample(&mut rng, n_items, n_landmarks).into_vec();
    let mut is_landmark = vec![false; n_items];
    for &c in &chosen {
        is_landmark[c] = true;
    }
    let mut relabel = chosen;
    relabel.extend((0..n_items).filter(|&i| !is_landmark[i]));
    Ok(relabel)
}

/// Noiseless rankings: column `c` is the distance column of landmark
/// `relabel[c]` minus its mean, rows in relabeled order without the landmark.
pub fn exact_rankings(
    latent: &dyn DistanceSource,
    relabel: &[usize],
    n_landmarks: usize,
) -> Result<RankingMatrix> {
    let n = latent.n_items();
    if relabel.len() != n {
        return Err(LoeError::DimensionMismatch(format!(
            "relabeling has {} entries for {n} items",
            relabel.len()
        )));
    }
    let mut r = DMatrix::zeros(n - 1, n_landmarks);
    for (c, mut col) in r.column_iter_mut().enumerate() {
        let head = relabel[c];
        let others = relabel.iter().enumerate().filter(|&(p, _)| p != c);
        for (row, (_, &item)) in others.enumerate() {
            col[row] = latent.squared_distance(head, item);
        }
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    RankingMatrix::new(r)
}

/// Shift recovery, landmark MDS and triangulation on given rankings.
pub fn embed_from_rankings(
    rankings: &RankingMatrix,
    relabel: &[usize],
    d: usize,
    projection: EdmProjection,
) -> Result<RankedEmbedding> {
    let l = rankings.n_landmarks();
    let n = rankings.n_items();
    if relabel.len() != n {
        return Err(LoeError::DimensionMismatch(format!(
            "relabeling has {} entries for {n} items",
            relabel.len()
        )));
    }
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let rec = recover_landmark_columns(rankings, l, projection)?;
    timings.shifts = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mds = classical_mds(&rec.columns.e_hat, d)?;
    timings.mds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let placed = lmds_triangulate(&mds, &rec.columns.f_hat)?;
    let mut x = DMatrix::zeros(d, n);
    for (pos, &item) in relabel.iter().enumerate() {
        let col = if pos < l {
            mds.z.column(pos)
        } else {
            placed.column(pos - l)
        };
        x.set_column(item, &col);
    }
    let embedding = center_columns(&EmbeddingMatrix::new(x)?);
    timings.triangulation = clock.elapsed().as_secs_f64();
    timings.total = timings.shifts + timings.mds + timings.triangulation;

    Ok(RankedEmbedding {
        embedding,
        shifts: rec.shifts,
        sigma_e: rec.sigma_e,
        shift_residual: rec.shift_residual,
        negative_eigen_mass: mds.negative_mass,
        timings,
    })
}

/// Embeds all `oracle.n_items()` items into `d` dimensions with at most
/// `m_total` oracle queries.
pub fn loe(
    oracle: &dyn TripletOracle,
    d: usize,
    m_total: usize,
    config: &LoeConfig,
) -> Result<LoeOutput> {
    let started = Instant::now();
    let n = oracle.n_items();
    let l = config.n_landmarks(d);
    if d == 0 {
        return Err(LoeError::InvalidParameter("dimension must be at least 1".into()));
    }
    if l < d + 3 || l > n {
        return Err(LoeError::InvalidParameter(format!(
            "need d + 3 ≤ ℓ ≤ n, got ℓ = {l}, d = {d}, n = {n}"
        )));
    }
    if m_total < l * (n - 1) {
        return Err(LoeError::InvalidParameter(format!(
            "budget {m_total} is below ℓ·(n − 1) = {}",
            l * (n - 1)
        )));
    }

    let relabel = choose_landmarks(n, l, config.seed)?;
    let before = oracle.query_count();
    let clock = Instant::now();
    let ranked = rank_landmark_columns(
        oracle,
        &relabel,
        l,
        m_total,
        &RankingOptions {
            lambda_rule: config.lambda_rule,
            mle: config.mle,
            seed: mix(config.seed, 1),
            ordinal_base: config.ordinal_base,
            require_convergence: config.require_convergence,
        },
    )?;
    let ranking_secs = clock.elapsed().as_secs_f64();
    let queries = oracle.query_count() - before;

    let out = embed_from_rankings(&ranked.matrix, &relabel, d, config.projection)?;
    let mut timings = out.timings;
    timings.ranking = ranking_secs;
    timings.total = started.elapsed().as_secs_f64();

    Ok(LoeOutput {
        embedding: out.embedding,
        report: LoeReport {
            n_items: n,
            dim: d,
            n_landmarks: l,
            budget: m_total,
            queries,
            timings,
            sigma_e: out.sigma_e,
            shift_residual: out.shift_residual,
            negative_eigen_mass: out.negative_eigen_mass,
            under_budget: ranked.under_budget,
            columns: ranked.columns,
        },
        relabel,
        rankings: ranked.matrix,
        shifts: out.shifts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::procrustes_distance;
    use crate::oracle::BtlTripletOracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::sync::Arc;

    fn normal_points(d: usize, n: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 1.0 / (2.0 * d as f64).sqrt().sqrt()).unwrap();
        let coords: Vec<f64> = (0..d * n).map(|_| dist.sample(&mut rng)).collect();
        center_columns(&EmbeddingMatrix::from_column_slice(d, n, &coords).unwrap())
    }

    #[test]
    fn landmarks_come_first_and_cover_everything() {
        let relabel = choose_landmarks(30, 5, 9).unwrap();
        let mut sorted = relabel.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..30).collect::<Vec<_>>());
        assert!(relabel[5..].windows(2).all(|w| w[0] < w[1]));
        assert_eq!(relabel, choose_landmarks(30, 5, 9).unwrap());
        assert!(choose_landmarks(3, 4, 0).is_err());
    }

    #[test]
    fn exact_rankings_give_exact_embedding() {
        let x = normal_points(2, 60, 1);
        let relabel = choose_landmarks(60, 5, 2).unwrap();
        let r = exact_rankings(&x, &relabel, 5).unwrap();
        assert!(r.is_centered());
        let out = embed_from_rankings(&r, &relabel, 2, EdmProjection::Exact).unwrap();
        assert!(out.embedding.is_centered());
        assert!(procrustes_distance(&x, &out.embedding).unwrap() <= 1e-6);
    }

    #[test]
    fn respects_the_budget_and_validates_inputs() {
        let x = Arc::new(normal_points(2, 80, 3));
        let oracle = BtlTripletOracle::new(x, 4);
        let m = (20.0 * 80.0 * 80f64.ln()) as usize;
        let out = loe(&oracle, 2, m, &LoeConfig::with_seed(5)).unwrap();
        assert!(out.report.queries as usize <= m);
        assert_eq!(out.embedding.n_items(), 80);
        assert!(out.embedding.is_centered());

        let too_few = LoeConfig {
            landmarks: Some(4),
            ..LoeConfig::default()
        };
        assert!(loe(&oracle, 2, m, &too_few).is_err());
        assert!(loe(&oracle, 2, 10, &LoeConfig::default()).is_err());
    }

    #[test]
    fn rotating_the_truth_keeps_the_error() {
        let x = normal_points(2, 60, 6);
        let (c, s) = (0.6_f64, 0.8_f64);
        let rot = nalgebra::Matrix2::new(c, -s, s, c);
        let rotated = EmbeddingMatrix::new(
            DMatrix::from_column_slice(2, 2, rot.as_slice()) * x.as_matrix(),
        )
        .unwrap();
        let m = (50.0 * 60.0 * 60f64.ln()) as usize;
        let run = |truth: &EmbeddingMatrix| {
            let oracle = BtlTripletOracle::new(Arc::new(truth.clone()), 7);
            let out = loe(&oracle, 2, m, &LoeConfig::with_seed(8)).unwrap();
            procrustes_distance(truth, &out.embedding).unwrap()
        };
        assert!((run(&x) - run(&rotated)).abs() < 1e-6);
    }
}
