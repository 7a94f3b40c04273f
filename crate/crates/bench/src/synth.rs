//! Synthetic point configurations.

use loe_core::matrix::center_columns;
use loe_core::rng::substream;
use loe_core::EmbeddingMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// i.i.d. `N(0, σ² I)` coordinates with `σ² = 1/√(2d)`, centered.
pub fn generate_normal_config(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = substream(seed, 0);
    let normal = Normal::new(0.0, (2.0 * d as f64).powf(-0.25)).expect("finite scale");
    let coords: Vec<f64> = (0..n * d).map(|_| normal.sample(&mut rng)).collect();
    center_columns(&EmbeddingMatrix::from_column_slice(d, n, &coords).expect("shape"))
}

/// i.i.d. `U(0, 1)` coordinates, centered.
pub fn generate_uniform_config(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = substream(seed, 0);
    let coords: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    center_columns(&EmbeddingMatrix::from_column_slice(d, n, &coords).expect("shape"))
}

/// `k` isotropic Gaussian blobs of unit radius (per-coordinate standard
/// deviation 1) whose centers sit on a random orthogonal-ish frame scaled so
/// that every pair of centers is `separation` apart. Labels are balanced.
pub fn generate_clustered_config(
    n: usize,
    d: usize,
    k: usize,
    separation: f64,
    seed: u64,
) -> (EmbeddingMatrix, Vec<usize>) {
    assert!(k >= 1 && k <= n, "need 1 ≤ k ≤ n");
    let mut rng = substream(seed, 0);
    // simplex vertices: e_c / √2 in k dimensions are pairwise 1 apart; embed
    // them into d dimensions with a random projection when k > d
    let centers: Vec<Vec<f64>> = if k <= d {
        (0..k)
            .map(|c| {
                (0..d)
                    .map(|t| if t == c { separation / 2f64.sqrt() } else { 0.0 })
                    .collect()
            })
            .collect()
    } else {
        (0..k)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / norm * separation).collect()
            })
            .collect()
    };
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let coords: Vec<f64> = labels
        .iter()
        .flat_map(|&c| {
            let center = &centers[c];
            (0..d)
                .map(|t| center[t] + rng.sample::<f64, _>(StandardNormal))
                .collect::<Vec<_>>()
        })
        .collect();
    let x = center_columns(&EmbeddingMatrix::from_column_slice(d, n, &coords).expect("shape"));
    (x, labels)
}
