//! Classical MDS on the landmark block and triangulation of everything else.

use nalgebra::{DMatrix, DVector};

use crate::error::{LoeError, Result};
use crate::matrix::{gram_from_distances, sorted_symmetric_eigen, SquaredDistanceMatrix};

#[derive(Debug, Clone)]
pub struct MdsResult {
    /// Centered landmark coordinates, `d × ℓ`.
    pub z: DMatrix<f64>,
    /// Top `d` Gram eigenvalues, descending.
    pub eigenvalues: DVector<f64>,
    /// Matching unit eigenvectors as columns, `ℓ × d`.
    pub eigenvectors: DMatrix<f64>,
    /// Sum of the magnitudes of the negative Gram eigenvalues.
    pub negative_mass: f64,
    /// Column means of the landmark distance block.
    pub mean_distances: DVector<f64>,
}

impl MdsResult {
    pub fn dim(&self) -> usize {
        self.z.nrows()
    }
}

pub fn classical_mds(e: &SquaredDistanceMatrix, d: usize) -> Result<MdsResult> {
    let l = e.n_items();
    if d == 0 || l < d + 1 {
        return Err(LoeError::InvalidParameter(format!(
            "classical MDS into {d} dimensions needs at least {} points, got {l}",
            d + 1
        )));
    }
    let (values, vectors) = sorted_symmetric_eigen(&gram_from_distances(e.as_matrix()));
    let scale = values[0].abs().max(1.0);
    if values.rows(0, d).iter().any(|&v| v < -1e-12 * scale) {
        return Err(LoeError::InsufficientSpectrum {
            needed: d,
            spectrum: values.iter().copied().collect(),
        });
    }
    let eigenvalues = values.rows(0, d).map(|v| v.max(0.0));
    let eigenvectors = vectors.columns(0, d).into_owned();
    let mut z = eigenvectors.transpose();
    for (mut row, lambda) in z.row_iter_mut().zip(eigenvalues.iter()) {
        row *= lambda.sqrt();
    }
    Ok(MdsResult {
        z,
        negative_mass: values.iter().filter(|&&v| v < 0.0).map(|v| -v).sum(),
        eigenvalues,
        eigenvectors,
        mean_distances: e.as_matrix().row_mean().transpose(),
    })
}

/// Places points from their squared distances to the landmarks (one row of
/// `f` per point) with `x = −½ L^# (δ − δ̄)`, where `L^#` has rows
/// `v_kᵀ / √λ_k`.
pub fn lmds_triangulate(mds: &MdsResult, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = mds.eigenvectors.nrows();
    if f.ncols() != l {
        return Err(LoeError::DimensionMismatch(format!(
            "point distances have {} columns for {l} landmarks",
            f.ncols()
        )));
    }
    let top = mds.eigenvalues[0];
    if !(top > 0.0) || mds.eigenvalues.iter().any(|&v| v <= 1e-12 * top) {
        return Err(LoeError::RankDeficient {
            eigenvalues: mds.eigenvalues.iter().copied().collect(),
        });
    }
    let mut pinv = mds.eigenvectors.transpose();
    for (mut row, lambda) in pinv.row_iter_mut().zip(mds.eigenvalues.iter()) {
        row *= -0.5 / lambda.sqrt();
    }
    let mut delta = f.transpose();
    for mut col in delta.column_iter_mut() {
        col -= &mds.mean_distances;
    }
    Ok(pinv * delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::procrustes_distance;
    use crate::matrix::{center_columns, squared_distance_matrix, EmbeddingMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(d: usize, n: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..d * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        EmbeddingMatrix::from_column_slice(d, n, &coords).unwrap()
    }

    fn landmark_distances(points: &EmbeddingMatrix, landmarks: &EmbeddingMatrix) -> DMatrix<f64> {
        DMatrix::from_fn(points.n_items(), landmarks.n_items(), |a, c| {
            points
                .point(a)
                .iter()
                .zip(landmarks.point(c))
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        })
    }

    #[test]
    fn recovers_landmarks_up_to_rotation() {
        for seed in 0..10 {
            let x = center_columns(&random_points(2, 5, seed));
            let mds = classical_mds(&squared_distance_matrix(&x), 2).unwrap();
            let z = EmbeddingMatrix::new(mds.z.clone()).unwrap();
            assert!(z.is_centered());
            assert!(procrustes_distance(&x, &z).unwrap() <= 1e-8);
            let back = squared_distance_matrix(&z);
            assert!((back.as_matrix() - squared_distance_matrix(&x).as_matrix()).amax() < 1e-8);
        }
    }

    #[test]
    fn coincident_points_embed_at_origin() {
        let e = SquaredDistanceMatrix::new(DMatrix::zeros(4, 4)).unwrap();
        let mds = classical_mds(&e, 2).unwrap();
        assert!(mds.z.amax() < 1e-15);
        assert!(lmds_triangulate(&mds, &DMatrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn collinear_points_in_one_dimension() {
        let x = EmbeddingMatrix::from_column_slice(1, 4, &[-1.5, -0.25, 0.5, 1.25]).unwrap();
        let mds = classical_mds(&squared_distance_matrix(&x), 1).unwrap();
        let z = mds.z.row(0);
        let sign = z[0].signum() * x.as_matrix()[(0, 0)].signum();
        for i in 0..4 {
            assert!((sign * z[i] - x.as_matrix()[(0, i)]).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_too_few_landmarks_and_indefinite_blocks() {
        let x = random_points(2, 2, 1);
        assert!(classical_mds(&squared_distance_matrix(&x), 2).is_err());
        // nonnegative and hollow, but its Gram matrix has two negative eigenvalues
        let bad = SquaredDistanceMatrix::new(DMatrix::from_row_slice(
            5,
            5,
            &[
                0.0, 5.0, 0.0, 0.0, 1.0, 5.0, 0.0, 9.0, 7.0, 2.0, 0.0, 9.0, 0.0, 4.0, 7.0, 0.0, 7.0,
                4.0, 0.0, 0.0, 1.0, 2.0, 7.0, 0.0, 0.0,
            ],
        ))
        .unwrap();
        assert!(classical_mds(&bad, 3).is_ok());
        assert!(matches!(
            classical_mds(&bad, 4),
            Err(LoeError::InsufficientSpectrum { .. })
        ));
    }

    #[test]
    fn triangulation_is_exact_without_noise() {
        let landmarks = center_columns(&random_points(2, 5, 2));
        let mds = classical_mds(&squared_distance_matrix(&landmarks), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coords: Vec<f64> = (0..2 * 30).map(|_| rng.random_range(-0.3..0.3)).collect();
        let others = EmbeddingMatrix::from_column_slice(2, 30, &coords).unwrap();
        let placed = lmds_triangulate(&mds, &landmark_distances(&others, &landmarks)).unwrap();

        let mut both = DMatrix::zeros(2, 35);
        both.columns_mut(0, 5).copy_from(landmarks.as_matrix());
        both.columns_mut(5, 30).copy_from(others.as_matrix());
        let mut est = DMatrix::zeros(2, 35);
        est.columns_mut(0, 5).copy_from(&mds.z);
        est.columns_mut(5, 30).copy_from(&placed);
        let truth = squared_distance_matrix(&EmbeddingMatrix::new(both).unwrap());
        let got = squared_distance_matrix(&EmbeddingMatrix::new(est).unwrap());
        assert!((truth.as_matrix() - got.as_matrix()).amax() < 1e-8);
    }

    #[test]
    fn duplicate_of_a_landmark_lands_on_it() {
        let landmarks = center_columns(&random_points(3, 6, 4));
        let e = squared_distance_matrix(&landmarks);
        let mds = classical_mds(&e, 3).unwrap();
        let row = e.as_matrix().rows(0, 1).into_owned();
        let placed = lmds_triangulate(&mds, &row).unwrap();
        assert!((placed.column(0) - mds.z.column(0)).amax() < 1e-8);
    }

    #[test]
    fn translation_leaves_recovered_distances_alone() {
        let all = random_points(2, 20, 5);
        let shift = [3.0, -7.0];
        let mut moved = all.as_matrix().clone();
        for mut col in moved.column_iter_mut() {
            col[0] += shift[0];
            col[1] += shift[1];
        }
        let moved = EmbeddingMatrix::new(moved).unwrap();
        let recover = |x: &EmbeddingMatrix| {
            let lm = EmbeddingMatrix::new(x.as_matrix().columns(0, 5).into_owned()).unwrap();
            let rest = EmbeddingMatrix::new(x.as_matrix().columns(5, 15).into_owned()).unwrap();
            let mds = classical_mds(&squared_distance_matrix(&lm), 2).unwrap();
            let placed = lmds_triangulate(&mds, &landmark_distances(&rest, &lm)).unwrap();
            squared_distance_matrix(&EmbeddingMatrix::new(placed).unwrap()).into_inner()
        };
        assert!((recover(&all) - recover(&moved)).amax() < 1e-8);
    }
}
