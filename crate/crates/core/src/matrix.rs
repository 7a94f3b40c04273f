//! Shared matrix types and the small operators every stage builds on:
//! squared distances, the column shift operator, and the projection onto
//! symmetric matrices orthogonal to `J = 11ᵀ − I`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{LoeError, Result};

/// Point coordinates, one column per item (`d × n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix(DMatrix<f64>);

impl EmbeddingMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(LoeError::InvalidParameter(
                "embedding dimension must be at least 1".into(),
            ));
        }
        Ok(Self(data))
    }

    /// Builds a `d × n` matrix from a column-major coordinate slice.
    pub fn from_column_slice(dim: usize, n_items: usize, coords: &[f64]) -> Result<Self> {
        if coords.len() != dim * n_items {
            return Err(LoeError::DimensionMismatch(format!(
                "{} coordinates for a {dim}x{n_items} embedding",
                coords.len()
            )));
        }
        Self::new(DMatrix::from_column_slice(dim, n_items, coords))
    }

    pub fn zeros(dim: usize, n_items: usize) -> Self {
        Self(DMatrix::zeros(dim.max(1), n_items))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn as_matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Coordinates of item `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.0.as_slice()[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn squared_distance(&self, a: usize, b: usize) -> f64 {
        self.point(a)
            .iter()
            .zip(self.point(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }

    /// True when every coordinate row has mean zero up to `1e-9` relative to
    /// the coordinate magnitude.
    pub fn is_centered(&self) -> bool {
        let n = self.n_items();
        if n == 0 {
            return true;
        }
        let scale = self.0.amax().max(1.0);
        self.0
            .row_iter()
            .all(|row| row.sum().abs() <= 1e-9 * n as f64 * scale)
    }
}

/// Squared Euclidean distances between items.
///
/// Symmetric within `1e-12`, zero diagonal, nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredDistanceMatrix(DMatrix<f64>);

impl SquaredDistanceMatrix {
    /// Wraps `data` after checking the distance-matrix invariants.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if !data.is_square() {
            return Err(LoeError::DimensionMismatch(format!(
                "distance matrix must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let n = data.nrows();
        let scale = data.amax().max(1.0);
        for i in 0..n {
            if data[(i, i)] != 0.0 {
                return Err(LoeError::InvalidParameter(format!(
                    "nonzero diagonal entry {} at {i}",
                    data[(i, i)]
                )));
            }
            for j in 0..i {
                let (a, b) = (data[(i, j)], data[(j, i)]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(LoeError::InvalidParameter(format!(
                        "asymmetric entries ({i},{j})={a} vs ({j},{i})={b}"
                    )));
                }
                if a < 0.0 || !a.is_finite() {
                    return Err(LoeError::InvalidParameter(format!(
                        "entry ({i},{j}) = {a} is not a nonnegative finite distance"
                    )));
                }
            }
        }
        Ok(Self(data))
    }

    pub fn n_items(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// Per-column constant shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftVector(DVector<f64>);

impl ShiftVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LoeError::InvalidParameter(
                "shift vector entries must be finite".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// Anything that can report the squared distance between two items.
pub trait DistanceSource: Send + Sync {
    fn n_items(&self) -> usize;
    fn squared_distance(&self, a: usize, b: usize) -> f64;
}

impl DistanceSource for EmbeddingMatrix {
    fn n_items(&self) -> usize {
        self.n_items()
    }

    fn squared_distance(&self, a: usize, b: usize) -> f64 {
        EmbeddingMatrix::squared_distance(self, a, b)
    }
}

impl DistanceSource for SquaredDistanceMatrix {
    fn n_items(&self) -> usize {
        self.n_items()
    }

    fn squared_distance(&self, a: usize, b: usize) -> f64 {
        self.get(a, b)
    }
}

pub fn squared_distance_matrix(x: &EmbeddingMatrix) -> SquaredDistanceMatrix {
    let n = x.n_items();
    let mut d = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..a {
            let v = x.squared_distance(a, b);
            d[(a, b)] = v;
            d[(b, a)] = v;
        }
    }
    SquaredDistanceMatrix(d)
}

/// `J = 11ᵀ − I` of size `l`.
pub fn j_matrix(l: usize) -> DMatrix<f64> {
    DMatrix::from_fn(l, l, |i, j| if i == j { 0.0 } else { 1.0 })
}

/// `shift(W, s) = W + J·diag(s)`: adds `s[j]` to the off-diagonal entries of column `j`.
pub fn shift_columns(w: &DMatrix<f64>, s: &ShiftVector) -> Result<DMatrix<f64>> {
    if !w.is_square() || w.ncols() != s.len() {
        return Err(LoeError::DimensionMismatch(format!(
            "cannot shift a {}x{} matrix by {} column shifts",
            w.nrows(),
            w.ncols(),
            s.len()
        )));
    }
    let mut out = w.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let shift = s.as_vector()[j];
        for (i, v) in col.iter_mut().enumerate() {
            if i != j {
                *v += shift;
            }
        }
    }
    Ok(out)
}

/// `σ_X = ⟨X, J⟩ / ‖J‖²`, the mean off-diagonal entry.
pub fn mean_off_diagonal(x: &DMatrix<f64>) -> f64 {
    let l = x.nrows();
    if l < 2 {
        return 0.0;
    }
    let off: f64 = x.sum() - x.trace();
    off / (l * (l - 1)) as f64
}

/// Orthogonal projection onto `𝒱 = {symmetric} ∩ J^⊥`.
pub fn project_onto_v(x: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (x + x.transpose()) * 0.5;
    let sigma = mean_off_diagonal(&sym);
    let l = sym.nrows();
    DMatrix::from_fn(l, l, |i, j| {
        if i == j {
            sym[(i, j)]
        } else {
            sym[(i, j)] - sigma
        }
    })
}

/// Subtracts each coordinate row's mean.
pub fn center_columns(x: &EmbeddingMatrix) -> EmbeddingMatrix {
    let mut m = x.0.clone();
    if m.ncols() > 0 {
        let means = m.column_mean();
        for mut col in m.column_iter_mut() {
            col -= &means;
        }
    }
    EmbeddingMatrix(m)
}

/// Gram matrix `−½ H M H` of a (squared) distance matrix, `H = I − 11ᵀ/l`.
pub fn gram_from_distances(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = m.clone();
    let row_means = g.column_mean();
    let col_means = g.row_mean();
    let total = g.mean();
    let l = g.nrows();
    for j in 0..l {
        for i in 0..l {
            g[(i, j)] = -0.5 * (g[(i, j)] - row_means[i] - col_means[j] + total);
        }
    }
    g
}

/// Squared distances `G_ii + G_jj − 2 G_ij` implied by a Gram matrix.
pub fn distances_from_gram(g: &DMatrix<f64>) -> DMatrix<f64> {
    let l = g.nrows();
    DMatrix::from_fn(l, l, |i, j| {
        if i == j {
            0.0
        } else {
            g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)]
        }
    })
}

/// Symmetric eigendecomposition with eigenvalues sorted descending and the
/// eigenvector columns permuted to match.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}
