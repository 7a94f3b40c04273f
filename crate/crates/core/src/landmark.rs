//! Shift recovery for the landmark block.
//!
//! Each ranking column equals its true distance column up to an unknown
//! constant. The landmark-by-landmark block `W` of the rankings, shifted by the
//! right constants, must be a symmetric EDM; that pins the constants down up to
//! one common offset, and the offset is the second eigenvalue of the centered
//! block.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LoeError, Result};
use crate::matrix::{
    distances_from_gram, gram_from_distances, project_onto_v, shift_columns,
    sorted_symmetric_eigen, ShiftVector, SquaredDistanceMatrix,
};
use crate::ranking::RankingMatrix;

/// `ℓ × ℓ` unshifted landmark block with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WMatrix(DMatrix<f64>);

impl WMatrix {
    pub fn new(mut data: DMatrix<f64>) -> Result<Self> {
        if !data.is_square() || data.nrows() < 2 {
            return Err(LoeError::DimensionMismatch(format!(
                "W must be square with ℓ ≥ 2, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        data.fill_diagonal(0.0);
        Ok(Self(data))
    }

    pub fn n_landmarks(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Estimated landmark block `Ê` (`ℓ × ℓ`) and non-landmark block `F̂`
/// (`(n − ℓ) × ℓ`) of the squared distance matrix.
#[derive(Debug, Clone)]
pub struct LandmarkColumns {
    pub e_hat: SquaredDistanceMatrix,
    pub f_hat: DMatrix<f64>,
}

/// Column `j` of `W` is the first `ℓ − 1` entries of ranking column `j` with a
/// zero inserted at row `j`.
pub fn build_w(r: &RankingMatrix, n_landmarks: usize) -> Result<WMatrix> {
    let m = r.as_matrix();
    if m.ncols() != n_landmarks || m.nrows() + 1 < n_landmarks {
        return Err(LoeError::DimensionMismatch(format!(
            "rankings are {}x{}, need ≥ {} rows and {n_landmarks} columns",
            m.nrows(),
            m.ncols(),
            n_landmarks.saturating_sub(1)
        )));
    }
    WMatrix::new(DMatrix::from_fn(n_landmarks, n_landmarks, |i, j| {
        if i == j {
            0.0
        } else {
            m[(i - usize::from(i > j), j)]
        }
    }))
}

#[derive(Debug, Clone)]
pub struct ShiftFit {
    /// Least-squares shifts `σ̂`, centered so the landmark block mean is zero.
    pub shifts: ShiftVector,
    /// `‖A σ̂ − b‖₂`.
    pub residual: f64,
}

/// The `(C(ℓ,2) + 1) × ℓ` system: `s_i − s_j = W_ij − W_ji` for `i < j`, and
/// `Σ s = −Σ_{i≠j} W_ij / (ℓ − 1)`.
pub fn shift_system(w: &WMatrix) -> (DMatrix<f64>, DVector<f64>) {
    let l = w.n_landmarks();
    let wm = &w.0;
    let rows = l * (l - 1) / 2 + 1;
    let mut a = DMatrix::zeros(rows, l);
    let mut b = DVector::zeros(rows);
    let mut row = 0;
    for i in 0..l {
        for j in i + 1..l {
            a[(row, i)] = 1.0;
            a[(row, j)] = -1.0;
            b[row] = wm[(i, j)] - wm[(j, i)];
            row += 1;
        }
    }
    a.row_mut(row).fill(1.0);
    b[row] = -(wm.sum() - wm.trace()) / (l - 1) as f64;
    (a, b)
}

/// Solves [`shift_system`] in the least-squares sense via QR.
pub fn estimate_centered_shifts(w: &WMatrix) -> Result<ShiftFit> {
    let (a, b) = shift_system(w);
    let qr = a.clone().qr();
    let rhs = qr.q().transpose() * &b;
    let s = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| LoeError::InvalidParameter("shift system is singular".into()))?;
    let residual = (&a * &s - &b).norm();
    Ok(ShiftFit {
        shifts: ShiftVector::new(s)?,
        residual,
    })
}

/// Second largest eigenvalue of `𝒫_𝒱(shift(W, σ̂))`.
pub fn estimate_sigma_e(w: &WMatrix, sigma_hat: &ShiftVector) -> Result<f64> {
    let centered = project_onto_v(&shift_columns(&w.0, sigma_hat)?);
    let (values, _) = sorted_symmetric_eigen(&centered);
    Ok(values[1])
}

fn symmetrize_hollow(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sym = (m + m.transpose()) * 0.5;
    sym.fill_diagonal(0.0);
    sym
}

/// Projection onto `{M : xᵀMx ≤ 0 for all x ⊥ 1}`: in a Householder basis
/// sending `1` to the last axis, clip the positive spectrum of the leading
/// `(ℓ−1) × (ℓ−1)` block.
fn project_negative_on_complement(m: &DMatrix<f64>) -> DMatrix<f64> {
    let l = m.nrows();
    let mut v = DVector::from_element(l, 1.0);
    v[l - 1] += (l as f64).sqrt();
    let q = DMatrix::identity(l, l) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    let mut a = &q * m * &q;
    let block = a.view((0, 0), (l - 1, l - 1)).into_owned();
    let (values, vectors) = sorted_symmetric_eigen(&block);
    let clipped = values.map(|x| x.min(0.0));
    a.view_mut((0, 0), (l - 1, l - 1))
        .copy_from(&(&vectors * DMatrix::from_diagonal(&clipped) * vectors.transpose()));
    &q * a * &q
}

/// Maps to the EDM whose doubly centered Gram matrix is the PSD part of the
/// input's.
fn clip_gram(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_symmetric_eigen(&gram_from_distances(m));
    let clipped = values.map(|v| v.max(0.0));
    distances_from_gram(&(&vectors * DMatrix::from_diagonal(&clipped) * vectors.transpose()))
}

const DYKSTRA_MAX_ITERS: usize = 5000;

/// Frobenius-nearest EDM to the symmetric part of `m`.
///
/// The EDM cone is the intersection of the hollow symmetric matrices with the
/// cone of matrices negative semidefinite on `1^⊥`; Dykstra's alternating
/// projections converge to the projection onto it. A final Gram clip removes
/// the remaining tolerance-level violation.
pub fn project_edm(m: &DMatrix<f64>) -> Result<SquaredDistanceMatrix> {
    if !m.is_square() {
        return Err(LoeError::DimensionMismatch(format!(
            "cannot project a {}x{} matrix onto EDMs",
            m.nrows(),
            m.ncols()
        )));
    }
    let l = m.nrows();
    let mut x = symmetrize_hollow(m);
    if l >= 2 {
        let scale = x.norm().max(1e-300);
        let mut p = DMatrix::zeros(l, l);
        let mut q = DMatrix::zeros(l, l);
        for _ in 0..DYKSTRA_MAX_ITERS {
            let y = project_negative_on_complement(&(&x + &p));
            p += &x - &y;
            let next = symmetrize_hollow(&(&y + &q));
            q = &y + &q - &next;
            let moved = (&next - &x).norm();
            let gap = (&next - &y).norm();
            x = next;
            if moved <= 1e-14 * scale && gap <= 1e-12 * scale {
                break;
            }
        }
    }
    SquaredDistanceMatrix::new(tidy_distances(clip_gram(&x)))
}

/// How the shifted landmark block is mapped onto EDMs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdmProjection {
    /// Frobenius-nearest EDM ([`project_edm`]). Tends to land on low-rank
    /// faces of the cone, which can leave fewer than `d` usable directions.
    Exact,
    /// Keep the PSD part of the doubly centered Gram matrix
    /// ([`clip_gram_edm`]).
    #[default]
    GramClip,
}

impl EdmProjection {
    pub fn apply(self, m: &DMatrix<f64>) -> Result<SquaredDistanceMatrix> {
        match self {
            Self::Exact => project_edm(m),
            Self::GramClip => clip_gram_edm(m),
        }
    }
}

/// One-shot surrogate for [`project_edm`]: the EDM of the PSD part of the
/// Gram matrix of the symmetric hollow part of `m`.
pub fn clip_gram_edm(m: &DMatrix<f64>) -> Result<SquaredDistanceMatrix> {
    if !m.is_square() {
        return Err(LoeError::DimensionMismatch(format!(
            "cannot project a {}x{} matrix onto EDMs",
            m.nrows(),
            m.ncols()
        )));
    }
    SquaredDistanceMatrix::new(tidy_distances(clip_gram(&symmetrize_hollow(m))))
}

fn tidy_distances(mut d: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..d.ncols() {
        d[(j, j)] = 0.0;
        for i in 0..j {
            let v = (0.5 * (d[(i, j)] + d[(j, i)])).max(0.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

#[derive(Debug, Clone)]
pub struct LandmarkRecovery {
    pub columns: LandmarkColumns,
    /// `ŝ = σ̂ + σ̂_E·1`.
    pub shifts: ShiftVector,
    pub sigma_e: f64,
    pub shift_residual: f64,
}

/// Builds `W`, estimates the shifts, and returns the shifted landmark blocks.
pub fn recover_landmark_columns(
    r: &RankingMatrix,
    n_landmarks: usize,
    projection: EdmProjection,
) -> Result<LandmarkRecovery> {
    let w = build_w(r, n_landmarks)?;
    let fit = estimate_centered_shifts(&w)?;
    let sigma_e = estimate_sigma_e(&w, &fit.shifts)?;
    let shifts = ShiftVector::new(fit.shifts.as_vector().add_scalar(sigma_e))?;
    let e_hat = projection.apply(&shift_columns(&w.0, &shifts)?)?;

    let rm = r.as_matrix();
    let rest = rm.nrows() + 1 - n_landmarks;
    let mut f_hat = rm.rows(n_landmarks - 1, rest).into_owned();
    for (mut col, s) in f_hat.column_iter_mut().zip(shifts.as_vector().iter()) {
        col.add_scalar_mut(*s);
    }
    Ok(LandmarkRecovery {
        columns: LandmarkColumns { e_hat, f_hat },
        shifts,
        sigma_e,
        shift_residual: fit.residual,
    })
}
