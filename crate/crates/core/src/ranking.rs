//! Regularized Bradley-Terry-Luce score estimation and the landmark column
//! ranking stage.
//!
//! Each landmark's column oracle compares the other `n − 1` items by their
//! distance to the landmark, so the fitted BTL scores estimate that distance
//! column up to an unknown additive constant.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LoeError, Result};
use crate::oracle::{column_triplet, sample_uniform_pairs, TripletOracle};
use crate::rng::substream;
use crate::triplet::{Comparison, Label, Triplet};

/// Pairwise outcomes over `n_items`, stored as `(farther, nearer)` so every
/// record contributes `log f(θ_farther − θ_nearer)`.
#[derive(Debug, Clone, Default)]
pub struct ComparisonSet {
    n_items: usize,
    outcomes: Vec<(u32, u32)>,
}

impl ComparisonSet {
    pub fn new(n_items: usize) -> Self {
        Self {
            n_items,
            outcomes: Vec::new(),
        }
    }

    pub fn with_capacity(n_items: usize, capacity: usize) -> Self {
        Self {
            n_items,
            outcomes: Vec::with_capacity(capacity),
        }
    }

    /// Records the answer for pair `(j, k)`: `Farther` means `θ_j > θ_k` won.
    pub fn push(&mut self, j: usize, k: usize, label: Label) -> Result<()> {
        if j == k || j >= self.n_items || k >= self.n_items {
            return Err(LoeError::InvalidPair {
                j,
                k,
                n_items: self.n_items,
            });
        }
        let (a, b) = (j as u32, k as u32);
        self.outcomes.push(match label {
            Label::Farther => (a, b),
            Label::Closer => (b, a),
        });
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Records as `(j, k, label)` with `j < k`.
    pub fn records(&self) -> impl Iterator<Item = (usize, usize, Label)> + '_ {
        self.outcomes.iter().map(|&(w, l)| {
            let (w, l) = (w as usize, l as usize);
            if w < l {
                (w, l, Label::Farther)
            } else {
                (l, w, Label::Closer)
            }
        })
    }
}

/// BTL scores, centered so they sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(DVector<f64>);

impl ScoreVector {
    pub fn centered(mut values: DVector<f64>) -> Self {
        if !values.is_empty() {
            let mean = values.mean();
            values.add_scalar_mut(-mean);
        }
        Self(values)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// The regularized log-likelihood `ℒ_λ(θ)`.
pub fn log_likelihood(omega: &ComparisonSet, theta: &DVector<f64>, lambda: f64) -> f64 {
    let t = theta.as_slice();
    let fit: f64 = omega
        .outcomes
        .iter()
        .map(|&(w, l)| -softplus(-(t[w as usize] - t[l as usize])))
        .sum();
    fit - 0.5 * lambda * theta.norm_squared()
}

/// Analytic gradient of [`log_likelihood`].
pub fn log_likelihood_gradient(
    omega: &ComparisonSet,
    theta: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    let mut eval = Evaluation::new(omega.n_items);
    eval.compute(omega, theta.as_slice(), lambda);
    -DVector::from_vec(eval.grad)
}

/// Negated objective with gradient and Hessian diagonal, fused in one pass.
struct Evaluation {
    value: f64,
    grad: Vec<f64>,
    hess_diag: Vec<f64>,
}

impl Evaluation {
    fn new(n: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![0.0; n],
            hess_diag: vec![0.0; n],
        }
    }

    fn compute(&mut self, omega: &ComparisonSet, theta: &[f64], lambda: f64) {
        let mut value = 0.0;
        for (g, (h, &t)) in self.grad.iter_mut().zip(self.hess_diag.iter_mut().zip(theta)) {
            *g = lambda * t;
            *h = lambda;
            value += 0.5 * lambda * t * t;
        }
        for &(w, l) in &omega.outcomes {
            let (w, l) = (w as usize, l as usize);
            let delta = theta[w] - theta[l];
            let e = (-delta.abs()).exp();
            // q = σ(−δ), the loss derivative magnitude
            let (q, loss) = if delta >= 0.0 {
                (e / (1.0 + e), e.ln_1p())
            } else {
                (1.0 / (1.0 + e), -delta + e.ln_1p())
            };
            value += loss;
            self.grad[w] -= q;
            self.grad[l] += q;
            let curvature = q * (1.0 - q);
            self.hess_diag[w] += curvature;
            self.hess_diag[l] += curvature;
        }
        self.value = value;
    }

    fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    /// Stop once the gradient norm of `ℒ_λ` is at most this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MleSolution {
    pub scores: ScoreVector,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Maximizes `ℒ_λ` from `θ = 0`.
pub fn regularized_btl_mle(
    omega: &ComparisonSet,
    lambda: f64,
    opts: &MleOptions,
) -> Result<MleSolution> {
    regularized_btl_mle_from(omega, lambda, opts, None)
}

/// Maximizes `ℒ_λ` by Jacobi-scaled gradient ascent with Armijo backtracking,
/// starting from `init` (centered first) or zero.
///
/// The optimum always sums to zero, so iterates stay on that hyperplane.
/// Non-convergence is reported through [`MleSolution::converged`] with the
/// last (best) iterate.
pub fn regularized_btl_mle_from(
    omega: &ComparisonSet,
    lambda: f64,
    opts: &MleOptions,
    init: Option<&DVector<f64>>,
) -> Result<MleSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LoeError::InvalidParameter(format!(
            "regularization must be positive, got {lambda}"
        )));
    }
    let n = omega.n_items;
    let mut theta = match init {
        Some(v) if v.len() != n => {
            return Err(LoeError::DimensionMismatch(format!(
                "initial scores have length {}, expected {n}",
                v.len()
            )))
        }
        Some(v) => ScoreVector::centered(v.clone()).into_inner(),
        None => DVector::zeros(n),
    };
    if n == 0 {
        return Ok(MleSolution {
            scores: ScoreVector(theta),
            iterations: 0,
            gradient_norm: 0.0,
            converged: true,
        });
    }

    let mut current = Evaluation::new(n);
    current.compute(omega, theta.as_slice(), lambda);
    let mut trial = Evaluation::new(n);
    let mut candidate = DVector::zeros(n);
    let mut direction = DVector::zeros(n);
    let mut step = 1.0_f64;
    let mut iterations = 0;

    while iterations < opts.max_iters && current.grad_norm() > opts.tol {
        iterations += 1;
        for (p, (g, h)) in direction
            .iter_mut()
            .zip(current.grad.iter().zip(&current.hess_diag))
        {
            *p = -g / h;
        }
        let mean = direction.mean();
        direction.add_scalar_mut(-mean);
        let slope: f64 = direction
            .iter()
            .zip(&current.grad)
            .map(|(p, g)| p * g)
            .sum();
        if slope >= 0.0 {
            break;
        }

        step = (step * 2.0).min(1.0);
        let mut accepted = false;
        while step > 1e-12 {
            candidate.copy_from(&theta);
            candidate.axpy(step, &direction, 1.0);
            trial.compute(omega, candidate.as_slice(), lambda);
            let armijo = trial.value <= current.value + 1e-4 * step * slope;
            // Near the optimum the predicted decrease drops below the
            // objective's rounding floor; fall back to gradient decrease.
            let in_noise = (step * slope).abs() <= 1e-11 * (1.0 + current.value.abs());
            if armijo || (in_noise && trial.grad_norm() < current.grad_norm()) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        std::mem::swap(&mut theta, &mut candidate);
        std::mem::swap(&mut current, &mut trial);
    }

    let gradient_norm = current.grad_norm();
    Ok(MleSolution {
        scores: ScoreVector::centered(theta),
        iterations,
        gradient_norm,
        converged: gradient_norm <= opts.tol,
    })
}

/// `scale · √(n³ ln n / m)`.
pub fn lambda_for(n_items: usize, m: usize, scale: f64) -> f64 {
    let n = n_items as f64;
    scale * (n.powi(3) * n.ln() / m.max(1) as f64).sqrt()
}

/// Regularization schedule `√(n³ ln n / m)` with unit constant.
pub fn default_lambda(n_items: usize, m: usize) -> f64 {
    lambda_for(n_items, m, 1.0)
}

/// Default constant for [`LambdaRule::Schedule`] in the embedding pipeline.
pub const DEFAULT_LAMBDA_SCALE: f64 = 3e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LambdaRule {
    /// `scale · √(n³ ln n / m)` per column problem.
    Schedule { scale: f64 },
    Fixed { lambda: f64 },
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Schedule {
            scale: DEFAULT_LAMBDA_SCALE,
        }
    }
}

impl LambdaRule {
    pub fn lambda(&self, n_items: usize, m: usize) -> f64 {
        match *self {
            // a 1-item problem has ln n = 0; any positive value works there
            LambdaRule::Schedule { scale } => lambda_for(n_items, m, scale).max(f64::MIN_POSITIVE),
            LambdaRule::Fixed { lambda } => lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RankingOptions {
    pub lambda_rule: LambdaRule,
    pub mle: MleOptions,
    /// Seed for the per-column pair sampling streams.
    pub seed: u64,
    /// Offset added to every oracle ordinal this stage uses.
    pub ordinal_base: u64,
    /// Turn per-column non-convergence into an error instead of a flag.
    pub require_convergence: bool,
}

/// `(n − 1) × ℓ` matrix whose column `c` holds the centered scores of the
/// `c`-th landmark's column problem, rows in relabeled item order with the
/// landmark itself removed.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingMatrix(DMatrix<f64>);

impl RankingMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() < 2 || data.nrows() + 1 < data.ncols() {
            return Err(LoeError::DimensionMismatch(format!(
                "ranking matrix must have at least 2 columns and ≥ ℓ−1 rows, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self(data))
    }

    pub fn n_landmarks(&self) -> usize {
        self.0.ncols()
    }

    /// Total item count `n` (one more than the row count).
    pub fn n_items(&self) -> usize {
        self.0.nrows() + 1
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_centered(&self) -> bool {
        let rows = self.0.nrows() as f64;
        let scale = self.0.amax().max(1.0);
        self.0
            .column_iter()
            .all(|c| c.sum().abs() <= 1e-8 * rows * scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDiagnostics {
    pub landmark: usize,
    pub comparisons: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct RankingOutput {
    pub matrix: RankingMatrix,
    pub columns: Vec<ColumnDiagnostics>,
    /// Per-column budget fell below `(n − 1) ln(n − 1)`.
    pub under_budget: bool,
}

/// Maps relabeled indices (landmarks first) to original item ids.
fn check_relabeling(relabel: &[usize], n_items: usize, n_landmarks: usize) -> Result<()> {
    if relabel.len() != n_items {
        return Err(LoeError::DimensionMismatch(format!(
            "relabeling has {} entries for {n_items} items",
            relabel.len()
        )));
    }
    if n_landmarks < 2 || n_landmarks > n_items {
        return Err(LoeError::InvalidParameter(format!(
            "need 2 ≤ ℓ ≤ n, got ℓ = {n_landmarks}, n = {n_items}"
        )));
    }
    let mut seen = vec![false; n_items];
    for &item in relabel {
        if item >= n_items || std::mem::replace(&mut seen[item], true) {
            return Err(LoeError::InvalidParameter(
                "relabeling must be a permutation of the items".into(),
            ));
        }
    }
    Ok(())
}

/// Ranks the first `n_landmarks` relabeled items' distance columns by querying
/// their column oracles with `⌊m_total / ℓ⌋` uniformly drawn pairs each.
///
/// Column `c` draws its pairs from its own seeded stream and uses oracle
/// ordinals `ordinal_base + c·m ..`, so the output does not depend on how the
/// columns are scheduled.
pub fn rank_landmark_columns(
    oracle: &dyn TripletOracle,
    relabel: &[usize],
    n_landmarks: usize,
    m_total: usize,
    opts: &RankingOptions,
) -> Result<RankingOutput> {
    let n = oracle.n_items();
    check_relabeling(relabel, n, n_landmarks)?;
    let per_column = m_total / n_landmarks;
    let rest = n - 1;

    let solved: Vec<Result<(DVector<f64>, ColumnDiagnostics)>> = (0..n_landmarks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(opts.seed, c as u64);
            let pairs = if rest >= 2 {
                sample_uniform_pairs(rest, per_column, &mut rng)
            } else {
                Vec::new()
            };
            let first = opts.ordinal_base + (c * per_column) as u64;
            let mut omega = ComparisonSet::with_capacity(rest, pairs.len());
            for (q, &(j, k)) in pairs.iter().enumerate() {
                let t = column_triplet(c, j, k, n)?;
                let original = Triplet {
                    i: relabel[t.i],
                    j: relabel[t.j],
                    k: relabel[t.k],
                };
                let label = oracle.compare_at(original, first + q as u64)?;
                omega.push(j, k, label)?;
            }
            solve_column(&omega, c, opts)
        })
        .collect();

    assemble(solved, rest, per_column, opts)
}

/// Column ranking from recorded comparisons: column `c` uses every record
/// whose head is the `c`-th landmark.
pub fn rank_columns_from_comparisons(
    comparisons: &[Comparison],
    relabel: &[usize],
    n_landmarks: usize,
    opts: &RankingOptions,
) -> Result<RankingOutput> {
    let n = relabel.len();
    check_relabeling(relabel, n, n_landmarks)?;
    let mut position = vec![0usize; n];
    for (r, &item) in relabel.iter().enumerate() {
        position[item] = r;
    }
    let mut per_head: HashMap<usize, ComparisonSet> = HashMap::new();
    for c in comparisons {
        c.triplet.check_range(n)?;
        let col = position[c.triplet.i];
        if col >= n_landmarks {
            continue;
        }
        let row = |r: usize| r - usize::from(r > col);
        per_head
            .entry(col)
            .or_insert_with(|| ComparisonSet::new(n - 1))
            .push(row(position[c.triplet.j]), row(position[c.triplet.k]), c.label)?;
    }
    let min_count = per_head.values().map(|s| s.len()).min().unwrap_or(0);
    let solved: Vec<_> = (0..n_landmarks)
        .into_par_iter()
        .map(|c| {
            let empty = ComparisonSet::new(n - 1);
            solve_column(per_head.get(&c).unwrap_or(&empty), c, opts)
        })
        .collect();
    assemble(solved, n - 1, min_count, opts)
}

fn solve_column(
    omega: &ComparisonSet,
    column: usize,
    opts: &RankingOptions,
) -> Result<(DVector<f64>, ColumnDiagnostics)> {
    let lambda = opts.lambda_rule.lambda(omega.n_items(), omega.len());
    let sol = regularized_btl_mle(omega, lambda, &opts.mle)?;
    if opts.require_convergence && !sol.converged {
        return Err(LoeError::NotConverged {
            iterations: sol.iterations,
            grad_norm: sol.gradient_norm,
        });
    }
    Ok((
        sol.scores.into_inner(),
        ColumnDiagnostics {
            landmark: column,
            comparisons: omega.len(),
            lambda,
            iterations: sol.iterations,
            gradient_norm: sol.gradient_norm,
            converged: sol.converged,
        },
    ))
}

fn assemble(
    solved: Vec<Result<(DVector<f64>, ColumnDiagnostics)>>,
    rows: usize,
    per_column: usize,
    _opts: &RankingOptions,
) -> Result<RankingOutput> {
    let mut matrix = DMatrix::zeros(rows, solved.len());
    let mut columns = Vec::with_capacity(solved.len());
    for (c, result) in solved.into_iter().enumerate() {
        let (scores, diag) = result?;
        matrix.set_column(c, &scores);
        columns.push(diag);
    }
    let r = rows as f64;
    Ok(RankingOutput {
        matrix: RankingMatrix::new(matrix)?,
        columns,
        under_budget: (per_column as f64) < r * r.max(1.0).ln(),
    })
}
