//! Direct-descent baselines over the embedding coordinates: STE (logistic
//! loss) and GNMDS (hinge loss), plus the LOE-initialized STE driver.

mod warmstart;

use std::io::{self, Write};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LoeError, Result};
use crate::eval::procrustes_distance;
use crate::matrix::{center_columns, EmbeddingMatrix};
use crate::rng::substream;
use crate::triplet::{Comparison, Label, Triplet};

pub use warmstart::{loe_ste_warmstart, WarmStartOptions, WarmStartOutput};

/// Labeled triplets stored oriented, so each entry `(i, a, b)` asks for
/// `D_ia > D_ib`.
#[derive(Debug, Clone, Default)]
pub struct TripletBatch {
    n_items: usize,
    oriented: Vec<[u32; 3]>,
}

impl TripletBatch {
    pub fn new(n_items: usize, comparisons: &[Comparison]) -> Result<Self> {
        if n_items > u32::MAX as usize {
            return Err(LoeError::InvalidParameter(format!("{n_items} items is too many")));
        }
        let mut oriented = Vec::with_capacity(comparisons.len());
        for c in comparisons {
            let t = c.triplet;
            t.check_range(n_items)?;
            let (i, j, k) = (t.i as u32, t.j as u32, t.k as u32);
            oriented.push(match c.label {
                Label::Farther => [i, j, k],
                Label::Closer => [i, k, j],
            });
        }
        Ok(Self { n_items, oriented })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.oriented.len()
    }

    pub fn is_empty(&self) -> bool {
        self.oriented.is_empty()
    }

    pub fn comparisons(&self) -> impl Iterator<Item = Comparison> + '_ {
        self.oriented.iter().map(|&[i, a, b]| {
            let t = Triplet {
                i: i as usize,
                j: a as usize,
                k: b as usize,
            };
            Comparison::new(t, Label::Farther).canonical()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub elapsed_seconds: f64,
    pub loss: f64,
    pub procrustes_error: Option<f64>,
}

/// Loss (and optionally error) against wall-clock time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DescentTrace {
    pub points: Vec<TracePoint>,
}

impl DescentTrace {
    pub fn push(&mut self, point: TracePoint) {
        debug_assert!(self
            .points
            .last()
            .is_none_or(|p| p.elapsed_seconds <= point.elapsed_seconds));
        self.points.push(point);
    }

    pub fn shifted(mut self, seconds: f64) -> Self {
        for p in &mut self.points {
            p.elapsed_seconds += seconds;
        }
        self
    }

    pub fn last(&self) -> Option<&TracePoint> {
        self.points.last()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.points.iter().rev().find_map(|p| p.procrustes_error)
    }

    /// Earliest time at which the recorded error is at most `target`.
    pub fn time_to_reach(&self, target: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.procrustes_error.is_some_and(|e| e <= target))
            .map(|p| p.elapsed_seconds)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "elapsed_seconds,loss,procrustes_error")?;
        for p in &self.points {
            match p.procrustes_error {
                Some(e) => writeln!(out, "{},{},{}", p.elapsed_seconds, p.loss, e)?,
                None => writeln!(out, "{},{},", p.elapsed_seconds, p.loss)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletLoss {
    /// `log(1 + exp(−Δ))`.
    Logistic,
    /// `max(0, 1 − Δ)`.
    Hinge,
}

impl TripletLoss {
    /// Loss and its derivative in the margin `Δ = D_ia − D_ib`.
    #[inline]
    pub fn value_and_slope(self, delta: f64) -> (f64, f64) {
        match self {
            TripletLoss::Logistic => {
                let e = (-delta.abs()).exp();
                if delta >= 0.0 {
                    (e.ln_1p(), -e / (1.0 + e))
                } else {
                    (-delta + e.ln_1p(), -1.0 / (1.0 + e))
                }
            }
            TripletLoss::Hinge => {
                if delta < 1.0 {
                    (1.0 - delta, -1.0)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub max_iters: usize,
    /// Stop when the gradient norm of the mean loss falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers the mean loss by less than this
    /// fraction.
    pub rel_tol: f64,
    pub initial_step: f64,
    /// Step growth after every accepted step.
    pub step_growth: f64,
    /// Stochastic steps on this many sampled triplets instead of full-batch
    /// line search.
    pub minibatch: Option<usize>,
    /// Wall-clock cap in seconds, excluding monitoring.
    pub time_budget: Option<f64>,
    pub seed: u64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            grad_tol: 1e-7,
            rel_tol: 1e-6,
            initial_step: 1.0,
            step_growth: 1.5,
            minibatch: None,
            time_budget: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DescentOutput {
    /// Centered final (best) embedding.
    pub embedding: EmbeddingMatrix,
    pub trace: DescentTrace,
    pub iterations: usize,
    pub converged: bool,
}

const CHUNK: usize = 1 << 15;

/// Mean loss over `batch` at column-major coordinates `x`; fills `grad` when
/// given. Chunks are reduced in a fixed order so results do not depend on
/// the thread count.
pub fn triplet_objective(
    batch: &TripletBatch,
    loss: TripletLoss,
    d: usize,
    x: &[f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    let m = batch.len().max(1) as f64;
    let want_grad = grad.is_some();
    let parts: Vec<(f64, Vec<f64>)> = batch
        .oriented
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = if want_grad { vec![0.0; x.len()] } else { Vec::new() };
            let mut total = 0.0;
            for &[i, a, b] in chunk {
                let (i, a, b) = (i as usize * d, a as usize * d, b as usize * d);
                let (xi, xa, xb) = (&x[i..i + d], &x[a..a + d], &x[b..b + d]);
                let mut delta = 0.0;
                for t in 0..d {
                    let (u, v) = (xi[t] - xa[t], xi[t] - xb[t]);
                    delta += u * u - v * v;
                }
                let (value, slope) = loss.value_and_slope(delta);
                total += value;
                if want_grad && slope != 0.0 {
                    let s = 2.0 * slope;
                    for t in 0..d {
                        g[i + t] += s * (xb[t] - xa[t]);
                        g[a + t] -= s * (xi[t] - xa[t]);
                        g[b + t] += s * (xi[t] - xb[t]);
                    }
                }
            }
            (total, g)
        })
        .collect();
    let mut total = 0.0;
    if let Some(grad) = grad {
        grad.fill(0.0);
        for (value, g) in &parts {
            total += value;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        grad.iter_mut().for_each(|v| *v /= m);
    } else {
        total = parts.iter().map(|p| p.0).sum();
    }
    total / m
}

/// Stream id reserved for starting points, so a start never replays a data
/// generator that happens to share its seed.
const INIT_STREAM: u64 = 0x1A17;

/// Random start with coordinates i.i.d. normal, variance `1/√(2d)`.
pub fn random_init(n_items: usize, d: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = substream(seed, INIT_STREAM);
    let normal = Normal::new(0.0, (2.0 * d as f64).powf(-0.25)).expect("valid normal");
    let coords: Vec<f64> = (0..n_items * d).map(|_| normal.sample(&mut rng)).collect();
    center_columns(&EmbeddingMatrix::from_column_slice(d, n_items, &coords).expect("shape"))
}

struct Clock {
    started: Instant,
    paused: Duration,
}

impl Clock {
    fn new() -> Self {
        Self {
            started: Instant::now(),
            paused: Duration::ZERO,
        }
    }

    fn elapsed(&self) -> f64 {
        (self.started.elapsed() - self.paused).as_secs_f64()
    }

    /// Runs `f` without charging its time.
    fn off_clock<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.paused += t.elapsed();
        out
    }
}

/// Gradient descent on `loss` over the coordinates, with Armijo backtracking
/// and step growth (or plain decaying steps in minibatch mode).
///
/// With `monitor` set, every iterate's Procrustes error against it is
/// recorded; that evaluation is not charged to the trace's clock.
pub fn descend(
    batch: &TripletBatch,
    loss: TripletLoss,
    d: usize,
    init: Option<&EmbeddingMatrix>,
    opts: &DescentOptions,
    monitor: Option<&EmbeddingMatrix>,
) -> Result<DescentOutput> {
    let n = batch.n_items();
    let start = match init {
        Some(x) if x.dim() != d || x.n_items() != n => {
            return Err(LoeError::DimensionMismatch(format!(
                "initial embedding is {}x{}, expected {d}x{n}",
                x.dim(),
                x.n_items()
            )))
        }
        Some(x) => x.clone(),
        None => random_init(n, d, opts.seed),
    };
    if let Some(truth) = monitor {
        if truth.n_items() != n {
            return Err(LoeError::DimensionMismatch(
                "monitor embedding has a different item count".into(),
            ));
        }
    }

    let mut clock = Clock::new();
    let mut x = start.into_inner().as_slice().to_vec();
    let mut grad = vec![0.0; x.len()];
    let mut trial = vec![0.0; x.len()];
    let mut trace = DescentTrace::default();
    let error_of = |x: &[f64]| -> Option<f64> {
        monitor.map(|truth| {
            let est = EmbeddingMatrix::from_column_slice(d, n, x).expect("shape");
            procrustes_distance(truth, &center_columns(&est)).unwrap_or(f64::NAN)
        })
    };

    let mut value = triplet_objective(batch, loss, d, &x, Some(&mut grad));
    let error = clock.off_clock(|| error_of(&x));
    trace.push(TracePoint {
        elapsed_seconds: clock.elapsed(),
        loss: value,
        procrustes_error: error,
    });

    let mut step = opts.initial_step;
    let mut iterations = 0;
    let mut converged = false;
    let mut rng = substream(opts.seed, 1);
    let mut sample = TripletBatch {
        n_items: n,
        oriented: Vec::new(),
    };

    while iterations < opts.max_iters {
        if opts.time_budget.is_some_and(|cap| clock.elapsed() >= cap) {
            break;
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        if let Some(size) = opts.minibatch {
            sample.oriented.clear();
            sample
                .oriented
                .extend((0..size).map(|_| batch.oriented[rng.random_range(0..batch.len())]));
            triplet_objective(&sample, loss, d, &x, Some(&mut grad));
            let eta = opts.initial_step / (iterations as f64).sqrt();
            x.iter_mut().zip(&grad).for_each(|(v, g)| *v -= eta * g);
            value = triplet_objective(&sample, loss, d, &x, Some(&mut grad));
        } else {
            let slope = -gnorm * gnorm;
            let mut accepted = None;
            while step > 1e-14 {
                for ((t, v), g) in trial.iter_mut().zip(&x).zip(&grad) {
                    *t = v - step * g;
                }
                let candidate = triplet_objective(batch, loss, d, &trial, None);
                if candidate <= value + 1e-4 * step * slope {
                    accepted = Some(candidate);
                    break;
                }
                step *= 0.5;
            }
            let Some(candidate) = accepted else {
                converged = true;
                break;
            };
            std::mem::swap(&mut x, &mut trial);
            let previous = value;
            value = triplet_objective(batch, loss, d, &x, Some(&mut grad));
            debug_assert!((value - candidate).abs() <= 1e-9 * candidate.abs().max(1.0));
            step *= opts.step_growth;
            if previous - value <= opts.rel_tol * previous.abs() {
                converged = true;
            }
        }

        let error = clock.off_clock(|| error_of(&x));
        trace.push(TracePoint {
            elapsed_seconds: clock.elapsed(),
            loss: value,
            procrustes_error: error,
        });
        if converged {
            break;
        }
    }

    let embedding = center_columns(&EmbeddingMatrix::new(DMatrix::from_vec(d, n, x))?);
    Ok(DescentOutput {
        embedding,
        trace,
        iterations,
        converged,
    })
}

/// Non-convex STE: logistic loss on the margins, descended directly in `X`.
pub fn ste_nonconvex(
    batch: &TripletBatch,
    d: usize,
    init: Option<&EmbeddingMatrix>,
    opts: &DescentOptions,
    monitor: Option<&EmbeddingMatrix>,
) -> Result<DescentOutput> {
    descend(batch, TripletLoss::Logistic, d, init, opts, monitor)
}

/// Non-convex GNMDS: hinge loss with unit margin, subgradient descent in `X`.
pub fn gnmds_nonconvex(
    batch: &TripletBatch,
    d: usize,
    init: Option<&EmbeddingMatrix>,
    opts: &DescentOptions,
    monitor: Option<&EmbeddingMatrix>,
) -> Result<DescentOutput> {
    descend(batch, TripletLoss::Hinge, d, init, opts, monitor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{triplet_prediction_error, PredictionMode};
    use crate::oracle::{query_all, sample_uniform_triplets, BtlTripletOracle, NoiseModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_points(d: usize, n: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..d * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        center_columns(&EmbeddingMatrix::from_column_slice(d, n, &coords).unwrap())
    }

    fn labeled(truth: &EmbeddingMatrix, m: usize, noise: NoiseModel, seed: u64) -> TripletBatch {
        let n = truth.n_items();
        let oracle = BtlTripletOracle::with_noise(Arc::new(truth.clone()), noise, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triplets = sample_uniform_triplets(n, m, &mut rng);
        TripletBatch::new(n, &query_all(&oracle, &triplets, 0).unwrap()).unwrap()
    }

    fn gradient_check(loss: TripletLoss) {
        let truth = random_points(2, 6, 1);
        let batch = labeled(&truth, 60, NoiseModel::default(), 2);
        let x = random_points(2, 6, 3).into_inner().as_slice().to_vec();
        let mut grad = vec![0.0; x.len()];
        triplet_objective(&batch, loss, 2, &x, Some(&mut grad));
        let h = 1e-6;
        for p in 0..x.len() {
            let (mut plus, mut minus) = (x.clone(), x.clone());
            plus[p] += h;
            minus[p] -= h;
            let fd = (triplet_objective(&batch, loss, 2, &plus, None)
                - triplet_objective(&batch, loss, 2, &minus, None))
                / (2.0 * h);
            assert!(
                (fd - grad[p]).abs() <= 1e-5 * grad[p].abs().max(1e-3),
                "{loss:?} coordinate {p}: {fd} vs {}",
                grad[p]
            );
        }
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        gradient_check(TripletLoss::Logistic);
    }

    #[test]
    fn hinge_subgradient_matches_finite_differences_off_kinks() {
        // random points keep every margin away from the kink at Δ = 1
        gradient_check(TripletLoss::Hinge);
    }

    #[test]
    fn losses_ignore_isometries() {
        let truth = random_points(3, 10, 4);
        let batch = labeled(&truth, 200, NoiseModel::default(), 5);
        let x = random_points(3, 10, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let mut moved = &q * x.as_matrix();
        for mut col in moved.column_iter_mut() {
            col[0] += 2.0;
            col[2] -= 1.0;
        }
        for loss in [TripletLoss::Logistic, TripletLoss::Hinge] {
            let a = triplet_objective(&batch, loss, 3, x.as_matrix().as_slice(), None);
            let b = triplet_objective(&batch, loss, 3, moved.as_slice(), None);
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn separable_instance_is_fit_exactly() {
        // no two items equidistant from a third, so every triplet is strict
        let truth =
            center_columns(&EmbeddingMatrix::from_column_slice(1, 4, &[-1.0, 0.1, 0.6, 2.3]).unwrap());
        let batch = labeled(&truth, 300, NoiseModel::Flip(0.0), 8);
        for fit in [
            ste_nonconvex(&batch, 1, None, &DescentOptions::default(), None).unwrap(),
            gnmds_nonconvex(&batch, 1, None, &DescentOptions::default(), None).unwrap(),
        ] {
            let train_error = batch
                .comparisons()
                .filter(|c| {
                    let e = &fit.embedding;
                    let delta = e.squared_distance(c.triplet.i, c.triplet.j)
                        - e.squared_distance(c.triplet.i, c.triplet.k);
                    delta * c.label.sign() <= 0.0
                })
                .count();
            assert_eq!(train_error, 0);
        }
    }

    #[test]
    fn satisfied_margins_stop_immediately() {
        let truth = random_points(2, 8, 9);
        let batch = labeled(&truth, 100, NoiseModel::Flip(0.0), 10);
        let scaled = EmbeddingMatrix::new(truth.as_matrix() * 1e4).unwrap();
        let fit = gnmds_nonconvex(&batch, 2, Some(&scaled), &DescentOptions::default(), None)
            .unwrap();
        assert_eq!(fit.trace.points[0].loss, 0.0);
        assert!(fit.converged && fit.iterations == 0);
        assert!((fit.embedding.as_matrix() - scaled.as_matrix()).amax() < 1e-9);
    }

    #[test]
    fn line_search_trace_is_monotone_and_error_drops() {
        let truth = random_points(2, 30, 11);
        let batch = labeled(&truth, 6000, NoiseModel::default(), 12);
        let fit = ste_nonconvex(&batch, 2, None, &DescentOptions::default(), Some(&truth)).unwrap();
        let pts = &fit.trace.points;
        assert!(pts.windows(2).all(|w| w[1].loss <= w[0].loss));
        assert!(pts.windows(2).all(|w| w[1].elapsed_seconds >= w[0].elapsed_seconds));
        assert!(fit.trace.final_error().unwrap() < pts[0].procrustes_error.unwrap());
        let err = triplet_prediction_error(&truth, &fit.embedding, PredictionMode::Exhaustive)
            .unwrap();
        assert!(err < 0.2, "{err}");
    }

    #[test]
    fn minibatch_mode_runs_and_is_reproducible() {
        let truth = random_points(2, 20, 13);
        let batch = labeled(&truth, 2000, NoiseModel::default(), 14);
        let opts = DescentOptions {
            minibatch: Some(100),
            max_iters: 50,
            seed: 3,
            ..DescentOptions::default()
        };
        let a = ste_nonconvex(&batch, 2, None, &opts, None).unwrap();
        let b = ste_nonconvex(&batch, 2, None, &opts, None).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert_eq!(a.iterations, 50);
    }

    #[test]
    fn trace_csv_layout() {
        let mut trace = DescentTrace::default();
        trace.push(TracePoint {
            elapsed_seconds: 0.0,
            loss: 0.5,
            procrustes_error: Some(1.0),
        });
        trace.push(TracePoint {
            elapsed_seconds: 0.25,
            loss: 0.25,
            procrustes_error: None,
        });
        let mut out = Vec::new();
        trace.clone().shifted(1.0).write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "elapsed_seconds,loss,procrustes_error\n1,0.5,1\n1.25,0.25,\n"
        );
        assert_eq!(trace.time_to_reach(1.0), Some(0.0));
        assert_eq!(trace.time_to_reach(0.5), None);
    }

    #[test]
    fn batch_roundtrips_comparisons() {
        let t = Triplet::new(2, 0, 1).unwrap();
        let input = [Comparison::new(t, Label::Closer), Comparison::new(t, Label::Farther)];
        let batch = TripletBatch::new(3, &input).unwrap();
        assert_eq!(batch.comparisons().collect::<Vec<_>>(), input.to_vec());
        assert!(TripletBatch::new(2, &input).is_err());
    }
}
