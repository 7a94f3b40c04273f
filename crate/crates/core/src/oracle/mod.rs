//! Triplet comparison oracles.
//!
//! [`BtlTripletOracle`] simulates noisy answers over a latent configuration,
//! [`DatasetOracle`] replays recorded comparisons. Both implement
//! [`TripletOracle`], whose answers are a pure function of the triplet and a
//! query ordinal so concurrent callers stay reproducible.

mod dataset;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{LoeError, Result};
use crate::matrix::DistanceSource;
use crate::rng::uniform_at;
use crate::triplet::{Comparison, Label, Triplet};

pub use dataset::{load_triplet_file, parse_triplets, DatasetOracle};

/// Numerically stable logistic function.
#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    /// Bradley-Terry-Luce.
    #[default]
    Logistic,
    /// Thurstone: standard normal CDF.
    Probit,
}

impl LinkFunction {
    pub fn cdf(self, t: f64) -> f64 {
        match self {
            LinkFunction::Logistic => logistic(t),
            LinkFunction::Probit => Normal::standard().cdf(t),
        }
    }
}

/// How the simulated oracle corrupts the exact answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    /// `+1` with probability `link(D_ij − D_ik)`.
    Link(LinkFunction),
    /// Exact answer, flipped independently with the given probability.
    Flip(f64),
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::Link(LinkFunction::Logistic)
    }
}

/// Ordinal allocation and served-query accounting shared by all oracles.
#[derive(Debug, Default)]
pub struct QueryCounter {
    next_ordinal: AtomicU64,
    served: AtomicU64,
}

impl QueryCounter {
    pub fn served(&self) -> u64 {
        self.served.load(Ordering::Relaxed)
    }

    fn take_ordinal(&self) -> u64 {
        self.next_ordinal.fetch_add(1, Ordering::Relaxed)
    }

    fn record(&self, count: u64) {
        self.served.fetch_add(count, Ordering::Relaxed);
    }
}

pub trait TripletOracle: Send + Sync {
    fn n_items(&self) -> usize;

    /// Answer for `t` as the `ordinal`-th query. Pure: does not count.
    fn label_at(&self, t: Triplet, ordinal: u64) -> Result<Label>;

    fn counter(&self) -> &QueryCounter;

    /// Answers `t` using an explicit ordinal; callers partitioning ordinals
    /// disjointly get scheduling-independent results.
    fn compare_at(&self, t: Triplet, ordinal: u64) -> Result<Label> {
        let label = self.label_at(t, ordinal)?;
        self.counter().record(1);
        Ok(label)
    }

    /// Answers `t` with the next ordinal from the shared counter.
    fn compare(&self, t: Triplet) -> Result<Label> {
        let ordinal = self.counter().take_ordinal();
        self.compare_at(t, ordinal)
    }

    /// Total comparisons served so far.
    fn query_count(&self) -> u64 {
        self.counter().served()
    }
}

/// Simulated triplet oracle over a latent configuration.
pub struct BtlTripletOracle {
    latent: Arc<dyn DistanceSource>,
    noise: NoiseModel,
    seed: u64,
    counter: QueryCounter,
}

impl std::fmt::Debug for BtlTripletOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BtlTripletOracle")
            .field("n_items", &self.latent.n_items())
            .field("noise", &self.noise)
            .field("seed", &self.seed)
            .field("queries", &self.counter.served())
            .finish()
    }
}

impl BtlTripletOracle {
    /// Logistic-link oracle.
    pub fn new(latent: Arc<dyn DistanceSource>, seed: u64) -> Self {
        Self::with_noise(latent, NoiseModel::default(), seed)
    }

    pub fn with_noise(latent: Arc<dyn DistanceSource>, noise: NoiseModel, seed: u64) -> Self {
        Self {
            latent,
            noise,
            seed,
            counter: QueryCounter::default(),
        }
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    /// Probability of answering `+1` for `t`.
    pub fn farther_probability(&self, t: Triplet) -> f64 {
        let diff = self.latent.squared_distance(t.i, t.j) - self.latent.squared_distance(t.i, t.k);
        match self.noise {
            NoiseModel::Link(link) => link.cdf(diff),
            NoiseModel::Flip(p) => {
                if diff > 0.0 {
                    1.0 - p
                } else if diff < 0.0 {
                    p
                } else {
                    0.5
                }
            }
        }
    }
}

impl TripletOracle for BtlTripletOracle {
    fn n_items(&self) -> usize {
        self.latent.n_items()
    }

    fn label_at(&self, t: Triplet, ordinal: u64) -> Result<Label> {
        t.check_range(self.n_items())?;
        let p = self.farther_probability(t);
        Ok(if uniform_at(self.seed, ordinal) < p {
            Label::Farther
        } else {
            Label::Closer
        })
    }

    fn counter(&self) -> &QueryCounter {
        &self.counter
    }
}

/// Triplet behind the column oracle of `landmark`: pair `(j, k)` over the
/// `n_items − 1` other items maps to `⟨landmark, j + [j ≥ landmark], k + [k ≥ landmark]⟩`.
pub fn column_triplet(landmark: usize, j: usize, k: usize, n_items: usize) -> Result<Triplet> {
    if landmark >= n_items {
        return Err(LoeError::IndexOutOfRange {
            index: landmark,
            n_items,
        });
    }
    if j >= k || k + 1 >= n_items {
        return Err(LoeError::InvalidPair {
            j,
            k,
            n_items: n_items.saturating_sub(1),
        });
    }
    let lift = |x: usize| x + usize::from(x >= landmark);
    Triplet::new(landmark, lift(j), lift(k))
}

/// Queries the column oracle of `landmark` on the pair `(j, k)`, `j < k`.
pub fn column_oracle_compare(
    oracle: &dyn TripletOracle,
    landmark: usize,
    pair: (usize, usize),
    ordinal: u64,
) -> Result<Label> {
    let t = column_triplet(landmark, pair.0, pair.1, oracle.n_items())?;
    oracle.compare_at(t, ordinal)
}

/// `m` i.i.d. draws (with replacement) from the unordered pairs over
/// `n_items`, each returned as `(j, k)` with `j < k`.
pub fn sample_uniform_pairs<R: Rng + ?Sized>(
    n_items: usize,
    m: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    assert!(n_items >= 2, "need at least two items to form a pair");
    (0..m)
        .map(|_| {
            let a = rng.random_range(0..n_items);
            let mut b = rng.random_range(0..n_items - 1);
            if b >= a {
                b += 1;
            }
            (a.min(b), a.max(b))
        })
        .collect()
}

/// `m` i.i.d. canonical triplets drawn uniformly from all `⟨i, j, k⟩`, `j < k`.
pub fn sample_uniform_triplets<R: Rng + ?Sized>(
    n_items: usize,
    m: usize,
    rng: &mut R,
) -> Vec<Triplet> {
    assert!(n_items >= 3, "need at least three items to form a triplet");
    (0..m)
        .map(|_| {
            let i = rng.random_range(0..n_items);
            let mut a = rng.random_range(0..n_items - 1);
            let mut b = rng.random_range(0..n_items - 2);
            if b >= a {
                b += 1;
            }
            // (a, b) distinct over n-1 slots; lift past the head
            if a >= i {
                a += 1;
            }
            if b >= i {
                b += 1;
            }
            Triplet {
                i,
                j: a.min(b),
                k: a.max(b),
            }
        })
        .collect()
}

/// Labels `triplets` with consecutive ordinals starting at `first_ordinal`.
pub fn query_all(
    oracle: &dyn TripletOracle,
    triplets: &[Triplet],
    first_ordinal: u64,
) -> Result<Vec<Comparison>> {
    triplets
        .iter()
        .enumerate()
        .map(|(q, &t)| {
            oracle
                .compare_at(t, first_ordinal + q as u64)
                .map(|label| Comparison::new(t, label))
        })
        .collect()
}
