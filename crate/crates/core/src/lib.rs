//! Ordinal embedding from triplet comparisons.
//!
//! The centerpiece is landmark ordinal embedding ([`loe`]): estimate a few
//! landmark columns of the squared distance matrix by ranking, recover the
//! unknown per-column shifts from Euclidean distance matrix structure, then
//! place every item with landmark MDS. Direct-descent baselines (STE, GNMDS),
//! a warm-start driver and evaluation metrics live alongside it, and every
//! embedding method is reachable by name through [`registry::EmbedderRegistry`].

pub mod baselines;
pub mod error;
pub mod eval;
pub mod landmark;
pub mod lmds;
pub mod loe;
pub mod matrix;
pub mod oracle;
pub mod ranking;
pub mod registry;
pub mod rng;
pub mod triplet;

pub use error::{LoeError, Result};
pub use loe::{embed_from_rankings, loe, LoeConfig, LoeOutput, LoeReport};
pub use matrix::{EmbeddingMatrix, ShiftVector, SquaredDistanceMatrix};
pub use oracle::{BtlTripletOracle, DatasetOracle, LinkFunction, NoiseModel, TripletOracle};
pub use registry::{EmbedOutcome, EmbedRequest, Embedder, EmbedderRegistry};
pub use triplet::{Comparison, Label, Triplet};

pub use nalgebra;
