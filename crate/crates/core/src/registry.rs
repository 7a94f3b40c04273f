//! Embedding methods behind one trait, looked up by name.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::baselines::{
    descend, loe_ste_warmstart, DescentOptions, DescentTrace, TracePoint, TripletBatch,
    TripletLoss, WarmStartOptions,
};
use crate::error::{LoeError, Result};
use crate::eval::procrustes_distance;
use crate::loe::{loe, LoeConfig};
use crate::matrix::EmbeddingMatrix;
use crate::oracle::{query_all, sample_uniform_triplets, TripletOracle};
use crate::rng::{mix, substream};

pub struct EmbedRequest<'a> {
    pub oracle: &'a dyn TripletOracle,
    pub dim: usize,
    /// Total triplet queries the method may spend.
    pub budget: usize,
    pub seed: u64,
    /// Ground truth for error traces; never used for fitting.
    pub truth: Option<&'a EmbeddingMatrix>,
}

#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub embedding: EmbeddingMatrix,
    pub trace: DescentTrace,
    /// Fitting wall-clock seconds, as charged to the trace.
    pub seconds: f64,
    pub queries: u64,
    pub converged: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, req: &EmbedRequest<'_>) -> Result<EmbedOutcome>;
}

pub struct LoeEmbedder {
    pub config: LoeConfig,
}

impl Embedder for LoeEmbedder {
    fn name(&self) -> &str {
        "loe"
    }

    fn embed(&self, req: &EmbedRequest<'_>) -> Result<EmbedOutcome> {
        let config = LoeConfig {
            seed: req.seed,
            ..self.config
        };
        let out = loe(req.oracle, req.dim, req.budget, &config)?;
        let r = &out.report;
        let error = req
            .truth
            .map(|t| procrustes_distance(t, &out.embedding))
            .transpose()?;
        let mut trace = DescentTrace::default();
        trace.push(TracePoint {
            elapsed_seconds: r.timings.total,
            loss: f64::NAN,
            procrustes_error: error,
        });
        let converged = r.columns.iter().all(|c| c.converged);
        let diagnostics = BTreeMap::from([
            ("ranking_seconds".into(), r.timings.ranking),
            ("shift_seconds".into(), r.timings.shifts),
            ("mds_seconds".into(), r.timings.mds),
            ("triangulation_seconds".into(), r.timings.triangulation),
            ("sigma_e".into(), r.sigma_e),
            ("shift_residual".into(), r.shift_residual),
            ("negative_eigen_mass".into(), r.negative_eigen_mass),
            ("landmarks".into(), r.n_landmarks as f64),
            (
                "max_mle_iterations".into(),
                r.columns.iter().map(|c| c.iterations).max().unwrap_or(0) as f64,
            ),
        ]);
        Ok(EmbedOutcome {
            embedding: out.embedding,
            trace,
            seconds: r.timings.total,
            queries: r.queries,
            converged,
            diagnostics,
        })
    }
}

/// Cold-start direct descent on `budget` uniformly sampled triplets.
pub struct DescentEmbedder {
    pub name: &'static str,
    pub loss: TripletLoss,
    pub options: DescentOptions,
}

impl Embedder for DescentEmbedder {
    fn name(&self) -> &str {
        self.name
    }

    fn embed(&self, req: &EmbedRequest<'_>) -> Result<EmbedOutcome> {
        let n = req.oracle.n_items();
        let before = req.oracle.query_count();
        let collect = Instant::now();
        let mut rng = substream(mix(req.seed, 2), 0);
        let triplets = sample_uniform_triplets(n, req.budget, &mut rng);
        let batch = TripletBatch::new(n, &query_all(req.oracle, &triplets, 0)?)?;
        let collect_secs = collect.elapsed().as_secs_f64();
        drop(triplets);

        let opts = DescentOptions {
            seed: req.seed,
            ..self.options
        };
        let out = descend(&batch, self.loss, req.dim, None, &opts, req.truth)?;
        Ok(EmbedOutcome {
            seconds: out.trace.last().map_or(0.0, |p| p.elapsed_seconds),
            embedding: out.embedding,
            trace: out.trace,
            queries: req.oracle.query_count() - before,
            converged: out.converged,
            diagnostics: BTreeMap::from([
                ("iterations".into(), out.iterations as f64),
                ("collection_seconds".into(), collect_secs),
            ]),
        })
    }
}

pub struct WarmStartEmbedder {
    pub options: WarmStartOptions,
}

impl Embedder for WarmStartEmbedder {
    fn name(&self) -> &str {
        "loe-ste"
    }

    fn embed(&self, req: &EmbedRequest<'_>) -> Result<EmbedOutcome> {
        let before = req.oracle.query_count();
        let opts = WarmStartOptions {
            loe: LoeConfig {
                seed: req.seed,
                ..self.options.loe
            },
            descent: DescentOptions {
                seed: req.seed,
                ..self.options.descent
            },
            ..self.options
        };
        let out = loe_ste_warmstart(req.oracle, req.dim, req.budget, &opts, req.truth)?;
        let loe_error = req
            .truth
            .map(|t| procrustes_distance(t, &out.loe_embedding))
            .transpose()?;
        let mut diagnostics = BTreeMap::from([
            ("loe_seconds".into(), out.loe_report.timings.total),
            ("loe_queries".into(), out.loe_report.queries as f64),
            ("ste_triplets".into(), out.ste_triplets as f64),
            ("epsilon".into(), opts.epsilon),
        ]);
        if let Some(e) = loe_error {
            diagnostics.insert("loe_procrustes".into(), e);
        }
        Ok(EmbedOutcome {
            seconds: out.trace.last().map_or(0.0, |p| p.elapsed_seconds),
            embedding: out.embedding,
            trace: out.trace,
            queries: req.oracle.query_count() - before,
            converged: out.converged,
            diagnostics,
        })
    }
}

/// Embedders keyed by name.
#[derive(Default)]
pub struct EmbedderRegistry {
    methods: BTreeMap<String, Box<dyn Embedder>>,
}

impl EmbedderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `loe`, `ste`, `gnmds` and `loe-ste` with the given settings.
    pub fn standard(loe: LoeConfig, descent: DescentOptions, epsilon: f64) -> Self {
        let mut r = Self::new();
        r.register(Box::new(LoeEmbedder { config: loe }));
        r.register(Box::new(DescentEmbedder {
            name: "ste",
            loss: TripletLoss::Logistic,
            options: descent,
        }));
        r.register(Box::new(DescentEmbedder {
            name: "gnmds",
            loss: TripletLoss::Hinge,
            options: descent,
        }));
        r.register(Box::new(WarmStartEmbedder {
            options: WarmStartOptions {
                epsilon,
                loe,
                descent,
            },
        }));
        r
    }

    pub fn with_defaults() -> Self {
        Self::standard(LoeConfig::default(), DescentOptions::default(), 0.3)
    }

    /// Adds `embedder`, replacing any method with the same name.
    pub fn register(&mut self, embedder: Box<dyn Embedder>) {
        self.methods.insert(embedder.name().to_string(), embedder);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Embedder> {
        self.methods
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| LoeError::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.methods.keys().map(String::as_str)
    }
}
