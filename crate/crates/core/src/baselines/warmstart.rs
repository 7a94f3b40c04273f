use serde::{Deserialize, Serialize};

use super::{ste_nonconvex, DescentOptions, DescentTrace, TripletBatch};
use crate::error::{LoeError, Result};
use crate::loe::{loe, LoeConfig, LoeReport};
use crate::matrix::EmbeddingMatrix;
use crate::oracle::{query_all, sample_uniform_triplets, TripletOracle};
use crate::rng::{mix, substream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmStartOptions {
    /// Fraction of the budget spent on the LOE stage.
    pub epsilon: f64,
    pub loe: LoeConfig,
    pub descent: DescentOptions,
}

#[derive(Debug, Clone)]
pub struct WarmStartOutput {
    pub embedding: EmbeddingMatrix,
    /// Both stages; the STE part is offset by the LOE wall-clock time.
    pub trace: DescentTrace,
    pub loe_embedding: EmbeddingMatrix,
    pub loe_report: LoeReport,
    pub ste_triplets: usize,
    pub converged: bool,
}

/// LOE on `⌊ε·m⌋` queries, then STE from the LOE output on `⌊(1 − ε)·m⌋`
/// fresh uniformly sampled triplets. Triplet collection for the STE stage is
/// not charged to the trace clock.
pub fn loe_ste_warmstart(
    oracle: &dyn TripletOracle,
    d: usize,
    m_total: usize,
    opts: &WarmStartOptions,
    monitor: Option<&EmbeddingMatrix>,
) -> Result<WarmStartOutput> {
    let eps = opts.epsilon;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LoeError::InvalidParameter(format!(
            "warm-start fraction must lie in (0, 1), got {eps}"
        )));
    }
    let n = oracle.n_items();
    let m_loe = (eps * m_total as f64).floor() as usize;
    let m_ste = ((1.0 - eps) * m_total as f64).floor() as usize;

    let stage1 = loe(oracle, d, m_loe, &opts.loe)?;
    let loe_secs = stage1.report.timings.total;

    let mut rng = substream(mix(opts.loe.seed, 2), 0);
    let triplets = sample_uniform_triplets(n, m_ste, &mut rng);
    let first = opts.loe.ordinal_base + m_loe as u64;
    let batch = TripletBatch::new(n, &query_all(oracle, &triplets, first)?)?;
    drop(triplets);

    let stage2 = ste_nonconvex(&batch, d, Some(&stage1.embedding), &opts.descent, monitor)?;

    // STE's first point is the LOE estimate, stamped when stage 1 finished
    let trace = stage2.trace.shifted(loe_secs);

    Ok(WarmStartOutput {
        embedding: stage2.embedding,
        trace,
        loe_embedding: stage1.embedding,
        loe_report: stage1.report,
        ste_triplets: batch.len(),
        converged: stage2.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::random_init;
    use crate::oracle::BtlTripletOracle;
    use std::sync::Arc;

    #[test]
    fn budget_and_trace_accounting() {
        let truth = random_init(120, 2, 1);
        let oracle = BtlTripletOracle::new(Arc::new(truth.clone()), 2);
        let m = (30.0 * 120.0 * 120f64.ln()) as usize;
        let opts = WarmStartOptions {
            epsilon: 0.3,
            loe: LoeConfig::with_seed(3),
            descent: DescentOptions {
                max_iters: 20,
                ..DescentOptions::default()
            },
        };
        let out = loe_ste_warmstart(&oracle, 2, m, &opts, Some(&truth)).unwrap();
        assert!(oracle.query_count() as usize <= m);
        assert!(out.loe_report.queries as usize + out.ste_triplets <= m);
        let t0 = out.trace.points[0].elapsed_seconds;
        assert!(t0 >= out.loe_report.timings.total);
        assert!(out.trace.points.windows(2).all(|w| w[0].elapsed_seconds <= w[1].elapsed_seconds));
        assert!(out.trace.final_error().unwrap() <= out.trace.points[0].procrustes_error.unwrap());
    }

    #[test]
    fn rejects_degenerate_fractions() {
        let truth = random_init(30, 2, 1);
        let oracle = BtlTripletOracle::new(Arc::new(truth), 2);
        for epsilon in [0.0, 1.0, -0.5] {
            let opts = WarmStartOptions {
                epsilon,
                loe: LoeConfig::default(),
                descent: DescentOptions::default(),
            };
            assert!(loe_ste_warmstart(&oracle, 2, 10_000, &opts, None).is_err());
        }
    }
}
