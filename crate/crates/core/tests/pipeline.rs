use std::collections::BTreeMap;
use std::sync::Arc;

use loe_core::baselines::{random_init, DescentTrace};
use loe_core::eval::procrustes_distance;
use loe_core::landmark::EdmProjection;
use loe_core::loe::{choose_landmarks, embed_from_rankings, exact_rankings};
use loe_core::oracle::column_triplet;
use loe_core::ranking::{rank_columns_from_comparisons, RankingOptions};
use loe_core::{
    loe, BtlTripletOracle, Comparison, DatasetOracle, EmbedOutcome, EmbedRequest, Embedder,
    EmbedderRegistry, EmbeddingMatrix, LoeConfig, Result, TripletOracle,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn budget(n: usize, c: f64) -> usize {
    (c * n as f64 * (n as f64).ln()).ceil() as usize
}

#[test]
fn loe_stays_within_budget_and_centers_its_output() {
    let truth = random_init(150, 2, 9);
    let oracle = BtlTripletOracle::new(Arc::new(truth.clone()), 4);
    let m = budget(150, 30.0);
    let out = loe(&oracle, 2, m, &LoeConfig::with_seed(2)).unwrap();
    assert!(oracle.query_count() as usize <= m);
    assert_eq!(out.report.queries, oracle.query_count());
    assert!(out.embedding.is_centered());
    assert_eq!(out.embedding.n_items(), 150);
    let mut sorted = out.relabel.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..150).collect::<Vec<_>>());
}

#[test]
fn loe_is_reproducible_per_seed() {
    let truth = Arc::new(random_init(80, 2, 1));
    let run = |seed| {
        let oracle = BtlTripletOracle::new(truth.clone(), 5);
        loe(&oracle, 2, budget(80, 40.0), &LoeConfig::with_seed(seed)).unwrap()
    };
    let (a, b, c) = (run(3), run(3), run(4));
    assert_eq!(a.embedding, b.embedding);
    assert_eq!(a.relabel, b.relabel);
    assert_ne!(a.relabel, c.relabel);
}

#[test]
fn more_comparisons_give_a_better_embedding() {
    let mut small = 0.0;
    let mut large = 0.0;
    for seed in 0..4 {
        let truth = Arc::new(random_init(100, 2, 20 + seed));
        for (c, acc) in [(20.0, &mut small), (400.0, &mut large)] {
            let oracle = BtlTripletOracle::new(truth.clone(), seed);
            let out = loe(&oracle, 2, budget(100, c), &LoeConfig::with_seed(seed)).unwrap();
            *acc += procrustes_distance(&truth, &out.embedding).unwrap();
        }
    }
    assert!(large < 0.6 * small, "{large} vs {small}");
}

#[test]
fn recorded_column_comparisons_drive_the_same_pipeline() {
    let (n, l) = (90, 5);
    let truth = random_init(n, 2, 11);
    let oracle = BtlTripletOracle::new(Arc::new(truth.clone()), 12);
    let relabel = choose_landmarks(n, l, 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut records = Vec::new();
    for c in 0..l {
        for _ in 0..4000 {
            let j = rng.random_range(0..n - 1);
            let k = (j + rng.random_range(1..n - 1)) % (n - 1);
            let t = column_triplet(c, j.min(k), j.max(k), n).unwrap();
            let original = loe_core::Triplet {
                i: relabel[t.i],
                j: relabel[t.j],
                k: relabel[t.k],
            };
            records.push(Comparison {
                triplet: original,
                label: oracle.compare(original).unwrap(),
            });
        }
    }
    // replaying the records answers every recorded triplet identically
    let replay = DatasetOracle::with_n_items(records.clone(), n).unwrap();
    for r in records.iter().take(50) {
        let again = replay.compare(r.triplet).unwrap();
        let agree = records
            .iter()
            .filter(|s| s.triplet == r.triplet)
            .any(|s| s.label == again);
        assert!(agree);
    }

    let ranked = rank_columns_from_comparisons(&records, &relabel, l, &RankingOptions::default())
        .unwrap();
    assert_eq!(ranked.matrix.n_landmarks(), l);
    let out = embed_from_rankings(&ranked.matrix, &relabel, 2, EdmProjection::default()).unwrap();
    let err = procrustes_distance(&truth, &out.embedding).unwrap();
    let scale = truth.as_matrix().norm();
    assert!(err < 0.5 * scale, "{err} vs {scale}");
}

/// An embedder defined outside the crate: every item at the origin.
struct Origin;

impl Embedder for Origin {
    fn name(&self) -> &str {
        "origin"
    }

    fn embed(&self, req: &EmbedRequest<'_>) -> Result<EmbedOutcome> {
        Ok(EmbedOutcome {
            embedding: EmbeddingMatrix::zeros(req.dim, req.oracle.n_items()),
            trace: DescentTrace::default(),
            seconds: 0.0,
            queries: 0,
            converged: true,
            diagnostics: BTreeMap::new(),
        })
    }
}

#[test]
fn registry_accepts_external_strategies() {
    let mut registry = EmbedderRegistry::with_defaults();
    registry.register(Box::new(Origin));
    assert!(registry.names().any(|n| n == "origin"));
    let truth = random_init(30, 3, 0);
    let oracle = BtlTripletOracle::new(Arc::new(truth), 0);
    let out = registry
        .get("origin")
        .unwrap()
        .embed(&EmbedRequest {
            oracle: &oracle,
            dim: 3,
            budget: 100,
            seed: 0,
            truth: None,
        })
        .unwrap();
    assert_eq!(out.embedding.dim(), 3);
    assert!(registry.get("missing").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exact_rankings_recover_any_configuration(
        n in 12usize..40,
        d in 1usize..4,
        seed in 0u64..1000,
        exact in any::<bool>(),
    ) {
        let truth = random_init(n, d, seed);
        let l = d + 3;
        let relabel = choose_landmarks(n, l, seed ^ 0xABC).unwrap();
        let r = exact_rankings(&truth, &relabel, l).unwrap();
        let projection = if exact { EdmProjection::Exact } else { EdmProjection::GramClip };
        let out = embed_from_rankings(&r, &relabel, d, projection).unwrap();
        prop_assert!(procrustes_distance(&truth, &out.embedding).unwrap() <= 1e-6);
    }

    #[test]
    fn queries_never_exceed_the_budget(n in 20usize..60, c in 12.0f64..40.0, seed in 0u64..100) {
        let truth = random_init(n, 2, seed);
        let oracle = BtlTripletOracle::new(Arc::new(truth), seed);
        let m = budget(n, c);
        let out = loe(&oracle, 2, m, &LoeConfig::with_seed(seed)).unwrap();
        prop_assert!(oracle.query_count() as usize <= m);
        prop_assert_eq!(out.report.queries, oracle.query_count());
    }
}
