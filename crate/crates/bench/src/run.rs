//! Protocol driver: expands a config into (n, c, seed, method) runs,
//! executes them on a worker pool and writes traces, run records and a
//! summary table.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use loe_core::eval::{kmeans_purity, KMeansOptions, MetricReport, PredictionMode};
use loe_core::oracle::NoiseModel;
use loe_core::rng::mix;
use loe_core::{BtlTripletOracle, EmbedRequest, EmbedderRegistry, EmbeddingMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Distribution, Experiment, ExperimentConfig};
use crate::synth::{generate_clustered_config, generate_normal_config, generate_uniform_config};

const DATA_STREAM: u64 = 0xDA7A;
const ORACLE_STREAM: u64 = 0x0AC1;
const EVAL_STREAM: u64 = 0xE7A1;

pub fn version_string() -> String {
    format!(
        "loe-bench {} ({})",
        env!("CARGO_PKG_VERSION"),
        option_env!("LOE_BENCH_GIT_REV").unwrap_or("unknown")
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub method: String,
    pub n: usize,
    pub c: f64,
    pub seed: u64,
}

impl Job {
    /// File stem shared by the trace and the run record.
    pub fn stem(&self) -> String {
        format!("{}-n{}-c{}-s{}", self.method, self.n, self.c, self.seed)
    }
}

/// Every run of the protocol, ordered by n, then c, then seed, then method.
pub fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for n in cfg.n_values() {
        for c in cfg.c_values() {
            for &seed in &cfg.seeds {
                for method in &cfg.methods {
                    out.push(Job {
                        method: method.clone(),
                        n,
                        c,
                        seed,
                    });
                }
            }
        }
    }
    out
}

/// Ground truth for one (n, seed); shared by every method and budget.
#[derive(Debug, Clone)]
pub struct Instance {
    pub truth: EmbeddingMatrix,
    pub labels: Option<Vec<usize>>,
}

pub fn instance(cfg: &ExperimentConfig, n: usize, seed: u64) -> Instance {
    let data_seed = mix(seed, DATA_STREAM);
    match cfg.distribution {
        Distribution::Normal => Instance {
            truth: generate_normal_config(n, cfg.d, data_seed),
            labels: None,
        },
        Distribution::Uniform => Instance {
            truth: generate_uniform_config(n, cfg.d, data_seed),
            labels: None,
        },
        Distribution::Clustered => {
            let (truth, labels) =
                generate_clustered_config(n, cfg.d, cfg.clusters, cfg.separation, data_seed);
            Instance {
                truth,
                labels: Some(labels),
            }
        }
    }
}

pub fn oracle_for(cfg: &ExperimentConfig, inst: &Instance, seed: u64) -> BtlTripletOracle {
    let noise = match cfg.flip_probability {
        Some(p) => NoiseModel::Flip(p),
        None => NoiseModel::default(),
    };
    BtlTripletOracle::with_noise(Arc::new(inst.truth.clone()), noise, mix(seed, ORACLE_STREAM))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub experiment: Experiment,
    pub method: String,
    pub n: usize,
    pub d: usize,
    pub c: f64,
    pub seed: u64,
    pub budget: usize,
    pub queries: u64,
    /// Fitting wall-clock seconds.
    pub seconds: f64,
    pub converged: bool,
    pub metrics: Option<MetricReport>,
    /// Per-stage timings and solver diagnostics reported by the method.
    pub diagnostics: BTreeMap<String, f64>,
    pub error: Option<String>,
    pub config: ExperimentConfig,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    pub fn job(&self) -> Job {
        Job {
            method: self.method.clone(),
            n: self.n,
            c: self.c,
            seed: self.seed,
        }
    }
}

/// A finished run: the record plus the trace it produced, if any.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub trace: Option<loe_core::baselines::DescentTrace>,
}

pub fn registry_for(cfg: &ExperimentConfig) -> EmbedderRegistry {
    EmbedderRegistry::standard(cfg.loe_config(), cfg.descent_options(), cfg.epsilon)
}

fn prediction_mode(n: usize, samples: usize, seed: u64) -> PredictionMode {
    let total = n as u128 * (n as u128 - 1) * (n as u128 - 2) / 2;
    if total <= samples as u128 {
        PredictionMode::Exhaustive
    } else {
        PredictionMode::Sampled {
            samples,
            seed: mix(seed, EVAL_STREAM),
        }
    }
}

/// Runs one job; failures end up in the record, not in the return value.
pub fn run_job(cfg: &ExperimentConfig, registry: &EmbedderRegistry, job: &Job) -> RunOutput {
    let budget = cfg.budget(job.n, job.c);
    let mut record = RunRecord {
        version: version_string(),
        experiment: cfg.experiment,
        method: job.method.clone(),
        n: job.n,
        d: cfg.d,
        c: job.c,
        seed: job.seed,
        budget,
        queries: 0,
        seconds: 0.0,
        converged: false,
        metrics: None,
        diagnostics: BTreeMap::new(),
        error: None,
        config: cfg.clone(),
    };
    let result = (|| -> Result<_> {
        let embedder = registry.get(&job.method)?;
        let inst = instance(cfg, job.n, job.seed);
        let oracle = oracle_for(cfg, &inst, job.seed);
        let outcome = embedder.embed(&EmbedRequest {
            oracle: &oracle,
            dim: cfg.d,
            budget,
            seed: job.seed,
            truth: Some(&inst.truth),
        })?;
        let mode = prediction_mode(job.n, cfg.prediction_samples, job.seed);
        let mut metrics = MetricReport::compute(&inst.truth, &outcome.embedding, mode)?;
        if let Some(labels) = &inst.labels {
            let opts = KMeansOptions {
                seed: job.seed,
                ..KMeansOptions::default()
            };
            metrics.purity = Some(kmeans_purity(&outcome.embedding, labels, cfg.clusters, &opts)?);
        }
        Ok((outcome, metrics))
    })();
    match result {
        Ok((outcome, metrics)) => {
            record.queries = outcome.queries;
            record.seconds = outcome.seconds;
            record.converged = outcome.converged;
            record.metrics = Some(metrics);
            record.diagnostics = outcome.diagnostics;
            RunOutput {
                record,
                trace: Some(outcome.trace),
            }
        }
        Err(e) => {
            record.error = Some(format!("{e:#}"));
            RunOutput {
                record,
                trace: None,
            }
        }
    }
}

/// Reruns the job a record describes under the record's own config.
pub fn replay(record: &RunRecord) -> RunOutput {
    run_job(&record.config, &registry_for(&record.config), &record.job())
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: Experiment,
    pub method: String,
    pub n: usize,
    pub d: usize,
    pub c: f64,
    pub seed: u64,
    pub budget: usize,
    pub queries: u64,
    pub seconds: f64,
    pub procrustes: Option<f64>,
    pub normalized_procrustes: Option<f64>,
    pub prediction_error: Option<f64>,
    pub purity: Option<f64>,
    pub converged: bool,
    pub status: String,
    pub error: String,
}

impl From<&RunRecord> for SummaryRow {
    fn from(r: &RunRecord) -> Self {
        let m = r.metrics.as_ref();
        Self {
            experiment: r.experiment,
            method: r.method.clone(),
            n: r.n,
            d: r.d,
            c: r.c,
            seed: r.seed,
            budget: r.budget,
            queries: r.queries,
            seconds: r.seconds,
            procrustes: m.map(|m| m.procrustes),
            normalized_procrustes: m.map(|m| m.normalized_procrustes),
            prediction_error: m.map(|m| m.prediction_error),
            purity: m.and_then(|m| m.purity),
            converged: r.converged,
            status: if r.succeeded() { "ok" } else { "failed" }.into(),
            error: r.error.clone().unwrap_or_default(),
        }
    }
}

pub fn summary_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(SummaryRow::from(r))?;
    }
    Ok(w.into_inner()?)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub out_dir: PathBuf,
}

impl ExperimentResult {
    pub fn failures(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| !r.succeeded())
    }

    /// Mean of `metric` over successful runs of `method` at (n, c).
    pub fn mean(
        &self,
        method: &str,
        n: usize,
        c: f64,
        metric: impl Fn(&RunRecord) -> Option<f64>,
    ) -> Option<f64> {
        let values: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.method == method && r.n == n && r.c == c && r.succeeded())
            .filter_map(&metric)
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Runs every job of `cfg` on `cfg.workers` threads. Each run's trace and
/// record are written as soon as it finishes; the summary at the end.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let registry = registry_for(cfg);
    for m in &cfg.methods {
        registry.get(m)?;
    }
    let out = cfg.out.clone();
    write_atomic(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()?;
    let all = jobs(cfg);
    let records: Vec<Result<RunRecord>> = pool.install(|| {
        all.par_iter()
            .map(|job| {
                let run = run_job(cfg, &registry, job);
                let stem = job.stem();
                if let Some(trace) = &run.trace {
                    let mut buf = Vec::new();
                    trace.write_csv(&mut buf)?;
                    write_atomic(&out.join("traces").join(format!("{stem}.csv")), &buf)?;
                }
                let json = serde_json::to_vec_pretty(&run.record)?;
                write_atomic(&out.join("runs").join(format!("{stem}.json")), &json)?;
                Ok(run.record)
            })
            .collect()
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    write_atomic(&out.join("summary.csv"), &summary_csv(&records)?)?;
    Ok(ExperimentResult {
        records,
        out_dir: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            n: 40,
            c: 20.0,
            seeds: vec![1, 2],
            methods: vec!["loe".into(), "ste".into()],
            descent_max_iters: 20,
            out: dir.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn job_grid_order_and_names() {
        let cfg = ExperimentConfig {
            n_sweep: vec![10, 20],
            c_sweep: vec![1.0, 2.5],
            seeds: vec![3],
            methods: vec!["a".into(), "b".into()],
            ..ExperimentConfig::default()
        };
        let j = jobs(&cfg);
        assert_eq!(j.len(), 8);
        assert_eq!(j[0].stem(), "a-n10-c1-s3");
        assert_eq!(j[3].stem(), "b-n10-c2.5-s3");
        assert_eq!(j[7].n, 20);
    }

    #[test]
    fn instances_are_shared_across_methods_and_budgets() {
        let cfg = ExperimentConfig::default();
        let a = instance(&cfg, 30, 4);
        assert_eq!(a.truth, instance(&cfg, 30, 4).truth);
        assert_ne!(a.truth, instance(&cfg, 30, 5).truth);
        let cfg = ExperimentConfig {
            distribution: Distribution::Clustered,
            d: 3,
            clusters: 3,
            ..cfg
        };
        assert_eq!(instance(&cfg, 30, 4).labels.unwrap().len(), 30);
    }

    #[test]
    fn prediction_mode_switches_to_sampling_on_large_instances() {
        assert_eq!(prediction_mode(20, 10_000, 0), PredictionMode::Exhaustive);
        assert!(matches!(prediction_mode(200, 10_000, 0), PredictionMode::Sampled { .. }));
    }

    #[test]
    fn failures_are_recorded_not_raised() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            landmarks: Some(40),
            c: 5.0,
            ..small(dir.path())
        };
        // 40 landmarks need 40·39 queries; the budget is 738
        let run = run_job(&cfg, &registry_for(&cfg), &jobs(&cfg)[0]);
        assert!(!run.record.succeeded());
        assert!(run.trace.is_none());
        let row = SummaryRow::from(&run.record);
        assert_eq!(row.status, "failed");
        assert!(row.procrustes.is_none());
    }

    #[test]
    fn experiment_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.records.len(), 4);
        assert_eq!(res.failures().count(), 0);
        for job in jobs(&cfg) {
            assert!(dir.path().join("traces").join(format!("{}.csv", job.stem())).exists());
            let text = fs::read_to_string(dir.path().join("runs").join(format!("{}.json", job.stem())))
                .unwrap();
            let rec: RunRecord = serde_json::from_str(&text).unwrap();
            assert_eq!(rec.job(), job);
            assert!(rec.queries as usize <= rec.budget);
        }
        let rows = read_summary(&dir.path().join("summary.csv")).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.status == "ok" && r.procrustes.is_some()));
        assert!(res.mean("loe", 40, 20.0, |r| r.metrics.map(|m| m.procrustes)).is_some());
        assert!(res.mean("gnmds", 40, 20.0, |r| r.metrics.map(|m| m.procrustes)).is_none());
        let snapshot = ExperimentConfig::load(dir.path().join("config.toml")).unwrap();
        assert_eq!(snapshot, cfg);
    }

    #[test]
    fn unknown_methods_are_rejected_up_front() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            methods: vec!["tste".into()],
            ..small(dir.path())
        };
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path().join("a")).unwrap().count(), 1);
    }
}
