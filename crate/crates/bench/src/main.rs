use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use loe_bench::config::ExperimentConfig;
use loe_bench::presets::{preset, preset_names};
use loe_bench::run::{run_experiment, SummaryRow};

/// Runs landmark ordinal embedding experiments and writes CSV/JSON reports.
#[derive(Debug, Parser)]
#[command(name = "loe-bench", version)]
struct Cli {
    /// Experiment config file (flat TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named built-in config; see --list-presets.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    list_presets: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds as a list (`1,2,5`) or a half-open range (`0..10`).
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    /// Runs executed concurrently.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    landmarks: Option<usize>,
    /// Budget multiplier in m = ⌈c·n·ln n⌉.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Embedding methods, comma separated (loe, ste, gnmds, loe-ste).
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
        if a >= b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok(Seeds((a..b).collect()));
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|e| format!("bad seed {t:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Seeds)
}

impl Cli {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => ExperimentConfig::default(),
        };
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.0.clone();
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
            cfg.n_sweep.clear();
        }
        if let Some(v) = self.d {
            cfg.d = v;
        }
        if let Some(v) = self.landmarks {
            cfg.landmarks = Some(v);
        }
        if let Some(v) = self.c {
            cfg.c = v;
            cfg.c_sweep.clear();
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = &self.method {
            cfg.methods = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn run(cli: &Cli) -> Result<bool> {
    if cli.list_presets {
        for name in preset_names() {
            let cfg = preset(name)?;
            let tag = if cfg.full_scale { "  (full-scale)" } else { "" };
            println!("{name}{tag}");
        }
        return Ok(true);
    }
    let cfg = cli.config()?;
    if cfg.full_scale {
        eprintln!("note: full-scale preset; expect hours of runtime");
    }
    let res = run_experiment(&cfg).context("running experiment")?;
    println!(
        "{:<8} {:>7} {:>7} {:>5} {:>9} {:>10} {:>8} {:>7}  status",
        "method", "n", "c", "seed", "seconds", "procrustes", "pred_err", "purity"
    );
    for r in &res.records {
        let row = SummaryRow::from(r);
        println!(
            "{:<8} {:>7} {:>7} {:>5} {:>9.3} {:>10} {:>8} {:>7}  {}{}",
            row.method,
            row.n,
            row.c,
            row.seed,
            row.seconds,
            fmt(row.procrustes),
            fmt(row.prediction_error),
            fmt(row.purity),
            row.status,
            if row.error.is_empty() { String::new() } else { format!(": {}", row.error) }
        );
    }
    let failed = res.failures().count();
    eprintln!(
        "{} runs, {failed} failed; results in {}",
        res.records.len(),
        res.out_dir.display()
    );
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
