//! Named experiment configurations shipped with the binary.

use anyhow::{anyhow, Result};

use crate::config::ExperimentConfig;

const PRESETS: &[(&str, &str)] = &[
    ("single-run", include_str!("../presets/single-run.toml")),
    ("consistency", include_str!("../presets/consistency.toml")),
    ("consistency-uniform", include_str!("../presets/consistency-uniform.toml")),
    ("scalability", include_str!("../presets/scalability.toml")),
    ("scalability-full", include_str!("../presets/scalability-full.toml")),
    ("warmstart", include_str!("../presets/warmstart.toml")),
    ("warmstart-d10", include_str!("../presets/warmstart-d10.toml")),
    ("warmstart-full", include_str!("../presets/warmstart-full.toml")),
    ("warmstart-d10-full", include_str!("../presets/warmstart-d10-full.toml")),
    ("clustering", include_str!("../presets/clustering.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| {
            anyhow!(
                "unknown preset {name:?}; available: {}",
                preset_names().collect::<Vec<_>>().join(", ")
            )
        })?;
    ExperimentConfig::from_toml(text)
}
