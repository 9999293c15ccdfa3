//! Configuration files, result tables and figures.

mod config;
mod csvio;
mod svg;

pub use config::{parse_config, ConfigError};
pub use csvio::{
    emit_aggregates, emit_csv, parse_aggregates, parse_results, read_csv, write_aggregates,
    write_results, AGGREGATES_HEADER, RESULTS_HEADER,
};
pub use svg::{emit_figure, plotted_variants, render_figure, series};

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::harness::{ExperimentConfig, ExperimentResult, Metric, Sweep};

pub fn x_axis_label(cfg: &ExperimentConfig) -> String {
    match &cfg.sweep {
        Sweep::BiasLevels(_) => format!("{} bias level", cfg.bias.kind),
        Sweep::BaseRateDifferences { bias_level, .. } => {
            format!("base-rate difference ({} level {bias_level})", cfg.bias.kind)
        }
    }
}

/// Writes results.csv, aggregates.csv and one SVG per metric into `dir`,
/// returning the paths in that order.
pub fn write_artifacts(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let results = dir.join("results.csv");
    emit_csv(&result.records, &results)?;
    written.push(results);
    let aggregates = dir.join("aggregates.csv");
    emit_aggregates(&result.aggregates, &aggregates)?;
    written.push(aggregates);
    let label = x_axis_label(cfg);
    for &metric in Metric::ALL {
        let path = dir.join(format!("{metric}.svg"));
        emit_figure(&result.aggregates, metric, &label, &path)?;
        written.push(path);
    }
    Ok(written)
}
